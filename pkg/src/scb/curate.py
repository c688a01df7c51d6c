"""Corpus curation: DBSCAN task clustering, review export, and filtering.

Transcript embeddings are clustered with a deterministic DBSCAN (border
points attach to their lowest-uid core neighbor; cluster ids are ordered by
smallest member uid). A human labels each cluster spontaneous/other in a
small CSV, after which apply_filters drops non-English, non-spontaneous,
and low-speech records, logging one reason per exclusion.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ScbError
from .manifest import Manifest

TASK_SPONTANEOUS = "spontaneous"
TASK_OTHER = "other"
REASON_NON_ENGLISH = "non_english"
REASON_NON_SPONTANEOUS = "non_spontaneous"
REASON_LOW_QUALITY = "low_quality"
REASON_MANUAL = "manual"


class CurateError(ScbError):
    pass


class DimMismatch(CurateError):
    pass


class UnmappedCluster(CurateError):
    def __init__(self, cluster_id: int):
        self.cluster_id = cluster_id
        super().__init__(f"cluster {cluster_id} missing from task map")


@dataclass(frozen=True)
class DbscanConfig:
    eps: float
    min_pts: int
    metric: str = "euclidean"

    def __post_init__(self):
        if self.eps <= 0 or self.min_pts < 1:
            raise CurateError("need eps > 0 and min_pts >= 1")
        if self.metric not in ("euclidean", "cosine"):
            raise CurateError(f"unknown metric {self.metric!r}")


@dataclass
class ClusterAssignment:
    labels: dict[str, int]  # -1 = noise
    core: dict[str, bool]

    def clusters(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {}
        for uid, cid in self.labels.items():
            out.setdefault(cid, []).append(uid)
        return {cid: sorted(uids) for cid, uids in out.items()}


def _distance_matrix(x: np.ndarray, metric: str) -> np.ndarray:
    if metric == "euclidean":
        sq = np.sum(x**2, axis=1)
        d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (x @ x.T), 0.0)
        return np.sqrt(d2)
    norms = np.linalg.norm(x, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = x / safe[:, None]
    sim = np.clip(unit @ unit.T, -1.0, 1.0)
    sim[norms == 0, :] = 0.0
    sim[:, norms == 0] = 0.0
    d = 1.0 - sim
    np.fill_diagonal(d, 0.0)
    return d


def dbscan(vectors: dict[str, np.ndarray], cfg: DbscanConfig) -> ClusterAssignment:
    """Deterministic DBSCAN over uid-keyed vectors.

    Core points have >= min_pts neighbors within eps (self-counting,
    inclusive radius); clusters are connected components of core points
    under eps-adjacency; border points join the cluster of their lowest-uid
    core neighbor; the rest are noise (-1). Cluster ids follow ascending
    smallest member uid.
    """
    uids = sorted(vectors)
    if not uids:
        return ClusterAssignment(labels={}, core={})
    dims = {len(np.atleast_1d(vectors[u])) for u in uids}
    if len(dims) != 1:
        raise DimMismatch(f"mixed vector dimensions: {sorted(dims)}")
    x = np.array([np.asarray(vectors[u], dtype=np.float64) for u in uids])
    dist = _distance_matrix(x, cfg.metric)
    adj = dist <= cfg.eps
    core = adj.sum(axis=1) >= cfg.min_pts

    n = len(uids)
    labels = np.full(n, -1, dtype=np.int64)
    cluster_id = 0
    for i in range(n):
        if not core[i] or labels[i] != -1:
            continue
        # flood the core component of i
        stack = [i]
        labels[i] = cluster_id
        while stack:
            j = stack.pop()
            for k in np.nonzero(adj[j] & core)[0]:
                if labels[k] == -1:
                    labels[k] = cluster_id
                    stack.append(k)
        cluster_id += 1

    for i in range(n):
        if core[i] or labels[i] != -1:
            continue
        core_neighbors = np.nonzero(adj[i] & core)[0]
        if core_neighbors.size:
            labels[i] = labels[core_neighbors[0]]  # lowest uid wins (sorted order)

    # renumber by ascending smallest member uid
    first_member: dict[int, int] = {}
    for i in range(n):
        if labels[i] != -1 and labels[i] not in first_member:
            first_member[labels[i]] = i
    remap = {old: new for new, old in enumerate(sorted(first_member, key=first_member.get))}
    final = {uids[i]: (remap[labels[i]] if labels[i] != -1 else -1) for i in range(n)}
    return ClusterAssignment(labels=final, core={uids[i]: bool(core[i]) for i in range(n)})


def pca_2d(x: np.ndarray) -> np.ndarray:
    """Project rows onto the top two principal components (deterministic signs)."""
    centered = x - x.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2] if vt.shape[0] >= 2 else np.vstack([vt, np.zeros((2 - vt.shape[0], vt.shape[1]))])
    for row in comps:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    return centered @ comps.T


def export_cluster_review(
    assignment: ClusterAssignment,
    vectors: dict[str, np.ndarray],
    transcripts: dict[str, str],
    out_path: str | Path,
) -> Path:
    """Write a human-review file: per-cluster sizes, nearest-to-centroid
    representatives with 80-character excerpts, and 2-D PCA coordinates.

    Returns the path of the companion PCA CSV (uid,cluster,x,y).
    """
    out_path = Path(out_path)
    uids = sorted(assignment.labels)
    coords = {}
    if uids:
        x = np.array([np.asarray(vectors[u], dtype=np.float64) for u in uids])
        proj = pca_2d(x)
        coords = {u: proj[i] for i, u in enumerate(uids)}

    lines = ["# Cluster review", ""]
    clusters = assignment.clusters()
    for cid in sorted(clusters):
        members = clusters[cid]
        title = "Noise" if cid == -1 else f"Cluster {cid}"
        lines.append(f"## {title} ({len(members)} samples)")
        lines.append("")
        if cid == -1:
            reps = members[:5]
        else:
            pts = np.array([np.asarray(vectors[u], dtype=np.float64) for u in members])
            centroid = pts.mean(axis=0)
            dist = np.linalg.norm(pts - centroid, axis=1)
            reps = [members[i] for i in np.argsort(dist, kind="stable")[:5]]
        for uid in reps:
            excerpt = transcripts.get(uid, "").replace("\n", " ")[:80]
            lines.append(f"- `{uid}`: {excerpt}")
        lines.append("")
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    pca_path = out_path.with_name(out_path.stem + "_pca.csv")
    rows = ["uid,cluster,x,y"]
    for uid in uids:
        x_c, y_c = coords[uid]
        rows.append(f"{uid},{assignment.labels[uid]},{x_c:.6f},{y_c:.6f}")
    pca_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return pca_path


@dataclass
class Exclusion:
    uid: str
    reason: str


def apply_filters(
    m: Manifest,
    assignment: ClusterAssignment,
    task_map: dict[int, str],
    speech_by_uid: dict[str, float],
    min_speech_s: float = 3.0,
    manual_exclude: set[str] | None = None,
) -> tuple[Manifest, list[Exclusion]]:
    """Keep English, spontaneous-task, >= min_speech_s records.

    Reasons are assigned in that order, one per excluded uid. Noise points
    (cluster -1) count as non-spontaneous unless the task map says
    otherwise. record count + exclusion count = input count.
    """
    manual_exclude = manual_exclude or set()
    kept = []
    excluded: list[Exclusion] = []
    for rec in m.records:
        if rec.uid in manual_exclude:
            excluded.append(Exclusion(rec.uid, REASON_MANUAL))
            continue
        if rec.language != "en":
            excluded.append(Exclusion(rec.uid, REASON_NON_ENGLISH))
            continue
        cid = assignment.labels.get(rec.uid)
        if cid is None:
            raise CurateError(f"uid {rec.uid!r} missing from cluster assignment")
        if cid == -1:
            task = task_map.get(-1, TASK_OTHER)
        elif cid not in task_map:
            raise UnmappedCluster(cid)
        else:
            task = task_map[cid]
        if task != TASK_SPONTANEOUS:
            excluded.append(Exclusion(rec.uid, REASON_NON_SPONTANEOUS))
            continue
        speech = speech_by_uid.get(rec.uid)
        if speech is None:
            raise CurateError(f"no speech duration for uid {rec.uid!r}")
        if speech < min_speech_s:
            excluded.append(Exclusion(rec.uid, REASON_LOW_QUALITY))
            continue
        kept.append(rec)
    return Manifest(records=kept, root=m.root), excluded


def parse_task_map(path: str | Path) -> dict[int, str]:
    """CSV ``cluster_id,task`` with task in {spontaneous, other}."""
    out: dict[int, str] = {}
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for i, line in enumerate(lines):
        if not line or (i == 0 and line.lower().startswith("cluster_id")):
            continue
        cid_s, _, task = line.partition(",")
        try:
            cid = int(cid_s)
        except ValueError:
            raise CurateError(f"{path}:{i + 1}: bad cluster id {cid_s!r}") from None
        task = task.strip()
        if task not in (TASK_SPONTANEOUS, TASK_OTHER):
            raise CurateError(f"{path}:{i + 1}: task must be spontaneous|other, got {task!r}")
        out[cid] = task
    return out


def write_exclusion_log(exclusions: list[Exclusion], path: str | Path) -> None:
    lines = ["uid,reason"] + [f"{e.uid},{e.reason}" for e in exclusions]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
