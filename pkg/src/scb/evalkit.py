"""Evaluation protocol: stratified splits, metrics, repetition aggregation.

Test splits are stratified with largest-remainder rounding (deterministic
per seed), validation is carved out of the training side with the same
rule, AUC is the Mann-Whitney pair statistic averaged one-vs-rest across
classes, and five-repetition results are reported as ``mean (std)`` with a
sample (n-1) standard deviation.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np

from .embedkit import EmbeddingSet, assemble_features
from .errors import ScbError
from .manifest import CLASS_ORDER, Label, Manifest, labeled_uids
from .trainer import TrainConfig, fit, predict


class EvalError(ScbError):
    pass


class LengthMismatch(EvalError):
    pass


class OneClassOnly(EvalError):
    pass


class NoComputableClass(EvalError):
    pass


def stratified_split(
    labels_by_uid: dict[str, Label], frac: float, seed: int
) -> tuple[list[str], list[str]]:
    """Split uids into (in, out) preserving class proportions.

    Per class the out-count starts at floor(n_c * frac); leftover slots up
    to round(N * frac) go to classes by descending fractional remainder
    (ties broken in HC, MCI, AD order). Members are chosen by a seeded
    shuffle within each class.
    """
    if not (0.0 < frac < 1.0):
        raise EvalError(f"frac must be in (0, 1), got {frac}")
    rng = np.random.default_rng(seed)
    per_class = {c: sorted(u for u, l in labels_by_uid.items() if l is c) for c in CLASS_ORDER}
    for c, uids in per_class.items():
        if not uids:
            warnings.warn(f"class {c.name} absent from split input; skipped")

    total = len(labels_by_uid)
    target_out = int(np.floor(total * frac + 0.5))
    counts = {}
    remainders = []
    for idx, c in enumerate(CLASS_ORDER):
        exact = len(per_class[c]) * frac
        counts[c] = int(np.floor(exact))
        remainders.append((-(exact - counts[c]), idx, c))
    leftover = target_out - sum(counts.values())
    for _, _, c in sorted(remainders)[: max(0, leftover)]:
        counts[c] += 1

    in_uids: list[str] = []
    out_uids: list[str] = []
    for c in CLASS_ORDER:
        uids = per_class[c]
        order = rng.permutation(len(uids))
        chosen = {uids[i] for i in order[: counts[c]]}
        out_uids.extend(u for u in uids if u in chosen)
        in_uids.extend(u for u in uids if u not in chosen)
    return in_uids, out_uids


@dataclass(frozen=True)
class SplitPlan:
    train_uids: tuple[str, ...]
    val_uids: tuple[str, ...]
    test_uids: tuple[str, ...]
    seed: int


def make_split_plan(
    labels_by_uid: dict[str, Label], seed: int, test_frac: float = 0.2, val_frac: float = 0.2
) -> SplitPlan:
    """80/20 stratified test split, then val_frac of the training side."""
    train_all, test = stratified_split(labels_by_uid, test_frac, seed)
    sub = {u: labels_by_uid[u] for u in train_all}
    train, val = stratified_split(sub, val_frac, seed + 1)
    return SplitPlan(train_uids=tuple(train), val_uids=tuple(val), test_uids=tuple(test), seed=seed)


def accuracy(pred: np.ndarray, true: np.ndarray) -> float:
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.shape != true.shape or len(pred) == 0:
        raise LengthMismatch(f"pred {pred.shape} vs true {true.shape}")
    return float(np.mean(pred == true))


def binary_auc(scores: np.ndarray, positives: np.ndarray) -> float:
    """Mann-Whitney AUC: (#{pos > neg} + 0.5 * #{pos = neg}) / (P * N)."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    if scores.shape != positives.shape:
        raise LengthMismatch(f"scores {scores.shape} vs flags {positives.shape}")
    pos = scores[positives]
    neg = scores[~positives]
    if len(pos) == 0 or len(neg) == 0:
        raise OneClassOnly("need at least one positive and one negative")
    diff = pos[:, None] - neg[None, :]
    wins = np.count_nonzero(diff > 0) + 0.5 * np.count_nonzero(diff == 0)
    return float(wins / (len(pos) * len(neg)))


@dataclass(frozen=True)
class MacroAuc:
    value: float
    per_class: dict[Label, float]
    skipped: tuple[Label, ...]

    def __float__(self) -> float:
        return self.value


def macro_auc(probs: np.ndarray, true: np.ndarray) -> MacroAuc:
    """Unweighted one-vs-rest mean over classes present in the labels."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    true = np.asarray(true)
    if probs.shape[0] != len(true) or probs.shape[1] != len(CLASS_ORDER):
        raise LengthMismatch(f"probs {probs.shape} vs labels {true.shape}")
    per_class: dict[Label, float] = {}
    skipped: list[Label] = []
    for c in CLASS_ORDER:
        flags = true == c.value
        if flags.all() or not flags.any():
            skipped.append(c)
            continue
        per_class[c] = binary_auc(probs[:, c.value], flags)
    if not per_class:
        raise NoComputableClass("no class with both positives and negatives")
    return MacroAuc(
        value=float(np.mean(list(per_class.values()))),
        per_class=per_class,
        skipped=tuple(skipped),
    )


def confusion(pred: np.ndarray, true: np.ndarray) -> np.ndarray:
    """3x3 counts; rows are true labels (HC, MCI, AD), columns predicted."""
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.shape != true.shape:
        raise LengthMismatch(f"pred {pred.shape} vs true {true.shape}")
    mat = np.zeros((3, 3), dtype=np.int64)
    for t, p in zip(true, pred):
        mat[t, p] += 1
    return mat


@dataclass
class Repetition:
    rep: int
    seed: int
    accuracy: float
    macro_auc: float
    auc_skipped: tuple[Label, ...]
    confusion: np.ndarray
    train_meta_notes: dict = field(default_factory=dict)


@dataclass
class RunReport:
    provider: str
    pipeline: str
    repetitions: list[Repetition]
    config_digest: str
    seeds: list[int]
    pooling: str = "all"

    def aggregate(self) -> dict[str, tuple[float, float]]:
        out = {}
        for name in ("accuracy", "macro_auc"):
            values = np.array([getattr(r, name) for r in self.repetitions], dtype=np.float64)
            std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
            out[name] = (float(values.mean()), std)
        return out


def config_digest(cfg: TrainConfig, n_reps: int, seed_base: int) -> str:
    text = f"{sorted(cfg.__dict__.items())}|reps={n_reps}|seed_base={seed_base}"
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def run_benchmark(
    m: Manifest,
    emb: EmbeddingSet,
    cfg: TrainConfig,
    n_reps: int = 5,
    seed_base: int = 0,
    pipeline: str = "audio",
) -> RunReport:
    """Stratified 80/20 x 5 seeded repetitions: fit, predict, score."""
    labels = labeled_uids(m)
    emb.validate_coverage(labels.keys())
    seeds = [seed_base + r for r in range(n_reps)]
    reps: list[Repetition] = []
    for rep, seed in enumerate(seeds):
        plan = make_split_plan(labels, seed)
        train_fm, val_fm, test_fm = assemble_features(
            emb, m, list(plan.train_uids), list(plan.val_uids), list(plan.test_uids)
        )
        model = fit(
            train_fm.rows,
            train_fm.labels,
            val_fm.rows,
            val_fm.labels,
            TrainConfig(**{**cfg.__dict__, "seed": seed}),
        )
        pred, probs = predict(model, test_fm.rows)
        auc = macro_auc(probs, test_fm.labels)
        reps.append(
            Repetition(
                rep=rep,
                seed=seed,
                accuracy=accuracy(pred, test_fm.labels),
                macro_auc=auc.value,
                auc_skipped=auc.skipped,
                confusion=confusion(pred, test_fm.labels),
                train_meta_notes=model.train_meta.notes,
            )
        )
    return RunReport(
        provider=emb.provider_id,
        pipeline=pipeline,
        repetitions=reps,
        config_digest=config_digest(cfg, n_reps, seed_base),
        seeds=seeds,
        pooling="valid" if "pool=valid" in emb.provider_id else "all",
    )


def fmt_mean_std(mean: float, std: float) -> str:
    return f"{mean:.4f} ({std:.4f})"


# Full-scale reference points for this protocol, quoted in reports for
# orientation only; desk-scale synthetic runs are not expected to match.
FULL_SCALE_REFERENCE = (
    ("Whisper-medium audio embeddings", "0.7307 (0.0202)", "0.8024 (0.0143)"),
    ("BERT + pause markers (Whisper-small transcripts)", "0.6622 (0.0131)", "0.7258 (0.0158)"),
)


def render_report(report: RunReport, fmt: str = "markdown") -> str:
    """Byte-stable report text in markdown or CSV."""
    if fmt == "csv":
        provider = report.provider.replace(",", ";")  # adapter-supplied, keep CSV intact
        pipeline = report.pipeline.replace(",", ";")
        lines = ["provider,pipeline,rep,seed,accuracy,macro_auc"]
        for r in report.repetitions:
            lines.append(
                f"{provider},{pipeline},{r.rep},{r.seed},"
                f"{r.accuracy:.6f},{r.macro_auc:.6f}"
            )
        return "\n".join(lines) + "\n"
    if fmt != "markdown":
        raise EvalError(f"unknown report format {fmt!r}")

    agg = report.aggregate()
    lines = [
        "# Benchmark report",
        "",
        f"- provider: `{report.provider}`",
        f"- pipeline: {report.pipeline}",
        f"- repetitions: {len(report.repetitions)} (seeds {', '.join(map(str, report.seeds))})",
        f"- config digest: `{report.config_digest}`",
        "- AUC scheme: macro one-vs-rest on softmax columns",
        "",
        "| rep | seed | accuracy | macro AUC |",
        "| --- | --- | --- | --- |",
    ]
    for r in report.repetitions:
        note = " *" if r.auc_skipped else ""
        lines.append(f"| {r.rep} | {r.seed} | {r.accuracy:.4f} | {r.macro_auc:.4f}{note} |")
    if any(r.auc_skipped for r in report.repetitions):
        skipped = sorted({c.name for r in report.repetitions for c in r.auc_skipped})
        lines.append("")
        lines.append(f"\\* AUC skipped classes absent from a test fold: {', '.join(skipped)}")
    lines += [
        "",
        f"**Aggregate accuracy:** {fmt_mean_std(*agg['accuracy'])}",
        "",
        f"**Aggregate macro AUC:** {fmt_mean_std(*agg['macro_auc'])}",
        "",
        "## Confusion matrices (rows true HC/MCI/AD, columns predicted)",
        "",
    ]
    for r in report.repetitions:
        lines.append(f"### Repetition {r.rep} (seed {r.seed})")
        lines.append("")
        for row in r.confusion:
            lines.append("    " + "  ".join(f"{v:5d}" for v in row))
        lines.append("")
    lines += [
        "## Full-scale reference points (restricted corpus, pretrained encoders)",
        "",
        "| configuration | accuracy | AUC |",
        "| --- | --- | --- |",
    ]
    for name, acc, auc in FULL_SCALE_REFERENCE:
        lines.append(f"| {name} | {acc} | {auc} |")
    lines.append("")
    return "\n".join(lines)
