"""Embedding interchange (EMB1), provider contract, and feature assembly.

EMB1 is a text format: line 1 is ``EMB1 <dim> <provider_id>``, then one
``uid<TAB>v1,v2,...`` line per sample with 9 significant digits, sorted by
uid. External providers are OS processes invoked from a command template
containing ``{manifest}`` and ``{out}`` placeholders; they must exit 0 and
cover every manifest uid. The built-in baseline provider summarizes each
clip with MFCC+delta statistics so the end-to-end pipeline runs without any
model runtime.
"""

from __future__ import annotations

import math
import os
import shlex
import subprocess
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dsp
from .audioprep import AudioClip
from .errors import ScbError
from .manifest import SEX_BIT, Label, Manifest

ADAPTER_TIMEOUT_ENV = "SCB_ADAPTER_TIMEOUT_S"
DEFAULT_ADAPTER_TIMEOUT_S = 3600.0


class EmbedError(ScbError):
    pass


class BadHeader(EmbedError):
    pass


class DimMismatch(EmbedError):
    def __init__(self, line: int, expected: int, got: int):
        super().__init__(f"line {line}: expected {expected} values, got {got}")


class NonFinite(EmbedError):
    def __init__(self, line: int):
        super().__init__(f"line {line}: non-finite value")


class MissingUids(EmbedError):
    def __init__(self, uids: list[str]):
        self.uids = uids
        head = ", ".join(uids[:5]) + ("..." if len(uids) > 5 else "")
        super().__init__(f"{len(uids)} uid(s) not covered: {head}")


class AdapterFailed(EmbedError):
    def __init__(self, exit_code: int, stderr_excerpt: str):
        self.exit_code = exit_code
        self.stderr_excerpt = stderr_excerpt
        super().__init__(f"adapter exited {exit_code}: {stderr_excerpt}")


class AdapterTimeout(EmbedError):
    pass


class MissingCache(EmbedError):
    pass


class ZeroAgeVariance(Warning):
    pass


@dataclass
class EmbeddingSet:
    dim: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)  # float32, length dim
    provider_id: str = "unknown"
    pooled: bool = True

    def validate_coverage(self, uids) -> None:
        missing = [u for u in uids if u not in self.vectors]
        if missing:
            raise MissingUids(missing)


def write_emb(emb: EmbeddingSet, path: str | Path) -> None:
    lines = [f"EMB1 {emb.dim} {emb.provider_id}"]
    for uid in sorted(emb.vectors):
        vec = emb.vectors[uid]
        if len(vec) != emb.dim:
            raise DimMismatch(0, emb.dim, len(vec))
        if not np.all(np.isfinite(vec)):
            raise NonFinite(0)
        lines.append(uid + "\t" + ",".join(f"{v:#.9g}" for v in vec))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_emb(path: str | Path) -> EmbeddingSet:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise BadHeader(f"{path}: empty file")
    head = lines[0].split(" ", 2)
    if len(head) != 3 or head[0] != "EMB1":
        raise BadHeader(f"{path}: bad header {lines[0]!r}")
    try:
        dim = int(head[1])
    except ValueError:
        raise BadHeader(f"{path}: bad dim {head[1]!r}") from None
    emb = EmbeddingSet(dim=dim, provider_id=head[2])
    for line_no, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        uid, _, rest = line.partition("\t")
        values = rest.split(",") if rest else []
        if len(values) != dim:
            raise DimMismatch(line_no, dim, len(values))
        vec = np.array([float(v) for v in values], dtype=np.float32)
        if not np.all(np.isfinite(vec)):
            raise NonFinite(line_no)
        emb.vectors[uid] = vec
    return emb


def run_adapter(
    cmd_template: str,
    manifest_path: str | Path,
    workdir: str | Path,
    expected_uids=None,
    timeout_s: float | None = None,
) -> EmbeddingSet:
    """Run an external embedding provider and validate its output.

    The template must contain ``{manifest}`` and ``{out}``; the adapter
    writes an EMB1 file to ``{out}`` and exits 0. Either a complete,
    validated set is returned or an error is raised - never a partial
    result.
    """
    if "{manifest}" not in cmd_template or "{out}" not in cmd_template:
        raise EmbedError("adapter command must contain {manifest} and {out} placeholders")
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    out_path = workdir / "adapter_out.emb"
    if out_path.exists():
        out_path.unlink()
    argv = [
        arg.replace("{manifest}", str(manifest_path)).replace("{out}", str(out_path))
        for arg in shlex.split(cmd_template)
    ]
    if timeout_s is None:
        timeout_s = float(os.environ.get(ADAPTER_TIMEOUT_ENV, DEFAULT_ADAPTER_TIMEOUT_S))
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout_s)
    except subprocess.TimeoutExpired:
        raise AdapterTimeout(f"adapter exceeded {timeout_s:.0f}s") from None
    except OSError as e:
        raise AdapterFailed(127, str(e)) from None
    if proc.returncode != 0:
        raise AdapterFailed(proc.returncode, proc.stderr.strip()[-500:])
    if not out_path.exists():
        raise AdapterFailed(0, f"adapter exited 0 but wrote no {out_path}")
    emb = read_emb(out_path)
    if expected_uids is not None:
        emb.validate_coverage(expected_uids)
    return emb


_BASELINE_CFG = dsp.SpectrogramConfig(n_mels=80)
_N_COEFFS = 20


def _silence_floor_cepstrum(cfg: dsp.SpectrogramConfig) -> np.ndarray:
    row = np.full((1, cfg.n_mels), math.log10(cfg.log_floor))
    return (row @ dsp.dct_basis(cfg.n_mels)[:_N_COEFFS].T)[0]


def baseline_embed(clip: AudioClip, valid_count: int | None = None) -> np.ndarray:
    """Deterministic 80-dim clip embedding from MFCC+delta statistics.

    Mean and population std of 20 MFCCs and their deltas over valid frames.
    The silence-floor cepstrum is subtracted first so an all-silent clip maps
    to the zero vector.
    """
    if valid_count is None:
        valid_count = len(clip.samples)
    frame_len = _BASELINE_CFG.frame_len(clip.sample_rate)
    if valid_count < frame_len:
        return np.zeros(2 * 2 * _N_COEFFS, dtype=np.float32)
    lm = dsp.log_mel(clip.samples[:valid_count], clip.sample_rate, _BASELINE_CFG)
    coeffs = dsp.mfcc(lm, _N_COEFFS).frames - _silence_floor_cepstrum(_BASELINE_CFG)
    if coeffs.shape[0] >= 3:
        stacked = dsp.add_deltas(dsp.MfccMatrix(frames=coeffs)).frames
    else:
        stacked = np.hstack([coeffs, np.zeros_like(coeffs)])
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    return np.concatenate([mean, std]).astype(np.float32)


def mean_pool(frames: np.ndarray, valid: int | None = None, mode: str = "all") -> np.ndarray:
    """Arithmetic mean over rows: all rows, or the first `valid` rows."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise EmbedError("mean_pool expects a nonempty (T, d) matrix")
    if mode == "all":
        return frames.mean(axis=0)
    if mode != "valid":
        raise EmbedError(f"unknown pooling mode {mode!r}")
    if valid is None or valid > frames.shape[0] or valid < 0:
        raise EmbedError("valid count out of range")
    if valid == 0:
        return np.zeros(frames.shape[1])
    return frames[:valid].mean(axis=0)


@dataclass
class FeatureMatrix:
    uids: list[str]
    rows: np.ndarray  # (n, dim + 2) float64: [embedding..., age_z, sex_bit]
    labels: np.ndarray  # (n,) int, Label values


@dataclass(frozen=True)
class DemographicStats:
    age_mean: float
    age_scale: float | None  # None -> centering only (zero variance fallback)


def fit_demographic_stats(m: Manifest, train_uids: list[str]) -> DemographicStats:
    by_uid = m.by_uid()
    ages = np.array([by_uid[u].age for u in train_uids], dtype=np.float64)
    mean = float(ages.mean())
    std = float(ages.std(ddof=1)) if len(ages) > 1 else 0.0
    if std == 0.0:
        warnings.warn("zero age variance in train split; centering ages only", ZeroAgeVariance)
        return DemographicStats(age_mean=mean, age_scale=None)
    return DemographicStats(age_mean=mean, age_scale=std)


def assemble_features(
    emb: EmbeddingSet,
    m: Manifest,
    train_uids: list[str],
    *other_uid_lists: list[str],
) -> list[FeatureMatrix]:
    """Build classifier input matrices: embeddings + [age_z, sex_bit].

    Age statistics come from train_uids only and are applied unchanged to
    every other uid list. Returns one FeatureMatrix per uid list, train
    first.
    """
    by_uid = m.by_uid()
    all_lists = [train_uids, *other_uid_lists]
    for uids in all_lists:
        emb.validate_coverage(uids)
        unknown = [u for u in uids if by_uid[u].label is Label.UNKNOWN]
        if unknown:
            raise EmbedError(f"UNKNOWN label in feature assembly: {unknown[:5]}")
    stats = fit_demographic_stats(m, train_uids)

    out = []
    for uids in all_lists:
        rows = np.zeros((len(uids), emb.dim + 2))
        labels = np.zeros(len(uids), dtype=np.int64)
        for i, uid in enumerate(uids):
            rec = by_uid[uid]
            rows[i, : emb.dim] = emb.vectors[uid].astype(np.float64)
            age_c = rec.age - stats.age_mean
            rows[i, emb.dim] = age_c if stats.age_scale is None else age_c / stats.age_scale
            rows[i, emb.dim + 1] = SEX_BIT[rec.sex]
            labels[i] = rec.label.value
        out.append(FeatureMatrix(uids=list(uids), rows=rows, labels=labels))
    return out
