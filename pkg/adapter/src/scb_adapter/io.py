"""File-contract I/O: manifest CSV in, audio in, EMB1 out.

Deliberately self-contained; the adapter talks to the scb toolkit only
through these formats.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

MANIFEST_HEADER = "uid,audio_path,asr_path,age,sex,language,task,label"


@dataclass(frozen=True)
class Sample:
    uid: str
    audio_path: str
    asr_path: str | None


def read_manifest(path: str | Path) -> tuple[list[Sample], Path]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").replace("\r\n", "\n").split("\n")
    if not lines or lines[0] != MANIFEST_HEADER:
        raise ValueError(f"{path}: expected manifest header {MANIFEST_HEADER!r}")
    samples = []
    for line in lines[1:]:
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != 8:
            raise ValueError(f"{path}: malformed row {line!r}")
        samples.append(Sample(uid=fields[0], audio_path=fields[1], asr_path=fields[2] or None))
    return samples, path.parent


def _decode_riff(data: bytes, path) -> tuple[np.ndarray, int]:
    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + size]
        if cid == b"fmt " and len(body) >= 16:
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            payload = body
        pos += 8 + size + (size & 1)
    if fmt is None or payload is None:
        raise ValueError(f"{path}: missing fmt/data chunk")
    format_tag, channels, rate, _, _, bits = fmt
    if format_tag == 1 and bits == 16:
        samples = np.frombuffer(payload[: len(payload) - len(payload) % 2], dtype="<i2")
        samples = samples.astype(np.float32) / 32768.0
    elif format_tag == 3 and bits == 32:
        samples = np.frombuffer(payload[: len(payload) - len(payload) % 4], dtype="<f4").astype(
            np.float32
        )
    else:
        raise ValueError(f"{path}: unsupported encoding (tag={format_tag}, bits={bits})")
    if channels == 2:
        samples = samples[: len(samples) - len(samples) % 2].reshape(-1, 2).mean(axis=1)
    elif channels != 1:
        raise ValueError(f"{path}: {channels} channels unsupported")
    return samples.astype(np.float32), rate


def load_audio(path: str | Path, target_rate: int = 16000) -> np.ndarray:
    """Read WAV or PCMF, downmix, resample to target_rate, peak-normalize."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] == b"RIFF" and data[8:12] == b"WAVE":
        samples, rate = _decode_riff(data, path)
    elif data[:4] == b"PCMF":
        rate, count, _ = struct.unpack_from("<III", data, 4)
        samples = np.frombuffer(data[16 : 16 + 4 * count], dtype="<f4").astype(np.float32)
    else:
        raise ValueError(f"{path}: neither RIFF/WAVE nor PCMF")
    if rate != target_rate:
        if rate < target_rate:
            raise ValueError(f"{path}: upsampling {rate} -> {target_rate} unsupported")
        from math import gcd

        g = gcd(rate, target_rate)
        samples = resample_poly(samples, target_rate // g, rate // g).astype(np.float32)
    peak = float(np.max(np.abs(samples))) if len(samples) else 0.0
    if peak > 0:
        samples = samples / peak
    return samples


def pad_or_truncate(samples: np.ndarray, seconds: float = 30.0, rate: int = 16000) -> np.ndarray:
    target = int(seconds * rate)
    if len(samples) >= target:
        return samples[:target]
    out = np.zeros(target, dtype=np.float32)
    out[: len(samples)] = samples
    return out


def write_emb1(path: str | Path, vectors: dict[str, np.ndarray], provider_id: str) -> None:
    dims = {len(v) for v in vectors.values()}
    if len(dims) > 1:
        raise ValueError(f"inconsistent embedding dims: {sorted(dims)}")
    dim = dims.pop() if dims else 0
    lines = [f"EMB1 {dim} {provider_id}"]
    for uid in sorted(vectors):
        lines.append(uid + "\t" + ",".join(f"{float(v):#.9g}" for v in vectors[uid]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
