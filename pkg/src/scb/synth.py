"""Synthetic desk-scale corpus generator.

The real corpus is access-restricted, so acceptance runs on generated WAVs
plus matching word-timestamp ASR JSON. Each class gets a distinct
band-limited harmonic profile (so MFCC statistics separate them) and its
own pause structure: the impaired classes speak in bursts separated by
progressively longer hesitations, mirrored in both the waveform and the
synthetic word timings. Fully deterministic per seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audioprep import AudioClip, write_wav_pcm16
from .manifest import HEADER, Label

RATE = 48000

# fundamental Hz, harmonic rolloff, (min, max) inter-burst gap seconds
_CLASS_PROFILES = {
    Label.HC: (210.0, 0.55, (0.10, 0.45)),
    Label.MCI: (430.0, 0.75, (0.35, 1.20)),
    Label.AD: (840.0, 0.92, (0.90, 2.60)),
}

_VOCAB = (
    "the boy is on a stool reaching for the cookie jar while water runs over "
    "the sink and his mother dries a plate near the open window outside the "
    "garden path curves past two small trees"
).split()


@dataclass
class SynthSpec:
    n_per_class: int = 200
    seed: int = 0
    bursts_min: int = 4
    bursts_max: int = 6
    burst_seconds: tuple[float, float] = (0.8, 1.2)
    edge_silence: tuple[float, float] = (0.25, 0.5)


def _burst(rng: np.random.Generator, f0: float, rolloff: float, n: int) -> np.ndarray:
    t = np.arange(n) / RATE
    f = f0 * (1.0 + rng.uniform(-0.04, 0.04))
    wave = np.zeros(n)
    for k in range(1, 6):
        wave += (rolloff ** (k - 1)) * np.sin(2.0 * np.pi * k * f * t + rng.uniform(0, 2 * np.pi))
    envelope = np.sin(np.pi * np.arange(n) / n) ** 0.5
    wave = wave * envelope / np.max(np.abs(wave))
    wave += 0.02 * rng.standard_normal(n)
    return 0.7 * wave


def _words_for_burst(
    rng: np.random.Generator, start: float, end: float, word_gaps: tuple[float, float]
) -> list[dict]:
    words = []
    t = start
    while t < end - 0.25:
        dur = rng.uniform(0.18, 0.32)
        w_end = min(t + dur, end)
        words.append(
            {
                "word": _VOCAB[rng.integers(0, len(_VOCAB))],
                "start": round(t, 3),
                "end": round(w_end, 3),
            }
        )
        t = w_end + rng.uniform(*word_gaps)
    return words


def generate_corpus(outdir: str | Path, spec: SynthSpec) -> Path:
    """Write WAVs, ASR JSON, and a manifest; returns the manifest path."""
    outdir = Path(outdir)
    (outdir / "audio").mkdir(parents=True, exist_ok=True)
    (outdir / "asr").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)

    rows = []
    for label in (Label.HC, Label.MCI, Label.AD):
        f0, rolloff, gap_range = _CLASS_PROFILES[label]
        # impaired classes also hesitate between words inside a burst
        word_gaps = {
            Label.HC: (0.01, 0.06),
            Label.MCI: (0.02, 0.25),
            Label.AD: (0.05, 0.55),
        }[label]
        for i in range(spec.n_per_class):
            uid = f"{label.name.lower()}{i:04d}"
            lead = rng.uniform(*spec.edge_silence)
            pieces = [np.zeros(int(lead * RATE))]
            segments = []
            cursor = lead
            n_bursts = int(rng.integers(spec.bursts_min, spec.bursts_max + 1))
            for b in range(n_bursts):
                dur = rng.uniform(*spec.burst_seconds)
                n = int(dur * RATE)
                pieces.append(_burst(rng, f0, rolloff, n))
                seg_start, seg_end = cursor, cursor + dur
                segments.append(
                    {
                        "start": round(seg_start, 3),
                        "end": round(seg_end, 3),
                        "text": "",
                        "words": _words_for_burst(rng, seg_start + 0.02, seg_end - 0.02, word_gaps),
                    }
                )
                cursor = seg_end
                if b < n_bursts - 1:
                    gap = rng.uniform(*gap_range)
                    pieces.append(np.zeros(int(gap * RATE)))
                    cursor += gap
            pieces.append(np.zeros(int(rng.uniform(*spec.edge_silence) * RATE)))
            samples = np.concatenate(pieces)
            for seg in segments:
                seg["text"] = " ".join(w["word"] for w in seg["words"])

            write_wav_pcm16(outdir / "audio" / f"{uid}.wav", AudioClip(samples, RATE))
            asr = {"language": "en", "segments": segments}
            (outdir / "asr" / f"{uid}.json").write_text(
                json.dumps(asr, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
            )

            age = float(np.clip(np.round(rng.normal(75.0, 8.4), 1), 55.0, 95.0))
            sex = "female" if rng.random() < 0.57 else "male"
            rows.append(
                f"{uid},audio/{uid}.wav,asr/{uid}.json,{age},{sex},en,cookie,{label.name}"
            )

    manifest_path = outdir / "manifest.csv"
    manifest_path.write_text(HEADER + "\n" + "\n".join(rows) + "\n", encoding="utf-8")
    return manifest_path
