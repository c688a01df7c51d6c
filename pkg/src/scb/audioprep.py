"""WAV decoding and waveform preprocessing.

Pipeline stages: decode (PCM16 / float32 RIFF), downmix, polyphase
windowed-sinc resampling to 16 kHz, peak normalization, edge-silence
trimming, 30 s pad/truncate, and speech-duration estimation for the
curation quality filter.

Preprocessed clips can be cached as raw little-endian float32 with a
16-byte header: magic ``PCMF``, u32 sample_rate, u32 sample_count,
u32 valid_count.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import frame_signal
from .errors import ScbError


class AudioError(ScbError):
    pass


class NotWav(AudioError):
    pass


class UnsupportedEncoding(AudioError):
    def __init__(self, format_tag: int, bits: int, detail: str = ""):
        self.format_tag = format_tag
        self.bits = bits
        msg = f"unsupported WAV encoding: format_tag={format_tag}, bits={bits}"
        super().__init__(msg + (f" ({detail})" if detail else ""))


class TruncatedFile(AudioError):
    pass


class UpsampleUnsupported(AudioError):
    pass


@dataclass
class AudioClip:
    samples: np.ndarray  # float64 amplitudes
    sample_rate: int

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class PrepConfig:
    target_rate: int = 16000
    clip_seconds: float = 30.0
    trim_db: float = 40.0
    trim_margin_ms: float = 100.0
    speech_min_seconds: float = 3.0


_FMT_PCM = 0x0001
_FMT_FLOAT = 0x0003


def decode_wav(path: str | Path) -> AudioClip:
    """Decode a RIFF/WAVE file (PCM16 or IEEE float32, mono or stereo).

    Stereo is downmixed by channel mean; 16-bit samples are scaled by
    1/32768.
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise NotWav(f"{path}: not a RIFF/WAVE file")

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
            if len(body) < size:
                raise TruncatedFile(f"{path}: data chunk shorter than declared")
            payload = body
        pos += 8 + size + (size & 1)
    if fmt is None or payload is None:
        raise TruncatedFile(f"{path}: missing fmt or data chunk")

    format_tag, channels, rate, _, _, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedEncoding(format_tag, bits, f"{channels} channels")
    if not (8000 <= rate <= 96000):
        raise UnsupportedEncoding(format_tag, bits, f"sample rate {rate}")
    if format_tag == _FMT_PCM and bits == 16:
        raw = np.frombuffer(payload[: len(payload) - len(payload) % 2], dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif format_tag == _FMT_FLOAT and bits == 32:
        raw = np.frombuffer(payload[: len(payload) - len(payload) % 4], dtype="<f4")
        samples = raw.astype(np.float64)
    else:
        raise UnsupportedEncoding(format_tag, bits)

    if channels == 2:
        samples = samples[: len(samples) - len(samples) % 2].reshape(-1, 2).mean(axis=1)
    return AudioClip(samples=samples, sample_rate=rate)


def write_wav_pcm16(path: str | Path, clip: AudioClip) -> None:
    """Write a mono PCM16 WAV; scaling mirrors decode_wav's 1/32768."""
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    body = pcm.tobytes()
    rate = clip.sample_rate
    header = b"RIFF" + struct.pack("<I", 36 + len(body)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, _FMT_PCM, 1, rate, rate * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(body))
    Path(path).write_bytes(header + body)


def _design_lowpass(l_up: int, cutoff_norm: float, half_width_input: int = 32, beta: float = 8.6):
    # Kaiser-windowed sinc at the upsampled rate; half-width measured in
    # input samples, so the tap count scales with the upsampling factor.
    half = half_width_input * l_up
    n = np.arange(-half, half + 1, dtype=np.float64)
    taps = 2.0 * cutoff_norm * np.sinc(2.0 * cutoff_norm * n)
    taps *= np.kaiser(2 * half + 1, beta)
    return taps * l_up, half


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Polyphase windowed-sinc resampling (downsampling only).

    Kaiser beta 8.6, kernel half-width 32 input samples, cutoff at
    0.475 x target rate. Output length is round(n * target / source).
    """
    src = clip.sample_rate
    if target_rate > src:
        raise UpsampleUnsupported(f"cannot upsample {src} -> {target_rate}")
    if target_rate == src:
        return AudioClip(samples=clip.samples.copy(), sample_rate=src)

    g = math.gcd(src, target_rate)
    l_up, m_down = target_rate // g, src // g
    cutoff_norm = 0.475 * target_rate / (src * l_up)
    taps, center = _design_lowpass(l_up, cutoff_norm)

    x = np.asarray(clip.samples, dtype=np.float64)
    n_in = x.shape[0]
    n_out = int(math.floor(n_in * target_rate / src + 0.5))
    y = np.empty(n_out)

    # y[m] = sum_t x[t] * taps[m*M + center - t*L]; group outputs by
    # (m*M) mod L so each group is a strided dot with one tap phase.
    m_inv = pow(m_down, -1, l_up)
    for r in range(l_up):
        h_r = taps[r :: l_up]
        q_r = h_r.shape[0]
        m0 = (r * m_inv) % l_up
        m_idx = np.arange(m0, n_out, l_up)
        if m_idx.size == 0:
            continue
        # conv evaluation points: s = (m*M + center - r) / L
        s = (m_idx * m_down + center - r) // l_up
        xpad = np.concatenate([np.zeros(q_r), x, np.zeros(q_r)])
        windows = np.lib.stride_tricks.sliding_window_view(xpad, q_r)
        starts = s - q_r + 1 + q_r
        y[m_idx] = windows[starts] @ h_r[::-1]
    return AudioClip(samples=y, sample_rate=target_rate)


def peak_normalize(clip: AudioClip) -> AudioClip:
    """Scale so max |x| is exactly 1; all-zero input passes through."""
    peak = np.max(np.abs(clip.samples)) if len(clip.samples) else 0.0
    if peak == 0.0:
        return AudioClip(samples=clip.samples.copy(), sample_rate=clip.sample_rate)
    return AudioClip(samples=clip.samples / peak, sample_rate=clip.sample_rate)


def _frame_rms(samples: np.ndarray, rate: int) -> np.ndarray:
    # 25 ms frames on a 10 ms hop, same grid as the spectral stack.
    frame_len = int(round(0.025 * rate))
    hop = int(round(0.010 * rate))
    if len(samples) < frame_len:
        return np.zeros(0)
    frames = frame_signal(np.asarray(samples, dtype=np.float64), frame_len, hop)
    return np.sqrt(np.mean(frames**2, axis=1))


def trim_silence(clip: AudioClip, cfg: PrepConfig) -> AudioClip:
    """Drop sub-threshold edge frames, keeping trim_margin_ms on each side.

    Threshold is peak frame RMS scaled down by trim_db. Frame indices are
    mapped to samples at hop granularity; the result is always a contiguous
    slice of the input. An all-silent clip becomes empty.
    """
    rms = _frame_rms(clip.samples, clip.sample_rate)
    if rms.size == 0:
        return AudioClip(samples=clip.samples[:0].copy(), sample_rate=clip.sample_rate)
    threshold = rms.max() * 10.0 ** (-cfg.trim_db / 20.0)
    above = np.nonzero(rms >= threshold)[0] if rms.max() > 0 else np.zeros(0, dtype=int)
    if above.size == 0:
        return AudioClip(samples=clip.samples[:0].copy(), sample_rate=clip.sample_rate)
    hop = int(round(0.010 * clip.sample_rate))
    margin = int(round(cfg.trim_margin_ms * clip.sample_rate / 1000.0))
    start = max(0, above[0] * hop - margin)
    end = min(len(clip.samples), (above[-1] + 1) * hop + margin)
    return AudioClip(samples=clip.samples[start:end].copy(), sample_rate=clip.sample_rate)


def pad_or_truncate(clip: AudioClip, cfg: PrepConfig) -> tuple[AudioClip, int]:
    """Zero-pad or truncate to clip_seconds; returns (clip, valid_count)."""
    target = int(round(cfg.clip_seconds * clip.sample_rate))
    n = len(clip.samples)
    if n >= target:
        return AudioClip(samples=clip.samples[:target].copy(), sample_rate=clip.sample_rate), target
    out = np.zeros(target)
    out[:n] = clip.samples
    return AudioClip(samples=out, sample_rate=clip.sample_rate), n


def speech_seconds(clip: AudioClip, cfg: PrepConfig) -> float:
    """Duration of frames at or above the trim threshold (hop attribution)."""
    rms = _frame_rms(clip.samples, clip.sample_rate)
    if rms.size == 0 or rms.max() == 0:
        return 0.0
    threshold = rms.max() * 10.0 ** (-cfg.trim_db / 20.0)
    return float(np.count_nonzero(rms >= threshold)) * 0.010


_PCMF_MAGIC = b"PCMF"


def write_pcmf(path: str | Path, clip: AudioClip, valid_count: int | None = None) -> None:
    if valid_count is None:
        valid_count = len(clip.samples)
    header = _PCMF_MAGIC + struct.pack("<III", clip.sample_rate, len(clip.samples), valid_count)
    Path(path).write_bytes(header + clip.samples.astype("<f4").tobytes())


def read_pcmf(path: str | Path) -> tuple[AudioClip, int]:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != _PCMF_MAGIC:
        raise AudioError(f"{path}: not a PCMF cache file")
    rate, count, valid = struct.unpack_from("<III", data, 4)
    body = data[16:]
    if len(body) < 4 * count:
        raise TruncatedFile(f"{path}: PCMF payload shorter than declared")
    samples = np.frombuffer(body[: 4 * count], dtype="<f4").astype(np.float64)
    return AudioClip(samples=samples, sample_rate=rate), valid
