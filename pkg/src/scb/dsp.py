"""Spectral feature stack built from first principles.

Radix-2 FFT, 25 ms / 10 ms STFT framing, mel filterbank (2595*log10(1+f/700)
scale, area-normalized triangles), log-mel spectrograms (80 or 128 channels),
and 20-coefficient MFCCs with appended deltas. Everything runs in double
precision; no third-party DSP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ScbError


class DspError(ScbError):
    pass


class NotPowerOfTwo(DspError):
    pass


class TooShort(DspError):
    pass


class TooFewMels(DspError):
    pass


@dataclass(frozen=True)
class SpectrogramConfig:
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    fft_size: int = 512
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-10
    whisper_norm: bool = False

    def frame_len(self, rate: int) -> int:
        return int(round(self.frame_ms * rate / 1000.0))

    def hop_len(self, rate: int) -> int:
        return int(round(self.hop_ms * rate / 1000.0))


@dataclass
class LogMel:
    frames: np.ndarray  # (T, n_mels) log10 mel energies
    frame_times: np.ndarray  # frame-center seconds
    valid_frames: int


@dataclass
class MfccMatrix:
    frames: np.ndarray  # (T, n_coeffs) or (T, 2*n_coeffs) with deltas


def fft(x: np.ndarray) -> np.ndarray:
    """Iterative radix-2 FFT of a complex sequence (length must be 2^k).

    Accepts a 1-D array or a 2-D batch (transform along the last axis).
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n == 0 or (n & (n - 1)) != 0:
        raise NotPowerOfTwo(f"length {n} is not a power of two")
    levels = n.bit_length() - 1

    # Bit-reversal permutation, then butterflies per stage.
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(levels):
        rev |= ((idx >> b) & 1) << (levels - 1 - b)
    out = x[..., rev]

    half = 1
    while half < n:
        step = half * 2
        tw = np.exp(-2j * np.pi * np.arange(half) / step)
        blocks = out.reshape(*out.shape[:-1], n // step, step)
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        total = even + odd
        diff = even - odd
        blocks[..., :half] = total
        blocks[..., half:] = diff
        out = blocks.reshape(*out.shape[:-1], n)
        half = step
    return out


def ifft(x: np.ndarray) -> np.ndarray:
    """Inverse transform defined as conj(fft(conj(x)))/N."""
    x = np.asarray(x, dtype=np.complex128)
    return np.conj(fft(np.conj(x))) / x.shape[-1]


def frame_signal(samples: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """Strided (T, frame_len) view; T = 1 + floor((N - frame_len)/hop)."""
    n = samples.shape[0]
    if n < frame_len:
        raise TooShort(f"need >= {frame_len} samples, got {n}")
    t = 1 + (n - frame_len) // hop
    stride = samples.strides[0]
    return np.lib.stride_tricks.as_strided(
        samples, shape=(t, frame_len), strides=(hop * stride, stride), writeable=False
    )


def _hann_periodic(n: int) -> np.ndarray:
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def stft_power(samples: np.ndarray, rate: int, cfg: SpectrogramConfig) -> np.ndarray:
    """One-sided power spectrogram, shape (T, fft_size//2 + 1).

    Periodic Hann window over frame_ms, zero-padded to fft_size.
    """
    samples = np.asarray(samples, dtype=np.float64)
    frame_len = cfg.frame_len(rate)
    hop = cfg.hop_len(rate)
    if frame_len > cfg.fft_size:
        raise DspError(f"frame of {frame_len} samples exceeds fft_size {cfg.fft_size}")
    frames = frame_signal(samples, frame_len, hop) * _hann_periodic(frame_len)
    padded = np.zeros((frames.shape[0], cfg.fft_size))
    padded[:, :frame_len] = frames
    spec = fft(padded)[:, : cfg.fft_size // 2 + 1]
    return (spec.real**2 + spec.imag**2).astype(np.float64)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


_FILTERBANK_CACHE: dict[tuple, np.ndarray] = {}


def mel_filterbank(rate: int, cfg: SpectrogramConfig) -> np.ndarray:
    """(n_mels, fft_size//2 + 1) triangular filters, area-normalized.

    Centers are equally spaced on the mel scale between fmin and fmax; each
    filter is scaled by 2/(f_hi - f_lo) so wider triangles do not dominate.
    """
    key = (rate, cfg.fft_size, cfg.n_mels, cfg.fmin, cfg.fmax)
    cached = _FILTERBANK_CACHE.get(key)
    if cached is not None:
        return cached
    if cfg.fmax > rate / 2:
        raise DspError(f"fmax {cfg.fmax} above Nyquist {rate / 2}")
    n_bins = cfg.fft_size // 2 + 1
    bin_hz = np.arange(n_bins) * rate / cfg.fft_size
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    fb = np.zeros((cfg.n_mels, n_bins))
    for i in range(cfg.n_mels):
        lo, center, hi = edges[i], edges[i + 1], edges[i + 2]
        up = (bin_hz - lo) / (center - lo)
        down = (hi - bin_hz) / (hi - center)
        fb[i] = np.maximum(0.0, np.minimum(up, down)) * (2.0 / (hi - lo))
    fb.setflags(write=False)
    _FILTERBANK_CACHE[key] = fb
    return fb


def log_mel(
    samples: np.ndarray,
    rate: int,
    cfg: SpectrogramConfig,
    valid_samples: int | None = None,
) -> LogMel:
    """log10 mel spectrogram; optional Whisper-style clamp-and-rescale.

    With whisper_norm set, entries are clamped at (max - 8) and mapped
    x -> (x + 4) / 4 afterwards.
    """
    power = stft_power(samples, rate, cfg)
    fb = mel_filterbank(rate, cfg)
    mel = np.log10(np.maximum(power @ fb.T, cfg.log_floor))
    if cfg.whisper_norm:
        mel = np.maximum(mel, mel.max() - 8.0)
        mel = (mel + 4.0) / 4.0
    t = mel.shape[0]
    frame_len = cfg.frame_len(rate)
    hop = cfg.hop_len(rate)
    times = (np.arange(t) * hop + frame_len / 2.0) / rate
    if valid_samples is None:
        valid = t
    elif valid_samples < frame_len:
        valid = 0
    else:
        valid = min(t, 1 + (valid_samples - frame_len) // hop)
    return LogMel(frames=mel, frame_times=times, valid_frames=valid)


def dct_basis(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis (n x n); rows are basis vectors."""
    k = np.arange(n)[:, None]
    pos = np.arange(n)[None, :]
    basis = np.cos(np.pi * (pos + 0.5) * k / n)
    basis *= np.sqrt(2.0 / n)
    basis[0] *= np.sqrt(0.5)
    return basis


def mfcc(lm: LogMel, n_coeffs: int = 20) -> MfccMatrix:
    """First n_coeffs orthonormal DCT-II coefficients along the mel axis."""
    n_mels = lm.frames.shape[1]
    if n_mels < n_coeffs:
        raise TooFewMels(f"{n_mels} mel channels < {n_coeffs} coefficients")
    basis = dct_basis(n_mels)[:n_coeffs]
    return MfccMatrix(frames=lm.frames @ basis.T)


def add_deltas(m: MfccMatrix) -> MfccMatrix:
    """Append per-coefficient central differences; edges replicated.

    (T, d) in, (T, 2d) out.
    """
    c = m.frames
    if c.shape[0] < 3:
        raise TooShort(f"need >= 3 frames for deltas, got {c.shape[0]}")
    padded = np.vstack([c[:1], c, c[-1:]])
    deltas = (padded[2:] - padded[:-2]) / 2.0
    return MfccMatrix(frames=np.hstack([c, deltas]))
