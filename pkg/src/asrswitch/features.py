"""Log-mel features for the switching network."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidInputError
from .signals import SAMPLE_RATE, as_waveform

WIN_LENGTH = 256
HOP_LENGTH = 128
N_MELS = 256
LOG_FLOOR = 1e-10


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def num_frames(length: int) -> int:
    if length < WIN_LENGTH:
        return 0
    return (length - WIN_LENGTH) // HOP_LENGTH + 1


@lru_cache(maxsize=8)
def mel_filterbank(
    n_mels: int = N_MELS,
    n_fft: int = WIN_LENGTH,
    sample_rate: int = SAMPLE_RATE,
    fmin: float = 0.0,
    fmax: float | None = None,
) -> np.ndarray:
    """Triangular mel filters, shape ``(n_mels, n_fft // 2 + 1)``.

    Filter centres are uniform on the mel scale.  Each triangle is widened to
    span at least one FFT bin on either side of its centre; otherwise the
    narrow low-frequency filters would fall between bins and see nothing.
    """
    fmax = sample_rate / 2.0 if fmax is None else fmax
    bin_hz = sample_rate / n_fft
    freqs = np.arange(n_fft // 2 + 1) * bin_hz
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    lo = np.minimum(edges[:-2], edges[1:-1] - bin_hz)
    centre = edges[1:-1]
    hi = np.maximum(edges[2:], edges[1:-1] + bin_hz)
    f = freqs[None, :]
    rising = (f - lo[:, None]) / (centre - lo)[:, None]
    falling = (hi[:, None] - f) / (hi - centre)[:, None]
    weights = np.maximum(0.0, np.minimum(rising, falling))
    weights.setflags(write=False)
    return weights


def mel_centres(n_mels: int = N_MELS, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    return edges[1:-1]


@lru_cache(maxsize=1)
def _hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_signal(w: np.ndarray) -> np.ndarray:
    """Split into overlapping frames, shape ``(frames, WIN_LENGTH)``; no padding."""
    if w.size < WIN_LENGTH:
        raise InvalidInputError(f"waveform has {w.size} samples, need at least {WIN_LENGTH}")
    return np.lib.stride_tricks.sliding_window_view(w, WIN_LENGTH)[::HOP_LENGTH]


def logmel(w) -> np.ndarray:
    """256-dim log-mel energies, shape ``(frames, 256)``."""
    w = as_waveform(w)
    frames = frame_signal(w) * _hann(WIN_LENGTH)
    spec = np.abs(np.fft.rfft(frames, n=WIN_LENGTH, axis=1)) ** 2
    return np.log(spec @ mel_filterbank().T + LOG_FLOOR)


def pair_features(observed, enhanced) -> np.ndarray:
    """Frame-wise ``[logmel(enhanced) | logmel(observed)]``, shape ``(frames, 512)``."""
    y = as_waveform(observed, "observed")
    s = as_waveform(enhanced, "enhanced")
    if y.size != s.size:
        raise InvalidInputError(f"length mismatch: observed={y.size} enhanced={s.size}")
    return np.concatenate([logmel(s), logmel(y)], axis=1)


@dataclass(frozen=True)
class FeatureStats:
    """Per-dimension mean/std used for optional feature normalisation."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, matrices, min_std: float = 1e-3) -> "FeatureStats":
        stacked = np.concatenate(list(matrices), axis=0)
        return cls(stacked.mean(axis=0), np.maximum(stacked.std(axis=0), min_std))

    def apply(self, feats: np.ndarray) -> np.ndarray:
        return (feats - self.mean) / self.std


_HEADER = struct.Struct("<II")


def write_features(path, feats: np.ndarray) -> None:
    """Dump as header (frames, dims: uint32) + row-major little-endian float32."""
    feats = np.asarray(feats)
    if feats.ndim != 2:
        raise InvalidInputError("feature matrix must be 2-D")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(*feats.shape))
        f.write(np.ascontiguousarray(feats, dtype="<f4").tobytes())


def read_features(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: missing feature header")
    frames, dims = _HEADER.unpack_from(data)
    body = data[_HEADER.size:]
    if len(body) != 4 * frames * dims:
        raise FormatError(f"{path}: expected {frames}x{dims} floats, got {len(body)} bytes")
    return np.frombuffer(body, dtype="<f4").reshape(frames, dims).astype(np.float64)
