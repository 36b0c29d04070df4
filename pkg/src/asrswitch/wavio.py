"""16-bit PCM mono WAV I/O.

Samples are mapped to [-1, 1) by division by 32768.  Writing clips
out-of-range values; callers that need to preserve ratios between related
signals compute a common gain with :func:`peak_gain` first.
"""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .errors import FormatError
from .signals import SAMPLE_RATE

_SCALE = 32768.0


def peak_gain(*signals) -> float:
    """Gain that brings the joint peak of ``signals`` to at most 1.0."""
    peak = max(float(np.max(np.abs(s))) for s in signals)
    return 1.0 if peak <= 1.0 else 1.0 / peak


def to_pcm16(samples) -> np.ndarray:
    x = np.round(np.asarray(samples, dtype=np.float64) * _SCALE)
    return np.clip(x, -32768, 32767).astype("<i2")


def write_wav(path, samples, sample_rate: int = SAMPLE_RATE) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(to_pcm16(samples).tobytes())


def read_wav(path, expected_rate: int | None = SAMPLE_RATE) -> np.ndarray:
    """Read a mono 16-bit WAV file as float64 samples."""
    try:
        with wave.open(str(path), "rb") as w:
            channels, width, rate = w.getnchannels(), w.getsampwidth(), w.getframerate()
            n = w.getnframes()
            raw = w.readframes(n)
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: not a readable WAV file ({exc})") from exc
    if channels != 1 or width != 2:
        raise FormatError(f"{path}: expected mono 16-bit PCM, got {channels} ch / {8 * width} bit")
    if expected_rate is not None and rate != expected_rate:
        raise FormatError(f"{path}: sample rate {rate} != {expected_rate}")
    if len(raw) != 2 * n:
        raise FormatError(f"{path}: truncated data chunk")
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / _SCALE
