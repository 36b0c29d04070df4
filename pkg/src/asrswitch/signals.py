"""Waveform arithmetic and SIR/SNR-controlled mixing.

Waveforms are plain 1-D ``float64`` numpy arrays sampled at
:data:`SAMPLE_RATE`.  Powers are full-utterance squared L2 norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, UndefinedRatioError

SAMPLE_RATE = 16000


def as_waveform(samples, name: str = "waveform") -> np.ndarray:
    """Validate and convert ``samples`` to a 1-D float64 array."""
    w = np.asarray(samples, dtype=np.float64)
    if w.ndim != 1:
        raise InvalidInputError(f"{name} must be 1-D, got shape {w.shape}")
    if w.size == 0:
        raise InvalidInputError(f"{name} is empty")
    if not np.all(np.isfinite(w)):
        raise InvalidInputError(f"{name} contains non-finite samples")
    return w


def power(w) -> float:
    """Squared L2 norm of a waveform."""
    w = as_waveform(w)
    return float(np.dot(w, w))


def level_db(num_power: float, den_power: float) -> float:
    """Power ratio ``num_power / den_power`` in decibels."""
    if not (num_power > 0 and den_power > 0):
        raise UndefinedRatioError(
            f"level_db needs positive powers, got {num_power!r} / {den_power!r}"
        )
    return 10.0 * math.log10(num_power / den_power)


def scaling_gain(ref_power: float, other_power: float, ratio_db: float) -> float:
    """Amplitude gain g such that ``ref / (g^2 * other)`` equals ``ratio_db``."""
    if not (ref_power > 0 and other_power > 0):
        raise UndefinedRatioError("cannot scale against a zero-power signal")
    return math.sqrt(ref_power / (other_power * 10.0 ** (ratio_db / 10.0)))


def fit_length(w, length: int, offset: int = 0) -> np.ndarray:
    """Loop or truncate ``w`` to exactly ``length`` samples starting at ``offset``."""
    w = as_waveform(w)
    idx = (np.arange(length) + offset) % w.size
    return w[idx]


@dataclass(frozen=True)
class MixtureBundle:
    """Observed mixture together with its scaled components."""

    observed: np.ndarray
    target: np.ndarray
    interference: np.ndarray
    noise: np.ndarray
    true_sir_db: float
    true_snr_db: float
    interference_gain: float = 1.0
    noise_gain: float = 1.0

    def __len__(self):
        return self.observed.size

    @classmethod
    def from_components(cls, target, interference, noise, **gains) -> "MixtureBundle":
        s = as_waveform(target, "target")
        i = as_waveform(interference, "interference")
        n = as_waveform(noise, "noise")
        if not (s.size == i.size == n.size):
            raise InvalidInputError("component lengths differ")
        ps = power(s)
        sir = level_db(ps, power(i)) if power(i) > 0 else math.inf
        snr = level_db(ps, power(n)) if power(n) > 0 else math.inf
        return cls(s + i + n, s, i, n, sir, snr, **gains)


def mix_at(target, interference, noise, sir_db: float, snr_db: float) -> MixtureBundle:
    """Scale interference and noise to the requested SIR/SNR and sum.

    The target is never rescaled.  All three inputs must already have the
    same length (see :func:`fit_length`).
    """
    s = as_waveform(target, "target")
    i = as_waveform(interference, "interference")
    n = as_waveform(noise, "noise")
    if not (s.size == i.size == n.size):
        raise InvalidInputError(
            f"length mismatch: target={s.size} interference={i.size} noise={n.size}"
        )
    ps = power(s)
    g_i = scaling_gain(ps, power(i), sir_db)
    g_n = scaling_gain(ps, power(n), snr_db)
    i = g_i * i
    n = g_n * n
    return MixtureBundle(
        observed=s + i + n,
        target=s,
        interference=i,
        noise=n,
        true_sir_db=level_db(ps, power(i)),
        true_snr_db=level_db(ps, power(n)),
        interference_gain=g_i,
        noise_gain=g_n,
    )
