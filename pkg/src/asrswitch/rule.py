"""Threshold rule on estimated SIR/SNR, with an energy VAD for noise power."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .decision import Choice, Decision
from .errors import EstimationUnavailableError, InvalidInputError, UndefinedRatioError
from .features import HOP_LENGTH, WIN_LENGTH, frame_signal
from .signals import as_waveform, level_db, power


@dataclass(frozen=True)
class RuleConfig:
    lambda_db: float = 10.0
    vad_energy_floor_db: float = 10.0
    vad_hangover_frames: int = 3
    # Absolute level below which a signal with no usable dynamic range
    # counts as silent.
    vad_silence_db: float = -60.0

    def __post_init__(self):
        if not np.isfinite(self.lambda_db):
            raise InvalidInputError("lambda_db must be finite")
        if self.vad_hangover_frames < 0:
            raise InvalidInputError("vad_hangover_frames must be >= 0")


@dataclass(frozen=True)
class SirSnrEstimate:
    sir_db: float
    snr_db: float
    noise_power: float | None = None
    source: Literal["estimated", "oracle"] = "estimated"


def frame_power(w) -> np.ndarray:
    """Mean-square power of each analysis frame (256 samples, hop 128)."""
    return np.mean(frame_signal(as_waveform(w)) ** 2, axis=1)


def energy_vad(w, cfg: RuleConfig = RuleConfig()) -> np.ndarray:
    """Boolean activity mask, one entry per frame.

    A frame is active when its log energy exceeds the utterance's 10th
    percentile by ``vad_energy_floor_db``.  When no frame can clear that
    margin the signal is stationary, and it is active iff it is louder than
    ``vad_silence_db``.
    """
    e = 10.0 * np.log10(frame_power(w) + 1e-20)
    ref = np.percentile(e, 10)
    if e.max() - ref <= cfg.vad_energy_floor_db:
        active = e > cfg.vad_silence_db
    else:
        active = e > ref + cfg.vad_energy_floor_db
    if cfg.vad_hangover_frames and active.any():
        held = active.copy()
        for k in range(1, cfg.vad_hangover_frames + 1):
            held[k:] |= active[:-k]
        active = held
    return active


def estimate_noise_power(mixture, target_mask, interf_mask) -> float:
    """Utterance-scale noise power from frames where neither speaker is active.

    The mean per-sample power over those frames is scaled by the utterance
    length, so the result is comparable with full-utterance squared norms.
    """
    y = as_waveform(mixture, "mixture")
    fp = frame_power(y)
    t_mask = np.asarray(target_mask, dtype=bool)
    i_mask = np.asarray(interf_mask, dtype=bool)
    if t_mask.shape != fp.shape or i_mask.shape != fp.shape:
        raise InvalidInputError(f"masks must have {fp.size} frames")
    quiet = ~(t_mask | i_mask)
    if not quiet.any():
        raise EstimationUnavailableError("no frame where both speakers are inactive")
    return float(fp[quiet].mean() * y.size)


def estimate_sir_snr(enh_target, enh_interf, noise_power: float) -> SirSnrEstimate:
    ps = power(enh_target)
    pi = power(enh_interf)
    if noise_power <= 0:
        raise UndefinedRatioError("noise power must be positive")
    return SirSnrEstimate(level_db(ps, pi), level_db(ps, noise_power), float(noise_power))


def rule_decide(est: SirSnrEstimate, cfg: RuleConfig = RuleConfig()) -> Decision:
    if est.sir_db - est.snr_db >= cfg.lambda_db:
        return Decision(Choice.USE_OBSERVED)
    return Decision(Choice.USE_ENHANCED)


def rule_switch(mixture, enh_target, enh_interf, cfg: RuleConfig = RuleConfig()):
    """Full estimated-rule decision; falls back to the enhanced signal.

    Returns ``(decision, estimate)``; ``estimate`` is None on fallback.
    """
    try:
        noise = estimate_noise_power(
            mixture, energy_vad(enh_target, cfg), energy_vad(enh_interf, cfg)
        )
        est = estimate_sir_snr(enh_target, enh_interf, noise)
    except (EstimationUnavailableError, UndefinedRatioError):
        return Decision(Choice.USE_ENHANCED), None
    return rule_decide(est, cfg), est


__all__ = [
    "HOP_LENGTH",
    "WIN_LENGTH",
    "RuleConfig",
    "SirSnrEstimate",
    "energy_vad",
    "estimate_noise_power",
    "estimate_sir_snr",
    "frame_power",
    "rule_decide",
    "rule_switch",
]
