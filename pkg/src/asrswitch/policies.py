"""Hard, soft, and oracle switching policies."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .decision import Choice, Decision, Posterior
from .errors import AdapterError, InvalidInputError
from .metrics import ErrorCount, cer_count
from .rule import RuleConfig, SirSnrEstimate, rule_decide
from .signals import as_waveform

SOFT_WEIGHT_GRID = tuple(round(0.1 * k, 1) for k in range(11))
# Best common weight reported for the observed mixture on the evaluation grid.
BEST_COMMON_WEIGHT = 0.9


def _pair(observed, enhanced):
    y = as_waveform(observed, "observed")
    s = as_waveform(enhanced, "enhanced")
    if y.size != s.size:
        raise InvalidInputError(f"length mismatch: observed={y.size} enhanced={s.size}")
    return y, s


def hard_decision(post: Posterior) -> Decision:
    choice = Choice.USE_OBSERVED if post.p0 > post.p1 else Choice.USE_ENHANCED
    return Decision(choice, post)


def hard_switch(post: Posterior, observed, enhanced) -> tuple[Decision, np.ndarray]:
    """Pick the observed mixture iff p0 > p1 (ties go to the enhanced signal)."""
    y, s = _pair(observed, enhanced)
    d = hard_decision(post)
    return d, (y if d.uses_observed else s)


def soft_switch(w0: float, observed, enhanced) -> np.ndarray:
    """``w0 * observed + (1 - w0) * enhanced``, no loudness renormalisation."""
    if not 0.0 <= w0 <= 1.0:
        raise InvalidInputError(f"soft weight {w0} outside [0, 1]")
    y, s = _pair(observed, enhanced)
    if w0 == 1.0:
        return y.copy()
    if w0 == 0.0:
        return s.copy()
    return w0 * y + (1.0 - w0) * s


def oracle_hard(cer_mixture: float, cer_enhanced: float) -> Decision:
    if cer_mixture < cer_enhanced:
        return Decision(Choice.USE_OBSERVED)
    return Decision(Choice.USE_ENHANCED)


def oracle_rule(true_sir: float, true_snr: float, cfg: RuleConfig = RuleConfig()) -> Decision:
    return rule_decide(SirSnrEstimate(true_sir, true_snr, source="oracle"), cfg)


def soft_grid_search(
    observed,
    enhanced,
    reference: str,
    asr: Callable[[np.ndarray], str],
    weights=SOFT_WEIGHT_GRID,
    utt_id: str | None = None,
) -> tuple[float, ErrorCount, list[ErrorCount]]:
    """Score every weight in order; the lowest CER wins, ties to the smaller weight."""
    y, s = _pair(observed, enhanced)
    counts = []
    for w in weights:
        try:
            hyp = asr(soft_switch(w, y, s))
        except AdapterError as exc:
            if exc.utt_id is None and utt_id is not None:
                raise AdapterError(str(exc), utt_id=utt_id) from exc
            raise
        except Exception as exc:
            raise AdapterError(f"ASR adapter failed at weight {w}: {exc}", utt_id=utt_id) from exc
        counts.append(cer_count(reference, hyp))
    best = min(range(len(weights)), key=lambda k: (counts[k].edits, weights[k]))
    return weights[best], counts[best], counts


def oracle_soft(observed, enhanced, reference: str, asr, utt_id=None) -> tuple[float, float]:
    """Per-utterance best soft weight on the 0.0..1.0 grid and its CER."""
    w, count, _ = soft_grid_search(observed, enhanced, reference, asr, utt_id=utt_id)
    return w, count.rate
