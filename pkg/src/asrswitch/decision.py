"""Switching outcomes shared by the rule, learned, and oracle policies."""

from __future__ import annotations

import enum
from dataclasses import dataclass


class Choice(enum.Enum):
    USE_OBSERVED = "observed"
    USE_ENHANCED = "enhanced"


@dataclass(frozen=True)
class Posterior:
    """Switch-model output: p0 = mixture better, p1 = enhanced better."""

    p0: float
    p1: float

    def as_tuple(self):
        return (self.p0, self.p1)


@dataclass(frozen=True)
class Decision:
    choice: Choice
    posterior: Posterior | None = None

    @property
    def uses_observed(self) -> bool:
        return self.choice is Choice.USE_OBSERVED
