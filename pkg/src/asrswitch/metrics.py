"""Edit distance, character error rate, and switch-label generation."""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import FormatError, InvalidInputError

_WS = re.compile(r"\s+")


def normalize_transcript(text: str) -> str:
    """NFC, trim, and collapse internal whitespace runs to one space."""
    return _WS.sub(" ", unicodedata.normalize("NFC", text).strip())


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance with unit insertion/deletion/substitution costs."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class ErrorCount:
    """Edit operations and reference length; adds up to a corpus micro-average."""

    edits: int = 0
    ref_len: int = 0

    def __add__(self, other: "ErrorCount") -> "ErrorCount":
        return ErrorCount(self.edits + other.edits, self.ref_len + other.ref_len)

    @property
    def rate(self) -> float:
        if self.ref_len == 0:
            raise InvalidInputError("error rate over an empty reference")
        return self.edits / self.ref_len


def cer_count(reference: str, hypothesis: str) -> ErrorCount:
    ref = normalize_transcript(reference)
    if not ref:
        raise InvalidInputError("reference transcript is empty")
    return ErrorCount(edit_distance(ref, normalize_transcript(hypothesis)), len(ref))


def cer(reference: str, hypothesis: str) -> float:
    """Character error rate; may exceed 1 when the hypothesis is long."""
    return cer_count(reference, hypothesis).rate


def corpus_cer(pairs: Iterable[tuple[str, str]]) -> float:
    total = sum((cer_count(r, h) for r, h in pairs), ErrorCount())
    return total.rate


@dataclass(frozen=True)
class SwitchLabel:
    """One-hot target: ``(1, 0)`` if the mixture was strictly better."""

    p: tuple[float, float]
    tie: bool = False

    @property
    def bit(self) -> int:
        """0 = mixture better, 1 = enhanced better or tie."""
        return 0 if self.p[0] == 1 else 1


MIXTURE_BETTER = (1.0, 0.0)
ENHANCED_BETTER = (0.0, 1.0)


def label_from_cers(cer_mixture: float, cer_enhanced: float) -> SwitchLabel:
    if cer_mixture < cer_enhanced:
        return SwitchLabel(MIXTURE_BETTER, tie=False)
    return SwitchLabel(ENHANCED_BETTER, tie=cer_mixture == cer_enhanced)


def make_label(reference: str, hyp_mixture: str, hyp_enhanced: str) -> SwitchLabel:
    return label_from_cers(cer(reference, hyp_mixture), cer(reference, hyp_enhanced))


@dataclass(frozen=True)
class LabeledRecord:
    utt_id: str
    label: SwitchLabel
    cer_mixture: float
    cer_enhanced: float


def filter_ties(records: Iterable[LabeledRecord]) -> list[LabeledRecord]:
    return [r for r in records if not r.label.tie]


def write_labels(path, records: Iterable[LabeledRecord]) -> None:
    """One line per record: utt_id, label bit, tie bit, CER(mixture), CER(enhanced)."""
    lines = [
        f"{r.utt_id}\t{r.label.bit}\t{int(r.label.tie)}\t{r.cer_mixture!r}\t{r.cer_enhanced!r}\n"
        for r in records
    ]
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_labels(path) -> list[LabeledRecord]:
    out = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise FormatError(f"{path}:{n}: expected 5 tab-separated fields")
        utt, bit, tie, c_mix, c_enh = parts
        p = MIXTURE_BETTER if bit == "0" else ENHANCED_BETTER
        out.append(LabeledRecord(utt, SwitchLabel(p, tie == "1"), float(c_mix), float(c_enh)))
    return out
