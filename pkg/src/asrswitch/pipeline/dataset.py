"""Enhance, recognise and label a corpus; build switch-model training data."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import AdapterError, InvalidInputError
from ..features import pair_features
from ..metrics import LabeledRecord, cer, filter_ties, label_from_cers
from .corpus import ManifestRecord, sir_snr_bin

log = logging.getLogger(__name__)


def ordered_map(fn, items, workers: int = 1):
    """``map`` with an optional thread pool; results keep input order."""
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def enhanced_signal(record: ManifestRecord, se, speaker: str = "target") -> np.ndarray:
    """Enhanced waveform from the manifest if present, else from the SE adapter."""
    key = "enhanced" if speaker == "target" else "enhanced_interferer"
    if record.has(key):
        return record.load(key)
    if se is None:
        raise InvalidInputError(f"{record.utt_id}: no {key} path and no SE adapter")
    return se.enhance(record, speaker)


@dataclass
class Hypotheses:
    utt_id: str
    mixture: str
    enhanced: str


def recognize_pair(record: ManifestRecord, se, asr) -> tuple[Hypotheses, np.ndarray, np.ndarray]:
    y = record.load("mixture")
    s = enhanced_signal(record, se)
    return Hypotheses(record.utt_id, asr.recognize(record, y), asr.recognize(record, s)), y, s


def label_record(record: ManifestRecord, hyps: Hypotheses) -> LabeledRecord:
    c_mix = cer(record.transcript, hyps.mixture)
    c_enh = cer(record.transcript, hyps.enhanced)
    return LabeledRecord(record.utt_id, label_from_cers(c_mix, c_enh), c_mix, c_enh)


# -- label distribution ----------------------------------------------------

@dataclass
class LabelCell:
    mixture_better: int = 0
    enhanced_better: int = 0
    ties: int = 0

    @property
    def total(self) -> int:
        return self.mixture_better + self.enhanced_better + self.ties


@dataclass
class LabelReport:
    """Counts of which signal recognised better, per (SIR, SNR) bin."""

    cells: dict[tuple[float, float], LabelCell] = field(default_factory=dict)

    @classmethod
    def from_labels(cls, records: Sequence[ManifestRecord], labels: Sequence[LabeledRecord],
                    bin_db: float = 10.0) -> "LabelReport":
        by_id = {r.utt_id: r for r in records}
        rep = cls()
        for lab in labels:
            cell = rep.cells.setdefault(sir_snr_bin(by_id[lab.utt_id], bin_db), LabelCell())
            if lab.label.tie:
                cell.ties += 1
            elif lab.label.bit == 0:
                cell.mixture_better += 1
            else:
                cell.enhanced_better += 1
        rep.cells = dict(sorted(rep.cells.items()))
        return rep

    def mixed_cells(self) -> list[tuple[float, float]]:
        return [k for k, c in self.cells.items() if c.mixture_better and c.enhanced_better]

    def to_tsv(self) -> str:
        lines = ["sir_db\tsnr_db\tn\tmixture_better\tenhanced_better\ttie"]
        for (sir, snr), c in self.cells.items():
            lines.append(f"{sir:g}\t{snr:g}\t{c.total}\t{c.mixture_better}\t"
                         f"{c.enhanced_better}\t{c.ties}")
        return "\n".join(lines) + "\n"

    def to_markdown(self) -> str:
        lines = ["| SIR | SNR | n | mixture better | enhanced better | tie |",
                 "|---:|---:|---:|---:|---:|---:|"]
        for (sir, snr), c in self.cells.items():
            n = max(c.total, 1)
            lines.append(
                f"| {sir:g} | {snr:g} | {c.total} | {100 * c.mixture_better / n:.1f}% | "
                f"{100 * c.enhanced_better / n:.1f}% | {100 * c.ties / n:.1f}% |")
        return "\n".join(lines) + "\n"


# -- training data ---------------------------------------------------------

@dataclass
class TrainingData:
    """Tie-filtered features and labels plus everything needed to audit them."""

    utt_ids: list[str]
    features: list[np.ndarray]
    labels: np.ndarray
    all_labels: list[LabeledRecord]
    report: LabelReport
    failures: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.utt_ids)

    def as_pair(self):
        return self.features, self.labels


def build_training_set(records: Sequence[ManifestRecord], se, asr, workers: int = 1,
                       bin_db: float = 10.0) -> TrainingData:
    """Label every utterance, drop ties, and extract paired features.

    Adapter failures skip the utterance; their ids are collected in
    ``failures``.
    """
    def work(record):
        try:
            hyps, y, s = recognize_pair(record, se, asr)
        except AdapterError as exc:
            log.warning("skipping %s: %s", record.utt_id, exc)
            return record, None, None
        return record, label_record(record, hyps), pair_features(y, s)

    results = ordered_map(work, records, workers)
    failures = [r.utt_id for r, lab, _ in results if lab is None]
    if failures:
        log.warning("%d of %d utterances failed in the adapters", len(failures), len(records))
    labeled = [(r, lab, f) for r, lab, f in results if lab is not None]
    all_labels = [lab for _, lab, _ in labeled]
    usable = {lab.utt_id for lab in filter_ties(all_labels)}
    kept = [(r, lab, f) for r, lab, f in labeled if lab.utt_id in usable]
    if not kept:
        log.warning("no usable utterances: every labelled utterance is a tie")
    return TrainingData(
        utt_ids=[r.utt_id for r, _, _ in kept],
        features=[f for _, _, f in kept],
        labels=np.array([lab.label.bit for _, lab, _ in kept], dtype=int),
        all_labels=all_labels,
        report=LabelReport.from_labels(records, all_labels, bin_db),
        failures=failures,
    )


def write_hypotheses(path, hyps: Sequence[Hypotheses]) -> None:
    Path(path).write_text(
        "".join(f"{h.utt_id}\t{h.mixture}\t{h.enhanced}\n" for h in hyps), encoding="utf-8")


def read_hypotheses(path) -> dict[str, Hypotheses]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line:
            utt, mix, enh = (line.split("\t") + ["", ""])[:3]
            out[utt] = Hypotheses(utt, mix, enh)
    return out
