"""Policy evaluation: per-utterance ASR input, scoring, and CER tables."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

from ..decision import Choice, Posterior
from ..errors import ConfigurationError
from ..features import pair_features
from ..metrics import ErrorCount, cer_count
from ..model import SwitchModel, predict_proba
from ..policies import (
    SOFT_WEIGHT_GRID, hard_switch, oracle_hard, oracle_rule, soft_grid_search, soft_switch,
)
from ..rule import RuleConfig, rule_switch
from .corpus import ManifestRecord, sir_snr_bin
from .dataset import enhanced_signal, ordered_map

POLICIES = (
    "mixture", "enhanced", "rule", "rule-oracle", "learned-hard", "learned-soft",
    "fixed-soft", "oracle-hard", "oracle-soft",
)
SWITCHING = {"rule", "rule-oracle", "learned-hard", "learned-soft"}
_FIXED = re.compile(r"fixed-soft\(([0-9.]+)\)")


def parse_policy(name: str, soft_weight: float | None = None) -> tuple[str, float | None]:
    """Accept ``fixed-soft(0.9)`` as shorthand for ``fixed-soft`` + weight."""
    m = _FIXED.fullmatch(name)
    if m:
        return "fixed-soft", float(m.group(1))
    if name not in POLICIES:
        raise ConfigurationError(f"unknown policy {name!r}; choose from {', '.join(POLICIES)}")
    return name, soft_weight


@dataclass(frozen=True)
class UttResult:
    utt_id: str
    cell: tuple[float, float]
    count: ErrorCount
    choice: str
    weight: float | None = None
    oracle_observed: bool | None = None
    tie: bool | None = None


@dataclass
class EvalTable:
    """Corpus CER per (SIR, SNR) cell plus the micro-average over all cells."""

    policy: str
    cells: dict[tuple[float, float], ErrorCount] = field(default_factory=dict)

    @property
    def average(self) -> float:
        return self.total.rate

    @property
    def total(self) -> ErrorCount:
        return sum(self.cells.values(), ErrorCount())

    def cer(self, sir: float, snr: float) -> float:
        return self.cells[(float(sir), float(snr))].rate

    def to_tsv(self) -> str:
        lines = ["sir_db\tsnr_db\tedits\tref_len\tcer"]
        for (sir, snr), c in self.cells.items():
            lines.append(f"{sir:g}\t{snr:g}\t{c.edits}\t{c.ref_len}\t{c.rate:.6f}")
        t = self.total
        lines.append(f"avg\tavg\t{t.edits}\t{t.ref_len}\t{t.rate:.6f}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_tsv(cls, text: str, policy: str) -> "EvalTable":
        table = cls(policy)
        for line in text.splitlines()[1:]:
            sir, snr, edits, ref_len, _ = line.split("\t")
            if sir == "avg":
                continue
            table.cells[(float(sir), float(snr))] = ErrorCount(int(edits), int(ref_len))
        return table


@dataclass
class EvalResult:
    table: EvalTable
    utterances: list[UttResult]
    excluded: list[str] = field(default_factory=list)

    @property
    def accuracy(self) -> float | None:
        """Agreement with the oracle hard choice, over utterances without a CER tie."""
        scored = [u for u in self.utterances if u.oracle_observed is not None and not u.tie]
        if not scored:
            return None
        hits = sum((u.choice == Choice.USE_OBSERVED.value) == u.oracle_observed for u in scored)
        return hits / len(scored)


def render_markdown(tables: Sequence[EvalTable], percent: bool = True) -> str:
    """One row per policy, SIR-major cell columns, then the average."""
    cells = sorted({k for t in tables for k in t.cells})
    scale = 100.0 if percent else 1.0
    head = "| policy | " + " | ".join(f"{sir:g}/{snr:g}" for sir, snr in cells) + " | avg |"
    sep = "|---|" + "---:|" * (len(cells) + 1)
    rows = [head, sep]
    for t in tables:
        vals = [f"{scale * t.cells[k].rate:.1f}" if k in t.cells else "-" for k in cells]
        rows.append(f"| {t.policy} | " + " | ".join(vals) + f" | {scale * t.average:.1f} |")
    return "(columns: SIR/SNR in dB; CER in %)\n\n" + "\n".join(rows) + "\n"


def _check_prerequisites(policy, records, se, asr, model, soft_weight):
    if asr is None:
        raise ConfigurationError("an ASR adapter is required for evaluation")
    if policy.startswith("learned") and model is None:
        raise ConfigurationError(f"policy {policy} needs a trained checkpoint")
    if policy == "fixed-soft" and (soft_weight is None or not 0.0 <= soft_weight <= 1.0):
        raise ConfigurationError("fixed-soft needs a soft weight in [0, 1]")
    if policy != "mixture" and se is None:
        lacking = [r.utt_id for r in records if not r.has("enhanced")]
        if lacking:
            raise ConfigurationError(
                f"{len(lacking)} records lack enhanced audio and no SE adapter was given")
    if policy == "rule":
        if not any(r.has("enrollment_interferer") for r in records):
            raise ConfigurationError("rule policy needs interferer enrollment audio")
        if se is None and not all(r.has("enhanced_interferer") for r in records
                                  if r.has("enrollment_interferer")):
            raise ConfigurationError("rule policy needs an SE adapter for the interferer estimate")


def evaluate(
    records: Sequence[ManifestRecord],
    policy: str,
    se=None,
    asr=None,
    model: SwitchModel | None = None,
    rule_cfg: RuleConfig = RuleConfig(),
    soft_weight: float | None = None,
    workers: int = 1,
    with_accuracy: bool = True,
    bin_db: float = 10.0,
) -> EvalResult:
    """Run one policy over a manifest and aggregate CER per (SIR, SNR) cell.

    Every prerequisite is checked before the first adapter call.  Records
    without interferer enrollment are excluded from the ``rule`` policy.
    """
    policy, soft_weight = parse_policy(policy, soft_weight)
    _check_prerequisites(policy, records, se, asr, model, soft_weight)
    excluded = []
    if policy == "rule":
        excluded = [r.utt_id for r in records if not r.has("enrollment_interferer")]
        records = [r for r in records if r.has("enrollment_interferer")]

    posteriors: dict[str, Posterior] = {}
    if policy.startswith("learned"):
        posteriors = _posteriors(records, se, model, workers)

    def run(record: ManifestRecord) -> UttResult:
        ref = record.transcript
        cell = sir_snr_bin(record, bin_db)
        y = record.load("mixture")
        if policy == "mixture":
            return UttResult(record.utt_id, cell, cer_count(ref, asr.recognize(record, y)),
                             Choice.USE_OBSERVED.value)
        s = enhanced_signal(record, se)
        recog = (lambda w: asr.recognize(record, w))
        need_both = policy == "oracle-hard" or (with_accuracy and policy in SWITCHING)
        c_y = c_s = None
        if need_both:
            c_y, c_s = cer_count(ref, recog(y)), cer_count(ref, recog(s))
        weight = None
        if policy == "enhanced":
            choice, count = Choice.USE_ENHANCED, cer_count(ref, recog(s))
        elif policy == "oracle-hard":
            choice = oracle_hard(c_y.edits, c_s.edits).choice
            count = c_y if choice is Choice.USE_OBSERVED else c_s
        elif policy == "oracle-soft":
            weight, count, _ = soft_grid_search(y, s, ref, recog, utt_id=record.utt_id)
            choice = Choice.USE_OBSERVED if weight == 1.0 else Choice.USE_ENHANCED
        elif policy == "fixed-soft":
            weight = soft_weight
            count = cer_count(ref, recog(soft_switch(weight, y, s)))
            choice = Choice.USE_OBSERVED if weight > 0.5 else Choice.USE_ENHANCED
        elif policy == "rule-oracle":
            choice = oracle_rule(record.true_sir_db, record.true_snr_db, rule_cfg).choice
        elif policy == "rule":
            s_i = enhanced_signal(record, se, speaker="interferer")
            choice = rule_switch(y, s, s_i, rule_cfg)[0].choice
        else:
            post = posteriors[record.utt_id]
            d, x = hard_switch(post, y, s)
            choice = d.choice
            if policy == "learned-soft":
                weight = post.p0
                count = cer_count(ref, recog(soft_switch(weight, y, s)))
        if policy in ("rule-oracle", "rule", "learned-hard"):
            if need_both:
                count = c_y if choice is Choice.USE_OBSERVED else c_s
            else:
                count = cer_count(ref, recog(y if choice is Choice.USE_OBSERVED else s))
        oracle_obs = tie = None
        if need_both:
            oracle_obs = c_y.edits < c_s.edits
            tie = c_y.edits == c_s.edits
        return UttResult(record.utt_id, cell, count, choice.value, weight, oracle_obs, tie)

    results = ordered_map(run, records, workers)
    table = EvalTable(policy if policy != "fixed-soft" else f"fixed-soft({soft_weight:g})")
    for u in results:
        table.cells[u.cell] = table.cells.get(u.cell, ErrorCount()) + u.count
    table.cells = dict(sorted(table.cells.items()))
    return EvalResult(table, results, excluded)


def _posteriors(records, se, model, workers, chunk: int = 128) -> dict[str, Posterior]:
    out = {}
    for start in range(0, len(records), chunk):
        part = records[start:start + chunk]
        feats = ordered_map(
            lambda r: pair_features(r.load("mixture"), enhanced_signal(r, se)), part, workers)
        probs = predict_proba(model, feats)
        for r, p in zip(part, probs):
            out[r.utt_id] = Posterior(float(p[0]), float(p[1]))
    return out


def best_common_weight(records, se, asr, weights=None, workers: int = 1):
    """Single soft weight with the lowest corpus CER; ties go to the smaller weight."""
    weights = SOFT_WEIGHT_GRID if weights is None else weights
    totals = [ErrorCount()] * len(weights)

    def run(record):
        y = record.load("mixture")
        s = enhanced_signal(record, se)
        _, _, counts = soft_grid_search(y, s, record.transcript,
                                        lambda w: asr.recognize(record, w), weights,
                                        utt_id=record.utt_id)
        return counts

    for counts in ordered_map(run, records, workers):
        totals = [a + b for a, b in zip(totals, counts)]
    k = min(range(len(weights)), key=lambda j: (totals[j].rate, weights[j]))
    return weights[k], totals
