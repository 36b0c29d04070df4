from dataclasses import replace

import numpy as np
import pytest

from asrswitch.errors import ConfigurationError
from asrswitch.features import pair_features
from asrswitch.metrics import cer_count
from asrswitch.model import Architecture, init_model, predict_proba
from asrswitch.pipeline.adapters import SurrogateASR, SurrogateSE
from asrswitch.pipeline.evaluation import (
    POLICIES, EvalTable, best_common_weight, evaluate, parse_policy, render_markdown,
)
from asrswitch.policies import soft_switch
from asrswitch.rule import RuleConfig, rule_switch

SMALL = Architecture(input_dim=512, hidden=8, num_layers=1, attn_dim=4, fc_dim=8)


class CountingASR(SurrogateASR):
    def __init__(self):
        super().__init__()
        self.calls = 0

    def recognize(self, record, waveform):
        self.calls += 1
        return super().recognize(record, waveform)


class CountingSE(SurrogateSE):
    def __init__(self):
        super().__init__()
        self.calls = 0

    def enhance(self, record, speaker="target", mixture_path=None):
        self.calls += 1
        return super().enhance(record, speaker, mixture_path)


@pytest.fixture(scope="module")
def records(grid_corpus):
    return grid_corpus[1]


@pytest.fixture(scope="module")
def model():
    return init_model(SMALL, seed=4)


@pytest.fixture(scope="module")
def results(records, model):
    se, asr = SurrogateSE(), SurrogateASR()
    out = {}
    for p in POLICIES:
        w = 0.9 if p == "fixed-soft" else None
        out[p] = evaluate(records, p, se, asr, model=model, soft_weight=w)
    return out


def test_single_utterance_mixture(records):
    asr = SurrogateASR()
    r = records[0]
    res = evaluate([r], "mixture", asr=asr)
    expected = cer_count(r.transcript, asr.recognize(r, r.load("mixture")))
    assert list(res.table.cells.values()) == [expected]
    assert res.table.average == expected.rate
    assert res.accuracy is None


def test_oracle_dominance(results):
    mix, enh = results["mixture"].utterances, results["enhanced"].utterances
    hard, soft = results["oracle-hard"].utterances, results["oracle-soft"].utterances
    for m, e, h, s in zip(mix, enh, hard, soft):
        assert h.count.edits == min(m.count.edits, e.count.edits)
        assert s.count.edits <= h.count.edits
    for cell in results["mixture"].table.cells:
        h = results["oracle-hard"].table.cells[cell].edits
        assert h <= results["mixture"].table.cells[cell].edits
        assert h <= results["enhanced"].table.cells[cell].edits


def test_table_accounting(results, records):
    ref_total = sum(cer_count(r.transcript, "").ref_len for r in records)
    for p, res in results.items():
        t = res.table
        assert t.total.ref_len == ref_total, p
        assert t.total.edits == sum(u.count.edits for u in res.utterances)
        assert len(t.cells) == 9


def test_policy_choices_consistent(results, records, model):
    se = SurrogateSE()
    feats = [pair_features(r.load("mixture"), se.enhance(r)) for r in records]
    probs = predict_proba(model, feats)
    for u, p in zip(results["learned-soft"].utterances, probs):
        assert u.weight == pytest.approx(p[0])
    for u, p in zip(results["learned-hard"].utterances, probs):
        assert (u.choice == "observed") == (p[0] > p[1])
    for u, r in zip(results["rule-oracle"].utterances, records):
        assert (u.choice == "observed") == (r.true_sir_db - r.true_snr_db >= 10)
    assert results["fixed-soft"].table.policy == "fixed-soft(0.9)"


def test_fixed_soft_matches_manual(records):
    se, asr = SurrogateSE(), SurrogateASR()
    res = evaluate(records[:3], "fixed-soft(0.3)", se, asr)
    for u, r in zip(res.utterances, records):
        x = soft_switch(0.3, r.load("mixture"), se.enhance(r))
        assert u.count == cer_count(r.transcript, asr.recognize(r, x))


def test_accuracy_definition(results):
    res = results["rule-oracle"]
    scored = [u for u in res.utterances if not u.tie]
    hits = sum((u.choice == "observed") == u.oracle_observed for u in scored)
    assert res.accuracy == hits / len(scored)
    # The oracle agrees with itself on every non-tied utterance.
    assert results["oracle-hard"].accuracy == 1.0


def test_workers_independent(records, model):
    se, asr = SurrogateSE(), SurrogateASR()
    for p in ("oracle-soft", "learned-hard", "rule"):
        a = evaluate(records, p, se, asr, model=model, workers=1)
        b = evaluate(records, p, se, asr, model=model, workers=4)
        assert a.table.to_tsv() == b.table.to_tsv()
        assert a.utterances == b.utterances


def test_rule_excludes_records_without_enrollment(records):
    stripped = [replace(r, paths={k: v for k, v in r.paths.items()
                                  if k != "enrollment_interferer"}) if n % 3 == 0 else r
                for n, r in enumerate(records)]
    res = evaluate(stripped, "rule", SurrogateSE(), SurrogateASR())
    assert res.excluded == [r.utt_id for n, r in enumerate(records) if n % 3 == 0]
    assert len(res.utterances) == len(records) - len(res.excluded)


def test_rule_threshold_matters(records):
    se, asr = SurrogateSE(), SurrogateASR()
    lo = evaluate(records, "rule", se, asr, rule_cfg=RuleConfig(lambda_db=-100))
    hi = evaluate(records, "rule", se, asr, rule_cfg=RuleConfig(lambda_db=100))
    fallback = {r.utt_id for r in records if rule_switch(
        r.load("mixture"), se.enhance(r), se.enhance(r, "interferer"))[1] is None}
    assert len(fallback) < len(records) // 2
    for u in lo.utterances:
        assert u.choice == ("enhanced" if u.utt_id in fallback else "observed")
    assert all(u.choice == "enhanced" for u in hi.utterances)


class TestPreflight:
    @pytest.mark.parametrize("policy, kw", [
        ("learned-hard", {}),
        ("learned-soft", {}),
        ("fixed-soft", {}),
        ("fixed-soft", {"soft_weight": 1.5}),
        ("enhanced", {"se": None}),
        ("mixture", {"asr": None}),
    ])
    def test_fails_before_any_adapter_call(self, records, policy, kw):
        se, asr = CountingSE(), CountingASR()
        args = {"se": se, "asr": asr, **kw}
        with pytest.raises(ConfigurationError):
            evaluate(records, policy, **args)
        assert se.calls == 0 and asr.calls == 0

    def test_rule_without_any_enrollment(self, records):
        bare = [replace(r, paths={k: v for k, v in r.paths.items()
                                  if k != "enrollment_interferer"}) for r in records]
        asr = CountingASR()
        with pytest.raises(ConfigurationError):
            evaluate(bare, "rule", SurrogateSE(), asr)
        assert asr.calls == 0

    def test_rule_without_se_or_enhanced_interferer(self, records):
        enh = [r.with_path("enhanced", r.path("target")) for r in records]
        with pytest.raises(ConfigurationError):
            evaluate(enh, "rule", None, SurrogateASR())
        # The plain enhanced policy is fine with stored audio alone.
        evaluate(enh[:2], "enhanced", None, SurrogateASR())

    def test_unknown_policy(self):
        with pytest.raises(ConfigurationError):
            parse_policy("magic")
        assert parse_policy("fixed-soft(0.25)") == ("fixed-soft", 0.25)
        assert parse_policy("fixed-soft", 0.9) == ("fixed-soft", 0.9)


def test_tsv_round_trip(results):
    t = results["oracle-soft"].table
    text = t.to_tsv()
    assert text.splitlines()[0] == "sir_db\tsnr_db\tedits\tref_len\tcer"
    assert text.splitlines()[-1].startswith("avg\tavg\t")
    back = EvalTable.from_tsv(text, t.policy)
    assert back.cells == t.cells and back.average == t.average


def test_markdown(results):
    md = render_markdown([results["mixture"].table, results["oracle-hard"].table])
    rows = [line for line in md.splitlines() if line.startswith("|")]
    assert rows[0].startswith("| policy | 0/0 | 0/10 |") and rows[0].endswith("| avg |")
    assert len(rows) == 4
    avg = float(rows[2].split("|")[-2])
    assert avg == pytest.approx(100 * results["mixture"].table.average, abs=0.05)


def test_best_common_weight(records):
    se, asr = SurrogateSE(), SurrogateASR()
    w, totals = best_common_weight(records[:6], se, asr)
    assert len(totals) == 11
    rates = [t.rate for t in totals]
    assert rates[int(round(w * 10))] == min(rates)
    # Endpoints agree with the plain policies.
    mix = evaluate(records[:6], "mixture", se, asr).table.total
    enh = evaluate(records[:6], "enhanced", se, asr).table.total
    assert totals[-1] == mix and totals[0] == enh
    w2, _ = best_common_weight(records[:6], se, asr, weights=(0.9, 0.1, 0.5))
    assert w2 in (0.9, 0.1, 0.5)
    assert np.isfinite(rates).all()
