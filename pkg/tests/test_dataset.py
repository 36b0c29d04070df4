import logging

import numpy as np
import pytest

from asrswitch.errors import AdapterError, InvalidInputError
from asrswitch.features import pair_features
from asrswitch.pipeline.adapters import SurrogateASR, SurrogateSE
from asrswitch.pipeline.corpus import GridSpec, simulate_corpus
from asrswitch.pipeline.dataset import (
    Hypotheses, LabelReport, build_training_set, enhanced_signal, ordered_map, read_hypotheses,
    write_hypotheses,
)


class ComponentSE:
    """Returns one stored component as the 'enhanced' signal."""

    def __init__(self, key):
        self.key = key
        self.calls = 0

    def enhance(self, record, speaker="target", mixture_path=None):
        self.calls += 1
        return record.load(self.key)


class FlakySE(SurrogateSE):
    def __init__(self, bad):
        super().__init__()
        self.bad = set(bad)

    def enhance(self, record, speaker="target", mixture_path=None):
        if record.utt_id in self.bad:
            raise AdapterError("exploded", utt_id=record.utt_id)
        return super().enhance(record, speaker, mixture_path)


def test_perfect_extractor_labels_enhanced(grid_corpus):
    _, records = grid_corpus
    data = build_training_set(records, ComponentSE("target"), SurrogateASR())
    assert all(lab.cer_enhanced == 0 for lab in data.all_labels)
    assert len(data) > 0 and set(data.labels) == {1}
    assert sum(c.mixture_better for c in data.report.cells.values()) == 0


def test_identity_extractor_gives_only_ties(grid_corpus, caplog):
    _, records = grid_corpus
    with caplog.at_level(logging.WARNING):
        data = build_training_set(records, ComponentSE("mixture"), SurrogateASR())
    assert len(data) == 0 and data.features == []
    assert all(lab.label.tie for lab in data.all_labels)
    assert len(data.all_labels) == len(records)
    assert "every labelled utterance is a tie" in caplog.text


def test_features_match_pairing(grid_corpus):
    _, records = grid_corpus
    se = SurrogateSE()
    data = build_training_set(records[:4], se, SurrogateASR())
    by_id = {r.utt_id: r for r in records}
    for utt, f in zip(data.utt_ids, data.features):
        r = by_id[utt]
        np.testing.assert_array_equal(f, pair_features(r.load("mixture"), se.enhance(r)))


def test_mixed_labels_at_moderate_sir(tmp_path, speech_pool, noise_pool):
    records = simulate_corpus(speech_pool, noise_pool,
                              GridSpec((10.0,), (0.0, 10.0), count=40), tmp_path, seed=21)
    data = build_training_set(records, SurrogateSE(), SurrogateASR())
    assert set(data.labels) == {0, 1}
    assert data.report.mixed_cells()
    lines = data.report.to_tsv().splitlines()
    assert lines[0].split("\t") == ["sir_db", "snr_db", "n", "mixture_better",
                                    "enhanced_better", "tie"]
    assert sum(int(x.split("\t")[2]) for x in lines[1:]) == 40
    assert "| 10 | 0 |" in data.report.to_markdown()


def test_failures_are_skipped(grid_corpus, caplog):
    _, records = grid_corpus
    bad = [records[1].utt_id, records[4].utt_id]
    with caplog.at_level(logging.WARNING):
        data = build_training_set(records, FlakySE(bad), SurrogateASR(), workers=3)
    assert data.failures == bad
    assert len(data.all_labels) == len(records) - 2
    assert not set(bad) & set(data.utt_ids)
    assert "2 of 18" in caplog.text


def test_workers_do_not_change_result(grid_corpus):
    _, records = grid_corpus
    a = build_training_set(records, SurrogateSE(), SurrogateASR(), workers=1)
    b = build_training_set(records, SurrogateSE(), SurrogateASR(), workers=4)
    assert a.utt_ids == b.utt_ids and np.array_equal(a.labels, b.labels)
    assert all(np.array_equal(x, y) for x, y in zip(a.features, b.features))


def test_enhanced_path_preferred(grid_corpus):
    _, records = grid_corpus
    se = ComponentSE("target")
    r = records[0].with_path("enhanced", records[0].path("noise"))
    np.testing.assert_array_equal(enhanced_signal(r, se), r.load("noise"))
    assert se.calls == 0
    with pytest.raises(InvalidInputError):
        enhanced_signal(records[0], None)


def test_hypotheses_round_trip(tmp_path):
    hyps = [Hypotheses("a", "x y", "z"), Hypotheses("b", "", "w")]
    write_hypotheses(tmp_path / "h.tsv", hyps)
    back = read_hypotheses(tmp_path / "h.tsv")
    assert back == {h.utt_id: h for h in hyps}


def test_ordered_map_keeps_order():
    assert ordered_map(lambda x: x * x, range(50), workers=8) == [x * x for x in range(50)]


def test_report_empty():
    assert LabelReport.from_labels([], []).mixed_cells() == []
