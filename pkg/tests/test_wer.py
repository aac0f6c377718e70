import itertools
from functools import lru_cache

import pytest

from src.evaluation import align, corpus_wer, nbest_wer, oracle_wer, relative_size, selection_wer, wer, werr
from src.exceptions import MetricError
from src.models import Candidate, NBestRecord


def _edit_distance(ref, hyp):
    @lru_cache(maxsize=None)
    def distance(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(
            distance(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1]),
            distance(i - 1, j) + 1,
            distance(i, j - 1) + 1,
        )
    return distance(len(ref), len(hyp))


def _all_sequences(max_length):
    for length in range(max_length + 1):
        yield from itertools.product("ab", repeat=length)


def _record(utt_id, ref, texts, selected=None):
    hyps = [Candidate(text=t, am=-float(i), ngram=0.0) for i, t in enumerate(texts)]
    return NBestRecord(utt_id=utt_id, ref=ref, hyps=hyps, selected=selected)


class TestAlignment:

    def test_single_substitution(self):
        result = wer("a b c", "a x c")
        assert (result.substitutions, result.insertions, result.deletions) == (1, 0, 0)
        assert result.wer == pytest.approx(33.333, abs=0.01)

    def test_identical_is_zero(self):
        assert wer("the cat sat", "the cat sat").wer == 0.0

    def test_insertions_and_deletions(self):
        assert align("a b c".split(), "a b c d e".split()) == (0, 2, 0)
        assert align("a b c".split(), "b".split()) == (0, 0, 2)

    def test_empty_hypothesis_is_all_deletions(self):
        result = wer("a b c", "")
        assert result.deletions == 3
        assert result.wer == 100.0

    def test_wer_may_exceed_hundred(self):
        assert wer("a", "b c d").wer == 300.0

    def test_empty_reference_raises(self):
        with pytest.raises(MetricError):
            wer("", "a b")

    def test_lowercase_option(self):
        assert wer("The Cat", "the cat", lowercase=True).wer == 0.0
        assert wer("The Cat", "the cat").wer == 100.0

    def test_prefers_substitution_over_insert_delete(self):
        assert align(["a"], ["b"]) == (1, 0, 0)

    def test_matches_brute_force_edit_distance(self):
        sequences = list(_all_sequences(6))
        for ref in sequences:
            for hyp in sequences:
                s, i, d = align(ref, hyp)
                assert s + i + d == _edit_distance(ref, hyp), (ref, hyp)
                assert len(hyp) == len(ref) - d + i

    def test_swapping_sides_swaps_insertions_and_deletions(self):
        sequences = list(_all_sequences(5))
        for ref in sequences:
            for hyp in sequences:
                s, i, d = align(ref, hyp)
                assert align(hyp, ref) == (s, d, i), (ref, hyp)


class TestCorpusWer:

    def test_single_utterance_equals_wer(self):
        assert corpus_wer([("a b c", "a x c")]) == wer("a b c", "a x c")

    def test_errors_are_pooled(self):
        result = corpus_wer([("a", "b"), ("a b c d e f g h i", "a b c d e f g h x")])
        assert result.wer == pytest.approx(20.0)

    def test_order_does_not_matter(self):
        pairs = [("a b", "a"), ("c d e", "c x e"), ("f", "f g")]
        assert corpus_wer(pairs).wer == corpus_wer(list(reversed(pairs))).wer

    def test_empty_corpus_raises(self):
        with pytest.raises(MetricError):
            corpus_wer([])


class TestRelativeMeasures:

    @pytest.mark.parametrize("baseline, system, expected", [
        (16.88, 15.60, 7.58),
        (16.88, 15.67, 7.17),
        (16.88, 15.73, 6.81),
        (16.88, 15.78, 6.52),
        (16.88, 15.79, 6.46),
    ])
    def test_werr(self, baseline, system, expected):
        assert werr(baseline, system) == pytest.approx(expected, abs=0.01)

    def test_equal_wers_give_zero(self):
        assert werr(10.0, 10.0) == 0.0

    def test_zero_baseline_raises(self):
        with pytest.raises(MetricError):
            werr(0.0, 1.0)

    def test_relative_size(self):
        assert relative_size(31, 124) == pytest.approx(25.0)


class TestNBestWer:

    @pytest.fixture
    def records(self):
        return [
            _record("u1", "a b c", ["a x c", "a b c", "x y z"]),
            _record("u2", "d e", ["d e", "d"]),
        ]

    def test_oracle_picks_best_candidate(self, records):
        assert oracle_wer(records).wer == 0.0

    def test_selection(self, records):
        assert selection_wer(records, [2, 1]).errors == 4

    def test_unset_selection_uses_first_pass_best(self, records):
        assert nbest_wer(records).errors == 1
        chosen = [r.model_copy(update={"selected": 1}) for r in records]
        assert nbest_wer(chosen).errors == 1

    def test_unset_selection_on_unsorted_list(self):
        hyps = [
            Candidate(text="x y", am=-9.0, ngram=-1.0),
            Candidate(text="a b", am=-1.0, ngram=-1.0),
        ]
        record = NBestRecord(utt_id="u", ref="a b", hyps=hyps)
        assert nbest_wer([record]).errors == 0

    def test_oracle_bounds_every_selection(self, records):
        oracle = oracle_wer(records).wer
        for picks in itertools.product(range(3), range(2)):
            assert oracle <= selection_wer(records, list(picks)).wer

    def test_records_without_reference_are_skipped(self, records):
        unlabeled = NBestRecord(utt_id="u3", hyps=[Candidate(text="q", am=0.0, ngram=0.0)])
        assert oracle_wer(records + [unlabeled]).reference_words == 5

    def test_no_usable_records(self):
        with pytest.raises(MetricError):
            oracle_wer([NBestRecord(utt_id="u")])
