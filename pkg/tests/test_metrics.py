import itertools
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from caprank.errors import (
    EmptyCaptionError,
    EmptyCorpusError,
    LengthMismatchError,
    MissingLabelsError,
    NoSentencesError,
    TooFewError,
)
from caprank.metrics import (
    SentenceLabel,
    correlation_summary,
    gt_caption_score,
    scene_selection_outcome,
    selection_accuracy,
    spearman_rho,
    split_sentences,
)
from caprank.oracles import oracle_spearman


def labels(*flags):
    return [SentenceLabel(text=f"s{i}.", hallucinated=f) for i, f in enumerate(flags)]


class TestSplitSentences:
    def test_two_terminators(self):
        assert split_sentences("A car. A bus!") == ["A car.", "A bus!"]

    def test_no_terminator(self):
        assert split_sentences("No terminator here") == ["No terminator here"]

    def test_whitespace_only(self):
        with pytest.raises(EmptyCaptionError):
            split_sentences("   ")

    def test_terminator_at_end(self):
        assert split_sentences("One sentence here.") == ["One sentence here."]

    def test_question_and_ellipsis(self):
        assert split_sentences("Is it red? Maybe...") == ["Is it red?", "Maybe..."]
        # decimals survive, but abbreviations split: known limitation of the rule
        assert split_sentences("It is 3.5 meters away") == ["It is 3.5 meters away"]
        assert split_sentences("approx. 3.5 meters") == ["approx.", "3.5 meters"]

    @given(st.lists(st.sampled_from(["A car.", "A bus!", "Who?", "No stop"]), min_size=1, max_size=6))
    def test_segments_ordered_and_nonempty(self, parts):
        text = " ".join(parts)
        segments = split_sentences(text)
        assert all(segments)
        cursor = 0
        for segment in segments:
            found = text.find(segment, cursor)
            assert found >= cursor
            cursor = found + len(segment)


class TestGtCaptionScore:
    def test_quarter(self):
        assert gt_caption_score(labels(1, 0, 0, 0)) == 0.25

    def test_clean(self):
        assert gt_caption_score(labels(0, 0)) == 0.0

    def test_fully_flagged(self):
        assert gt_caption_score(labels(1, 1, 1)) == 1.0

    def test_empty(self):
        with pytest.raises(NoSentencesError):
            gt_caption_score([])

    def test_zero_iff_no_flag(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            flags = rng.integers(0, 2, size=rng.integers(1, 8)).tolist()
            score = gt_caption_score(labels(*flags))
            assert 0.0 <= score <= 1.0
            assert (score == 0.0) == (sum(flags) == 0)


class TestSceneSelectionOutcome:
    def test_clean_selection(self):
        assert scene_selection_outcome([0.0, 0.5], 0) == (0.0, True)

    def test_quarter_selection(self):
        fraction, correct = scene_selection_outcome([0.25, 0.0], 0)
        assert fraction == 0.25
        assert not correct

    def test_out_of_range(self):
        with pytest.raises(MissingLabelsError):
            scene_selection_outcome([0.0], 3)

    def test_unlabeled_selection(self):
        with pytest.raises(MissingLabelsError):
            scene_selection_outcome([None, 0.0], 0)


class TestSelectionAccuracy:
    def test_heterogeneous_fixture(self):
        flags = [True] * 261 + [False] * 39
        assert selection_accuracy(flags) == 0.87

    def test_all_correct(self):
        assert selection_accuracy([True, True]) == 1.0

    def test_half(self):
        assert selection_accuracy([True, False]) == 0.5

    def test_empty(self):
        with pytest.raises(EmptyCorpusError):
            selection_accuracy([])

    def test_equals_mean_indicator(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            flags = rng.integers(0, 2, size=rng.integers(1, 40)).astype(bool)
            assert selection_accuracy(list(flags)) == pytest.approx(np.mean(flags))


def classical_rho(h, g):
    n = len(h)
    d2 = sum((a - b) ** 2 for a, b in zip(h, g))
    return 1.0 - 6.0 * d2 / (n * (n * n - 1))


class TestSpearmanRho:
    def test_identical_ordering(self):
        assert spearman_rho([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)

    def test_reversed_ordering(self):
        assert spearman_rho([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_half(self):
        # d^2 sum = 2 so 1 - 6*2/(3*8) = 0.5
        assert spearman_rho([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, abs=1e-12)

    def test_average_ranks_make_exact_tie_one(self):
        assert spearman_rho([1, 1, 2], [1, 1, 2]) == pytest.approx(1.0, abs=1e-15)

    def test_undefined_on_constant(self):
        assert spearman_rho([1.0, 1.0, 1.0], [1, 2, 3]) is None
        assert spearman_rho([1, 2, 3], [5.0, 5.0, 5.0]) is None

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            spearman_rho([1, 2], [1, 2, 3])

    def test_too_few(self):
        with pytest.raises(TooFewError):
            spearman_rho([1.0], [2.0])

    def test_symmetry_and_range(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = rng.integers(2, 10)
            a = rng.integers(0, 6, n).astype(float)
            b = rng.integers(0, 6, n).astype(float)
            rho = spearman_rho(a, b)
            if rho is None:
                continue
            assert -1.0 - 1e-12 <= rho <= 1.0 + 1e-12
            assert rho == pytest.approx(spearman_rho(b, a), abs=1e-15)

    def test_monotone_invariance(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            n = rng.integers(2, 9)
            a = rng.uniform(0.1, 5.0, n)
            b = rng.uniform(0.1, 5.0, n)
            base = spearman_rho(a, b)
            if base is None:
                continue
            assert spearman_rho(2 * a + 1, b) == pytest.approx(base, abs=1e-12)
            assert spearman_rho(a, b**3) == pytest.approx(base, abs=1e-12)

    def test_exhaustive_small_permutations(self):
        for n in range(2, 5):
            for h in itertools.permutations(range(1, n + 1)):
                for g in itertools.permutations(range(1, n + 1)):
                    rho = spearman_rho(h, g)
                    assert rho == pytest.approx(classical_rho(h, g), abs=1e-12)
                    assert rho == pytest.approx(oracle_spearman(h, g), abs=1e-12)

    @given(
        st.lists(st.integers(min_value=0, max_value=6), min_size=2, max_size=10),
        st.data(),
    )
    @settings(max_examples=200, deadline=None)
    def test_matches_oracle_with_ties(self, a, data):
        b = data.draw(
            st.lists(
                st.integers(min_value=0, max_value=6), min_size=len(a), max_size=len(a)
            )
        )
        mine = spearman_rho(a, b)
        reference = oracle_spearman(a, b)
        if mine is None:
            assert reference is None
        else:
            assert mine == pytest.approx(reference, abs=1e-12)


class TestCorrelationSummary:
    def test_direct_arithmetic(self):
        summary = correlation_summary([1.0, -1.0, 0.5])
        assert summary.positive_fraction == pytest.approx(2 / 3)
        assert summary.mean == pytest.approx(1 / 6)
        assert summary.defined_count == 3

    def test_constant_values(self):
        summary = correlation_summary([0.71, 0.71, 0.71])
        assert summary.mean == pytest.approx(0.71)
        assert summary.variance == pytest.approx(0.0, abs=1e-15)

    def test_report_format_fixture(self):
        # shape of a corpus where 92% of scenes correlate positively with
        # mean 0.71: 23 positive values, 2 non-positive, mean pinned
        rhos = [(17.75 + 0.2) / 23] * 23 + [-0.1] * 2
        summary = correlation_summary(rhos, undefined_count=5)
        assert summary.positive_fraction == pytest.approx(0.92)
        assert summary.mean == pytest.approx(0.71)
        assert summary.undefined_count == 5

    def test_empty(self):
        summary = correlation_summary([], undefined_count=2)
        assert summary.defined_count == 0
        assert summary.undefined_count == 2
        assert summary.mean == 0.0
        assert summary.positive_fraction == 0.0
