"""
Tests for MPR, precision@k, AUC and the toy next-item diagnostics.
"""

import numpy as np
import pytest

from app.core.errors import ConditioningError, InvalidInputError
from app.core.kernel import Basket, KernelFactor
from app.core.rng import make_rng
from app.schemas.evaluation import Ranking
from app.services.metrics import (
    DEFAULT_KS,
    auc_from_scores,
    empirical_next_item,
    evaluate,
    leave_one_out_percentiles,
    mpr,
    percentile_from_scores,
    percentile_rank,
    precision_at_k,
    precision_at_ks,
    rank_from_scores,
    symmetric_kl,
    toy_diagnostics,
)
from conftest import det_minor


def random_scorer(num_items: int, seed: int = 0):
    rng = make_rng(seed)

    def score(base: Basket):
        items = np.setdiff1d(np.arange(num_items), base.indices)
        return items, rng.random(items.size)

    return score


def oracle_scorer(partners):
    """Scores 1 for the item completing the observed pair, 0 elsewhere."""

    def score(base: Basket):
        items = np.setdiff1d(np.arange(len(partners)), base.indices)
        return items, (items == partners[base.items[0]]).astype(float)

    return score


class TestPercentiles:
    """Single held-out rankings"""

    def test_strictly_highest(self):
        assert percentile_from_scores(np.array([1, 2, 3]), np.array([0.9, 0.1, 0.2]), 1) == 100.0

    def test_all_tied(self):
        assert percentile_from_scores(np.array([1, 2, 3, 4]), np.ones(4), 3) == 100.0

    def test_lowest(self):
        assert percentile_from_scores(np.array([0, 5]), np.array([0.1, 0.2]), 0) == 50.0

    def test_rank(self):
        items = np.array([0, 2, 3, 4])
        scores = np.array([0.5, 0.9, 0.5, 0.1])
        assert rank_from_scores(items, scores, 2) == 1
        assert rank_from_scores(items, scores, 3) == 2
        assert rank_from_scores(items, scores, 4) == 4

    def test_not_a_candidate(self):
        with pytest.raises(InvalidInputError):
            percentile_from_scores(np.array([1, 2]), np.array([0.1, 0.2]), 0)

    def test_model_matches_sort_oracle(self, random_factor):
        factor = random_factor(6, 3, seed=17)
        kernel = factor.full_kernel()
        base = Basket((0, 4))
        candidates = [1, 2, 3, 5]
        dets = {j: det_minor(kernel, tuple(sorted((0, 4, j)))) for j in candidates}
        order = sorted(candidates, key=lambda j: dets[j])
        for position, held_out in enumerate(order, start=1):
            expected = 100.0 * position / len(candidates)
            assert percentile_rank(factor, base, held_out) == pytest.approx(expected)

    def test_held_out_inside_basket(self, random_factor):
        with pytest.raises(InvalidInputError):
            percentile_rank(random_factor(6, 3), Basket((0, 4)), 4)


class TestMPR:
    """Mean percentile rank"""

    def test_random_ranker_is_near_fifty(self):
        rng = make_rng(1)
        test = [Basket.of(rng.choice(200, size=3, replace=False)) for _ in range(5000)]
        values, skipped = leave_one_out_percentiles(random_scorer(200), test, make_rng(2))
        assert skipped == 0
        assert np.mean(values) == pytest.approx(50.0, abs=2.0)

    def test_perfect_ranker(self, random_factor):
        partners = [1, 0, 3, 2, 5, 4]
        test = [Basket((0, 1)), Basket((2, 3)), Basket((4, 5))] * 5
        assert mpr(random_factor(6, 3), test, make_rng(0), scorer=oracle_scorer(partners)) == 100.0

    def test_threads_do_not_change_results(self, random_factor):
        factor = random_factor(20, 4, seed=3)
        test = [Basket((0, 3, 7)), Basket((1, 2)), Basket((5, 9, 11, 19)), Basket((4, 8))]
        single = mpr(factor, test, make_rng(5), threads=1)
        pooled = mpr(factor, test, make_rng(5), threads=4)
        assert single == pooled
        assert 0.0 < single <= 100.0

    def test_marginal_ranking(self, random_factor):
        factor = random_factor(20, 4, seed=3)
        test = [Basket((0, 3, 7)), Basket((1, 2)), Basket((5, 9, 11, 19))]
        assert 0.0 < mpr(factor, test, make_rng(5), ranking=Ranking.MARGINAL) <= 100.0

    def test_unconditionable_cases_are_skipped(self):
        def scorer(base: Basket):
            if len(base) > 1:
                raise ConditioningError(observed=base.items)
            items = np.setdiff1d(np.arange(4), base.indices)
            return items, np.ones(items.size)

        test = [Basket((0, 1, 2)), Basket((2, 3))]
        values, skipped = leave_one_out_percentiles(scorer, test, make_rng(0))
        assert skipped == 1
        assert values == [100.0]


class TestPrecision:
    """precision@k"""

    def test_k_at_least_catalog(self, random_factor):
        factor = random_factor(6, 3, seed=2)
        test = [Basket((0, 1)), Basket((2, 3, 5))]
        assert precision_at_k(factor, test, 6) == 1.0

    def test_perfect_ranker(self, random_factor):
        partners = [1, 0, 3, 2, 5, 4]
        test = [Basket((0, 1)), Basket((2, 3))]
        result = precision_at_ks(random_factor(6, 3), test, [1, 2], scorer=oracle_scorer(partners))
        assert result == {1: 1.0, 2: 1.0}

    def test_matches_sort_oracle(self, random_factor):
        factor = random_factor(6, 3, seed=17)
        kernel = factor.full_kernel()
        basket = Basket((0, 2, 4))
        hits = []
        for held_out in basket:
            base = tuple(i for i in basket if i != held_out)
            dets = {j: det_minor(kernel, tuple(sorted(base + (j,)))) for j in range(6) if j not in base}
            ranked = sorted(dets, key=lambda j: -dets[j])
            hits.append(ranked.index(held_out) + 1 <= 2)
        assert precision_at_k(factor, [basket], 2) == pytest.approx(np.mean(hits))

    def test_bad_k(self, random_factor):
        with pytest.raises(InvalidInputError):
            precision_at_ks(random_factor(6, 3), [Basket((0, 1))], [0])


class TestAUC:
    """Mann-Whitney discrimination"""

    def test_pair_counting(self):
        assert auc_from_scores([3.0, 1.0], [2.0, 0.0]) == pytest.approx(0.75)

    def test_ties(self):
        assert auc_from_scores([1.0, 1.0, 1.0], [1.0, 1.0]) == pytest.approx(0.5)

    def test_separated(self):
        assert auc_from_scores([5.0, 6.0], [1.0, -np.inf]) == pytest.approx(1.0)

    def test_same_distribution(self):
        rng = make_rng(4)
        assert auc_from_scores(rng.normal(size=2000), rng.normal(size=2000)) == pytest.approx(0.5, abs=0.03)

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            auc_from_scores([], [1.0])


class TestToyDiagnostics:
    """Next-item distributions on the toy corpus"""

    def test_symmetric_kl(self):
        p = np.array([0.2, 0.8, 0.0])
        assert symmetric_kl(p, p) == pytest.approx(0.0)
        assert symmetric_kl(p, np.array([0.5, 0.5, 0.0])) > 0.0
        assert symmetric_kl(np.array([1.0, 0.0]), np.array([0.0, 1.0])) is None

    def test_empirical_next_item(self, toy):
        np.testing.assert_allclose(empirical_next_item(toy.train, Basket((0,)), 4), [0.0, 1.0, 0.0, 0.0])

    def test_diagnostics_shape(self, small_toy):
        factor = KernelFactor.initialize(4, 2, make_rng(3))
        diagnostics = toy_diagnostics(factor, small_toy)
        assert [row.basket for row in diagnostics.baskets] == [[1, 2], [3, 4]]
        assert len(diagnostics.held_out) == 4
        assert 0.0 <= diagnostics.mean_correct_probability <= 1.0
        kls = [row.symmetric_kl for row in diagnostics.baskets]
        if None not in kls:
            assert diagnostics.net_symmetric_kl == pytest.approx(sum(kls))

    @pytest.mark.parametrize("seed", range(100))
    def test_completion_mass_is_capped_at_one_half(self, small_toy, seed):
        # Each held-out probability is a ratio of pairwise minors, and Ptolemy's
        # inequality on the item lines caps the four completions at a total of 2.
        factor = KernelFactor(make_rng(seed).normal(size=(4, 2 + seed % 3)))
        diagnostics = toy_diagnostics(factor, small_toy)
        assert diagnostics.mean_correct_probability <= 0.5 + 1e-9
        if all(row.correct_probability > 0 for row in diagnostics.held_out):
            assert diagnostics.net_symmetric_kl >= np.log(2) - 1e-9

    def test_evaluate(self, small_toy):
        factor = KernelFactor.initialize(4, 2, make_rng(3))
        report = evaluate(factor, small_toy, trials=3, seed=1, toy=True)
        assert 0.0 <= report.mpr <= 100.0
        assert 0.0 <= report.auc <= 1.0
        assert report.trials == 3
        assert sorted(report.precision_at) == list(DEFAULT_KS)
        assert report.precision_at[5] == 1.0
        assert report.num_test_baskets == len(small_toy.test)
        assert report.toy is not None


class TestEvaluateSkippedTrials:
    """Trials whose every leave-one-out case fails"""

    @staticmethod
    def failing_scorer(failures: int):
        calls = {"n": 0}

        def score(base: Basket):
            calls["n"] += 1
            if calls["n"] <= failures:
                raise ConditioningError(observed=base.items)
            items = np.setdiff1d(np.arange(4), base.indices)
            return items, np.ones(items.size)

        return score

    def test_failed_trial_is_dropped(self, small_toy):
        factor = KernelFactor.initialize(4, 2, make_rng(3))
        scorer = self.failing_scorer(len(small_toy.test))
        report = evaluate(factor, small_toy, trials=2, seed=1, scorer=scorer)
        assert report.mpr == 100.0
        assert report.mpr_std == 0.0
        assert report.skipped_cases == len(small_toy.test)

    def test_no_trial_scored(self, small_toy):
        factor = KernelFactor.initialize(4, 2, make_rng(3))
        with pytest.raises(InvalidInputError):
            evaluate(factor, small_toy, trials=2, seed=1, scorer=self.failing_scorer(10**9))
