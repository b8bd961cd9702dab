"""
Tests for low-rank DPP probabilities, objectives and gradients.
"""

import numpy as np
import pytest

from app.core.errors import InvalidInputError, SingularMinorError
from app.core.kernel import (
    Basket,
    KernelFactor,
    ObjectiveValue,
    ce_objective,
    grad_log_det_restricted,
    grad_log_prob,
    log_det_restricted,
    log_normalizer,
    log_prob,
    log_prob_many,
    mle_objective,
    nce_gradient,
    nce_gradient_scale,
    nce_log_posterior,
    nce_objective,
    normalizer_gradient,
    regularizer,
    regularizer_gradient,
    weighted_grad_log_det_sum,
)
from app.core.rng import make_rng
from conftest import det_minor, subsets


def finite_difference(func, values: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function of a factor matrix."""
    grad = np.zeros_like(values)
    for index in np.ndindex(values.shape):
        up = values.copy()
        down = values.copy()
        up[index] += step
        down[index] -= step
        grad[index] = (func(KernelFactor(up)) - func(KernelFactor(down))) / (2 * step)
    return grad


def random_basket(seed: int, num_items: int, max_size: int) -> Basket:
    """Seeded basket of 1 to max_size distinct items."""
    rng = make_rng(seed)
    size = int(rng.integers(1, max_size + 1))
    return Basket.of(rng.choice(num_items, size=size, replace=False))


class TestKernelFactor:
    """Validation of the factor and basket value types"""

    def test_rejects_rank_above_catalog(self):
        with pytest.raises(InvalidInputError):
            KernelFactor(np.ones((2, 3)))

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            KernelFactor(np.array([[1.0], [np.nan]]))

    def test_values_are_read_only(self, random_factor):
        factor = random_factor(4, 2)
        with pytest.raises(ValueError):
            factor.values[0, 0] = 1.0

    def test_initialize_is_seeded(self):
        first = KernelFactor.initialize(10, 3, make_rng(5))
        second = KernelFactor.initialize(10, 3, make_rng(5))
        assert np.array_equal(first.values, second.values)
        assert np.all(first.values >= 0)

    def test_basket_of_dedupes_and_sorts(self):
        assert Basket.of([5, 2, 5]).items == (2, 5)

    def test_basket_rejects_bad_items(self):
        with pytest.raises(InvalidInputError):
            Basket(())
        with pytest.raises(InvalidInputError):
            Basket((3, 1))
        with pytest.raises(InvalidInputError):
            Basket((-1, 2))

    def test_out_of_range_basket(self, random_factor):
        with pytest.raises(InvalidInputError):
            log_det_restricted(random_factor(3, 2), Basket((0, 3)))


class TestLogDeterminants:
    """Restricted minors and the normalizer"""

    def test_identity_minor(self):
        assert log_det_restricted(KernelFactor(np.eye(2)), Basket((0,))) == pytest.approx(0.0)

    def test_rank_deficient_minor_is_minus_infinity(self):
        assert log_det_restricted(KernelFactor(np.ones((3, 1))), Basket((0, 1))) == -np.inf

    def test_duplicate_rows_are_singular(self):
        values = np.array([[1.0, 2.0, 0.5], [1.0, 2.0, 0.5], [0.0, 1.0, 3.0]])
        assert log_det_restricted(KernelFactor(values), Basket((0, 1))) == -np.inf

    def test_matches_full_kernel_oracle(self, random_factor):
        factor = random_factor(5, 3, seed=7)
        kernel = factor.full_kernel()
        expected = np.log(det_minor(kernel, (1, 3)))
        assert log_det_restricted(factor, Basket((1, 3))) == pytest.approx(expected, abs=1e-10)

    def test_normalizer_of_identity(self):
        assert log_normalizer(KernelFactor(np.eye(2))) == pytest.approx(2 * np.log(2))

    def test_normalizer_of_zero_factor(self):
        assert log_normalizer(KernelFactor(np.zeros((3, 2)))) == pytest.approx(0.0)

    def test_normalizer_matches_subset_enumeration(self, random_factor):
        factor = random_factor(6, 3, seed=3)
        kernel = factor.full_kernel()
        total = sum(det_minor(kernel, s) for s in subsets(6))
        assert log_normalizer(factor) == pytest.approx(np.log(total), abs=1e-9)

    def test_many_matches_single(self, random_factor):
        factor = random_factor(8, 3, seed=1)
        baskets = [Basket((0, 1)), Basket((2,)), Basket((1, 4, 6)), Basket((0, 1, 2, 3)), Basket((5, 7))]
        expected = [log_prob(factor, b) for b in baskets]
        np.testing.assert_allclose(log_prob_many(factor, baskets), expected, atol=1e-10)


class TestLogProb:
    """Normalized set probabilities"""

    def test_identity_singleton(self):
        assert log_prob(KernelFactor(np.eye(2)), Basket((0,))) == pytest.approx(np.log(0.25))

    def test_zero_factor(self):
        assert log_prob(KernelFactor(np.zeros((3, 2))), Basket((1,))) == -np.inf

    @pytest.mark.parametrize("seed", range(50))
    def test_probabilities_sum_to_one(self, random_factor, seed):
        num_items = 5 + seed % 6
        factor = random_factor(num_items, 1 + seed % 5, seed=seed)
        total = np.exp(-log_normalizer(factor))
        for subset in subsets(num_items, min_size=1):
            total += np.exp(log_prob(factor, Basket(subset)))
        assert total == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("seed", range(5))
    def test_normalizer_matches_full_kernel(self, random_factor, seed):
        factor = random_factor(50, 4, seed=seed)
        _, expected = np.linalg.slogdet(factor.full_kernel() + np.eye(50))
        assert log_normalizer(factor) == pytest.approx(expected, abs=1e-10)

    @pytest.mark.parametrize("scale", [0.5, 3.0])
    def test_scaling_the_factor_shifts_log_det(self, random_factor, scale):
        factor = random_factor(6, 3, seed=21)
        scaled = KernelFactor(scale * factor.values)
        for basket in (Basket((2,)), Basket((0, 4)), Basket((1, 3, 5))):
            shift = log_det_restricted(scaled, basket) - log_det_restricted(factor, basket)
            assert shift == pytest.approx(2 * len(basket) * np.log(scale), abs=1e-10)


class TestGradients:
    """Analytic gradients against central finite differences"""

    def test_rows_outside_basket_are_zero(self, random_factor):
        factor = random_factor(6, 3, seed=2)
        grad = grad_log_det_restricted(factor, Basket((1, 4)))
        outside = [0, 2, 3, 5]
        assert np.all(grad[outside] == 0.0)

    @pytest.mark.parametrize("seed", range(100))
    def test_log_prob_gradient(self, random_factor, seed):
        factor = random_factor(5, 3, seed=seed)
        basket = random_basket(seed, 5, 3)
        numeric = finite_difference(lambda f: log_prob(f, basket), factor.values)
        np.testing.assert_allclose(grad_log_prob(factor, basket), numeric, rtol=1e-4, atol=1e-6)

    def test_normalizer_gradient_with_orthonormal_columns(self, rng):
        q, _ = np.linalg.qr(rng.normal(size=(4, 2)))
        factor = KernelFactor(q)
        np.testing.assert_allclose(normalizer_gradient(factor), q, atol=1e-12)
        numeric = finite_difference(log_normalizer, q)
        np.testing.assert_allclose(normalizer_gradient(factor), numeric, rtol=1e-5, atol=1e-7)

    def test_singular_minor_raises(self):
        factor = KernelFactor(np.ones((3, 1)))
        with pytest.raises(SingularMinorError) as excinfo:
            grad_log_det_restricted(factor, Basket((0, 1)))
        assert excinfo.value.basket == Basket((0, 1))

    def test_weighted_sum_matches_single_gradients(self, random_factor):
        factor = random_factor(6, 3, seed=9)
        baskets = [Basket((0, 1)), Basket((2, 3)), Basket((1, 4, 5)), Basket((0, 5))]
        weights = [1.0, -0.5, 2.0, 0.25]
        acc, skipped = weighted_grad_log_det_sum(factor, baskets, weights)
        expected = sum(w * grad_log_det_restricted(factor, b) for w, b in zip(weights, baskets))
        assert skipped == []
        np.testing.assert_allclose(acc, expected, atol=1e-10)

    def test_weighted_sum_reports_singular_baskets(self):
        values = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        factor = KernelFactor(values)
        acc, skipped = weighted_grad_log_det_sum(factor, [Basket((0, 2)), Basket((0, 1)), Basket((0, 1, 2))])
        assert skipped == [1, 2]
        np.testing.assert_allclose(acc, grad_log_det_restricted(factor, Basket((0, 2))), atol=1e-12)


class TestRegularizer:
    """Occurrence-weighted squared-norm penalty"""

    def test_zero_alpha(self, random_factor):
        factor = random_factor(4, 2)
        assert regularizer(factor, np.ones(4), 0.0) == 0.0

    def test_hand_computed(self):
        factor = KernelFactor(np.array([[3.0, 4.0], [0.0, 0.0]]))
        assert regularizer(factor, np.array([5, 0]), 1.0) == pytest.approx(5.0)

    def test_items_never_seen_are_not_penalized(self):
        factor = KernelFactor(np.array([[3.0, 4.0], [1.0, 1.0]]))
        assert regularizer(factor, np.array([5, 0]), 1.0) == pytest.approx(5.0)

    @pytest.mark.parametrize("seed", range(100))
    def test_gradient(self, random_factor, seed):
        factor = random_factor(5, 2, seed=seed)
        counts = make_rng(seed).integers(0, 8, size=5)
        numeric = finite_difference(lambda f: regularizer(f, counts, 0.7), factor.values)
        np.testing.assert_allclose(regularizer_gradient(factor, counts, 0.7), numeric, rtol=1e-4, atol=1e-6)

    def test_count_shape_is_checked(self, random_factor):
        with pytest.raises(InvalidInputError):
            regularizer(random_factor(4, 2), np.ones(3), 1.0)


class TestObjectives:
    """Contrastive and maximum-likelihood objectives"""

    def test_identical_negatives_cancel(self, random_factor):
        factor = random_factor(6, 3, seed=1)
        baskets = [Basket((0, 1)), Basket((2, 4))]
        counts = np.array([1, 1, 1, 0, 1, 0])
        value = ce_objective(factor, baskets, list(baskets), counts, 0.5)
        assert value.positive_term == value.negative_term
        assert value.total == pytest.approx(-regularizer(factor, counts, 0.5))

    def test_empty_negatives_is_mle(self, random_factor):
        factor = random_factor(6, 3, seed=1)
        positives = [Basket((0, 1)), Basket((2, 4, 5))]
        counts = np.ones(6)
        mle = np.mean([log_prob(factor, b) for b in positives]) - regularizer(factor, counts, 1.0)
        assert ce_objective(factor, positives, [], counts, 1.0).total == pytest.approx(mle)
        assert mle_objective(factor, positives, counts, 1.0).total == pytest.approx(mle)

    def test_composes_log_probs(self, random_factor):
        factor = random_factor(6, 3, seed=8)
        positives = [Basket((0, 1)), Basket((1, 2, 3)), Basket((4, 5))]
        negatives = [Basket((0, 5)), Basket((2, 3, 4))]
        value = ce_objective(factor, positives, negatives, np.zeros(6), 1.0)
        expected = np.mean([log_prob(factor, b) for b in positives]) - np.mean(
            [log_prob(factor, b) for b in negatives]
        )
        assert value.total == pytest.approx(expected, abs=1e-10)

    def test_zero_probability_positive(self):
        assert ObjectiveValue(-np.inf, -np.inf, 0.0).total == -np.inf

    def test_zero_probability_negative(self):
        factor = KernelFactor(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
        value = ce_objective(factor, [Basket((0, 2))], [Basket((0, 1))], np.zeros(3), 0.0)
        assert value.total == np.inf

    def test_needs_positives(self, random_factor):
        with pytest.raises(InvalidInputError):
            ce_objective(random_factor(4, 2), [], [], np.zeros(4), 1.0)


class TestNCE:
    """Noise-contrastive posterior and its gradient"""

    def test_scale_limits(self):
        assert nce_gradient_scale(-50.0, 0.0, 1.0, is_positive=True) == pytest.approx(1.0)
        assert nce_gradient_scale(0.0, -50.0, 1.0, is_positive=False) == pytest.approx(-1.0)
        assert nce_gradient_scale(0.0, 0.0, 1.0, is_positive=True) == pytest.approx(0.5)

    @pytest.mark.parametrize("seed", range(100))
    def test_gradient_matches_finite_differences(self, random_factor, seed):
        factor = random_factor(5, 3, seed=seed)
        basket = random_basket(seed, 5, 3)
        is_positive = seed % 2 == 0
        noise_log = -1.0 - 4.0 * make_rng(seed + 1000).random()

        def posterior(f):
            return nce_log_posterior(f, basket, is_positive, noise_log, 2.0)

        numeric = finite_difference(posterior, factor.values)
        analytic = nce_gradient(factor, basket, is_positive, noise_log, 2.0)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)

    def test_zero_probability_negative_has_no_gradient(self):
        factor = KernelFactor(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
        grad = nce_gradient(factor, Basket((0, 1)), False, -2.0, 1.0)
        assert np.all(grad == 0.0)

    def test_rejects_bad_noise(self, random_factor):
        factor = random_factor(4, 2)
        with pytest.raises(InvalidInputError):
            nce_gradient(factor, Basket((0,)), True, -np.inf, 1.0)
        with pytest.raises(InvalidInputError):
            nce_gradient(factor, Basket((0,)), True, -1.0, 0.0)

    def test_objective_sums_posteriors(self, random_factor):
        factor = random_factor(6, 3, seed=5)
        positives = [Basket((0, 1)), Basket((2, 3)), Basket((4,))]
        negatives = [Basket((1, 5)), Basket((0, 3, 4))]
        pos_noise = np.array([-2.0, -3.0, -1.5])
        neg_noise = np.array([-2.5, -4.0])
        ratio = len(negatives) / len(positives)
        value = nce_objective(factor, positives, negatives, pos_noise, neg_noise, np.zeros(6), 1.0)
        expected = sum(
            nce_log_posterior(factor, b, True, n, ratio) for b, n in zip(positives, pos_noise)
        ) + sum(nce_log_posterior(factor, b, False, n, ratio) for b, n in zip(negatives, neg_noise))
        assert value.total == pytest.approx(expected / len(positives), abs=1e-10)
