"""
kernel.py - Low-rank DPP kernel: probabilities, objectives and gradients

The model is an M x K factor V with L = V V^T. Nothing here materializes the
M x M kernel: the normalizer goes through the K x K matrix I_K + V^T V and a
restricted minor only touches the rows of V that belong to the basket.

Usage:
    from app.core.kernel import Basket, KernelFactor, log_prob

    factor = KernelFactor.initialize(num_items=100, rank=10, rng=make_rng(7))
    value = log_prob(factor, Basket.of([3, 17, 42]))
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.special import expit, log_expit

from app.core.errors import InvalidInputError, SingularMinorError

logger = logging.getLogger(__name__)

# A Cholesky pivot whose square is at or below this fraction of the largest
# diagonal entry of the Gram matrix marks the minor as singular.
PIVOT_TOLERANCE = 1e-13


@dataclass(frozen=True, eq=False)
class KernelFactor:
    """M x K factor V of the kernel L = V V^T. Row i is item i's feature vector."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise InvalidInputError(f"factor must be a 2-d matrix, got shape {values.shape}")
        num_items, rank = values.shape
        if num_items < 1 or rank < 1:
            raise InvalidInputError(f"factor needs M >= 1 and K >= 1, got {values.shape}")
        if rank > num_items:
            raise InvalidInputError(f"rank K={rank} exceeds catalog size M={num_items}")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("factor contains NaN or Inf entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def num_items(self) -> int:
        return self.values.shape[0]

    @property
    def rank(self) -> int:
        return self.values.shape[1]

    @classmethod
    def initialize(cls, num_items: int, rank: int, rng: np.random.Generator) -> "KernelFactor":
        """Uniform [0, 1) entries scaled by 1/sqrt(K); nonzero minors with probability 1."""
        return cls(rng.random((num_items, rank)) / np.sqrt(rank))

    def full_kernel(self) -> np.ndarray:
        """Materialize L = V V^T. Only meant for small catalogs and test oracles."""
        return self.values @ self.values.T


@dataclass(frozen=True, order=True)
class Basket:
    """A non-empty, duplicate-free set of item indices stored in increasing order."""

    items: Tuple[int, ...]

    def __post_init__(self) -> None:
        items = tuple(int(i) for i in self.items)
        if not items:
            raise InvalidInputError("basket must be non-empty")
        if items[0] < 0:
            raise InvalidInputError(f"negative item index {items[0]}")
        if any(a >= b for a, b in zip(items, items[1:])):
            raise InvalidInputError(f"basket items must be strictly increasing: {items}")
        object.__setattr__(self, "items", items)

    @classmethod
    def of(cls, items: Iterable[int]) -> "Basket":
        """Build a basket from any iterable, dropping duplicates."""
        return cls(tuple(sorted({int(i) for i in items})))

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[int]:
        return iter(self.items)

    def __contains__(self, item: object) -> bool:
        return item in self.items

    @property
    def indices(self) -> np.ndarray:
        return np.asarray(self.items, dtype=np.intp)

    def validate(self, num_items: int) -> None:
        if self.items[-1] >= num_items:
            raise InvalidInputError(f"item index {self.items[-1]} out of range for M={num_items}")

    def without(self, item: int) -> "Basket":
        return Basket(tuple(i for i in self.items if i != item))

    def with_item(self, item: int) -> "Basket":
        return Basket.of(self.items + (item,))


@dataclass(frozen=True)
class ObjectiveValue:
    """Decomposed objective: total = positive_term - negative_term - regularizer."""

    positive_term: float
    negative_term: float
    regularizer: float

    @property
    def total(self) -> float:
        # A zero-probability positive dominates whatever the negatives do.
        if self.positive_term == -np.inf:
            return -np.inf
        return self.positive_term - self.negative_term - self.regularizer


def as_index_array(items: Iterable[int], num_items: int) -> np.ndarray:
    """Validate a collection of item indices against the catalog size."""
    idx = np.asarray(list(items), dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= num_items):
        raise InvalidInputError(f"item index out of range for M={num_items}: {idx.tolist()}")
    if np.unique(idx).size != idx.size:
        raise InvalidInputError(f"duplicate item indices: {idx.tolist()}")
    return idx


def restricted_cholesky(gram: np.ndarray) -> Optional[np.ndarray]:
    """Lower Cholesky factor of a Gram matrix, or None when it is singular."""
    if gram.shape[0] == 0:
        return gram.copy()
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        return None
    scale = max(float(np.max(np.diag(gram))), np.finfo(float).tiny)
    if float(np.min(np.diag(chol))) ** 2 <= PIVOT_TOLERANCE * scale:
        return None
    return chol


def log_det_restricted(factor: KernelFactor, basket: Basket) -> float:
    """log det(V_A V_A^T); -inf when the minor is singular, always when |A| > K."""
    basket.validate(factor.num_items)
    if len(basket) > factor.rank:
        return -np.inf
    rows = factor.values[basket.indices]
    chol = restricted_cholesky(rows @ rows.T)
    if chol is None:
        return -np.inf
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def log_normalizer(factor: KernelFactor) -> float:
    """log det(L + I_M), computed as log det(I_K + V^T V)."""
    dual = np.eye(factor.rank) + factor.values.T @ factor.values
    chol = linalg.cholesky(dual, lower=True, check_finite=False)
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def log_prob(factor: KernelFactor, basket: Basket) -> float:
    """log P_L(A) = log det(L_A) - log det(L + I)."""
    value = log_det_restricted(factor, basket)
    if value == -np.inf:
        return value
    return value - log_normalizer(factor)


def _group_by_size(baskets: Sequence[Basket], num_items: int) -> Dict[int, Tuple[np.ndarray, np.ndarray]]:
    """Map basket size -> (positions in the input, index matrix of shape (B, size))."""
    groups: Dict[int, List[int]] = {}
    for position, basket in enumerate(baskets):
        basket.validate(num_items)
        groups.setdefault(len(basket), []).append(position)
    return {
        size: (
            np.asarray(positions, dtype=np.intp),
            np.asarray([baskets[p].items for p in positions], dtype=np.intp),
        )
        for size, positions in groups.items()
    }


def _batched_cholesky(grams: np.ndarray) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Cholesky of a stack of Grams; returns (factors, singular mask) or None if LAPACK refuses."""
    try:
        chol = np.linalg.cholesky(grams)
    except np.linalg.LinAlgError:
        return None
    diag = np.diagonal(chol, axis1=1, axis2=2)
    scale = np.maximum(np.max(np.diagonal(grams, axis1=1, axis2=2), axis=1), np.finfo(float).tiny)
    singular = np.min(diag, axis=1) ** 2 <= PIVOT_TOLERANCE * scale
    return chol, singular


def log_det_restricted_many(factor: KernelFactor, baskets: Sequence[Basket]) -> np.ndarray:
    """Vectorized log_det_restricted over many baskets, grouped by basket size."""
    out = np.full(len(baskets), -np.inf)
    for size, (positions, idx) in _group_by_size(baskets, factor.num_items).items():
        if size > factor.rank:
            continue
        rows = factor.values[idx]
        grams = rows @ rows.transpose(0, 2, 1)
        batched = _batched_cholesky(grams)
        if batched is None:
            out[positions] = [log_det_restricted(factor, baskets[p]) for p in positions]
            continue
        chol, singular = batched
        diag = np.diagonal(chol, axis1=1, axis2=2)
        safe = np.where(singular[:, None], 1.0, diag)
        values = 2.0 * np.sum(np.log(safe), axis=1)
        values[singular] = -np.inf
        out[positions] = values
    return out


def log_prob_many(factor: KernelFactor, baskets: Sequence[Basket]) -> np.ndarray:
    return log_det_restricted_many(factor, baskets) - log_normalizer(factor)


def grad_log_det_restricted(factor: KernelFactor, basket: Basket) -> np.ndarray:
    """Gradient of log det(V_A V_A^T): rows 2 (V_A V_A^T)^-1 V_A on A, zero elsewhere."""
    basket.validate(factor.num_items)
    idx = basket.indices
    rows = factor.values[idx]
    chol = restricted_cholesky(rows @ rows.T) if len(basket) <= factor.rank else None
    if chol is None:
        raise SingularMinorError(f"singular minor for basket {basket.items}", basket=basket)
    grad = np.zeros_like(factor.values)
    grad[idx] = 2.0 * linalg.cho_solve((chol, True), rows, check_finite=False)
    return grad


def normalizer_gradient(factor: KernelFactor) -> np.ndarray:
    """Gradient of log det(I_K + V^T V): 2 V (I_K + V^T V)^-1."""
    dual = np.eye(factor.rank) + factor.values.T @ factor.values
    cho = linalg.cho_factor(dual, lower=True, check_finite=False)
    return 2.0 * linalg.cho_solve(cho, factor.values.T, check_finite=False).T


def grad_log_prob(factor: KernelFactor, basket: Basket) -> np.ndarray:
    """Gradient of log P_L(A) with respect to every entry of V."""
    return grad_log_det_restricted(factor, basket) - normalizer_gradient(factor)


def weighted_grad_log_det_sum(
    factor: KernelFactor,
    baskets: Sequence[Basket],
    weights: Optional[Sequence[float]] = None,
) -> Tuple[np.ndarray, List[int]]:
    """
    Sum of w_b * grad log det(L_{A_b}) over baskets, batched by size.

    Args:
        factor: Current kernel factor
        baskets: Baskets to differentiate
        weights: Per-basket weights (default 1)

    Returns:
        (M x K gradient accumulator, positions of baskets skipped as singular)
    """
    weights = np.ones(len(baskets)) if weights is None else np.asarray(weights, dtype=float)
    acc = np.zeros_like(factor.values)
    skipped: List[int] = []
    for size, (positions, idx) in _group_by_size(baskets, factor.num_items).items():
        if size > factor.rank:
            skipped.extend(positions.tolist())
            continue
        rows = factor.values[idx]
        grams = rows @ rows.transpose(0, 2, 1)
        batched = _batched_cholesky(grams)
        if batched is None:
            for p in positions:
                try:
                    acc += weights[p] * grad_log_det_restricted(factor, baskets[p])
                except SingularMinorError:
                    skipped.append(int(p))
            continue
        _, singular = batched
        skipped.extend(positions[singular].tolist())
        keep = ~singular
        if not np.any(keep):
            continue
        solved = np.linalg.solve(grams[keep], rows[keep])
        contrib = 2.0 * weights[positions[keep]][:, None, None] * solved
        np.add.at(acc, idx[keep], contrib)
    if skipped:
        logger.debug(f"Skipped {len(skipped)} singular baskets in gradient")
    return acc, sorted(skipped)


def regularizer(factor: KernelFactor, occurrence_counts: np.ndarray, alpha: float) -> float:
    """R(V) = alpha * sum_i ||v_i||^2 / mu_i over items with mu_i > 0."""
    counts = _checked_counts(factor, occurrence_counts)
    if alpha == 0.0:
        return 0.0
    covered = counts > 0
    norms = np.sum(factor.values[covered] ** 2, axis=1)
    return float(alpha * np.sum(norms / counts[covered]))


def regularizer_gradient(factor: KernelFactor, occurrence_counts: np.ndarray, alpha: float) -> np.ndarray:
    counts = _checked_counts(factor, occurrence_counts)
    grad = np.zeros_like(factor.values)
    covered = counts > 0
    grad[covered] = 2.0 * alpha * factor.values[covered] / counts[covered][:, None]
    return grad


def _checked_counts(factor: KernelFactor, occurrence_counts: np.ndarray) -> np.ndarray:
    counts = np.asarray(occurrence_counts, dtype=float)
    if counts.shape != (factor.num_items,):
        raise InvalidInputError(
            f"occurrence counts have shape {counts.shape}, expected ({factor.num_items},)"
        )
    return counts


def ce_objective(
    factor: KernelFactor,
    positives: Sequence[Basket],
    negatives: Sequence[Basket],
    occurrence_counts: np.ndarray,
    alpha: float,
) -> ObjectiveValue:
    """
    Contrastive objective: mean log P(A+) - mean log P(A-) - R(V).

    With no negatives this is exactly the regularized MLE objective.
    """
    if not positives:
        raise InvalidInputError("contrastive objective needs at least one positive basket")
    log_norm = log_normalizer(factor)
    positive_term = float(np.mean(log_det_restricted_many(factor, positives) - log_norm))
    negative_term = 0.0
    if negatives:
        negative_term = float(np.mean(log_det_restricted_many(factor, negatives) - log_norm))
    return ObjectiveValue(
        positive_term=positive_term,
        negative_term=negative_term,
        regularizer=regularizer(factor, occurrence_counts, alpha),
    )


def mle_objective(
    factor: KernelFactor,
    positives: Sequence[Basket],
    occurrence_counts: np.ndarray,
    alpha: float,
) -> ObjectiveValue:
    return ce_objective(factor, positives, [], occurrence_counts, alpha)


def nce_logit(log_prob_value: np.ndarray, noise_log_density: np.ndarray, ratio: float) -> np.ndarray:
    """log P_L(A) - log(|A-|/|A+|) - log p_n(A); the posterior of "data" is its sigmoid."""
    return np.asarray(log_prob_value) - np.log(ratio) - np.asarray(noise_log_density)


def nce_log_posterior(
    factor: KernelFactor,
    basket: Basket,
    is_positive: bool,
    noise_log_density: float,
    ratio: float,
) -> float:
    """log P(A in A* | A) for a single sample, A* being the positive or negative class."""
    z = nce_logit(log_prob(factor, basket), noise_log_density, ratio)
    return float(log_expit(z) if is_positive else log_expit(-z))


def nce_gradient_scale(log_prob_value: float, noise_log_density: float, ratio: float, is_positive: bool) -> float:
    """epsilon* - (1 + ratio * p_n(A) / P_L(A))^-1, evaluated in log space."""
    z = float(nce_logit(log_prob_value, noise_log_density, ratio))
    return float(expit(-z)) if is_positive else -float(expit(z))


def nce_gradient(
    factor: KernelFactor,
    basket: Basket,
    is_positive: bool,
    noise_log_density: float,
    ratio: float,
) -> np.ndarray:
    """Gradient of the NCE log posterior for one sample."""
    if not np.isfinite(noise_log_density):
        raise InvalidInputError("noise log density must be finite")
    if ratio <= 0:
        raise InvalidInputError(f"negative-to-positive ratio must be positive, got {ratio}")
    value = log_prob(factor, basket)
    if value == -np.inf:
        if not is_positive:
            return np.zeros_like(factor.values)
        # scale tends to 1; the log-det gradient itself is unbounded here
        return grad_log_prob(factor, basket)
    scale = nce_gradient_scale(value, noise_log_density, ratio, is_positive)
    return scale * grad_log_prob(factor, basket)


def nce_objective(
    factor: KernelFactor,
    positives: Sequence[Basket],
    negatives: Sequence[Basket],
    positive_noise_log_density: np.ndarray,
    negative_noise_log_density: np.ndarray,
    occurrence_counts: np.ndarray,
    alpha: float,
) -> ObjectiveValue:
    """
    NCE conditional log-likelihood normalized by |A+|, minus the same R(V) as CE.

    The negative term is stored with a flipped sign so that total keeps the
    positive_term - negative_term - regularizer decomposition.
    """
    if not positives or not negatives:
        raise InvalidInputError("NCE needs both positive and negative samples")
    ratio = len(negatives) / len(positives)
    z_pos = nce_logit(log_prob_many(factor, positives), positive_noise_log_density, ratio)
    z_neg = nce_logit(log_prob_many(factor, negatives), negative_noise_log_density, ratio)
    with np.errstate(invalid="ignore"):
        positive_term = float(np.sum(log_expit(z_pos)) / len(positives))
        negative_term = -float(np.sum(log_expit(-z_neg)) / len(positives))
    return ObjectiveValue(
        positive_term=positive_term,
        negative_term=negative_term,
        regularizer=regularizer(factor, occurrence_counts, alpha),
    )
