"""
conditioning.py - Dual-kernel conditioning and next-item scores

Conditioning a low-rank DPP on an observed set A works entirely in the K x K
dual space: C = V^T V, B = V^T, and the projection Z = I - B_A G^-1 B_A^T with
G = V_A V_A^T the Gram of the observed rows. After one eigendecomposition of
Z C Z every conditional inclusion marginal costs O(K^2), so a full pass over
the catalog is linear in M.

Usage:
    state = condition_on(factor, Basket.of([4, 9]))
    marginals = conditional_marginals(state)   # aligned with state.remaining_items
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from app.core.errors import ConditioningError, InvalidInputError
from app.core.kernel import PIVOT_TOLERANCE, Basket, KernelFactor, as_index_array

logger = logging.getLogger(__name__)

# Relative jitter added to the observed Gram when LAPACK rejects it outright.
GRAM_JITTER = 1e-12

# Eigen-directions of the conditioned dual at or below this carry no mass.
EIGEN_FLOOR = 1e-12

# Extension scores at or below this fraction of ||v_j||^2 are cancellation noise.
SCHUR_FLOOR = 1e-12

Observed = Union[Basket, Sequence[int], Iterable[int]]


@dataclass(frozen=True, eq=False)
class DualKernel:
    """K x K dual kernel C = V^T V; shares its nonzero spectrum with L = V V^T."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise InvalidInputError(f"dual kernel must be square, got shape {matrix.shape}")
        scale = max(1.0, float(np.max(np.abs(matrix))) if matrix.size else 1.0)
        if np.max(np.abs(matrix - matrix.T)) > 1e-12 * scale:
            raise InvalidInputError("dual kernel is not symmetric")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def rank(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class ConditionedState:
    """
    A DPP conditioned on A being part of the sample.

    conditioned_features is the K x M matrix B^A = Z B; its column i is the
    projected feature vector of item i, numerically zero for items of A.
    """

    conditioned_dual: np.ndarray
    conditioned_features: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    conditioned_set: Tuple[int, ...]

    @property
    def num_items(self) -> int:
        return self.conditioned_features.shape[1]

    @property
    def remaining_items(self) -> np.ndarray:
        """Indices of the items outside the conditioned set, ascending."""
        mask = np.ones(self.num_items, dtype=bool)
        mask[list(self.conditioned_set)] = False
        return np.flatnonzero(mask)

    def as_factor(self) -> KernelFactor:
        """
        Factor of the conditioned kernel L^A = (V Z)(V Z)^T.

        Rows of the conditioned items are (numerically) zero, so the result can
        be conditioned again on a disjoint set.
        """
        return KernelFactor(self.conditioned_features.T)


@dataclass(frozen=True, eq=False)
class ItemScores:
    """Unnormalized next-item scores s_j = det(L_{A+j}) / det(L_A) for j outside A."""

    items: np.ndarray
    values: np.ndarray
    log_base_det: float

    @property
    def total(self) -> float:
        return float(np.sum(self.values))

    def normalized(self) -> np.ndarray:
        """Scores divided by their sum; all zeros when every extension is singular."""
        total = self.total
        if total <= 0.0:
            return np.zeros_like(self.values)
        return self.values / total

    def as_dict(self) -> dict:
        return {int(i): float(v) for i, v in zip(self.items, self.values)}


def dual_kernel(factor: KernelFactor) -> DualKernel:
    """C = V^T V."""
    gram = factor.values.T @ factor.values
    return DualKernel(0.5 * (gram + gram.T))


def _observed_cholesky(gram: np.ndarray) -> Optional[np.ndarray]:
    """
    Cholesky of the observed-items Gram, retrying once with jitter.

    The jittered pivot must still clear the singularity tolerance after the
    jitter is taken back out, so exactly singular sets keep failing.
    """
    size = gram.shape[0]
    scale = max(float(np.max(np.diag(gram))), np.finfo(float).tiny)
    for jitter in (0.0, GRAM_JITTER):
        try:
            chol = np.linalg.cholesky(gram + jitter * scale * np.eye(size))
        except np.linalg.LinAlgError:
            logger.debug(f"Observed Gram rejected by Cholesky (jitter={jitter:g})")
            continue
        smallest = float(np.min(np.diag(chol))) ** 2 - jitter * scale
        if smallest <= PIVOT_TOLERANCE * scale:
            return None
        return chol
    return None


def projection_matrix(factor: KernelFactor, observed: np.ndarray) -> np.ndarray:
    """Z^A = I - V_A^T (V_A V_A^T)^-1 V_A, the projection off the span of A's rows."""
    rank = factor.rank
    if observed.size == 0:
        return np.eye(rank)
    if observed.size > rank:
        raise ConditioningError(observed=tuple(observed.tolist()))
    rows = factor.values[observed]
    chol = _observed_cholesky(rows @ rows.T)
    if chol is None:
        raise ConditioningError(observed=tuple(observed.tolist()))
    solved = linalg.cho_solve((chol, True), rows, check_finite=False)
    projection = np.eye(rank) - rows.T @ solved
    return 0.5 * (projection + projection.T)


def condition(dual: DualKernel, factor: KernelFactor, observed: Observed) -> ConditionedState:
    """
    Condition the DPP on every item of `observed` being selected.

    Args:
        dual: Dual kernel of `factor`
        factor: The kernel factor V
        observed: Items known to be in the set (may be empty)

    Returns:
        ConditionedState holding Z C Z, Z B and the eigendecomposition of Z C Z

    Raises:
        ConditioningError: if the observed set has zero probability
    """
    if dual.rank != factor.rank:
        raise InvalidInputError(f"dual kernel rank {dual.rank} does not match factor rank {factor.rank}")
    idx = as_index_array(observed, factor.num_items)
    projection = projection_matrix(factor, idx)

    conditioned_dual = projection @ dual.matrix @ projection
    conditioned_dual = 0.5 * (conditioned_dual + conditioned_dual.T)
    conditioned_features = projection @ factor.values.T
    eigenvalues, eigenvectors = linalg.eigh(conditioned_dual, check_finite=False)

    return ConditionedState(
        conditioned_dual=conditioned_dual,
        conditioned_features=conditioned_features,
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
        conditioned_set=tuple(sorted(int(i) for i in idx)),
    )


def condition_on(factor: KernelFactor, observed: Observed) -> ConditionedState:
    return condition(dual_kernel(factor), factor, observed)


def conditional_marginals(state: ConditionedState, clamp: bool = True) -> np.ndarray:
    """
    P(i in Y | A in Y) for every i outside A, aligned with state.remaining_items.

    P_i = sum_n (b_i^A . v_n)^2 / (lambda_n + 1) over eigenpairs with
    lambda_n above EIGEN_FLOOR. Raw values can stray outside [0, 1] by
    rounding; clamp=False returns them untouched.
    """
    keep = state.eigenvalues > EIGEN_FLOOR
    remaining = state.remaining_items
    if not np.any(keep) or remaining.size == 0:
        return np.zeros(remaining.size)
    projected = state.eigenvectors[:, keep].T @ state.conditioned_features[:, remaining]
    marginals = np.sum(projected ** 2 / (state.eigenvalues[keep] + 1.0)[:, None], axis=0)
    if clamp:
        marginals = np.clip(marginals, 0.0, 1.0)
    return marginals


def marginal_vector(state: ConditionedState, clamp: bool = True) -> np.ndarray:
    """Conditional marginals scattered into a length-M vector, zero on A."""
    out = np.zeros(state.num_items)
    out[state.remaining_items] = conditional_marginals(state, clamp=clamp)
    return out


def extension_scores(factor: KernelFactor, base: Basket) -> ItemScores:
    """
    Schur-complement scores s_j = L_jj - L_jA L_A^-1 L_Aj for every j outside `base`.

    det(L_{A+j}) = det(L_A) * s_j, so sampling j proportionally to the scores
    samples proportionally to P_L(A + j). Computed as ||v_j||^2 minus the
    squared norm of chol(G)^-1 V_A v_j, which costs O(M K |A|).

    Raises:
        ConditioningError: if L_A is singular
    """
    base.validate(factor.num_items)
    idx = base.indices
    if idx.size > factor.rank:
        raise ConditioningError(observed=base.items)
    rows = factor.values[idx]
    chol = _observed_cholesky(rows @ rows.T)
    if chol is None:
        raise ConditioningError(observed=base.items)

    mask = np.ones(factor.num_items, dtype=bool)
    mask[idx] = False
    items = np.flatnonzero(mask)
    log_base_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    if items.size == 0:
        return ItemScores(items=items, values=np.zeros(0), log_base_det=log_base_det)
    candidates = factor.values[items]

    cross = linalg.solve_triangular(chol, rows @ candidates.T, lower=True, check_finite=False)
    norms = np.sum(candidates ** 2, axis=1)
    values = norms - np.sum(cross ** 2, axis=0)
    values[values <= SCHUR_FLOOR * norms] = 0.0

    return ItemScores(
        items=items,
        values=values,
        log_base_det=log_base_det,
    )
