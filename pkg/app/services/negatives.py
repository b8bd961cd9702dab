"""
negatives.py - Negative basket generation

Three regimes feed contrastive training:

- dynamic: swap one item of a positive for a replacement the current model
  likes, drawn proportionally to det(L_{A+j}) (so the negative always has
  nonzero probability under the generating factor)
- explicit: swap one item for an item that rarely co-occurs with another
  member of the basket, using empirical pair statistics only
- product: independent Bernoulli draws at each item's empirical inclusion
  rate; this is also the NCE noise distribution
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, List, Sequence

import numpy as np
from scipy import sparse

from app.core.conditioning import extension_scores
from app.core.errors import ConditioningError, InvalidInputError, NegativeGenerationError
from app.core.kernel import Basket, KernelFactor, as_index_array
from app.core.rng import choice_by_weight

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 10
MAX_PRODUCT_REDRAWS = 10000


class NegativeRegime(str, Enum):
    DYNAMIC = "dynamic"
    EXPLICIT = "explicit"
    PRODUCT = "product"


@dataclass(frozen=True, eq=False)
class EmpiricalStats:
    """
    Training-split statistics.

    singleton_prob[i] is the share of baskets containing i, pair_prob is a
    symmetric sparse matrix of the share of baskets containing both i and k
    (zero diagonal, absent pairs read as 0), occurrence_counts[i] is the
    number of baskets containing i.
    """

    singleton_prob: np.ndarray
    pair_prob: sparse.csr_matrix
    occurrence_counts: np.ndarray
    basket_count: int

    @property
    def num_items(self) -> int:
        return self.singleton_prob.shape[0]

    @classmethod
    def from_baskets(cls, baskets: Sequence[Basket], num_items: int) -> "EmpiricalStats":
        if not baskets:
            raise InvalidInputError("statistics need at least one basket")
        rows = np.repeat(np.arange(len(baskets)), [len(b) for b in baskets])
        cols = np.concatenate([b.indices for b in baskets])
        if cols.max() >= num_items:
            raise InvalidInputError(f"item index {cols.max()} out of range for M={num_items}")
        incidence = sparse.csr_matrix(
            (np.ones(cols.size), (rows, cols)), shape=(len(baskets), num_items)
        )
        co_occurrence = (incidence.T @ incidence).tocsr()
        counts = np.rint(co_occurrence.diagonal()).astype(np.int64)
        co_occurrence.setdiag(0)
        co_occurrence.eliminate_zeros()
        return cls(
            singleton_prob=counts / len(baskets),
            pair_prob=(co_occurrence / len(baskets)).tocsr(),
            occurrence_counts=counts,
            basket_count=len(baskets),
        )

    def pair(self, i: int, k: int) -> float:
        return float(self.pair_prob[i, k])

    def pair_row(self, i: int) -> np.ndarray:
        return self.pair_prob.getrow(i).toarray().ravel()


@dataclass
class NegativeBatch:
    baskets: List[Basket]
    regime: NegativeRegime
    source_epoch: int = 0
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.baskets)


def _draw_masked(rng: np.random.Generator, weights: np.ndarray, allowed: np.ndarray) -> int:
    """Weighted draw over allowed positions; uniform over them if their weights vanish."""
    masked = np.where(allowed, weights, 0.0)
    if masked.sum() <= 0.0:
        masked = allowed.astype(float)
    return choice_by_weight(rng, masked)


def dynamic_negative(
    factor: KernelFactor,
    positive: Basket,
    stats: EmpiricalStats,
    rng: np.random.Generator,
) -> Basket:
    """
    Swap one item of `positive` for a model-preferred replacement.

    The removed item i is drawn proportionally to its empirical probability
    among the basket's items. The replacement j is drawn proportionally to
    det(L_{A-i+j}) over items outside the positive. Removals whose remaining
    minor is singular, or that leave no admissible replacement, are retried
    with a different item.
    """
    if len(positive) < 2:
        raise NegativeGenerationError(f"basket {positive.items} is too small to swap an item")
    positive.validate(factor.num_items)
    members = positive.indices
    weights = stats.singleton_prob[members]
    untried = np.ones(members.size, dtype=bool)

    while untried.any():
        position = _draw_masked(rng, weights, untried)
        untried[position] = False
        base = positive.without(int(members[position]))
        try:
            scores = extension_scores(factor, base)
        except ConditioningError:
            logger.debug(f"Singular base {base.items} while building dynamic negative")
            continue
        candidate_weights = np.where(np.isin(scores.items, members), 0.0, scores.values)
        if candidate_weights.sum() <= 0.0:
            continue
        replacement = int(scores.items[choice_by_weight(rng, candidate_weights)])
        return base.with_item(replacement)

    raise NegativeGenerationError(f"no removal from {positive.items} admits a replacement")


def explicit_negative(positive: Basket, stats: EmpiricalStats, rng: np.random.Generator) -> Basket:
    """
    Approximate explicit negative from pair statistics.

    Draws i and j != i from the basket proportionally to their empirical
    probabilities, then k outside the basket proportionally to
    1 - P({i, k}), and returns the basket with j replaced by k.
    """
    if len(positive) < 2:
        raise NegativeGenerationError(f"basket {positive.items} is too small to swap an item")
    positive.validate(stats.num_items)
    members = positive.indices
    outside = np.setdiff1d(np.arange(stats.num_items), members, assume_unique=True)
    if outside.size == 0:
        raise NegativeGenerationError("basket covers the whole catalog")

    weights = stats.singleton_prob[members]
    i_pos = _draw_masked(rng, weights, np.ones(members.size, dtype=bool))
    others = np.ones(members.size, dtype=bool)
    others[i_pos] = False
    j_pos = _draw_masked(rng, weights, others)

    replacement_weights = 1.0 - stats.pair_row(int(members[i_pos]))[outside]
    if replacement_weights.sum() <= 0.0:
        logger.warning(
            f"Every outside item always co-occurs with {members[i_pos]}; "
            "drawing the replacement uniformly"
        )
    k = int(outside[choice_by_weight(rng, np.clip(replacement_weights, 0.0, None))])
    return positive.without(int(members[j_pos])).with_item(k)


def product_negative(stats: EmpiricalStats, num_items: int, rng: np.random.Generator) -> Basket:
    """Independent inclusion of each item at rate p(i); empty draws are redrawn."""
    probs = stats.singleton_prob
    if probs.shape[0] != num_items:
        raise InvalidInputError(f"statistics cover {probs.shape[0]} items, expected {num_items}")
    if not np.any(probs > 0.0):
        raise NegativeGenerationError("every item has zero empirical probability")
    for _ in range(MAX_PRODUCT_REDRAWS):
        included = np.flatnonzero(rng.random(num_items) < probs)
        if included.size:
            return Basket(tuple(included.tolist()))
    raise NegativeGenerationError("product distribution kept producing empty baskets")


def product_log_density(stats: EmpiricalStats, basket: Iterable[int], num_items: int) -> float:
    """Exact log of prod_{i in A} p(i) * prod_{i not in A} (1 - p(i))."""
    probs = stats.singleton_prob
    idx = as_index_array(basket, num_items)
    inside = np.zeros(num_items, dtype=bool)
    inside[idx] = True
    with np.errstate(divide="ignore"):
        value = np.sum(np.log(probs[inside])) + np.sum(np.log1p(-probs[~inside]))
    return float(value)


def negative_count(ratio: float, num_positives: int) -> int:
    """ceil(ratio * |A+|), rounded first so 0.5 * 100 is exactly 50."""
    return int(np.ceil(round(ratio * num_positives, 9)))


def generate_batch(
    regime: NegativeRegime,
    factor: KernelFactor,
    positives: Sequence[Basket],
    stats: EmpiricalStats,
    ratio: float,
    rng: np.random.Generator,
    source_epoch: int = 0,
) -> NegativeBatch:
    """
    Generate ceil(ratio * |positives|) negatives.

    Source positives are taken by cycling a seeded permutation, so with
    ratio > 1 each positive seeds several negatives. A sample that fails
    MAX_ATTEMPTS times is skipped with a warning.
    """
    if ratio <= 0:
        raise InvalidInputError(f"negative ratio must be positive, got {ratio}")
    if not positives:
        raise InvalidInputError("cannot generate negatives without positives")
    regime = NegativeRegime(regime)

    draw: Callable[[Basket], Basket]
    if regime is NegativeRegime.DYNAMIC:
        draw = lambda source: dynamic_negative(factor, source, stats, rng)  # noqa: E731
    elif regime is NegativeRegime.EXPLICIT:
        draw = lambda source: explicit_negative(source, stats, rng)  # noqa: E731
    else:
        draw = lambda source: product_negative(stats, factor.num_items, rng)  # noqa: E731

    order = rng.permutation(len(positives))
    batch = NegativeBatch(baskets=[], regime=regime, source_epoch=source_epoch)
    for n in range(negative_count(ratio, len(positives))):
        source = positives[order[n % len(positives)]]
        for _ in range(MAX_ATTEMPTS):
            try:
                batch.baskets.append(draw(source))
                break
            except (NegativeGenerationError, ConditioningError) as exc:
                logger.debug(f"Negative generation retry for {source.items}: {exc}")
        else:
            batch.skipped += 1
            logger.warning(
                f"Gave up on a {regime.value} negative from {source.items} after {MAX_ATTEMPTS} attempts"
            )
    return batch
