"""
metrics.py - Next-item and discrimination metrics

MPR and precision@k rank every item outside a partially observed basket by
its next-item score; AUC discriminates test baskets from random subsets of
the same size by log-likelihood. The toy diagnostics compare predictive and
empirical next-item distributions on a corpus of a few repeated baskets.
"""

import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from app.core.conditioning import condition_on, conditional_marginals, extension_scores
from app.core.errors import ConditioningError, InvalidInputError
from app.core.kernel import Basket, KernelFactor, log_prob_many
from app.core.rng import spawn_rngs
from app.schemas.evaluation import BasketDiagnostic, EvalReport, HeldOutDiagnostic, Ranking, ToyDiagnostics
from app.services.corpus import Corpus

logger = logging.getLogger(__name__)

DEFAULT_KS = (1, 5, 10, 20)

# Maps an observed basket to (candidate items, their scores).
Scorer = Callable[[Basket], Tuple[np.ndarray, np.ndarray]]


def model_scorer(factor: KernelFactor, ranking: Ranking = Ranking.EXTENSION) -> Scorer:
    """Next-item scores from the model: determinant ratios or conditional marginals."""

    def score(base: Basket) -> Tuple[np.ndarray, np.ndarray]:
        if Ranking(ranking) is Ranking.MARGINAL:
            state = condition_on(factor, base)
            return state.remaining_items, conditional_marginals(state)
        scores = extension_scores(factor, base)
        return scores.items, scores.values

    return score


def _held_out_score(items: np.ndarray, scores: np.ndarray, held_out: int) -> float:
    position = np.searchsorted(items, held_out)
    if position >= items.size or items[position] != held_out:
        raise InvalidInputError(f"item {held_out} is not a candidate")
    return float(scores[position])


def percentile_from_scores(items: np.ndarray, scores: np.ndarray, held_out: int) -> float:
    """100 * share of candidates the held-out item scores at least as high as."""
    target = _held_out_score(items, scores, held_out)
    return 100.0 * float(np.sum(target >= scores)) / items.size


def rank_from_scores(items: np.ndarray, scores: np.ndarray, held_out: int) -> int:
    """1 + number of candidates scoring strictly higher than the held-out item."""
    target = _held_out_score(items, scores, held_out)
    return 1 + int(np.sum(scores > target))


def percentile_rank(
    factor: KernelFactor,
    basket_minus_i: Basket,
    held_out: int,
    ranking: Ranking = Ranking.EXTENSION,
    scorer: Optional[Scorer] = None,
) -> float:
    """Percentile rank in (0, 100] of `held_out` among items outside `basket_minus_i`."""
    if held_out in basket_minus_i:
        raise InvalidInputError(f"held-out item {held_out} is part of the observed basket")
    scorer = scorer or model_scorer(factor, ranking)
    items, scores = scorer(basket_minus_i)
    return percentile_from_scores(items, scores, held_out)


def _ordered_map(func: Callable, cases: Sequence, threads: int) -> List:
    if threads <= 1 or len(cases) < 2:
        return [func(case) for case in cases]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, cases))


def leave_one_out_percentiles(
    scorer: Scorer,
    test_baskets: Sequence[Basket],
    rng: np.random.Generator,
    threads: int = 1,
) -> Tuple[List[float], int]:
    """
    One seeded held-out item per test basket.

    Returns:
        (percentile ranks of the cases that could be scored, number skipped)
    """
    cases = []
    for basket in test_baskets:
        if len(basket) < 2:
            raise InvalidInputError(f"test basket {basket.items} needs at least 2 items")
        held_out = basket.items[int(rng.integers(len(basket)))]
        cases.append((basket.without(held_out), held_out))

    def run(case: Tuple[Basket, int]) -> Optional[float]:
        base, held_out = case
        try:
            items, scores = scorer(base)
        except ConditioningError:
            return None
        return percentile_from_scores(items, scores, held_out)

    results = _ordered_map(run, cases, threads)
    values = [r for r in results if r is not None]
    skipped = len(results) - len(values)
    if skipped:
        logger.warning(f"Skipped {skipped} of {len(results)} leave-one-out cases: conditioning failed")
    return values, skipped


def mpr(
    factor: KernelFactor,
    test_baskets: Sequence[Basket],
    rng: np.random.Generator,
    ranking: Ranking = Ranking.EXTENSION,
    scorer: Optional[Scorer] = None,
    threads: int = 1,
) -> float:
    """Mean percentile rank; 50 is random, 100 is perfect."""
    values, _ = leave_one_out_percentiles(scorer or model_scorer(factor, ranking), test_baskets, rng, threads)
    if not values:
        raise InvalidInputError("no test case could be scored")
    return float(np.mean(values))


def precision_at_k(
    factor: KernelFactor,
    test_baskets: Sequence[Basket],
    k: int,
    ranking: Ranking = Ranking.EXTENSION,
    scorer: Optional[Scorer] = None,
    threads: int = 1,
) -> float:
    """Mean over baskets of the share of items ranked within the top k when held out in turn."""
    return precision_at_ks(factor, test_baskets, [k], ranking, scorer, threads)[k]


def precision_at_ks(
    factor: KernelFactor,
    test_baskets: Sequence[Basket],
    ks: Iterable[int],
    ranking: Ranking = Ranking.EXTENSION,
    scorer: Optional[Scorer] = None,
    threads: int = 1,
) -> Dict[int, float]:
    """precision_at_k for several k from a single pass of leave-one-out ranks."""
    ks = list(ks)
    if any(k < 1 for k in ks):
        raise InvalidInputError(f"k must be at least 1, got {ks}")
    scorer = scorer or model_scorer(factor, ranking)

    def basket_ranks(basket: Basket) -> List[int]:
        ranks = []
        for held_out in basket:
            try:
                items, scores = scorer(basket.without(held_out))
            except ConditioningError:
                continue
            ranks.append(rank_from_scores(items, scores, held_out))
        return ranks

    per_basket = [r for r in _ordered_map(basket_ranks, list(test_baskets), threads) if r]
    if not per_basket:
        raise InvalidInputError("no test case could be scored")
    return {
        k: float(np.mean([np.mean(np.asarray(ranks) <= k) for ranks in per_basket]))
        for k in ks
    }


def auc_from_scores(positive_scores: np.ndarray, negative_scores: np.ndarray) -> float:
    """Mann-Whitney AUC with average ranks, so tied pairs count one half."""
    positive_scores = np.asarray(positive_scores, dtype=float)
    negative_scores = np.asarray(negative_scores, dtype=float)
    n_pos, n_neg = positive_scores.size, negative_scores.size
    if n_pos == 0 or n_neg == 0:
        raise InvalidInputError("AUC needs both positive and negative scores")
    ranks = rankdata(np.concatenate([positive_scores, negative_scores]))
    statistic = np.sum(ranks[:n_pos]) - n_pos * (n_pos + 1) / 2.0
    return float(statistic / (n_pos * n_neg))


def random_subsets(sizes: Iterable[int], num_items: int, rng: np.random.Generator) -> List[Basket]:
    return [Basket(tuple(sorted(rng.choice(num_items, size=s, replace=False).tolist()))) for s in sizes]


def auc_discrimination(factor: KernelFactor, test_baskets: Sequence[Basket], rng: np.random.Generator) -> float:
    """AUC of log P(test basket) against log P(uniform random subset of the same size)."""
    if not test_baskets:
        raise InvalidInputError("AUC needs test baskets")
    negatives = random_subsets([len(b) for b in test_baskets], factor.num_items, rng)
    return auc_from_scores(log_prob_many(factor, test_baskets), log_prob_many(factor, negatives))


def symmetric_kl(p: np.ndarray, q: np.ndarray) -> Optional[float]:
    """sum (p - q) log(p / q) over outcomes where both are positive; None without overlap."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    shared = (p > 0) & (q > 0)
    if not np.any(shared):
        return None
    return float(np.sum((p[shared] - q[shared]) * np.log(p[shared] / q[shared])))


def empirical_next_item(train_baskets: Sequence[Basket], base: Basket, num_items: int) -> np.ndarray:
    """Frequency of each extra item among training baskets containing `base`."""
    counts = np.zeros(num_items)
    members = set(base.items)
    for basket in train_baskets:
        if members.issubset(basket.items):
            for item in basket:
                if item not in members:
                    counts[item] += 1
    total = counts.sum()
    return counts / total if total > 0 else counts


def predictive_next_item(factor: KernelFactor, base: Basket) -> np.ndarray:
    """Normalized extension scores scattered into a length-M vector."""
    scores = extension_scores(factor, base)
    out = np.zeros(factor.num_items)
    out[scores.items] = scores.normalized()
    return out


def toy_diagnostics(factor: KernelFactor, corpus: Corpus) -> ToyDiagnostics:
    """
    Correct-completion probability and symmetric KL per unique training basket.

    Each item of a unique basket is held out in turn; a basket's values are
    the means over its held-out items and the net KL is their sum.
    """
    train = corpus.train
    held_out_rows: List[HeldOutDiagnostic] = []
    basket_rows: List[BasketDiagnostic] = []
    for basket in sorted(Counter(train)):
        probabilities: List[float] = []
        divergences: List[float] = []
        for held_out in basket:
            base = basket.without(held_out)
            predictive = predictive_next_item(factor, base)
            empirical = empirical_next_item(train, base, corpus.num_items)
            divergence = symmetric_kl(empirical, predictive)
            probability = float(np.clip(predictive[held_out], 0.0, 1.0))
            probabilities.append(probability)
            if divergence is not None:
                divergences.append(divergence)
            held_out_rows.append(
                HeldOutDiagnostic(
                    basket=corpus.original_ids(basket),
                    held_out=corpus.catalog[held_out],
                    correct_probability=probability,
                    symmetric_kl=divergence,
                )
            )
        basket_rows.append(
            BasketDiagnostic(
                basket=corpus.original_ids(basket),
                correct_probability=float(np.mean(probabilities)),
                symmetric_kl=float(np.mean(divergences)) if divergences else None,
            )
        )

    kls = [row.symmetric_kl for row in basket_rows if row.symmetric_kl is not None]
    return ToyDiagnostics(
        held_out=held_out_rows,
        baskets=basket_rows,
        mean_correct_probability=float(np.mean([row.correct_probability for row in held_out_rows])),
        net_symmetric_kl=float(np.sum(kls)) if kls else None,
    )


def evaluate(
    factor: KernelFactor,
    corpus: Corpus,
    trials: int = 1,
    seed: int = 0,
    ks: Sequence[int] = DEFAULT_KS,
    ranking: Ranking = Ranking.EXTENSION,
    threads: int = 1,
    toy: bool = False,
    scorer: Optional[Scorer] = None,
) -> EvalReport:
    """
    MPR, precision@k and AUC on the test split, averaged over seeded trials.

    Only the held-out draws and the random AUC subsets change between trials.
    """
    test = [b for b in corpus.test if len(b) >= 2]
    if not test:
        raise InvalidInputError("test split has no basket with at least 2 items")
    if len(test) < len(corpus.test):
        logger.info(f"Ignoring {len(corpus.test) - len(test)} test baskets with fewer than 2 items")
    scorer = scorer or model_scorer(factor, ranking)

    mprs: List[float] = []
    aucs: List[float] = []
    skipped = 0
    for trial, rng in enumerate(spawn_rngs(seed, trials)):
        values, missed = leave_one_out_percentiles(scorer, test, rng, threads)
        skipped += missed
        if not values:
            logger.warning(f"Trial {trial}: every leave-one-out case was skipped; trial dropped")
            continue
        mprs.append(float(np.mean(values)))
        aucs.append(auc_discrimination(factor, test, rng))
    if not mprs:
        raise InvalidInputError("no leave-one-out case could be scored in any trial")
    precision = precision_at_ks(factor, test, ks, ranking, scorer, threads)

    return EvalReport(
        mpr=float(np.mean(mprs)),
        mpr_std=float(np.std(mprs)),
        precision_at=precision,
        precision_at_std={k: 0.0 for k in precision},
        auc=float(np.mean(aucs)),
        auc_std=float(np.std(aucs)),
        trials=trials,
        num_test_baskets=len(test),
        skipped_cases=skipped,
        ranking=ranking,
        toy=toy_diagnostics(factor, corpus) if toy else None,
    )
