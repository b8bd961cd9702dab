"""
training.py - Stochastic gradient ascent for MLE, contrastive estimation and NCE

One run owns its factor. Three independent random streams are spawned from
the configured seed (initialization, minibatch order, negative sampling), so
a contrastive run that never draws negatives follows the MLE run exactly.
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from app.core.errors import DivergenceError, InvalidInputError
from app.core.kernel import (
    Basket,
    KernelFactor,
    ObjectiveValue,
    ce_objective,
    log_det_restricted_many,
    log_normalizer,
    log_prob_many,
    nce_logit,
    nce_objective,
    normalizer_gradient,
    regularizer_gradient,
    weighted_grad_log_det_sum,
)
from app.core.rng import spawn_rngs
from app.schemas.training import EpochRecord, Method, StepSchedule, StopReason, TrainConfig, TrainReport
from app.services.corpus import Corpus, infer_rank
from app.services.negatives import EmpiricalStats, NegativeRegime, generate_batch, product_log_density

logger = logging.getLogger(__name__)


@dataclass
class GradientResult:
    """Minibatch ascent direction plus what was left out of it."""

    gradient: np.ndarray
    objective: ObjectiveValue
    skipped: int = 0
    pathological: int = 0


class ProductNoise:
    """Log densities under the product distribution, memoized per basket."""

    def __init__(self, stats: EmpiricalStats):
        self.stats = stats
        self._cache: Dict[Basket, float] = {}

    def log_density(self, basket: Basket) -> float:
        value = self._cache.get(basket)
        if value is None:
            value = product_log_density(self.stats, basket, self.stats.num_items)
            self._cache[basket] = value
        return value

    def log_densities(self, baskets: Sequence[Basket]) -> np.ndarray:
        return np.array([self.log_density(b) for b in baskets], dtype=float)


def step_schedule(iteration: int, config: TrainConfig) -> float:
    """eta_0 / (1 + t / T0) for inverse_t, eta_0 for constant."""
    if iteration < 0:
        raise InvalidInputError(f"iteration must be non-negative, got {iteration}")
    if config.step_schedule is StepSchedule.CONSTANT:
        return config.step_size_initial
    return config.step_size_initial / (1.0 + iteration / config.schedule_horizon)


def check_convergence(history: Sequence[float], epsilon: float) -> bool:
    """
    Relative change of the last two validation log-likelihoods below epsilon.

    Falls back to the absolute change when the previous value is exactly 0.
    """
    if len(history) < 2:
        raise InvalidInputError("convergence check needs at least two entries")
    previous, current = float(history[-2]), float(history[-1])
    change = abs(current - previous)
    if previous == 0.0:
        return change < epsilon
    return change / abs(previous) < epsilon


def validation_log_likelihood(factor: KernelFactor, baskets: Sequence[Basket]) -> float:
    return float(np.mean(log_prob_many(factor, baskets)))


def _pathological_mask(log_probs: np.ndarray, floor: float) -> np.ndarray:
    return ~(log_probs >= floor)


def contrastive_gradient(
    factor: KernelFactor,
    positives: Sequence[Basket],
    negatives: Sequence[Basket],
    config: TrainConfig,
    stats: EmpiricalStats,
) -> GradientResult:
    """
    Gradient of the minibatch contrastive objective.

    mean_pos grad log P - mean_neg grad log P - grad R. Negatives whose
    log-probability falls below the configured floor are left out of both
    the gradient and the reported objective. With no negatives this is the
    MLE gradient.
    """
    log_norm = log_normalizer(factor)
    norm_grad = normalizer_gradient(factor)

    pos_sum, pos_skipped = weighted_grad_log_det_sum(factor, positives)
    used_positives = len(positives) - len(pos_skipped)
    gradient = -regularizer_gradient(factor, stats.occurrence_counts, config.alpha)
    if used_positives:
        gradient += pos_sum / used_positives - norm_grad

    kept: List[Basket] = list(negatives)
    pathological = 0
    if negatives:
        neg_log_probs = log_det_restricted_many(factor, negatives) - log_norm
        mask = _pathological_mask(neg_log_probs, config.negative_log_prob_floor)
        pathological = int(mask.sum())
        if pathological:
            logger.warning(
                f"{pathological} pathological negative(s) below log-probability "
                f"{config.negative_log_prob_floor:g} left out of this step"
            )
        kept = [b for b, bad in zip(negatives, mask) if not bad]

    neg_skipped: List[int] = []
    if kept:
        neg_sum, neg_skipped = weighted_grad_log_det_sum(factor, kept)
        used_negatives = len(kept) - len(neg_skipped)
        if used_negatives:
            gradient -= neg_sum / used_negatives - norm_grad

    skipped = len(pos_skipped) + len(neg_skipped)
    for position in pos_skipped:
        logger.debug(f"Skipped singular positive {positives[position].items}")

    objective = ce_objective(factor, positives, kept, stats.occurrence_counts, config.alpha)
    return GradientResult(gradient=gradient, objective=objective, skipped=skipped, pathological=pathological)


def nce_gradient_batch(
    factor: KernelFactor,
    positives: Sequence[Basket],
    negatives: Sequence[Basket],
    config: TrainConfig,
    stats: EmpiricalStats,
    noise: ProductNoise,
) -> GradientResult:
    """
    Gradient of the NCE log posterior summed over the batch and divided by |A+|.

    Each sample contributes its logistic weight times grad log P(A). Negatives
    with zero model probability contribute nothing; positives with a singular
    minor are skipped.
    """
    if not negatives:
        raise InvalidInputError("NCE step needs negatives")
    ratio = len(negatives) / len(positives)
    baskets = list(positives) + list(negatives)
    noise_log = noise.log_densities(baskets)
    log_probs = log_prob_many(factor, baskets)

    with np.errstate(invalid="ignore"):
        z = nce_logit(log_probs, noise_log, ratio)
    is_positive = np.arange(len(baskets)) < len(positives)
    scales = np.where(is_positive, expit(-z), -expit(z))
    scales = np.nan_to_num(scales, nan=0.0)

    usable = np.isfinite(log_probs)
    pathological = int(np.sum(~usable[len(positives):]))
    usable_positions = np.flatnonzero(usable)
    det_sum, skipped = weighted_grad_log_det_sum(
        factor, [baskets[p] for p in usable_positions], scales[usable_positions]
    )
    kept_positions = np.setdiff1d(usable_positions, usable_positions[skipped])
    weight_total = float(np.sum(scales[kept_positions]))

    gradient = (det_sum - weight_total * normalizer_gradient(factor)) / len(positives)
    gradient -= regularizer_gradient(factor, stats.occurrence_counts, config.alpha)

    objective = nce_objective(
        factor,
        positives,
        negatives,
        noise_log[: len(positives)],
        noise_log[len(positives):],
        stats.occurrence_counts,
        config.alpha,
    )
    skipped_positives = int(np.sum(~usable[: len(positives)])) + len(skipped)
    return GradientResult(
        gradient=gradient, objective=objective, skipped=skipped_positives, pathological=pathological
    )


def apply_step(
    factor: KernelFactor,
    gradient: np.ndarray,
    step_size: float,
    max_row_norm: Optional[float] = None,
) -> KernelFactor:
    """V + eta * gradient, optionally projecting every row back into the norm ball."""
    if step_size <= 0:
        raise InvalidInputError(f"step size must be positive, got {step_size}")
    values = factor.values + step_size * gradient
    if max_row_norm is not None:
        norms = np.linalg.norm(values, axis=1)
        over = norms > max_row_norm
        values[over] *= (max_row_norm / norms[over])[:, None]
    if not np.all(np.isfinite(values)):
        raise DivergenceError("gradient step produced non-finite factor entries", last_good=factor)
    return KernelFactor(values)


def sga_step(
    factor: KernelFactor,
    positive_batch: Sequence[Basket],
    negative_batch: Sequence[Basket],
    config: TrainConfig,
    step_size: float,
    stats: EmpiricalStats,
    noise: Optional[ProductNoise] = None,
) -> KernelFactor:
    """One ascent step on the minibatch objective of the configured method."""
    if config.method is Method.NCE:
        result = nce_gradient_batch(
            factor, positive_batch, negative_batch, config, stats, noise or ProductNoise(stats)
        )
    else:
        result = contrastive_gradient(factor, positive_batch, negative_batch, config, stats)
    return apply_step(factor, result.gradient, step_size, config.max_row_norm)


def _diverged(
    cause: Exception, epoch: int, last_good: KernelFactor, report: TrainReport
) -> DivergenceError:
    """DivergenceError carrying the factor from the start of the epoch and the partial report."""
    error = cause if isinstance(cause, DivergenceError) else DivergenceError(f"numerical failure: {cause}")
    error.last_good = last_good
    error.report = report.model_copy(update={"stop_reason": StopReason.DIVERGED})
    logger.error(f"Diverged in epoch {epoch}: {error}")
    return error


def resolve_rank(corpus: Corpus, config: TrainConfig) -> int:
    largest = infer_rank(corpus)
    rank = config.rank if config.rank is not None else largest
    if rank < largest:
        raise InvalidInputError(f"rank K={rank} is below the largest basket size {largest}")
    if rank > corpus.num_items:
        raise InvalidInputError(f"rank K={rank} exceeds catalog size M={corpus.num_items}")
    return rank


def train(
    corpus: Corpus,
    config: TrainConfig,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> Tuple[KernelFactor, TrainReport]:
    """
    Fit a kernel factor to the corpus's training split.

    Args:
        corpus: Corpus with train and validation splits
        config: Hyperparameters; rank None means the largest basket size
        on_epoch: Called with each finished epoch record

    Returns:
        (final factor, report with one record per epoch)

    Raises:
        DivergenceError: if the objective or validation log-likelihood stops
            being finite; carries the last good factor and the partial report
    """
    if len(corpus.baskets) < 2:
        raise InvalidInputError("training needs at least two baskets")
    if not corpus.train:
        raise InvalidInputError("training split is empty")
    rank = resolve_rank(corpus, config)
    method = config.method
    if method is Method.MLE and config.negative_ratio > 0:
        logger.debug("negative_ratio has no effect for mle")

    init_rng, batch_rng, negative_rng = spawn_rngs(config.seed, 3)
    factor = KernelFactor.initialize(corpus.num_items, rank, init_rng)
    train_baskets = corpus.train
    validation = corpus.validation
    if not validation:
        logger.warning("Validation split is empty; convergence is checked on training baskets")
        validation = train_baskets
    stats = corpus.stats
    noise = ProductNoise(stats) if method is Method.NCE else None
    draws_negatives = method.uses_negatives and config.negative_ratio > 0
    regime = NegativeRegime(method.regime) if draws_negatives else None

    report = TrainReport(
        method=method,
        num_items=corpus.num_items,
        rank=rank,
        seed=config.seed,
        config_digest=config.digest(),
        initial_validation_log_likelihood=validation_log_likelihood(factor, validation),
    )
    history = [report.initial_validation_log_likelihood]
    logger.info(
        f"Training {method.value} with K={rank} on {len(train_baskets)} baskets "
        f"(validation log-likelihood {history[0]:.4f})"
    )

    step = 0
    negatives: List[Basket] = []
    for epoch in range(1, config.max_iters + 1):
        started = time.perf_counter()
        epoch_start_factor = factor
        order = batch_rng.permutation(len(train_baskets))
        objectives: List[float] = []
        skipped = pathological = num_negatives = 0
        step_size = step_schedule(step, config)

        for offset in range(0, len(train_baskets), config.batch_size):
            positives = [train_baskets[i] for i in order[offset:offset + config.batch_size]]
            if regime is not None and step % config.refresh_every == 0:
                negatives = generate_batch(
                    regime, factor, positives, stats, config.negative_ratio, negative_rng, epoch
                ).baskets
            step_size = step_schedule(step, config)

            try:
                if method is Method.NCE and negatives:
                    result = nce_gradient_batch(factor, positives, negatives, config, stats, noise)
                else:
                    result = contrastive_gradient(factor, positives, negatives, config, stats)
                factor = apply_step(factor, result.gradient, step_size, config.max_row_norm)
            except (DivergenceError, np.linalg.LinAlgError) as exc:
                raise _diverged(exc, epoch, epoch_start_factor, report)

            objectives.append(result.objective.total)
            skipped += result.skipped
            pathological += result.pathological
            num_negatives += len(negatives)
            step += 1

        objective = float(np.mean(objectives))
        try:
            validation_ll = validation_log_likelihood(factor, validation)
        except np.linalg.LinAlgError as exc:
            raise _diverged(exc, epoch, epoch_start_factor, report)
        record = EpochRecord(
            epoch=epoch,
            objective=objective,
            validation_log_likelihood=validation_ll,
            negative_regime=regime.value if regime is not None else None,
            num_negatives=num_negatives,
            skipped_samples=skipped,
            pathological_negatives=pathological,
            step_size=step_size,
            wall_time=time.perf_counter() - started,
        )

        # A zero-probability positive makes the objective -inf.
        if not np.isfinite(objective) or not np.isfinite(validation_ll):
            report.epochs.append(record)
            report.iterations = epoch
            report.stop_reason = StopReason.DIVERGED
            logger.error(
                f"Diverged in epoch {epoch}: objective {objective}, validation log-likelihood {validation_ll}"
            )
            raise DivergenceError(
                f"training diverged in epoch {epoch}", last_good=epoch_start_factor, report=report
            )

        report.epochs.append(record)
        report.iterations = epoch
        history.append(validation_ll)
        if skipped:
            logger.info(f"Epoch {epoch}: skipped {skipped} singular sample(s)")
        logger.debug(
            f"Epoch {epoch}: objective {objective:.6f}, validation {validation_ll:.6f}, "
            f"eta {step_size:.4g}, {record.wall_time:.2f}s"
        )
        if on_epoch is not None:
            on_epoch(record)

        if check_convergence(history, config.epsilon):
            report.stop_reason = StopReason.CONVERGED
            break
    else:
        report.stop_reason = StopReason.MAX_ITERS

    logger.info(f"Stopped after {report.iterations} epoch(s): {report.stop_reason.value}")
    return factor, report
