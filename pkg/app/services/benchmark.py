"""
benchmark.py - Timing harness for conditioning

Compares the dual fast path (work in the K x K dual, linear in M) against a
primal baseline that materializes the conditioned kernel over every remaining
item and solves against it densely.
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np
from scipy import linalg

from app.core.conditioning import projection_matrix, condition_on, conditional_marginals
from app.core.kernel import KernelFactor, as_index_array
from app.core.rng import make_rng

logger = logging.getLogger(__name__)

CSV_HEADER = "M,K,|A|,method,seconds"
METHODS = ("dual", "primal")


@dataclass(frozen=True)
class BenchmarkRow:
    num_items: int
    rank: int
    observed_size: int
    method: str
    seconds: float

    def to_csv(self) -> str:
        return f"{self.num_items},{self.rank},{self.observed_size},{self.method},{self.seconds:.6g}"


def primal_conditional_marginals(factor: KernelFactor, observed: Iterable[int]) -> np.ndarray:
    """
    Conditional marginals from the materialized |A-bar| x |A-bar| kernel.

    L^A = (V_rest Z)(V_rest Z)^T and P = diag(L^A (L^A + I)^-1), aligned with
    the ascending remaining items. Only meant as a reference.
    """
    idx = as_index_array(observed, factor.num_items)
    mask = np.ones(factor.num_items, dtype=bool)
    mask[idx] = False
    projected = factor.values[mask] @ projection_matrix(factor, idx)
    kernel = projected @ projected.T
    cho = linalg.cho_factor(kernel + np.eye(kernel.shape[0]), lower=True, check_finite=False)
    solved = linalg.cho_solve(cho, kernel, check_finite=False)
    return np.clip(np.diag(solved), 0.0, 1.0)


def dual_conditional_marginals(factor: KernelFactor, observed: Iterable[int]) -> np.ndarray:
    return conditional_marginals(condition_on(factor, observed))


def time_call(func: Callable[[], object], repeats: int = 3, warmup: int = 1) -> float:
    """Best wall time over `repeats` runs after `warmup` untimed runs."""
    for _ in range(warmup):
        func()
    best = np.inf
    for _ in range(repeats):
        started = time.perf_counter()
        func()
        best = min(best, time.perf_counter() - started)
    return float(best)


def run_condition_benchmark(
    sizes: Sequence[int],
    rank: int,
    observed_size: int,
    methods: Sequence[str] = METHODS,
    repeats: int = 3,
    seed: int = 0,
    max_primal_items: Optional[int] = None,
) -> List[BenchmarkRow]:
    """
    Time both conditioning paths for every catalog size.

    Args:
        sizes: Catalog sizes M to measure
        rank: Kernel rank K
        observed_size: Number of conditioned items |A|
        methods: Any of "dual" and "primal"
        repeats: Timed runs per measurement; the best is reported
        seed: Seed for factors and observed sets
        max_primal_items: Skip the primal baseline above this M

    Returns:
        One row per (M, method)
    """
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown benchmark method(s): {sorted(unknown)}")
    rng = make_rng(seed)
    rows: List[BenchmarkRow] = []
    for num_items in sizes:
        factor = KernelFactor.initialize(num_items, rank, rng)
        observed = np.sort(rng.choice(num_items, size=observed_size, replace=False))
        for method in methods:
            if method == "primal" and max_primal_items is not None and num_items > max_primal_items:
                logger.info(f"Skipping primal baseline at M={num_items}")
                continue
            target = dual_conditional_marginals if method == "dual" else primal_conditional_marginals
            seconds = time_call(lambda: target(factor, observed), repeats=repeats)
            rows.append(BenchmarkRow(num_items, rank, observed_size, method, seconds))
            logger.debug(f"M={num_items} {method}: {seconds:.4f}s")
    return rows


def rows_to_csv(rows: Iterable[BenchmarkRow]) -> str:
    return "\n".join([CSV_HEADER] + [row.to_csv() for row in rows]) + "\n"
