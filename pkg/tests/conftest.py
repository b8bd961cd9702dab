"""
Shared test fixtures for the dppce test suite.
Factors are small and seeded so brute-force oracles stay cheap.
"""

import itertools
import sys
from pathlib import Path
from typing import Iterator, Tuple

import numpy as np
import pytest

# Add package roots to path for imports
cli_root = Path(__file__).parent.parent
sys.path.insert(0, str(cli_root))

from app.core.kernel import Basket, KernelFactor  # noqa: E402
from app.core.rng import make_rng  # noqa: E402
from app.services.corpus import toy_corpus  # noqa: E402


def subsets(num_items: int, min_size: int = 0) -> Iterator[Tuple[int, ...]]:
    """Every subset of range(num_items) with at least min_size items."""
    for size in range(min_size, num_items + 1):
        yield from itertools.combinations(range(num_items), size)


def det_minor(kernel: np.ndarray, subset: Tuple[int, ...]) -> float:
    """det(L_S) from the full kernel; 1 for the empty set."""
    if not subset:
        return 1.0
    idx = np.asarray(subset)
    return float(np.linalg.det(kernel[np.ix_(idx, idx)]))


@pytest.fixture
def rng():
    """Seeded generator for test data."""
    return make_rng(12345)


@pytest.fixture
def random_factor():
    """Factory for seeded random factors: random_factor(M, K, seed)."""

    def build(num_items: int, rank: int, seed: int = 0) -> KernelFactor:
        return KernelFactor(make_rng(seed).normal(size=(num_items, rank)))

    return build


@pytest.fixture
def small_toy():
    """Toy corpus with 50 copies per basket: 100 baskets over items 1-4."""
    return toy_corpus(make_rng(0), copies=50)


@pytest.fixture
def toy():
    """Toy corpus at its standard size."""
    return toy_corpus(make_rng(0))


@pytest.fixture
def toy_baskets():
    """Dense baskets of the toy corpus: {0, 1} and {2, 3}."""
    return [Basket((0, 1)), Basket((2, 3))]


@pytest.fixture
def mock_cli_runner():
    """Create a Typer CLI runner for testing commands"""
    from typer.testing import CliRunner

    return CliRunner()
