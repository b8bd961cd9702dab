"""
CLI command for the conditioning benchmark.
"""

from typing import List, Optional

import typer

from app.services.benchmark import METHODS, rows_to_csv, run_condition_benchmark
from cli.utils.logging import CLILogger, UsageError


def parse_int_list(text: str) -> List[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"Expected a comma-separated list of integers, got {text!r}")
    if not values or min(values) < 1:
        raise UsageError(f"Expected positive integers, got {text!r}")
    return values


def bench_command(
    logger: CLILogger,
    sizes: str = "1000,2000,4000",
    rank: int = 30,
    observed: str = "5",
    methods: str = ",".join(METHODS),
    repeats: int = 3,
    seed: int = 0,
    max_primal_items: Optional[int] = None,
) -> None:
    """Write `M,K,|A|,method,seconds` rows to stdout."""
    catalog_sizes = parse_int_list(sizes)
    observed_sizes = parse_int_list(observed)
    chosen = [m.strip() for m in methods.split(",") if m.strip()]
    unknown = sorted(set(chosen) - set(METHODS))
    if unknown:
        raise UsageError(f"Unknown method(s): {', '.join(unknown)}", [f"Choose from {', '.join(METHODS)}"])
    if rank > min(catalog_sizes):
        raise UsageError(f"--rank {rank} exceeds the smallest catalog size {min(catalog_sizes)}")
    if max(observed_sizes) > rank:
        raise UsageError(f"Observed set sizes cannot exceed --rank {rank}")

    rows = []
    for size in observed_sizes:
        logger.debug(f"Benchmarking |A|={size}")
        rows.extend(
            run_condition_benchmark(
                catalog_sizes,
                rank,
                size,
                methods=chosen,
                repeats=repeats,
                seed=seed,
                max_primal_items=max_primal_items,
            )
        )
    typer.echo(rows_to_csv(rows), nl=False)
