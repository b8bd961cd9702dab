"""
Toy experiment orchestrator.

Every trial draws a fresh seeded toy corpus, trains each configured method on
it with the trial's seed, and records next-item diagnostics on the result.
Runs within a trial share the corpus, so methods are compared pairwise.

Usage:
    runner = ToyExperimentRunner(console=console)
    results = runner.run(ExperimentConfig.load_experiment_config("toy"))
"""

import logging
import time
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from rich.console import Console
from rich.progress import BarColumn, Progress, TextColumn, TimeElapsedColumn

from app.core.errors import DivergenceError
from app.core.rng import make_rng
from app.services.corpus import toy_corpus
from app.services.metrics import mpr, toy_diagnostics
from app.services.training import train
from evals.core.config import ExperimentConfig
from evals.core.results import ResultsManager

logger = logging.getLogger(__name__)


def _mean_std(values: List[float]) -> Dict[str, Optional[float]]:
    if not values:
        return {"mean": None, "std": None, "count": 0}
    return {"mean": float(np.mean(values)), "std": float(np.std(values)), "count": len(values)}


class ToyExperimentRunner:
    """Trains every method over seeded trials and aggregates the diagnostics."""

    def __init__(self, console: Console = None):
        self.console = console or Console(stderr=True)
        self.results_manager = ResultsManager(console=self.console)

    def run_trial(self, config: ExperimentConfig, method: str, trial: int, seed: int, corpus) -> Dict[str, Any]:
        """Train one method on one trial's corpus and score it."""
        started = time.perf_counter()
        record: Dict[str, Any] = {"method": method, "trial": trial, "seed": seed}
        try:
            factor, report = train(corpus, config.train_config(method, seed))
        except DivergenceError as exc:
            logger.error(f"{method} diverged in trial {trial}: {exc}")
            record["error"] = str(exc)
            return record

        diagnostics = toy_diagnostics(factor, corpus)
        record.update(
            {
                "iterations": report.iterations,
                "stop_reason": report.stop_reason.value,
                "correct_probability": diagnostics.mean_correct_probability,
                "net_symmetric_kl": diagnostics.net_symmetric_kl,
                "baskets": [b.model_dump() for b in diagnostics.baskets],
                "mpr": mpr(factor, corpus.test, make_rng(seed)),
                "seconds": time.perf_counter() - started,
            }
        )
        return record

    def run(
        self,
        config: ExperimentConfig,
        trials: Optional[int] = None,
        methods: Optional[List[str]] = None,
        seed: Optional[int] = None,
        on_run: Optional[Callable[[Dict[str, Any]], None]] = None,
    ) -> Dict[str, Any]:
        """
        Run the experiment.

        Args:
            config: Experiment configuration
            trials: Override the configured number of trials
            methods: Override the configured methods
            seed: Override the base seed; trial t uses seed + t
            on_run: Called with each finished run record

        Returns:
            Dict with every run record and a per-method summary
        """
        trials = trials or config.trials
        methods = methods or config.methods
        base_seed = config.seed if seed is None else seed
        started = time.time()
        runs: List[Dict[str, Any]] = []

        with Progress(
            TextColumn("[progress.description]{task.description}"),
            BarColumn(),
            TextColumn("{task.completed}/{task.total}"),
            TimeElapsedColumn(),
            console=self.console,
            transient=True,
        ) as progress:
            task = progress.add_task(config.name, total=trials * len(methods))
            for trial in range(trials):
                trial_seed = base_seed + trial
                corpus = toy_corpus(
                    make_rng(trial_seed),
                    copies=config.copies,
                    validation_fraction=config.training.get("validation_fraction", 0.1),
                )
                for method in methods:
                    progress.update(task, description=f"trial {trial + 1}/{trials} {method}")
                    record = self.run_trial(config, method, trial, trial_seed, corpus)
                    runs.append(record)
                    if on_run is not None:
                        on_run(record)
                    progress.advance(task)

        return {
            "experiment": config.experiment_name,
            "name": config.name,
            "trials": trials,
            "methods": list(methods),
            "base_seed": base_seed,
            "evaluation_time": time.time() - started,
            "runs": runs,
            "summary": self.summarize(runs, methods),
        }

    @staticmethod
    def summarize(runs: List[Dict[str, Any]], methods: List[str]) -> Dict[str, Any]:
        """Mean and std per method, plus paired comparisons against mle when it ran."""
        by_trial: Dict[int, Dict[str, Dict[str, Any]]] = {}
        for run in runs:
            by_trial.setdefault(run["trial"], {})[run["method"]] = run

        summary: Dict[str, Any] = {}
        for method in methods:
            ok = [r for r in runs if r["method"] == method and "error" not in r]
            entry = {
                "correct_probability": _mean_std([r["correct_probability"] for r in ok]),
                "net_symmetric_kl": _mean_std(
                    [r["net_symmetric_kl"] for r in ok if r["net_symmetric_kl"] is not None]
                ),
                "mpr": _mean_std([r["mpr"] for r in ok]),
                "failed_runs": sum(1 for r in runs if r["method"] == method and "error" in r),
            }
            if method != "mle" and "mle" in methods:
                better_probability = better_kl = paired = 0
                for trial_runs in by_trial.values():
                    own, base = trial_runs.get(method), trial_runs.get("mle")
                    if not own or not base or "error" in own or "error" in base:
                        continue
                    paired += 1
                    better_probability += own["correct_probability"] > base["correct_probability"]
                    if own["net_symmetric_kl"] is not None and base["net_symmetric_kl"] is not None:
                        better_kl += own["net_symmetric_kl"] < base["net_symmetric_kl"]
                entry["paired_with_mle"] = {
                    "trials": paired,
                    "higher_correct_probability": better_probability,
                    "lower_net_symmetric_kl": better_kl,
                }
            summary[method] = entry
        return summary
