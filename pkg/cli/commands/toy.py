"""
CLI command for the toy basket-completion experiment.
"""

from pathlib import Path
from typing import List, Optional

import typer

from evals.core.config import ExperimentConfig
from evals.core.runner import ToyExperimentRunner
from cli.utils.logging import CLILogger, InputFileError, UsageError


def toy_command(
    logger: CLILogger,
    trials: Optional[int] = None,
    methods: Optional[List[str]] = None,
    seed: Optional[int] = None,
    config_path: Optional[Path] = None,
    output: Optional[Path] = None,
) -> None:
    """Train every method over seeded toy corpora and print the summary table."""
    if config_path is not None:
        if not config_path.exists():
            raise InputFileError(f"Experiment config not found: {config_path}")
        config = ExperimentConfig.from_file(config_path)
    else:
        config = ExperimentConfig.load_experiment_config("toy")
        if config is None:
            available = ", ".join(ExperimentConfig.list_available_experiments()) or "none"
            raise InputFileError(
                "Toy experiment config is missing",
                [
                    "Expected evals/experiments/toy/config.yaml",
                    f"Available experiments: {available}",
                    "Or pass --config PATH",
                ],
            )
    if methods:
        config.methods = methods

    errors = config.validate()
    if errors:
        raise UsageError("Invalid experiment configuration", errors)
    if trials is not None and trials < 1:
        raise UsageError("--trials must be at least 1")

    runner = ToyExperimentRunner(console=logger.console)
    logger.info(f"🧪 {config.name}: {trials or config.trials} trial(s) of {', '.join(config.methods)}")
    results = runner.run(
        config,
        trials=trials,
        seed=seed,
        on_run=lambda r: logger.debug(
            f"trial {r['trial']} {r['method']}: {r.get('correct_probability', r.get('error'))}"
        ),
    )

    if not logger.quiet:
        runner.results_manager.display_results(results)
    typer.echo(_summary_lines(results))
    if output is not None:
        try:
            runner.results_manager.save_results(results, str(output))
        except OSError as exc:
            raise InputFileError(
                f"Could not write results to {output}: {exc}", ["Choose a writable --out path"]
            )


def _summary_lines(results: dict) -> str:
    lines = []
    for method, entry in results["summary"].items():
        probability = entry["correct_probability"]
        kl = entry["net_symmetric_kl"]
        lines.append(
            f"{method}\tcorrect={_pm(probability)}\tnet_kl={_pm(kl)}\tfailed={entry['failed_runs']}"
        )
    return "\n".join(lines)


def _pm(stat: dict) -> str:
    if stat["mean"] is None:
        return "n/a"
    return f"{stat['mean']:.4f}±{stat['std']:.4f}"
