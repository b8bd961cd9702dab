"""
Main CLI application entry point.
"""

from pathlib import Path
from typing import List, Optional

import typer
from rich.console import Console

from app.schemas.evaluation import Ranking
from app.schemas.training import Method
from cli import __version__
from cli.config import CLIConfig
from cli.utils.logging import CLILogger, handle_cli_error

app = typer.Typer(
    name="dppce",
    help="Learn low-rank DPP basket models with contrastive estimation",
    rich_markup_mode="rich",
    no_args_is_help=True,
)

console = Console(stderr=True)


def version_callback(value: bool) -> None:
    """Show version and exit."""
    if value:
        console.print(f"[bold blue]dppce[/bold blue] version [green]{__version__}[/green]")
        raise typer.Exit()


def _logger() -> CLILogger:
    config = getattr(app, "state", None) or CLIConfig()
    return CLILogger(
        verbose=config.verbose,
        quiet=config.quiet,
        log_file=Path(config.log_file) if config.log_file else None,
        no_color=config.no_color,
    )


@app.callback()
def main_callback(
    version: Optional[bool] = typer.Option(
        None, "--version", callback=version_callback, is_eager=True, help="Show version and exit"
    ),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging on stderr"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Errors only"),
    no_color: bool = typer.Option(False, "--no-color", help="Disable colored output"),
    log_file: Optional[Path] = typer.Option(None, "--log-file", help="Also append debug logs to this file"),
) -> None:
    """
    🎯 Train, evaluate and query low-rank DPP basket models.

    Examples:
      dppce train --data toy --method ce_dynamic --out toy.dpp
      dppce eval --model toy.dpp --data toy
      dppce predict --model toy.dpp 1
      dppce toy --trials 10
      dppce bench-condition --sizes 1000,2000 --rank 30
    """
    app.state = CLIConfig(
        verbose=verbose,
        quiet=quiet,
        no_color=no_color,
        log_file=str(log_file) if log_file else None,
    )


@app.command()
def train(
    data: str = typer.Option(..., "--data", help="'toy', a transaction file or a corpus directory"),
    out: Path = typer.Option(..., "--out", help="Model file to write"),
    method: Optional[Method] = typer.Option(None, "--method", help="Learning objective"),
    rank: Optional[int] = typer.Option(None, "--rank", help="Kernel rank K (default: largest basket)"),
    alpha: Optional[float] = typer.Option(None, "--alpha", help="Regularization weight"),
    ratio: Optional[float] = typer.Option(None, "--ratio", help="Negatives per positive"),
    step_size: Optional[float] = typer.Option(None, "--step-size", help="Initial step size"),
    epsilon: Optional[float] = typer.Option(None, "--epsilon", help="Convergence tolerance"),
    max_iters: Optional[int] = typer.Option(None, "--max-iters", help="Maximum epochs"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed"),
    config_path: Optional[Path] = typer.Option(None, "--config", help="YAML run file of training settings"),
    report_path: Optional[Path] = typer.Option(None, "--report", help="Also write the JSON report here"),
    max_size: Optional[int] = typer.Option(None, "--max-size", help="Clip baskets larger than this"),
) -> None:
    """🏋️ Train a kernel factor and print a JSON training report."""
    from cli.commands.train import train_command

    logger = _logger()
    try:
        train_command(
            logger,
            data,
            out,
            config_path=config_path,
            report_path=report_path,
            max_size=max_size,
            method=method,
            rank=rank,
            alpha=alpha,
            negative_ratio=ratio,
            step_size_initial=step_size,
            epsilon=epsilon,
            max_iters=max_iters,
            seed=seed,
        )
    except (Exception, KeyboardInterrupt) as e:
        raise typer.Exit(handle_cli_error(e, logger))


@app.command("eval")
def evaluate(
    model: Path = typer.Option(..., "--model", help="Model file"),
    data: str = typer.Option(..., "--data", help="Corpus the model was trained on"),
    trials: int = typer.Option(1, "--trials", min=1, help="Leave-one-out draws per test basket"),
    seed: int = typer.Option(0, "--seed", help="Seed for the held-out and AUC draws"),
    threads: int = typer.Option(1, "--threads", min=1, help="Worker threads for leave-one-out"),
    ranking: Ranking = typer.Option(Ranking.EXTENSION, "--ranking", help="Score by extension or marginal"),
    max_size: Optional[int] = typer.Option(
        None, "--max-size", help="Clip baskets larger than this (must match training)"
    ),
    report_path: Optional[Path] = typer.Option(None, "--report", help="Also write the JSON report here"),
) -> None:
    """📊 Evaluate a model on the test split and print a JSON report."""
    from cli.commands.eval import eval_command

    logger = _logger()
    try:
        eval_command(
            logger,
            model,
            data,
            trials=trials,
            seed=seed,
            threads=threads,
            ranking=ranking,
            max_size=max_size,
            report_path=report_path,
        )
    except (Exception, KeyboardInterrupt) as e:
        raise typer.Exit(handle_cli_error(e, logger))


@app.command()
def predict(
    items: List[int] = typer.Argument(..., help="Item ids already in the basket"),
    model: Path = typer.Option(..., "--model", help="Model file"),
    top_n: int = typer.Option(10, "--top-n", help="Number of suggestions"),
) -> None:
    """🔮 Suggest next items for a partial basket."""
    from cli.commands.predict import predict_command

    logger = _logger()
    try:
        predict_command(logger, model, items, top_n=top_n)
    except (Exception, KeyboardInterrupt) as e:
        raise typer.Exit(handle_cli_error(e, logger))


@app.command()
def toy(
    trials: Optional[int] = typer.Option(None, "--trials", help="Number of seeded trials (default from config)"),
    methods: Optional[str] = typer.Option(None, "--methods", help="Comma-separated methods"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Base seed; trial t uses seed + t"),
    config_path: Optional[Path] = typer.Option(None, "--config", help="Experiment config.yaml"),
    output: Optional[Path] = typer.Option(None, "--out", help="Save full results as JSON"),
) -> None:
    """🧪 Compare methods on the two-basket toy corpus."""
    from cli.commands.toy import toy_command

    logger = _logger()
    try:
        toy_command(
            logger,
            trials=trials,
            methods=[m.strip() for m in methods.split(",") if m.strip()] if methods else None,
            seed=seed,
            config_path=config_path,
            output=output,
        )
    except (Exception, KeyboardInterrupt) as e:
        raise typer.Exit(handle_cli_error(e, logger))


@app.command("bench-condition")
def bench_condition(
    sizes: str = typer.Option("1000,2000,4000", "--sizes", help="Comma-separated catalog sizes"),
    rank: int = typer.Option(30, "--rank", help="Kernel rank"),
    observed: str = typer.Option("5", "--observed", help="Comma-separated observed set sizes"),
    methods: str = typer.Option("dual,primal", "--methods", help="dual, primal or both"),
    repeats: int = typer.Option(3, "--repeats", min=1, help="Timed repetitions; the best is reported"),
    seed: int = typer.Option(0, "--seed", help="Seed for the random factors"),
    max_primal_items: Optional[int] = typer.Option(
        None, "--max-primal-items", help="Skip the primal baseline above this catalog size"
    ),
) -> None:
    """⏱️ Time dual against primal conditioning and print CSV."""
    from cli.commands.bench import bench_command

    logger = _logger()
    try:
        bench_command(
            logger,
            sizes=sizes,
            rank=rank,
            observed=observed,
            methods=methods,
            repeats=repeats,
            seed=seed,
            max_primal_items=max_primal_items,
        )
    except (Exception, KeyboardInterrupt) as e:
        raise typer.Exit(handle_cli_error(e, logger))


def main():
    """Entry point for console script"""
    app()


if __name__ == "__main__":
    main()
