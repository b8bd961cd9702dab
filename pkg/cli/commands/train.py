"""
CLI command for training a kernel factor.
"""

from pathlib import Path
from typing import Any, Optional

import typer
from rich.progress import BarColumn, Progress, TextColumn, TimeElapsedColumn

from app.core.errors import DivergenceError
from app.core.rng import make_rng
from app.schemas.training import EpochRecord, Method, TrainReport
from app.services.corpus import resolve_corpus
from app.services.training import train
from cli.config import resolve_train_config
from cli.schemas import ModelHeader
from cli.services.model_storage import FORMAT_VERSION, save_model
from cli.utils.logging import CLILogger, TrainingError


def emit_report(report: TrainReport, report_path: Optional[Path]) -> None:
    """One JSON object on stdout, and optionally in a file."""
    text = report.model_dump_json()
    typer.echo(text)
    if report_path is not None:
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.write_text(text + "\n", encoding="utf-8")


def train_command(
    logger: CLILogger,
    data: str,
    out: Path,
    config_path: Optional[Path] = None,
    report_path: Optional[Path] = None,
    max_size: Optional[int] = None,
    **flags: Any,
) -> None:
    """
    Train on a corpus and write the model file plus a JSON report.

    Args:
        logger: CLI logger
        data: "toy", a transaction file or a canonical corpus directory
        out: Model file to write
        config_path: Optional YAML run file
        report_path: Optional file receiving a copy of the JSON report
        max_size: Clip larger baskets when loading a transaction file
        **flags: TrainConfig overrides from the command line
    """
    config = resolve_train_config(config_path, **flags)
    if config.method is Method.MLE and flags.get("negative_ratio") is not None:
        logger.warning("--ratio is ignored for mle")

    corpus = resolve_corpus(
        data, make_rng(config.seed), max_size=max_size, validation_fraction=config.validation_fraction
    )
    logger.info(
        f"📦 Corpus: {corpus.num_items} items, {len(corpus.train)} train / "
        f"{len(corpus.validation)} validation / {len(corpus.test)} test baskets"
    )

    with Progress(
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TextColumn("{task.completed}/{task.total} epochs"),
        TimeElapsedColumn(),
        console=logger.console,
        transient=True,
        disable=logger.quiet,
    ) as progress:
        task = progress.add_task(f"Training {config.method.value}", total=config.max_iters)

        def on_epoch(record: EpochRecord) -> None:
            progress.update(
                task,
                advance=1,
                description=f"Training {config.method.value} (val {record.validation_log_likelihood:.4f})",
            )

        try:
            factor, report = train(corpus, config, on_epoch=on_epoch)
        except DivergenceError as exc:
            if exc.last_good is not None:
                fallback = out.with_name(out.name + ".last-good")
                save_model(fallback, exc.last_good, _header(corpus, config, exc.last_good.rank, max_size))
                logger.warning(f"Last good factor written to {fallback}")
            if exc.report is not None:
                emit_report(exc.report, report_path)
            raise TrainingError(
                f"Training diverged: {exc}",
                ["Lower --step-size", "Set max_row_norm in a --config file"],
            )

    save_model(out, factor, _header(corpus, config, factor.rank, max_size))
    report.model_path = str(out)
    emit_report(report, report_path)
    logger.success(
        f"Trained {config.method.value} for {report.iterations} epoch(s) "
        f"({report.stop_reason.value}); model saved to {out}"
    )


def _header(corpus, config, rank: int, max_size: Optional[int]) -> ModelHeader:
    return ModelHeader(
        format_version=FORMAT_VERSION,
        num_items=corpus.num_items,
        rank=rank,
        catalog=list(corpus.catalog),
        config_digest=config.digest(),
        seed=config.seed,
        method=config.method.value,
        max_size=max_size,
        validation_fraction=config.validation_fraction,
    )
