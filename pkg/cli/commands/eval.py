"""
CLI command for evaluating a trained model on a corpus's test split.
"""

from pathlib import Path
from typing import Optional

import typer

from app.core.rng import make_rng
from app.schemas.evaluation import Ranking
from app.services.corpus import resolve_corpus
from app.services.metrics import DEFAULT_KS, evaluate
from cli.services.model_storage import load_model
from cli.utils.logging import CLILogger, UsageError


def eval_command(
    logger: CLILogger,
    model_path: Path,
    data: str,
    trials: int = 1,
    seed: int = 0,
    threads: int = 1,
    ranking: Ranking = Ranking.EXTENSION,
    max_size: Optional[int] = None,
    report_path: Optional[Path] = None,
) -> None:
    """
    Print an EvalReport as one JSON object; toy corpora add next-item diagnostics.

    The split is rebuilt from the seed, clip size and validation share stored in
    the model header. `seed` only drives the held-out and AUC draws.
    """
    factor, header = load_model(model_path)
    if max_size is not None and max_size != header.max_size:
        raise UsageError(
            f"--max-size {max_size} differs from the training run ({header.max_size})",
            ["Omit --max-size to reuse the training setting"],
        )
    corpus = resolve_corpus(
        data,
        make_rng(header.seed),
        max_size=header.max_size,
        validation_fraction=header.validation_fraction,
    )
    if tuple(header.catalog) != corpus.catalog:
        raise UsageError(
            "Model catalog does not match the corpus",
            ["Evaluate on the corpus the model was trained on"],
        )

    logger.info(f"📊 Evaluating on {len(corpus.test)} test baskets over {trials} trial(s)")
    report = evaluate(
        factor,
        corpus,
        trials=trials,
        seed=seed,
        ks=DEFAULT_KS,
        ranking=ranking,
        threads=threads,
        toy=(data == "toy"),
    )

    text = report.model_dump_json()
    typer.echo(text)
    if report_path is not None:
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.write_text(text + "\n", encoding="utf-8")
    if report.skipped_cases:
        logger.warning(f"{report.skipped_cases} leave-one-out case(s) skipped")
    logger.success(f"MPR {report.mpr:.2f}, AUC {report.auc:.3f}, p@1 {report.precision_at[1]:.3f}")
