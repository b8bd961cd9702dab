"""
CLI command for next-item predictions from a partial basket.
"""

import json
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
import typer

from app.core.conditioning import extension_scores
from app.core.kernel import Basket
from cli.services.model_storage import load_model
from cli.utils.logging import CLILogger, UsageError


def predict_command(logger: CLILogger, model_path: Path, items: List[int], top_n: int = 10) -> None:
    """
    Print the top_n next items as a JSON list of {"item", "score"} objects.

    Scores are normalized extension scores over every item outside the
    basket, so they sum to 1 over the whole candidate set.
    """
    if top_n < 1:
        raise UsageError("--top-n must be at least 1")
    factor, header = load_model(model_path)
    index = {original: dense for dense, original in enumerate(header.catalog)}

    unique = list(dict.fromkeys(items))
    if len(unique) < len(items):
        logger.warning("Duplicate items in the basket were ignored")
    unknown = [item for item in unique if item not in index]
    if unknown:
        raise UsageError(
            f"Unknown item id(s): {', '.join(str(i) for i in unknown)}",
            [f"The model knows {header.num_items} items"],
        )

    basket = Basket.of(index[item] for item in unique)
    predictions: List[Dict[str, Union[int, float]]] = []
    if len(basket) < header.num_items:
        scores = extension_scores(factor, basket)
        normalized = scores.normalized()
        order = np.argsort(-normalized, kind="stable")[:top_n]
        predictions = [
            {"item": header.catalog[int(scores.items[i])], "score": float(normalized[i])} for i in order
        ]
    else:
        logger.info("Basket covers the whole catalog; nothing to predict")

    typer.echo(json.dumps(predictions))
