"""
Results management for experiments.
"""

import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

from rich.console import Console
from rich.table import Table


def _fmt(stat: Dict[str, Any], digits: int = 3) -> str:
    if stat.get("mean") is None:
        return "n/a"
    return f"{stat['mean']:.{digits}f} ± {stat['std']:.{digits}f}"


class ResultsManager:
    """Manages experiment results display and storage."""

    def __init__(self, console: Console = None):
        self.console = console or Console(stderr=True)

    def display_results(self, results: Dict[str, Any]) -> None:
        """Summary table with one row per method."""
        self.console.print(f"\n🎯 Experiment Results: {results['name']}")
        self.console.print(
            f"⏱️  {results['trials']} trial(s) in {results['evaluation_time']:.2f}s "
            f"(base seed {results['base_seed']})"
        )

        table = Table(title="Next-item diagnostics")
        table.add_column("Method", style="#0066CC")
        table.add_column("Correct completion", style="magenta")
        table.add_column("Net symmetric KL", style="magenta")
        table.add_column("MPR", style="green")
        table.add_column("vs mle (prob / KL)", style="blue")
        table.add_column("Failed", style="red")

        for method, entry in results["summary"].items():
            paired = entry.get("paired_with_mle")
            versus = "-"
            if paired:
                versus = (
                    f"{paired['higher_correct_probability']}/{paired['trials']} · "
                    f"{paired['lower_net_symmetric_kl']}/{paired['trials']}"
                )
            table.add_row(
                method,
                _fmt(entry["correct_probability"]),
                _fmt(entry["net_symmetric_kl"]),
                _fmt(entry["mpr"], digits=1),
                versus,
                str(entry["failed_runs"]),
            )

        self.console.print(table)

    def save_results(self, results: Dict[str, Any], output_path: str) -> Path:
        """Save experiment results to a JSON file. OSError propagates to the caller."""
        output_file = Path(output_path)
        output_file.parent.mkdir(parents=True, exist_ok=True)

        results = dict(results, saved_at=datetime.now().isoformat())

        with open(output_file, "w", encoding="utf-8") as f:
            json.dump(results, f, indent=2, ensure_ascii=False)

        self.console.print(f"📁 Results saved to: {output_file}")
        return output_file

    def load_results(self, input_path: str) -> Optional[Dict[str, Any]]:
        """Load experiment results from a file."""
        try:
            input_file = Path(input_path)
            if not input_file.exists():
                self.console.print(f"❌ Results file not found: {input_file}", style="red")
                return None

            with open(input_file, "r", encoding="utf-8") as f:
                return json.load(f)

        except Exception as e:
            self.console.print(f"❌ Error loading results: {e}", style="red")
            return None
