"""CSV readers for the simulator's output schemas.

Expected inputs (comma-separated, header row, '.' decimal):

* curve files:   ``epoch,mean_reward,stderr,n_alive``
* history files: ``history,probability``
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

CURVE_HEADER = ["epoch", "mean_reward", "stderr", "n_alive"]
HISTORY_HEADER = ["history", "probability"]


class SchemaError(ValueError):
    """Input file does not match the documented CSV schema."""


@dataclass
class Curve:
    label: str
    epochs: list[int]
    means: list[float]
    stderrs: list[float]

    def __post_init__(self):
        if not (len(self.epochs) == len(self.means) == len(self.stderrs)):
            raise SchemaError(f"curve {self.label!r} has unequal series lengths")
        if not self.epochs:
            raise SchemaError(f"curve {self.label!r} is empty")


def default_label(path: Path) -> str:
    path = Path(path)
    return path.parent.name if path.stem == "curve" else path.stem


def read_curve(path, label: str | None = None) -> Curve:
    path = Path(path)
    epochs, means, stderrs = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CURVE_HEADER:
            raise SchemaError(f"{path}: expected header {CURVE_HEADER}, got {header}")
        for row in reader:
            if len(row) != 4:
                raise SchemaError(f"{path}: bad curve row {row}")
            if row[1] == "":  # epochs past every agent's horizon
                continue
            epochs.append(int(row[0]))
            means.append(float(row[1]))
            stderrs.append(float(row[2]))
    return Curve(label=label or default_label(path), epochs=epochs,
                 means=means, stderrs=stderrs)


def read_history(path) -> dict[str, float]:
    path = Path(path)
    probs: dict[str, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != HISTORY_HEADER:
            raise SchemaError(f"{path}: expected header {HISTORY_HEADER}, got {header}")
        for row in reader:
            if len(row) != 2:
                raise SchemaError(f"{path}: bad history row {row}")
            probs[row[0]] = float(row[1])
    if not probs:
        raise SchemaError(f"{path}: no history rows")
    return probs
