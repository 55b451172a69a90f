"""Grid search over inference hyperparameters (top-k, tau).

Every cell runs mask inference over the validation items, scores the pruned
prompts with the oracle, and records mean accuracy and mean retained token
count.  Selection maximizes accuracy, breaking ties on fewer tokens, then
smaller k, then larger tau.  Completed cells persist to the CSV after every
cell, so an interrupted search resumes without recomputation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from maskpress.core.masks import apply_mask
from maskpress.core.types import TokenSeq
from maskpress.diffusion.inference import InferenceConfig, infer_mask
from maskpress.diffusion.model import MaskModel
from maskpress.errors import ConfigError
from maskpress.oracle.synth import Score

CSV_HEADER = ["top_k", "tau", "accuracy", "mean_tokens"]


@dataclass(frozen=True)
class GridSpec:
    top_k_values: tuple[int, ...] = (2, 3, 4)
    tau_values: tuple[float, ...] = (1e-4, 1e-3, 1e-2, 1e-1)
    objective: str = "accuracy_then_tokens"

    def __post_init__(self):
        object.__setattr__(self, "top_k_values", tuple(self.top_k_values))
        object.__setattr__(self, "tau_values", tuple(self.tau_values))
        if not self.top_k_values or not self.tau_values:
            raise ConfigError("grid value lists must be non-empty")
        if self.objective != "accuracy_then_tokens":
            raise ConfigError(f"unknown objective {self.objective!r}")
        for k in self.top_k_values:
            if k < 1:
                raise ConfigError("top_k values must be >= 1")
        for tau in self.tau_values:
            if tau < 0:
                raise ConfigError("tau values must be >= 0")

    def cells(self) -> list[tuple[int, float]]:
        return [(k, tau) for k in self.top_k_values for tau in self.tau_values]


@dataclass(frozen=True)
class ValidationItem:
    """One validation prompt: its sequence and its performance function."""

    id: str
    seq: TokenSeq
    oracle: Callable[[TokenSeq], Score]


@dataclass(frozen=True)
class GridCell:
    top_k: int
    tau: float
    accuracy: float
    mean_tokens: float


def _cell_key(top_k: int, tau: float) -> tuple[int, str]:
    return (top_k, f"{tau:.6f}")


def _write_table(path: Path, grid: GridSpec, done: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for k, tau in grid.cells():
            cell = done.get(_cell_key(k, tau))
            if cell is not None:
                writer.writerow(
                    [k, f"{tau:.6f}", f"{cell.accuracy:.6f}", f"{cell.mean_tokens:.6f}"]
                )


def _read_table(path: Path) -> dict:
    done = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            return {}
        for row in reader:
            k = int(row[0])
            tau = float(row[1])
            cell = GridCell(k, tau, float(row[2]), float(row[3]))
            done[_cell_key(k, tau)] = cell
    return done


def select_cell(cells: list[GridCell]) -> GridCell:
    """Max accuracy; ties: fewer mean tokens, then smaller k, then larger tau."""
    if not cells:
        raise ConfigError("cannot select from an empty table")
    return min(
        cells, key=lambda c: (-c.accuracy, c.mean_tokens, c.top_k, -c.tau)
    )


def grid_search(
    model: MaskModel,
    val_items: list[ValidationItem],
    grid: GridSpec | None = None,
    base_cfg: InferenceConfig | None = None,
    csv_path: str | Path | None = None,
) -> tuple[list[GridCell], InferenceConfig]:
    """Evaluate the whole grid and pick the best inference configuration.

    ``base_cfg`` supplies the step count and per-step cap shared by all
    cells.  With ``csv_path`` the table persists after each finished cell
    and a re-run skips already computed cells.
    """
    if not val_items:
        raise ConfigError("validation items must be non-empty")
    grid = grid or GridSpec()
    base_cfg = base_cfg or InferenceConfig()
    done: dict = {}
    path = Path(csv_path) if csv_path is not None else None
    if path is not None and path.exists():
        done = _read_table(path)

    for k, tau in grid.cells():
        key = _cell_key(k, tau)
        if key in done:
            continue
        cfg = InferenceConfig(
            steps=base_cfg.steps,
            top_k=k,
            tau=tau,
            per_step_cap=base_cfg.per_step_cap,
            early_stop=base_cfg.early_stop,
        )
        values = []
        tokens = []
        for item in val_items:
            mask, _ = infer_mask(model, item.seq, cfg)
            pruned = apply_mask(item.seq, mask, "delete")
            values.append(item.oracle(pruned).value)
            tokens.append(mask.retained_count())
        cell = GridCell(
            top_k=k,
            tau=tau,
            accuracy=sum(values) / len(values),
            mean_tokens=sum(tokens) / len(tokens),
        )
        done[key] = cell
        if path is not None:
            _write_table(path, grid, done)

    table = [done[_cell_key(k, tau)] for k, tau in grid.cells()]
    best = select_cell(table)
    selected = InferenceConfig(
        steps=base_cfg.steps,
        top_k=best.top_k,
        tau=best.tau,
        per_step_cap=base_cfg.per_step_cap,
        early_stop=base_cfg.early_stop,
    )
    if path is not None:
        _write_table(path, grid, done)
    return table, selected
