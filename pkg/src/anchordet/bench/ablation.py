"""Toy-scale ablation grid over query design, pattern count, attention type and anchor kind."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..detector import DetectorConfig, Scene, TrainingDiverged, evaluate, train

log = logging.getLogger(__name__)

ABLATION_HEADER = ["cell", "query", "patterns", "attention", "anchors", "final_loss", "initial_loss",
                   "recall", "precision", "status"]


@dataclass(frozen=True)
class AblationCell:
    query: str  # anchor | embedding
    patterns: int
    attention: str  # rcda | standard
    anchors: str = "learned"  # learned | grid

    @property
    def name(self) -> str:
        return f"{self.query}-p{self.patterns}-{self.attention}-{self.anchors}"

    def config(self, base: DetectorConfig) -> DetectorConfig:
        return base.replace(query_design=self.query, n_patterns=self.patterns,
                            attention=self.attention, anchor_kind=self.anchors)


@dataclass
class CellResult:
    index: int
    cell: AblationCell
    final_loss: float = float("nan")
    initial_loss: float = float("nan")
    recall: float = float("nan")
    precision: float = float("nan")
    status: str = "ok"
    error: str = ""
    train_result: object = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def as_list(self) -> list:
        c = self.cell
        return [self.index, c.query, c.patterns, c.attention, c.anchors, self.final_loss, self.initial_loss,
                self.recall, self.precision, self.status]


def default_cells(multi_patterns: int = 2) -> list[AblationCell]:
    """query x patterns x attention, then one grid-anchor cell matching the anchor/multi/rcda cell."""
    cells = [AblationCell(q, p, a)
             for q in ("embedding", "anchor")
             for p in (1, multi_patterns)
             for a in ("standard", "rcda")]
    cells.append(AblationCell("anchor", multi_patterns, "rcda", "grid"))
    return cells


def run_cell(index: int, cell: AblationCell, base: DetectorConfig, scenes: Sequence[Scene],
             steps: int, seed: int, keep_model: bool = False) -> CellResult:
    res = CellResult(index, cell)
    try:
        out = train(cell.config(base), scenes, steps, seed=seed)
    except TrainingDiverged as exc:
        res.status, res.error = "diverged", str(exc)
        return res
    ev = evaluate(out.model, scenes)
    res.initial_loss = float(out.log[0]["total"])
    res.final_loss = float(out.log[-1]["total"])
    res.recall, res.precision = ev.recall, ev.precision
    if not np.isfinite(res.final_loss):
        res.status = "diverged"
    if keep_model:
        res.train_result = out
    return res


def run_ablation(base: DetectorConfig, scenes: Sequence[Scene], steps: int, seed: int = 0,
                 cells: Optional[Sequence[AblationCell]] = None, keep_models: bool = False) -> list[CellResult]:
    """Train every cell on the same scenes and seed; results come back in cell order."""
    cells = default_cells(max(2, base.n_patterns)) if cells is None else list(cells)
    results = []
    for i, cell in enumerate(cells):
        log.info("ablation cell %d/%d: %s", i + 1, len(cells), cell.name)
        results.append(run_cell(i, cell, base, scenes, steps, seed, keep_models))
    return results


def find_cell(results: Sequence[CellResult], **match) -> CellResult:
    for r in results:
        if all(getattr(r.cell, k) == v for k, v in match.items()):
            return r
    raise KeyError(f"no ablation cell matching {match}")
