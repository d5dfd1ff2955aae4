"""Prediction-slot and per-pattern box-size dumps of a trained detector."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..detector import Scene, model_from_checkpoint, predict
from .tables import histogram_svg, scatter_svg, write_table

SLOT_HEADER = ["scene", "query", "anchor_x", "anchor_y", "pattern", "cx", "cy", "w", "h", "score"]
ANCHOR_HEADER = ["anchor", "x", "y"]
HIST_BINS = 20
HIST_EDGES = np.linspace(0.0, 1.0, HIST_BINS + 1)


def _row_anchors(model) -> np.ndarray:
    """(x, y) reference point of every query row."""
    bundle = model.queries()
    ref = model.reference_points(bundle)
    return np.asarray(ref.data if hasattr(ref, "data") else ref, dtype=np.float64)


def prediction_slots(checkpoint, scenes: Sequence[Scene]) -> list[list]:
    """One row per (scene, query row), scene-major."""
    model = model_from_checkpoint(checkpoint)
    anchors = _row_anchors(model)
    patterns = model.queries().pattern_of_row
    rows = []
    for s_idx, det in enumerate(predict(model, scenes)):
        conf = det.confidence
        for q in range(len(anchors)):
            cx, cy, w, h = (float(v) for v in det.boxes[q])
            rows.append([s_idx, q, float(anchors[q, 0]), float(anchors[q, 1]), int(patterns[q]),
                         cx, cy, w, h, float(conf[q])])
    return rows


@dataclass
class LocalityStat:
    own_median: float
    other_median: float

    @property
    def local(self) -> bool:
        return self.own_median < self.other_median


def locality_statistic(slot_rows: Sequence[Sequence], seed: int = 0, exclude_own: bool = True) -> LocalityStat:
    """Median centre-to-own-anchor distance against centre-to-random-anchor distance.

    The random anchor is drawn uniformly from the distinct anchors, skipping the
    row's own anchor when ``exclude_own`` is set.
    """
    arr = np.array([[r[2], r[3], r[5], r[6]] for r in slot_rows], dtype=np.float64)
    ax, ay, cx, cy = arr.T
    centres = np.stack([cx, cy], axis=1)
    own = np.hypot(cx - ax, cy - ay)
    # several patterns share one anchor, so index the distinct positions
    index: dict[tuple, int] = {}
    for key in zip(ax, ay):
        index.setdefault(key, len(index))
    uniq = np.array(list(index))
    own_idx = np.array([index[key] for key in zip(ax, ay)])
    rng = np.random.default_rng(seed)
    if exclude_own:
        if len(uniq) < 2:
            raise ValueError("locality needs at least two distinct anchors")
        pick = rng.integers(0, len(uniq) - 1, size=len(arr))
        pick = pick + (pick >= own_idx)
    else:
        pick = rng.integers(0, len(uniq), size=len(arr))
    other = np.linalg.norm(centres - uniq[pick], axis=1)
    return LocalityStat(float(np.median(own)), float(np.median(other)))


def dump_prediction_slots(checkpoint, scenes: Sequence[Scene], out_dir, seed: int = 0) -> dict:
    """Slot table, anchor table and an anchor scatter SVG; returns paths and the locality statistic."""
    model = model_from_checkpoint(checkpoint)
    out_dir = Path(out_dir)
    rows = prediction_slots(model, scenes)
    paths = list(write_table(out_dir, "slots", SLOT_HEADER, rows))
    stat = locality_statistic(rows, seed)
    anchors = model.anchor_positions()
    if anchors is not None:
        arows = [[i, float(x), float(y)] for i, (x, y) in enumerate(anchors)]
        paths += write_table(out_dir, "anchors", ANCHOR_HEADER, arows)
        svg = out_dir / "anchors.svg"
        svg.write_text(scatter_svg(anchors, [0] * len(anchors), title="anchor points"))
        paths.append(svg)
    centres = np.array([[r[5], r[6]] for r in rows])
    svg = out_dir / "slots.svg"
    svg.write_text(scatter_svg(np.clip(centres, 0, 1), [r[1] for r in rows], title="predicted centres by query"))
    paths.append(svg)
    return {"paths": paths, "rows": rows, "locality": stat}


def pattern_histograms(checkpoint, scenes: Sequence[Scene], score_thresh: float = 0.5) -> dict[int, np.ndarray]:
    """Per-pattern counts of sqrt(w*h) over confident predictions, 20 bins on [0, 1]."""
    model = model_from_checkpoint(checkpoint)
    patterns = model.queries().pattern_of_row
    sizes: dict[int, list] = {int(p): [] for p in np.unique(patterns)}
    for det in predict(model, scenes):
        keep = det.confidence >= score_thresh
        root = np.sqrt(det.boxes[:, 2] * det.boxes[:, 3])
        for q in np.flatnonzero(keep):
            sizes[int(patterns[q])].append(float(root[q]))
    return {p: np.histogram(np.clip(v, 0.0, 1.0), bins=HIST_EDGES)[0] for p, v in sizes.items()}


def histogram_mean(counts: np.ndarray) -> float:
    """Mean size implied by the bin centres; nan for an empty histogram."""
    centres = 0.5 * (HIST_EDGES[:-1] + HIST_EDGES[1:])
    total = counts.sum()
    return float(counts @ centres / total) if total else float("nan")


def dump_pattern_histograms(checkpoint, scenes: Sequence[Scene], out_dir,
                            score_thresh: float = 0.5) -> dict:
    hists = pattern_histograms(checkpoint, scenes, score_thresh)
    header = ["pattern", "bin_lo", "bin_hi", "count"]
    rows = [[p, float(HIST_EDGES[i]), float(HIST_EDGES[i + 1]), int(c)]
            for p, counts in hists.items() for i, c in enumerate(counts)]
    out_dir = Path(out_dir)
    paths = list(write_table(out_dir, "pattern_hist", header, rows))
    for p, counts in hists.items():
        svg = out_dir / f"pattern_hist_{p}.svg"
        svg.write_text(histogram_svg(counts, title=f"pattern {p}: sqrt(w*h)"))
        paths.append(svg)
    return {"paths": paths, "histograms": hists}


def confident_counts(checkpoint, scenes: Sequence[Scene], score_thresh: float = 0.5) -> dict[int, int]:
    model = model_from_checkpoint(checkpoint)
    patterns = model.queries().pattern_of_row
    out = {int(p): 0 for p in np.unique(patterns)}
    for det in predict(model, scenes):
        for q in np.flatnonzero(det.confidence >= score_thresh):
            out[int(patterns[q])] += 1
    return out


def mean_sizes(hists: dict[int, np.ndarray]) -> dict[int, Optional[float]]:
    return {p: histogram_mean(c) for p, c in hists.items()}
