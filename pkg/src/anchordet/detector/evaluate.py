"""Recall / precision at an IoU threshold and per-pattern box-size statistics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..tensor import no_grad
from .boxes import pairwise_iou_giou
from .model import AnchorDetector, stack_features
from .scenes import Scene


@dataclass
class Detections:
    """Final-layer predictions for one scene."""

    boxes: np.ndarray  # [N_q, 4]
    scores: np.ndarray  # [N_q, K] per-class probabilities

    @property
    def labels(self) -> np.ndarray:
        return self.scores.argmax(axis=1)

    @property
    def confidence(self) -> np.ndarray:
        return self.scores.max(axis=1)


@dataclass
class EvalResult:
    recall: float
    precision: float
    true_positives: int
    n_targets: int
    n_confident: int
    pattern_stats: dict[int, dict[str, float]] = field(default_factory=dict)


def predict(model: AnchorDetector, scenes: Sequence[Scene], batch_size: int = 32) -> list[Detections]:
    out = []
    with no_grad():
        for start in range(0, len(scenes), batch_size):
            chunk = scenes[start:start + batch_size]
            last = model(stack_features(chunk))[-1]
            boxes, scores = last.boxes.data, last.scores()
            out.extend(Detections(boxes[i].astype(np.float64), scores[i].astype(np.float64))
                       for i in range(len(chunk)))
    return out


def match_scene(det: Detections, targets: np.ndarray, iou_thresh: float, score_thresh: float) -> tuple[int, int]:
    """Greedy matching in descending score order; returns (true positives, confident predictions).

    A confident prediction matches the unmatched same-class target of highest
    IoU, provided that IoU reaches ``iou_thresh``.
    """
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 5)
    conf = det.confidence
    keep = np.flatnonzero(conf >= score_thresh)
    keep = keep[np.argsort(-conf[keep], kind="stable")]
    if len(keep) == 0 or len(targets) == 0:
        return 0, len(keep)
    iou, _ = pairwise_iou_giou(det.boxes[keep], targets[:, 1:])
    labels = det.labels[keep]
    gt_labels = targets[:, 0].astype(int)
    taken = np.zeros(len(targets), dtype=bool)
    tp = 0
    for row, label in enumerate(labels):
        cand = np.where((gt_labels == label) & ~taken, iou[row], -1.0)
        j = int(np.argmax(cand))
        if cand[j] >= iou_thresh:
            taken[j] = True
            tp += 1
    return tp, len(keep)


def pattern_size_stats(dets: Sequence[Detections], pattern_of_row: np.ndarray,
                       score_thresh: float) -> dict[int, dict[str, float]]:
    """Per-pattern count and mean sqrt(w*h) over confident predictions."""
    sizes: dict[int, list[float]] = {int(p): [] for p in np.unique(pattern_of_row)}
    for det in dets:
        conf = det.confidence >= score_thresh
        root_area = np.sqrt(det.boxes[:, 2] * det.boxes[:, 3])
        for row in np.flatnonzero(conf):
            sizes[int(pattern_of_row[row])].append(float(root_area[row]))
    return {p: {"count": len(v), "mean_size": float(np.mean(v)) if v else float("nan")}
            for p, v in sizes.items()}


def evaluate_detections(dets: Sequence[Detections], targets: Sequence[np.ndarray], iou_thresh: float = 0.5,
                        score_thresh: float = 0.5, pattern_of_row: Optional[np.ndarray] = None) -> EvalResult:
    tp = n_conf = n_gt = 0
    for det, tgt in zip(dets, targets):
        t, c = match_scene(det, tgt, iou_thresh, score_thresh)
        tp += t
        n_conf += c
        n_gt += len(np.asarray(tgt).reshape(-1, 5))
    stats = pattern_size_stats(dets, pattern_of_row, score_thresh) if pattern_of_row is not None else {}
    return EvalResult(
        recall=tp / n_gt if n_gt else 1.0,
        precision=tp / n_conf if n_conf else (1.0 if n_gt == 0 else 0.0),
        true_positives=tp, n_targets=n_gt, n_confident=n_conf, pattern_stats=stats,
    )


def evaluate(checkpoint, scenes: Sequence[Scene], iou_thresh: float = 0.5,
             score_thresh: Optional[float] = None) -> EvalResult:
    """Evaluate a model or checkpoint (path, bytes, dict) on scenes."""
    from .train import model_from_checkpoint

    model = model_from_checkpoint(checkpoint)
    thresh = model.cfg.score_thresh if score_thresh is None else score_thresh
    dets = predict(model, scenes)
    return evaluate_detections(dets, [s.targets for s in scenes], iou_thresh, thresh,
                               model.queries().pattern_of_row)
