"""Focal classification loss, box losses and the matched set loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..tensor import Tensor, abs_, sigmoid, softplus
from .boxes import giou_tensor, pairwise_iou_giou
from .config import LossWeights
from .matching import hungarian_match


def focal_loss(prob, target, alpha: float = 0.25, gamma: float = 2.0) -> float:
    """Summed focal loss on probabilities; ``target`` is 1 for positives, 0 for negatives."""
    p = np.asarray(prob, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    pos = -alpha * (1 - p) ** gamma * np.log(p)
    neg = -(1 - alpha) * p ** gamma * np.log1p(-p)
    return float(np.sum(t * pos + (1 - t) * neg))


def sigmoid_focal_loss(logits: Tensor, target: np.ndarray, alpha: float = 0.25, gamma: float = 2.0) -> Tensor:
    """Elementwise focal loss computed from logits (log-probabilities via softplus)."""
    t = np.asarray(target, dtype=logits.dtype)
    p = sigmoid(logits)
    ce = softplus(-logits) * t + softplus(logits) * (1 - t)
    p_t = p * t + (1 - p) * (1 - t)
    alpha_t = alpha * t + (1 - alpha) * (1 - t)
    return ce * ((1 - p_t) ** gamma) * alpha_t


def matching_cost(logits: np.ndarray, boxes: np.ndarray, labels: np.ndarray, gt_boxes: np.ndarray,
                  weights: LossWeights, alpha: float = 0.25, gamma: float = 2.0) -> np.ndarray:
    """[N_pred, N_gt] cost: focal class cost + L1 + negative GIoU."""
    x = np.asarray(logits, dtype=np.float64)
    prob = 1.0 / (1.0 + np.exp(-x))
    log_p = -np.logaddexp(0, -x)
    log_1mp = -np.logaddexp(0, x)
    pos = alpha * (1 - prob) ** gamma * -log_p
    neg = (1 - alpha) * prob ** gamma * -log_1mp
    cls_cost = (pos - neg)[:, labels]
    l1 = np.abs(np.asarray(boxes, dtype=np.float64)[:, None, :] - gt_boxes[None, :, :]).sum(-1)
    _, g = pairwise_iou_giou(boxes, gt_boxes)
    return weights.cls * cls_cost + weights.l1 * l1 - weights.giou * g


@dataclass
class LossBreakdown:
    total: Tensor
    terms: dict[str, float]
    per_layer: list[dict[str, float]]


def _layer_loss(logits: Tensor, boxes: Tensor, targets: Sequence[np.ndarray], weights: LossWeights,
                match_weights: LossWeights, alpha: float, gamma: float, num_boxes: float):
    b, n, k = logits.shape
    onehot = np.zeros((b, n, k))
    bi, pi, gt_rows = [], [], []
    for s, tgt in enumerate(targets):
        tgt = np.asarray(tgt, dtype=np.float64).reshape(-1, 5)
        if len(tgt) == 0:
            continue
        labels = tgt[:, 0].astype(np.intp)
        cost = matching_cost(logits.data[s], boxes.data[s], labels, tgt[:, 1:], match_weights, alpha, gamma)
        pred_of_gt = hungarian_match(cost)
        onehot[s, pred_of_gt, labels] = 1.0
        bi.extend([s] * len(tgt))
        pi.extend(pred_of_gt.tolist())
        gt_rows.append(tgt[:, 1:])

    focal = sigmoid_focal_loss(logits, onehot, alpha, gamma).sum() / num_boxes
    if bi:
        matched = boxes[(np.array(bi), np.array(pi))]
        gt = Tensor(np.concatenate(gt_rows).astype(boxes.dtype))
        l1 = abs_(matched - gt).sum() / num_boxes
        g = (1 - giou_tensor(matched, gt)).sum() / num_boxes
    else:
        l1 = g = Tensor(np.zeros((), dtype=boxes.dtype))
    total = focal * weights.cls + l1 * weights.l1 + g * weights.giou
    return total, {"focal": focal.item(), "l1": l1.item(), "giou": g.item(), "total": total.item()}


def set_loss(preds, targets: Sequence[np.ndarray], weights: LossWeights = LossWeights(),
             match_weights: LossWeights | None = None, alpha: float = 0.25, gamma: float = 2.0) -> LossBreakdown:
    """Hungarian-matched detection loss summed over decoder layers.

    ``preds`` is a list (one per decoder layer) of objects with ``logits``
    [B, N, K] and ``boxes`` [B, N, 4]; ``targets`` holds one [n, 5] array of
    (class, cx, cy, w, h) rows per batch element. Each term is normalised by
    the batch's target count (at least 1); unmatched predictions are pushed
    toward all-zero class scores by the focal term.
    """
    match_weights = match_weights or weights
    num_boxes = max(sum(len(np.asarray(t).reshape(-1, 5)) for t in targets), 1)
    total = None
    per_layer = []
    for layer in preds:
        loss, terms = _layer_loss(layer.logits, layer.boxes, targets, weights, match_weights,
                                  alpha, gamma, float(num_boxes))
        total = loss if total is None else total + loss
        per_layer.append(terms)
    summed = {key: float(sum(t[key] for t in per_layer)) for key in ("focal", "l1", "giou", "total")}
    return LossBreakdown(total=total, terms=summed, per_layer=per_layer)
