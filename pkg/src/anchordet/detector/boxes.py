"""Box geometry for (cx, cy, w, h) boxes in normalised coordinates."""

from __future__ import annotations

import numpy as np

from ..tensor import Tensor, maximum, minimum, clamp_min


def cxcywh_to_xyxy(b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    cx, cy, w, h = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], axis=-1)


def pairwise_iou_giou(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """IoU and GIoU for every pair: a [n, 4], b [m, 4] -> two [n, m] arrays."""
    xa, xb = cxcywh_to_xyxy(a)[:, None, :], cxcywh_to_xyxy(b)[None, :, :]
    area_a = (xa[..., 2] - xa[..., 0]) * (xa[..., 3] - xa[..., 1])
    area_b = (xb[..., 2] - xb[..., 0]) * (xb[..., 3] - xb[..., 1])
    iw = np.clip(np.minimum(xa[..., 2], xb[..., 2]) - np.maximum(xa[..., 0], xb[..., 0]), 0, None)
    ih = np.clip(np.minimum(xa[..., 3], xb[..., 3]) - np.maximum(xa[..., 1], xb[..., 1]), 0, None)
    inter = iw * ih
    union = area_a + area_b - inter
    hull = ((np.maximum(xa[..., 2], xb[..., 2]) - np.minimum(xa[..., 0], xb[..., 0]))
            * (np.maximum(xa[..., 3], xb[..., 3]) - np.minimum(xa[..., 1], xb[..., 1])))
    iou = inter / union
    return iou, iou - (hull - union) / hull


def giou(box_a, box_b) -> float:
    """Generalised IoU of two boxes; raises on a zero-area box."""
    a, b = np.asarray(box_a, dtype=np.float64), np.asarray(box_b, dtype=np.float64)
    if a[2] <= 0 or a[3] <= 0 or b[2] <= 0 or b[3] <= 0:
        raise ValueError("giou is undefined for boxes with non-positive width or height")
    return float(pairwise_iou_giou(a[None], b[None])[1][0, 0])


def giou_tensor(a: Tensor, b: Tensor) -> Tensor:
    """Row-aligned differentiable GIoU: a, b [n, 4] -> [n]."""

    def corners(t):
        cx, cy, w, h = t[:, 0], t[:, 1], t[:, 2], t[:, 3]
        return cx - w * 0.5, cy - h * 0.5, cx + w * 0.5, cy + h * 0.5

    ax0, ay0, ax1, ay1 = corners(a)
    bx0, by0, bx1, by1 = corners(b)
    area_a = (ax1 - ax0) * (ay1 - ay0)
    area_b = (bx1 - bx0) * (by1 - by0)
    iw = clamp_min(minimum(ax1, bx1) - maximum(ax0, bx0), 0.0)
    ih = clamp_min(minimum(ay1, by1) - maximum(ay0, by0), 0.0)
    inter = iw * ih
    union = area_a + area_b - inter
    hull = (maximum(ax1, bx1) - minimum(ax0, bx0)) * (maximum(ay1, by1) - minimum(ay0, by0))
    return inter / union - (hull - union) / hull
