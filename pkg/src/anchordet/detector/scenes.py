"""Synthetic rectangle scenes rasterised onto a small feature grid."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

import numpy as np

SIZE_RANGES = {
    "uniform": [(0.15, 0.45)],
    "bimodal": [(0.12, 0.2), (0.4, 0.55)],
}


@dataclass
class Scene:
    features: np.ndarray  # [H, W, num_classes + 2]
    targets: np.ndarray  # [n, 5] rows of (class, cx, cy, w, h)
    seed: int = 0
    index: int = 0

    @property
    def height(self) -> int:
        return self.features.shape[0]

    @property
    def width(self) -> int:
        return self.features.shape[1]


def box_mask(box, height: int, width: int) -> np.ndarray:
    """Cells whose centre lies inside the (cx, cy, w, h) box."""
    cx, cy, w, h = box
    xs = (np.arange(width) + 0.5) / width
    ys = (np.arange(height) + 0.5) / height
    in_x = (xs >= cx - w / 2) & (xs <= cx + w / 2)
    in_y = (ys >= cy - h / 2) & (ys <= cy + h / 2)
    return in_y[:, None] & in_x[None, :]


def rasterize(targets: np.ndarray, height: int, width: int, num_classes: int = 3) -> np.ndarray:
    """Per-class occupancy channels followed by x and y coordinate channels."""
    feats = np.zeros((height, width, num_classes + 2))
    for cls, *box in np.asarray(targets, dtype=np.float64).reshape(-1, 5):
        feats[..., int(cls)][box_mask(box, height, width)] = 1.0
    feats[..., num_classes] = ((np.arange(width) + 0.5) / width)[None, :]
    feats[..., num_classes + 1] = ((np.arange(height) + 0.5) / height)[:, None]
    return feats


def _overlaps(box, others) -> bool:
    cx, cy, w, h = box
    for _, ox, oy, ow, oh in others:
        if abs(cx - ox) < (w + ow) / 2 and abs(cy - oy) < (h + oh) / 2:
            return True
    return False


def _draw_targets(rng: np.random.Generator, max_objects: int, num_classes: int, size_mode: str) -> np.ndarray:
    ranges = SIZE_RANGES[size_mode]
    n = int(rng.integers(0, max_objects + 1))
    rows: list[tuple] = []
    attempts = 0
    while len(rows) < n and attempts < 200:
        attempts += 1
        lo, hi = ranges[int(rng.integers(len(ranges)))]
        w, h = rng.uniform(lo, hi, size=2)
        cx = rng.uniform(w / 2, 1 - w / 2)
        cy = rng.uniform(h / 2, 1 - h / 2)
        if _overlaps((cx, cy, w, h), rows):
            continue
        rows.append((int(rng.integers(num_classes)), cx, cy, w, h))
    return np.array(rows, dtype=np.float64).reshape(-1, 5)


def generate_scenes(seed: int, count: int, max_objects: int = 3, height: int = 16, width: int = 16,
                    num_classes: int = 3, size_mode: str = "uniform") -> list[Scene]:
    """Scenes of non-overlapping rectangles; scene i depends only on (seed, i)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if size_mode not in SIZE_RANGES:
        raise ValueError(f"size_mode must be one of {sorted(SIZE_RANGES)}")
    scenes = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        targets = _draw_targets(rng, max_objects, num_classes, size_mode)
        scenes.append(Scene(rasterize(targets, height, width, num_classes), targets, seed, i))
    return scenes


def save_scenes(path: Union[str, Path], scenes: Iterable[Scene], num_classes: int = 3) -> None:
    with open(path, "w") as fh:
        for s in scenes:
            fh.write(json.dumps({
                "seed": s.seed, "index": s.index, "height": s.height, "width": s.width,
                "num_classes": num_classes, "targets": s.targets.tolist(),
            }) + "\n")


def load_scenes(path: Union[str, Path]) -> list[Scene]:
    scenes = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            targets = np.array(rec["targets"], dtype=np.float64).reshape(-1, 5)
            feats = rasterize(targets, rec["height"], rec["width"], rec.get("num_classes", 3))
            scenes.append(Scene(feats, targets, rec.get("seed", 0), rec.get("index", 0)))
    return scenes
