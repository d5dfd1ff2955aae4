"""Detector hyper-parameters."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

import numpy as np


@dataclass
class LossWeights:
    cls: float = 2.0
    l1: float = 5.0
    giou: float = 2.0


@dataclass
class DetectorConfig:
    """Defaults are the full-size detector; :meth:`toy` is the desk-scale profile."""

    channels: int = 256
    heads: int = 8
    ffn: int = 1024
    enc_layers: int = 6
    dec_layers: int = 6
    n_anchors: int = 300
    n_patterns: int = 3
    anchor_kind: str = "learned"  # learned | grid
    query_design: str = "anchor"  # anchor | embedding
    attention: str = "rcda"  # rcda | standard
    num_classes: int = 3
    in_channels: int = 5
    height: int = 16
    width: int = 16
    loss_weights: LossWeights = field(default_factory=LossWeights)
    match_weights: LossWeights = field(default_factory=LossWeights)
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    lr: float = 1e-4
    weight_decay: float = 1e-4
    lr_drop: float = 0.8  # fraction of the run after which lr is scaled by 0.1
    grad_clip: float = 0.1
    dtype: str = "float32"
    score_thresh: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.loss_weights, dict):
            self.loss_weights = LossWeights(**self.loss_weights)
        if isinstance(self.match_weights, dict):
            self.match_weights = LossWeights(**self.match_weights)
        if self.channels % self.heads:
            raise ValueError("channels must be divisible by heads")
        if self.channels % 4:
            raise ValueError("channels must be divisible by 4 for 2-D position encoding")
        if self.anchor_kind not in ("learned", "grid"):
            raise ValueError(f"anchor_kind must be 'learned' or 'grid', got {self.anchor_kind!r}")
        if self.query_design not in ("anchor", "embedding"):
            raise ValueError(f"query_design must be 'anchor' or 'embedding', got {self.query_design!r}")
        if self.attention not in ("rcda", "standard"):
            raise ValueError(f"attention must be 'rcda' or 'standard', got {self.attention!r}")
        if self.anchor_kind == "grid" and self.grid_shape[0] * self.grid_shape[1] != self.n_anchors:
            raise ValueError(f"grid anchors need a square anchor count, got {self.n_anchors}")

    @property
    def n_queries(self) -> int:
        return self.n_anchors * self.n_patterns

    @property
    def grid_shape(self) -> tuple[int, int]:
        side = math.isqrt(self.n_anchors)
        return side, side

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    @classmethod
    def toy(cls, **overrides) -> "DetectorConfig":
        base = dict(channels=32, heads=4, ffn=64, enc_layers=2, dec_layers=2, n_anchors=9,
                    n_patterns=2, height=16, width=16, lr=1e-3, grad_clip=1.0)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def paper(cls, **overrides) -> "DetectorConfig":
        return cls(**overrides)

    def replace(self, **changes) -> "DetectorConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DetectorConfig":
        return cls(**d)


def load_config(path: Union[str, Path, None], profile: str = "toy") -> DetectorConfig:
    """Profile defaults, overridden by keys of a JSON file when given."""
    overrides = json.loads(Path(path).read_text()) if path else {}
    if profile == "toy":
        return DetectorConfig.toy(**overrides)
    if profile == "paper-shapes":
        return DetectorConfig.paper(**overrides)
    raise ValueError(f"unknown profile {profile!r}")
