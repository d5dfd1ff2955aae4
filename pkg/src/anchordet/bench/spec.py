"""Validated description of one benchmark invocation."""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

MODES = ("memory", "ablation", "slots", "histogram", "train", "eval")
PROFILES = ("toy", "paper-shapes")

# (N_q, H, W, M, C) grids per profile
SHAPE_GRIDS = {
    "toy": {"nq": [18], "h": [16], "w": [16, 32, 64], "m": [4], "c": [32]},
    "paper-shapes": {"nq": [900], "h": [32], "w": [32, 64, 128], "m": [8], "c": [256]},
}


@dataclass
class BenchSpec:
    mode: str
    out_dir: Path
    seed: int = 0
    profile: str = "toy"
    nq: list[int] = field(default_factory=list)
    h: list[int] = field(default_factory=list)
    w: list[int] = field(default_factory=list)
    m: list[int] = field(default_factory=list)
    c: list[int] = field(default_factory=list)
    overrides: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.profile not in PROFILES:
            raise ValueError(f"profile must be one of {PROFILES}, got {self.profile!r}")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        defaults = SHAPE_GRIDS[self.profile]
        for key in ("nq", "h", "w", "m", "c"):
            values = getattr(self, key) or list(defaults[key])
            if not values:
                raise ValueError(f"shape grid {key} is empty")
            if any(int(v) <= 0 for v in values):
                raise ValueError(f"shape grid {key} must be positive, got {values}")
            setattr(self, key, [int(v) for v in values])
        self.out_dir = Path(self.out_dir)
        self._check_writable()

    def _check_writable(self) -> None:
        probe = self.out_dir
        while not probe.exists():
            probe = probe.parent
        if not probe.is_dir() or not os.access(probe, os.W_OK):
            raise ValueError(f"output path {self.out_dir} is not writable")

    @property
    def shapes(self) -> list[tuple[int, int, int, int, int]]:
        """Cartesian product of the grid in (nq, h, w, m, c) order."""
        return list(itertools.product(self.nq, self.h, self.w, self.m, self.c))

    @property
    def forward_only(self) -> bool:
        return self.profile == "paper-shapes"
