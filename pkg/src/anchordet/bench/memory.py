"""Analytic and measured memory of standard attention, RCDA and efficient attention."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from ..attention import (
    AttentionConfig,
    FeatureMap,
    MHAWeights,
    efficient_attention_baseline,
    key_position_embedding,
    measure_peak_buffers,
    memory_model,
    rcda,
    standard_attention,
)
from ..tensor import Tensor

MEMORY_HEADER = ["nq", "h", "w", "m", "c", "variant", "analytic_elems", "measured_bytes", "ratio"]
VARIANTS = ("standard", "rcda", "efficient")

TOY_SHAPES = [(18, 16, 16, 4, 32), (18, 16, 32, 4, 32), (18, 16, 64, 4, 32)]
PAPER_SHAPES = [(900, 32, 32, 8, 256), (900, 32, 64, 8, 256), (900, 32, 128, 8, 256)]


@dataclass
class MemoryRow:
    nq: int
    h: int
    w: int
    m: int
    c: int
    variant: str
    analytic_elems: int
    measured_bytes: Optional[int]
    ratio: float

    def as_list(self) -> list:
        return [self.nq, self.h, self.w, self.m, self.c, self.variant, self.analytic_elems,
                "skipped" if self.measured_bytes is None else self.measured_bytes, self.ratio]


class AttentionInputs:
    """Seeded inputs and weights for one attention shape."""

    def __init__(self, nq: int, h: int, w: int, m: int, c: int, seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.cfg = AttentionConfig(c, m)
        self.weights = MHAWeights(c, rng, dtype)
        feats = Tensor(rng.normal(size=(h, w, c)).astype(dtype))
        self.fmap = FeatureMap.from_features(feats)
        self.flat = feats.reshape(h * w, c)
        self.q_f = Tensor(rng.normal(size=(nq, c)).astype(dtype))
        self.q_p = Tensor(rng.normal(size=(nq, c)).astype(dtype))
        self.pos_q = rng.uniform(size=(nq, 2))
        self.k_p = key_position_embedding(self.fmap, dtype=dtype)

    def run(self, variant: str) -> Tensor:
        if variant == "standard":
            return standard_attention(self.q_f, self.q_p, self.fmap, self.k_p, self.weights, self.cfg)
        if variant == "rcda":
            return rcda(self.q_f, self.pos_q, self.fmap, self.weights, self.cfg)
        if variant == "efficient":
            return efficient_attention_baseline(self.q_f + self.q_p, self.flat + self.k_p, self.flat,
                                                self.cfg, self.weights)
        raise ValueError(f"unknown attention variant {variant!r}")


def measure_variant(inputs: AttentionInputs, variant: str, backward: bool = True) -> int:
    inputs.weights.zero_grad()
    peak = measure_peak_buffers(lambda: inputs.run(variant), backward=backward)
    inputs.weights.zero_grad()
    return peak


def bench_memory(shapes: Iterable[tuple], seed: int = 0, backward: bool = True,
                 variants: Iterable[str] = VARIANTS) -> tuple[list[MemoryRow], list[dict]]:
    """One row per (shape, variant), in input order; oversized shapes are marked skipped."""
    rows, failures = [], []
    for shape in shapes:
        nq, h, w, m, c = (int(v) for v in shape)
        report = memory_model(nq, h, w, m, c)
        analytic = {"standard": report.std_weight_elems, "rcda": report.rcda_z_elems,
                    "efficient": report.efficient_elems}
        try:
            inputs = AttentionInputs(nq, h, w, m, c, seed)
        except MemoryError as exc:
            inputs = None
            failures.append({"shape": [nq, h, w, m, c], "variant": "*", "error": repr(exc)})
        for variant in variants:
            measured = None
            if inputs is not None:
                try:
                    measured = measure_variant(inputs, variant, backward)
                except MemoryError as exc:
                    failures.append({"shape": [nq, h, w, m, c], "variant": variant, "error": repr(exc)})
            rows.append(MemoryRow(nq, h, w, m, c, variant, analytic[variant], measured,
                                  report.std_weight_elems / analytic[variant]))
    return rows, failures
