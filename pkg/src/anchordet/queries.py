"""Anchor points, pattern embeddings and pattern-position query composition."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .encoding import AnchorEncoderMLP, SineEncoderConfig, encode_anchor_queries
from .nn import Module, parameter
from .tensor import Tensor, inverse_sigmoid, sigmoid, concat

INVERSE_SIGMOID_EPS = 1e-5


class AnchorSet(Module):
    """N_A reference points in [0, 1]^2; learned anchors are trainable parameters."""

    def __init__(self, positions: np.ndarray, kind: str, dtype=np.float32):
        positions = np.asarray(positions, dtype=dtype)
        if positions.ndim != 2 or positions.shape[1] != 2 or len(positions) < 1:
            raise ValueError(f"anchor positions must be [N_A, 2] with N_A >= 1, got {positions.shape}")
        if kind not in ("grid", "learned"):
            raise ValueError(f"anchor kind must be 'grid' or 'learned', got {kind!r}")
        if (positions < 0).any() or (positions > 1).any():
            raise ValueError("anchor coordinates must lie in [0, 1]")
        self.kind = kind
        self.positions = Tensor(positions, requires_grad=(kind == "learned"))

    @property
    def trainable(self) -> bool:
        return self.kind == "learned"

    def __len__(self) -> int:
        return self.positions.shape[0]


def grid_anchors(rows: int, cols: int, dtype=np.float32) -> AnchorSet:
    """Cell centres of a rows x cols grid, row-major, as (x, y)."""
    if rows < 1 or cols < 1:
        raise ValueError(f"grid dimensions must be >= 1, got {rows}x{cols}")
    ys, xs = np.meshgrid((np.arange(rows) + 0.5) / rows, (np.arange(cols) + 0.5) / cols, indexing="ij")
    return AnchorSet(np.stack([xs.ravel(), ys.ravel()], axis=1), "grid", dtype)


def learned_anchors(n_anchors: int, seed: Optional[int] = None, dtype=np.float32,
                    rng: Optional[np.random.Generator] = None) -> AnchorSet:
    if n_anchors < 1:
        raise ValueError(f"need at least one anchor, got {n_anchors}")
    rng = rng if rng is not None else np.random.default_rng(seed)
    return AnchorSet(rng.uniform(0.0, 1.0, size=(n_anchors, 2)), "learned", dtype)


class PatternBank(Module):
    """N_p pattern embeddings shared by every anchor."""

    def __init__(self, n_patterns: int, channels: int, rng: np.random.Generator, dtype=np.float32):
        if n_patterns < 1:
            raise ValueError(f"need at least one pattern, got {n_patterns}")
        self.embeddings = parameter(rng.normal(0.0, 1.0, size=(n_patterns, channels)), dtype)

    def __len__(self) -> int:
        return self.embeddings.shape[0]


@dataclass
class QueryBundle:
    """Decoder queries; row k belongs to anchor k // N_p and pattern k % N_p."""

    q_f_init: Tensor
    q_p: Tensor
    anchor_of_row: np.ndarray
    pattern_of_row: np.ndarray

    @property
    def n_queries(self) -> int:
        return len(self.anchor_of_row)


def row_maps(n_anchors: int, n_patterns: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(n_anchors * n_patterns)
    return k // n_patterns, k % n_patterns


def compose_queries(anchors: AnchorSet, patterns: PatternBank, encoder: AnchorEncoderMLP,
                    cfg: SineEncoderConfig) -> QueryBundle:
    if patterns.embeddings.shape[1] != cfg.channels:
        raise ValueError(
            f"pattern width {patterns.embeddings.shape[1]} does not match encoder channels {cfg.channels}")
    anchor_of_row, pattern_of_row = row_maps(len(anchors), len(patterns))
    q_p_anchor = encode_anchor_queries(anchors.positions, encoder, cfg)
    return QueryBundle(
        q_f_init=patterns.embeddings[pattern_of_row],
        q_p=q_p_anchor[anchor_of_row],
        anchor_of_row=anchor_of_row,
        pattern_of_row=pattern_of_row,
    )


def decode_boxes(raw: Tensor, anchors_of_rows, eps: float = INVERSE_SIGMOID_EPS) -> Tensor:
    """Raw [..., 4] offsets -> (cx, cy, w, h) in (0, 1).

    Centres are offset from their anchor in logit space; sizes are a plain sigmoid.
    """
    ref = anchors_of_rows if isinstance(anchors_of_rows, Tensor) else Tensor(
        np.asarray(anchors_of_rows, dtype=raw.dtype))
    centre = sigmoid(raw[..., 0:2] + inverse_sigmoid(ref, eps))
    size = sigmoid(raw[..., 2:4])
    return concat([centre, size], axis=-1)
