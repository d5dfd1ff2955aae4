"""Sine-cosine position encoders and the anchor-query MLP adapter."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .nn import Linear, Module
from .tensor import Tensor, concat, cos, relu, sin

Coords = Union[Tensor, np.ndarray]


@dataclass(frozen=True)
class SineEncoderConfig:
    channels: int
    temperature: float = 10000.0
    scale: float = 2 * math.pi

    def __post_init__(self):
        if self.channels <= 0 or self.channels % 2:
            raise ValueError(f"channels must be a positive even integer, got {self.channels}")
        if self.temperature <= 0 or self.scale <= 0:
            raise ValueError("temperature and scale must be positive")


def frequencies(channels: int, temperature: float) -> np.ndarray:
    """Per-channel divisors: channels 2i and 2i+1 share temperature^(2i/channels)."""
    i = np.arange(channels) // 2
    return temperature ** (2.0 * i / channels)


def _encode_axis(coord: Tensor, channels: int, cfg: SineEncoderConfig) -> Tensor:
    # coord: [..., 1]
    dim_t = frequencies(channels, cfg.temperature)[0::2].astype(coord.dtype)
    phase = coord * (cfg.scale / dim_t)  # [..., channels/2]
    s, c = sin(phase), cos(phase)
    stacked = concat([s.reshape(*s.shape, 1), c.reshape(*c.shape, 1)], axis=-1)
    return stacked.reshape(*coord.shape[:-1], channels)


def _as_tensor(pos: Coords, dtype) -> Tensor:
    return pos if isinstance(pos, Tensor) else Tensor(np.asarray(pos, dtype=dtype))


def g_1d(pos: Coords, cfg: SineEncoderConfig, dtype=np.float64) -> Tensor:
    """Encode ``[..., 1]`` (or ``[...]``) coordinates into ``[..., C]`` interleaved sin/cos.

    ``dtype`` applies only when ``pos`` is a plain array.
    """
    pos = _as_tensor(pos, dtype)
    if pos.ndim == 0 or pos.shape[-1] != 1:
        pos = pos.reshape(*pos.shape, 1)
    return _encode_axis(pos, cfg.channels, cfg)


def g_sin_2d(pos: Coords, cfg: SineEncoderConfig, dtype=np.float64) -> Tensor:
    """Encode ``[..., 2]`` (x, y) coordinates; x fills the first C/2 channels, y the rest."""
    if cfg.channels % 4:
        raise ValueError(f"2-D sine encoding needs channels divisible by 4, got {cfg.channels}")
    pos = _as_tensor(pos, dtype)
    if pos.shape[-1] != 2:
        raise ValueError(f"expected [..., 2] coordinates, got shape {pos.shape}")
    half = cfg.channels // 2
    ex = _encode_axis(pos[..., 0:1], half, cfg)
    ey = _encode_axis(pos[..., 1:2], half, cfg)
    return concat([ex, ey], axis=-1)


class AnchorEncoderMLP(Module):
    """Two C->C linear layers with a ReLU (or nothing, ``activation="identity"``) between them."""

    def __init__(self, channels: int, rng: np.random.Generator, dtype=np.float32, activation: str = "relu"):
        if activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {activation!r}")
        self.layer1 = Linear(channels, channels, rng, dtype)
        self.layer2 = Linear(channels, channels, rng, dtype)
        self.activation = activation

    @property
    def dtype(self):
        return self.layer1.weight.dtype

    def __call__(self, x: Tensor) -> Tensor:
        h = self.layer1(x)
        if self.activation == "relu":
            h = relu(h)
        return self.layer2(h)


def encode_anchor_queries(pos_q: Coords, mlp: AnchorEncoderMLP, cfg: SineEncoderConfig) -> Tensor:
    """Anchor positions [N_A, 2] -> query position embeddings [N_A, C]."""
    return mlp(g_sin_2d(pos_q, cfg, dtype=mlp.dtype))
