"""Anchor-point object queries and row-column decoupled attention on a small numpy autodiff core."""

from .attention import (
    AttentionConfig,
    FeatureMap,
    MHAWeights,
    MemoryReport,
    efficient_attention_baseline,
    measure_peak_buffers,
    memory_model,
    multihead_attention,
    rcda,
    standard_attention,
)
from .encoding import AnchorEncoderMLP, SineEncoderConfig, encode_anchor_queries, g_1d, g_sin_2d
from .queries import AnchorSet, PatternBank, QueryBundle, compose_queries, decode_boxes, grid_anchors, learned_anchors
from .tensor import GradContractError, NonFiniteError, ShapeError, Tensor, grad_check, no_grad

__version__ = "0.1.0"

__all__ = [
    "AnchorEncoderMLP", "AnchorSet", "AttentionConfig", "FeatureMap", "GradContractError", "MHAWeights",
    "MemoryReport", "NonFiniteError", "PatternBank", "QueryBundle", "ShapeError", "SineEncoderConfig",
    "Tensor", "compose_queries", "decode_boxes", "efficient_attention_baseline", "encode_anchor_queries",
    "g_1d", "g_sin_2d", "grad_check", "grid_anchors", "learned_anchors", "measure_peak_buffers",
    "memory_model", "multihead_attention", "no_grad", "rcda", "standard_attention",
]
