"""Encoder/decoder detector with anchor-point queries."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..attention import (
    AttentionConfig,
    FeatureMap,
    MHAWeights,
    key_position_embedding,
    multihead_attention,
    pixel_centres,
    rcda,
    standard_attention,
)
from ..encoding import AnchorEncoderMLP, SineEncoderConfig, g_sin_2d
from ..nn import MLP, LayerNorm, Linear, Module, parameter
from ..queries import (
    PatternBank,
    QueryBundle,
    compose_queries,
    decode_boxes,
    grid_anchors,
    learned_anchors,
    row_maps,
)
from ..tensor import Tensor, no_grad, relu, sigmoid
from .config import DetectorConfig


@dataclass
class DetectionSet:
    boxes: Tensor  # [B, N_q, 4] (cx, cy, w, h)
    logits: Tensor  # [B, N_q, num_classes]

    def scores(self) -> np.ndarray:
        return sigmoid(self.logits).data


class FFN(Module):
    def __init__(self, channels: int, hidden: int, rng, dtype):
        self.fc1 = Linear(channels, hidden, rng, dtype)
        self.fc2 = Linear(hidden, channels, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(relu(self.fc1(x)))


def _pixel_grid(h: int, w: int) -> np.ndarray:
    ys, xs = np.meshgrid(pixel_centres(h), pixel_centres(w), indexing="ij")
    return np.stack([xs.ravel(), ys.ravel()], axis=1)


class EncoderLayer(Module):
    """Self-attention over pixels, then FFN; post-norm residual blocks."""

    def __init__(self, cfg: DetectorConfig, rng, dtype):
        self.attn = MHAWeights(cfg.channels, rng, dtype)
        self.norm1 = LayerNorm(cfg.channels, dtype)
        self.ffn = FFN(cfg.channels, cfg.ffn, rng, dtype)
        self.norm2 = LayerNorm(cfg.channels, dtype)
        self.acfg = AttentionConfig(cfg.channels, cfg.heads)
        self.variant = cfg.attention

    def __call__(self, x: Tensor, pos_embed: Optional[Tensor] = None) -> Tensor:
        """x: [B, H, W, C]. ``pos_embed`` ([H*W, C]) is only used by standard attention."""
        b, h, w, c = x.shape
        q_f = x.reshape(b, h * w, c)
        fmap = FeatureMap.from_features(x)
        if self.variant == "rcda":
            attn = rcda(q_f, _pixel_grid(h, w), fmap, self.attn, self.acfg)
        else:
            if pos_embed is None:
                pos_embed = key_position_embedding(fmap)
            attn = standard_attention(q_f, pos_embed, fmap, pos_embed, self.attn, self.acfg)
        y = self.norm1(q_f + attn)
        y = self.norm2(y + self.ffn(y))
        return y.reshape(b, h, w, c)


class DecoderLayer(Module):
    """Query self-attention (standard), cross-attention into memory, FFN."""

    def __init__(self, cfg: DetectorConfig, rng, dtype):
        self.self_attn = MHAWeights(cfg.channels, rng, dtype)
        self.norm1 = LayerNorm(cfg.channels, dtype)
        self.cross_attn = MHAWeights(cfg.channels, rng, dtype)
        self.norm2 = LayerNorm(cfg.channels, dtype)
        self.ffn = FFN(cfg.channels, cfg.ffn, rng, dtype)
        self.norm3 = LayerNorm(cfg.channels, dtype)
        self.acfg = AttentionConfig(cfg.channels, cfg.heads)
        self.variant = cfg.attention

    def __call__(self, tgt: Tensor, q_p: Tensor, memory: FeatureMap, pos_q,
                 key_embed: Optional[Tensor] = None) -> Tensor:
        """tgt [B, N, C]; q_p [N, C]; pos_q [N, 2] reference point of every row."""
        qk = tgt + q_p
        y = self.norm1(tgt + multihead_attention(qk, qk, tgt, self.self_attn, self.acfg))
        if self.variant == "rcda":
            cross = rcda(y, pos_q, memory, self.cross_attn, self.acfg)
        else:
            if key_embed is None:
                key_embed = key_position_embedding(memory)
            cross = standard_attention(y, q_p, memory, key_embed, self.cross_attn, self.acfg)
        y = self.norm2(y + cross)
        return self.norm3(y + self.ffn(y))


class AnchorDetector(Module):
    def __init__(self, cfg: DetectorConfig, seed: Optional[int] = None):
        self.cfg = cfg
        dtype = cfg.np_dtype
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        c = cfg.channels
        self.pos_cfg = SineEncoderConfig(c)
        self.input_proj = Linear(cfg.in_channels, c, rng, dtype)
        self.encoder = [EncoderLayer(cfg, rng, dtype) for _ in range(cfg.enc_layers)]
        self.decoder = [DecoderLayer(cfg, rng, dtype) for _ in range(cfg.dec_layers)]
        self.patterns = PatternBank(cfg.n_patterns, c, rng, dtype)
        if cfg.query_design == "anchor":
            if cfg.anchor_kind == "grid":
                self.anchors = grid_anchors(*cfg.grid_shape, dtype=dtype)
            else:
                self.anchors = learned_anchors(cfg.n_anchors, rng=rng, dtype=dtype)
            self.anchor_mlp = AnchorEncoderMLP(c, rng, dtype)
        else:
            # one learned position embedding per anchor slot, shared by that slot's patterns
            self.query_embed = parameter(rng.normal(0.0, 1.0, size=(cfg.n_anchors, c)), dtype)
        self.class_head = Linear(c, cfg.num_classes, rng, dtype)
        self.box_head = MLP([c, c, c, 4], rng, dtype)
        self._pixel_embed_cache: dict = {}

    # -- queries ----------------------------------------------------------
    def queries(self) -> QueryBundle:
        cfg = self.cfg
        if cfg.query_design == "anchor":
            return compose_queries(self.anchors, self.patterns, self.anchor_mlp, self.pos_cfg)
        anchor_of_row, pattern_of_row = row_maps(cfg.n_anchors, cfg.n_patterns)
        return QueryBundle(self.patterns.embeddings[pattern_of_row], self.query_embed[anchor_of_row],
                           anchor_of_row, pattern_of_row)

    def reference_points(self, bundle: QueryBundle):
        """Per-row (x, y) reference: the row's anchor, or the image centre for embedding queries."""
        if self.cfg.query_design == "anchor":
            return self.anchors.positions[bundle.anchor_of_row]
        return np.full((bundle.n_queries, 2), 0.5, dtype=self.cfg.np_dtype)

    def _key_embed(self, h: int, w: int) -> Optional[Tensor]:
        if self.cfg.attention != "standard":
            return None
        key = (h, w)
        if key not in self._pixel_embed_cache:
            with no_grad():
                self._pixel_embed_cache[key] = g_sin_2d(_pixel_grid(h, w), self.pos_cfg, dtype=self.cfg.np_dtype)
        return self._pixel_embed_cache[key]

    # -- forward ----------------------------------------------------------
    def __call__(self, features) -> list[DetectionSet]:
        """features [B, H, W, C_in] (or unbatched) -> one DetectionSet per decoder layer."""
        x = features if isinstance(features, Tensor) else Tensor(np.asarray(features, dtype=self.cfg.np_dtype))
        if x.ndim == 3:
            x = x.reshape(1, *x.shape)
        b, h, w, _ = x.shape
        key_embed = self._key_embed(h, w)

        x = self.input_proj(x)
        for layer in self.encoder:
            x = layer(x, key_embed)
        memory = FeatureMap.from_features(x)

        bundle = self.queries()
        ref = self.reference_points(bundle)
        n, c = bundle.q_f_init.shape
        tgt = bundle.q_f_init.reshape(1, n, c) + Tensor(np.zeros((b, 1, c), dtype=self.cfg.np_dtype))
        outputs = []
        for layer in self.decoder:
            tgt = layer(tgt, bundle.q_p, memory, ref, key_embed)
            outputs.append(DetectionSet(boxes=decode_boxes(self.box_head(tgt), ref),
                                        logits=self.class_head(tgt)))
        return outputs

    def anchor_positions(self) -> Optional[np.ndarray]:
        return self.anchors.positions.data.copy() if self.cfg.query_design == "anchor" else None


def stack_features(scenes: Sequence) -> np.ndarray:
    return np.stack([s.features for s in scenes])
