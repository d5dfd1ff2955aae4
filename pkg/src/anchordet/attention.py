"""Standard multi-head attention, row-column decoupled attention (RCDA), an
efficient-attention baseline, and memory accounting for all three.

Shapes follow ``[batch, ...]`` internally; every public entry point also
accepts unbatched inputs (``q_f: [N_q, C]``, features ``[H, W, C]``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .encoding import SineEncoderConfig, g_1d, g_sin_2d
from .nn import Linear, Module
from .tensor import BufferArena, Tensor, make_op, mean_pool, softmax, _track

# ---------------------------------------------------------------------------
# configuration and containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AttentionConfig:
    channels: int
    heads: int

    def __post_init__(self):
        if self.channels % self.heads:
            raise ValueError(f"channels ({self.channels}) must be divisible by heads ({self.heads})")

    @property
    def d_k(self) -> int:
        return self.channels // self.heads

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.d_k)


class MHAWeights(Module):
    """Query/key/value/output projections, each C -> C."""

    def __init__(self, channels: int, rng: np.random.Generator, dtype=np.float32):
        self.q = Linear(channels, channels, rng, dtype)
        self.k = Linear(channels, channels, rng, dtype)
        self.v = Linear(channels, channels, rng, dtype)
        self.o = Linear(channels, channels, rng, dtype)

    @classmethod
    def identity(cls, channels: int, dtype=np.float64) -> "MHAWeights":
        w = cls(channels, np.random.default_rng(0), dtype)
        for lin in (w.q, w.k, w.v, w.o):
            lin.weight.data = np.eye(channels, dtype=dtype)
        return w


def pixel_centres(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n


@dataclass
class FeatureMap:
    """Encoder memory ``[..., H, W, C]`` with normalised key coordinates per axis."""

    k_f: Tensor
    v_f: Tensor
    pos_x: np.ndarray  # [W]
    pos_y: np.ndarray  # [H]

    def __post_init__(self):
        self.pos_x = np.asarray(self.pos_x, dtype=np.float64).reshape(-1)
        self.pos_y = np.asarray(self.pos_y, dtype=np.float64).reshape(-1)
        if self.k_f.shape != self.v_f.shape:
            raise ValueError(f"key/value feature shapes differ: {self.k_f.shape} vs {self.v_f.shape}")
        if len(self.pos_x) != self.width or len(self.pos_y) != self.height:
            raise ValueError("key position lengths must match the feature width/height")
        for p in (self.pos_x, self.pos_y):
            if (np.diff(p) <= 0).any() or p.min() < 0 or p.max() > 1:
                raise ValueError("key positions must be strictly increasing within [0, 1]")

    @classmethod
    def from_features(cls, x: Tensor, v: Optional[Tensor] = None) -> "FeatureMap":
        h, w = x.shape[-3], x.shape[-2]
        return cls(x, x if v is None else v, pixel_centres(w), pixel_centres(h))

    @property
    def height(self) -> int:
        return self.k_f.shape[-3]

    @property
    def width(self) -> int:
        return self.k_f.shape[-2]

    @property
    def channels(self) -> int:
        return self.k_f.shape[-1]

    def key_positions(self) -> np.ndarray:
        """Flattened (x, y) key coordinates, row-major over H then W: [H*W, 2]."""
        ys, xs = np.meshgrid(self.pos_y, self.pos_x, indexing="ij")
        return np.stack([xs.ravel(), ys.ravel()], axis=1)


def key_position_embedding(fmap: FeatureMap, cfg: Optional[SineEncoderConfig] = None, dtype=None) -> Tensor:
    """2-D sine embedding of every key position: [H*W, C]."""
    cfg = cfg or SineEncoderConfig(fmap.channels)
    return g_sin_2d(fmap.key_positions(), cfg, dtype=dtype or fmap.k_f.dtype)


# ---------------------------------------------------------------------------
# fused kernels
# ---------------------------------------------------------------------------


def _softmax_inplace(s: np.ndarray) -> np.ndarray:
    s -= s.max(axis=-1, keepdims=True)
    np.exp(s, out=s)
    s /= s.sum(axis=-1, keepdims=True)
    return s


def attention_probs(q: Tensor, k: Tensor, scale: float) -> Tensor:
    """softmax(q k^T * scale) over the last axis; q [..., N, d], k [..., L, d] -> [..., N, L]."""
    qd, kd = q.data, k.data
    p = np.matmul(qd, np.swapaxes(kd, -1, -2))
    p *= scale
    _softmax_inplace(p)

    def backward(g):
        ds = g - (g * p).sum(axis=-1, keepdims=True)
        ds *= p
        ds *= scale
        gq = np.matmul(ds, kd) if q.requires_grad else None
        gk = np.matmul(np.swapaxes(ds, -1, -2), qd) if k.requires_grad else None
        return gq, gk

    return make_op(p, (q, k), backward)


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, scale: float) -> Tensor:
    """softmax(q k^T * scale) v without exposing the weight map as a tensor.

    Only the probability map is retained for the backward pass; its gradient
    is turned into the logit gradient in place.
    """
    qd, kd, vd = q.data, k.data, v.data
    p = np.matmul(qd, np.swapaxes(kd, -1, -2))
    p *= scale
    _softmax_inplace(p)
    _track(p)
    out = np.matmul(p, vd)

    def backward(g):
        gv = np.matmul(np.swapaxes(p, -1, -2), g) if v.requires_grad else None
        if not (q.requires_grad or k.requires_grad):
            return None, None, gv
        dp = np.matmul(g, np.swapaxes(vd, -1, -2))
        _track(dp)
        dp -= np.einsum("...i,...i->...", dp, p)[..., None]
        dp *= p
        dp *= scale
        gq = np.matmul(dp, kd) if q.requires_grad else None
        gk = np.matmul(np.swapaxes(dp, -1, -2), qd) if k.requires_grad else None
        return gq, gk, gv

    return make_op(out, (q, k, v), backward)


def weighted_sum_w(a_x: Tensor, v: Tensor) -> Tensor:
    """Contract row weights with the value map along W.

    a_x [B, M, N, W], v [B, M, H, W, d] -> z [B, M, H, N, d].
    """
    ad, vd = a_x.data, v.data
    out = np.matmul(ad[:, :, None], vd)

    def backward(g):
        ga = gv = None
        if a_x.requires_grad:
            ga = np.zeros_like(ad)
            for h in range(vd.shape[2]):
                ga += np.matmul(g[:, :, h], np.swapaxes(vd[:, :, h], -1, -2))
        if v.requires_grad:
            gv = np.matmul(np.swapaxes(ad, -1, -2)[:, :, None], g)
        return ga, gv

    return make_op(out, (a_x, v), backward)


def weighted_sum_h(a_y: Tensor, z: Tensor) -> Tensor:
    """Contract column weights with the temporary along H.

    a_y [B, M, N, H], z [B, M, H, N, d] -> out [B, M, N, d].
    """
    ad, zd = a_y.data, z.data
    z_nhd = zd.transpose(0, 1, 3, 2, 4)  # view [B, M, N, H, d]
    out = np.matmul(ad[..., None, :], z_nhd)[..., 0, :]

    def backward(g):
        ga = np.matmul(z_nhd, g[..., None])[..., 0] if a_y.requires_grad else None
        gz = np.multiply(ad.transpose(0, 1, 3, 2)[..., None], g[:, :, None]) if z.requires_grad else None
        return ga, gz

    return make_op(np.ascontiguousarray(out), (a_y, z), backward)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _batch(x: Tensor, unbatched_ndim: int) -> Tensor:
    return x.reshape(1, *x.shape) if x.ndim == unbatched_ndim else x


def split_heads(x: Tensor, heads: int) -> Tensor:
    """[B, N, C] -> [B, M, N, d]."""
    b, n, c = x.shape
    return x.reshape(b, n, heads, c // heads).transpose(0, 2, 1, 3)


def merge_heads(x: Tensor) -> Tensor:
    """[B, M, N, d] -> [B, N, C]."""
    b, m, n, d = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, n, m * d)


def _check_channels(c: int, cfg: AttentionConfig) -> None:
    if c != cfg.channels:
        raise ValueError(f"feature width {c} does not match configured channels {cfg.channels}")


# ---------------------------------------------------------------------------
# attention variants
# ---------------------------------------------------------------------------


def multihead_attention(q_in: Tensor, k_in: Tensor, v_in: Tensor, weights: MHAWeights,
                        cfg: AttentionConfig) -> Tensor:
    """Projected scaled dot-product attention: q_in [B, N, C], k_in/v_in [B, L, C] -> [B, N, C]."""
    q = split_heads(weights.q(q_in), cfg.heads)
    k = split_heads(weights.k(k_in), cfg.heads)
    v = split_heads(weights.v(v_in), cfg.heads)
    return weights.o(merge_heads(scaled_dot_attention(q, k, v, cfg.scale)))


def standard_attention(q_f: Tensor, q_p: Optional[Tensor], fmap: FeatureMap, k_p: Optional[Tensor],
                       weights: MHAWeights, cfg: AttentionConfig) -> Tensor:
    """Cross-attention from queries into a feature map with Q = Q_f + Q_p, K = K_f + K_p, V = V_f.

    ``k_p`` is the [H*W, C] key embedding (see :func:`key_position_embedding`);
    pass ``None`` for either embedding to omit it.
    """
    unbatched = q_f.ndim == 2
    qf = _batch(q_f, 2)
    kf, vf = _batch(fmap.k_f, 3), _batch(fmap.v_f, 3)
    b, h, w, c = kf.shape
    _check_channels(c, cfg)
    q_in = qf if q_p is None else qf + q_p
    k_in = kf.reshape(b, h * w, c)
    if k_p is not None:
        k_in = k_in + k_p
    out = multihead_attention(q_in, k_in, vf.reshape(b, h * w, c), weights, cfg)
    return out.reshape(*out.shape[1:]) if unbatched else out


def _pos_tensor(pos, dtype) -> Tensor:
    return pos if isinstance(pos, Tensor) else Tensor(np.asarray(pos, dtype=dtype))


def rcda(q_f: Tensor, pos_q, fmap: FeatureMap, weights: MHAWeights, cfg: AttentionConfig,
         pos_cfg: Optional[SineEncoderConfig] = None, use_pos: bool = True,
         return_weights: bool = False):
    """Row-column decoupled attention.

    Keys are mean-pooled into a row key [W, C] and a column key [H, C]. Each
    query first attends along the longer axis, producing a temporary that
    keeps the shorter spatial axis, then along the shorter axis. ``pos_q`` holds
    the (x, y) coordinate of every query row, ``[N, 2]`` or ``[B, N, 2]``.

    With ``return_weights`` the result is ``(out, a_x, a_y)`` where the weight
    maps are ``[B, M, N, W]`` and ``[B, M, N, H]`` (after any axis swap).
    """
    unbatched = q_f.ndim == 2
    qf = _batch(q_f, 2)
    kf, vf = _batch(fmap.k_f, 3), _batch(fmap.v_f, 3)
    b, n, c = qf.shape
    _check_channels(c, cfg)
    pq = _pos_tensor(pos_q, qf.dtype)
    if pq.shape[-2] != n or pq.shape[-1] != 2:
        raise ValueError(f"query positions {pq.shape} do not match {n} queries")
    pos_kx, pos_ky = fmap.pos_x, fmap.pos_y

    if fmap.height > fmap.width:
        # attend along the longer axis first so the temporary carries the shorter one
        kf, vf = kf.transpose(0, 2, 1, 3), vf.transpose(0, 2, 1, 3)
        pq = pq[..., [1, 0]]
        pos_kx, pos_ky = pos_ky, pos_kx

    _, h, w, _ = kf.shape
    qx_in, qy_in = qf, qf
    kx_in = mean_pool(kf, "H")  # [B, W, C]
    ky_in = mean_pool(kf, "W")  # [B, H, C]
    if use_pos:
        pc = pos_cfg or SineEncoderConfig(c)
        qx_in = qf + g_1d(pq[..., 0:1], pc)
        qy_in = qf + g_1d(pq[..., 1:2], pc)
        kx_in = kx_in + g_1d(pos_kx, pc, dtype=qf.dtype)
        ky_in = ky_in + g_1d(pos_ky, pc, dtype=qf.dtype)

    m = cfg.heads
    qx = split_heads(weights.q(qx_in), m)
    qy = split_heads(weights.q(qy_in), m)
    kx = split_heads(weights.k(kx_in), m)  # [B, M, W, d]
    ky = split_heads(weights.k(ky_in), m)  # [B, M, H, d]
    v = weights.v(vf).reshape(b, h, w, m, c // m).transpose(0, 3, 1, 2, 4)  # [B, M, H, W, d]

    a_x = attention_probs(qx, kx, cfg.scale)
    z = weighted_sum_w(a_x, v)
    a_y = attention_probs(qy, ky, cfg.scale)
    out = weights.o(merge_heads(weighted_sum_h(a_y, z)))
    if unbatched:
        out = out.reshape(*out.shape[1:])
    return (out, a_x, a_y) if return_weights else out


def efficient_attention_baseline(q: Tensor, k: Tensor, v: Tensor, cfg: AttentionConfig,
                                 weights: Optional[MHAWeights] = None,
                                 return_context: bool = False):
    """Linear-complexity attention: softmax_channels(Q) (softmax_keys(K)^T V) per head.

    ``q`` [N, C] or [B, N, C]; ``k``/``v`` [L, C] or [B, L, C]. The per-head
    context is [d, d] regardless of L.
    """
    unbatched = q.ndim == 2
    q, k, v = _batch(q, 2), _batch(k, 2), _batch(v, 2)
    _check_channels(q.shape[-1], cfg)
    if weights is not None:
        q, k, v = weights.q(q), weights.k(k), weights.v(v)
    qh = softmax(split_heads(q, cfg.heads), axis=-1)
    kh = softmax(split_heads(k, cfg.heads), axis=-2)
    context = kh.swapaxes(-1, -2) @ split_heads(v, cfg.heads)  # [B, M, d, d]
    out = merge_heads(qh @ context)
    if weights is not None:
        out = weights.o(out)
    if unbatched:
        out = out.reshape(*out.shape[1:])
    return (out, context) if return_context else out


# ---------------------------------------------------------------------------
# memory accounting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MemoryReport:
    """Element counts of the dominant attention intermediates.

    ``ratio`` compares the standard weight map with the RCDA temporary Z;
    ``ratio_vs_largest`` compares it with the largest RCDA buffer of any kind.
    """

    n_q: int
    h: int
    w: int
    m: int
    c: int
    std_weight_elems: int
    rcda_ax_elems: int
    rcda_z_elems: int
    rcda_ay_elems: int

    @property
    def rcda_peak_elems(self) -> int:
        return max(self.rcda_ax_elems, self.rcda_z_elems, self.rcda_ay_elems)

    @property
    def ratio(self) -> float:
        return self.std_weight_elems / self.rcda_z_elems

    @property
    def ratio_vs_largest(self) -> float:
        return self.std_weight_elems / self.rcda_peak_elems

    @property
    def efficient_elems(self) -> int:
        """Largest efficient-attention intermediate: the softmaxed query/key maps."""
        d = self.c // self.m
        return max(self.n_q * self.c, self.h * self.w * self.c, self.m * d * d)


def memory_model(n_q: int, h: int, w: int, m: int, c: int) -> MemoryReport:
    if min(n_q, h, w, m, c) <= 0:
        raise ValueError("all dimensions must be positive")
    if h > w:
        h, w = w, h
    return MemoryReport(
        n_q=n_q, h=h, w=w, m=m, c=c,
        std_weight_elems=n_q * h * w * m,
        rcda_ax_elems=n_q * w * m,
        rcda_z_elems=n_q * h * c,
        rcda_ay_elems=n_q * h * m,
    )


def measure_peak_buffers(run: Callable[[], Tensor], backward: bool = True) -> int:
    """Peak live bytes of tensors and gradients created while ``run`` (and its backward) executes.

    Buffers that exist before the call, such as inputs and weights, are not counted.
    """
    with BufferArena() as arena:
        out = run()
        if backward:
            out.sum().backward()
        del out
    return arena.peak


