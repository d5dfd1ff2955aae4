"""Deterministic training loop, AdamW, and JSON checkpoints."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from ..tensor import NonFiniteError, Tensor
from .config import DetectorConfig
from .losses import set_loss
from .model import AnchorDetector, stack_features
from .scenes import Scene

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "anchordet-checkpoint"
CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


class AdamW:
    """Adam with decoupled weight decay."""

    def __init__(self, params: Sequence[Tensor], lr: float, weight_decay: float = 1e-4,
                 betas=(0.9, 0.999), eps: float = 1e-8, no_decay: Sequence[Tensor] = ()):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        skip = {id(p) for p in no_decay}
        self.decay = [id(p) not in skip for p in self.params]
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, lr: Optional[float] = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, m, v, decay in zip(self.params, self.m, self.v, self.decay):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            if decay:
                p.data *= 1 - lr * self.weight_decay
            p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


def clip_grad_norm(params: Sequence[Tensor], max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params if p.grad is not None))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-6)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * np.asarray(scale, dtype=p.dtype)
    return total


def targets_of(scenes: Sequence[Scene]) -> list[np.ndarray]:
    return [s.targets for s in scenes]


def compute_loss(model: AnchorDetector, scenes: Sequence[Scene]):
    cfg = model.cfg
    preds = model(stack_features(scenes))
    return set_loss(preds, targets_of(scenes), cfg.loss_weights, cfg.match_weights,
                    cfg.focal_alpha, cfg.focal_gamma)


@dataclass
class TrainResult:
    model: AnchorDetector
    log: list[dict] = field(default_factory=list)
    initial_anchors: Optional[np.ndarray] = None

    def checkpoint_bytes(self) -> bytes:
        return checkpoint_to_bytes(self.model)


def train(config: DetectorConfig, scenes: Sequence[Scene], steps: int, seed: int = 0,
          batch_size: Optional[int] = None, log_every: int = 0) -> TrainResult:
    """Full-batch (or cyclic mini-batch) AdamW training; bit-reproducible for a fixed seed."""
    model = AnchorDetector(config, seed=seed)
    anchors0 = model.anchor_positions()
    params = model.parameters()
    no_decay = [model.anchors.positions] if config.query_design == "anchor" else []
    opt = AdamW(params, config.lr, config.weight_decay, no_decay=no_decay)
    drop_at = int(config.lr_drop * steps)
    bs = batch_size or len(scenes)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(scenes))
    history = []
    for step in range(steps):
        start = (step * bs) % len(scenes)
        idx = [order[(start + i) % len(scenes)] for i in range(bs)]
        batch = [scenes[i] for i in idx]
        model.zero_grad()
        try:
            loss = compute_loss(model, batch)
            if not np.isfinite(loss.terms["total"]):
                raise TrainingDiverged(f"non-finite loss at step {step}: {loss.terms}")
            loss.total.backward()
        except NonFiniteError as exc:
            raise TrainingDiverged(f"non-finite values at step {step}: {exc}") from exc
        gnorm = clip_grad_norm(params, config.grad_clip)
        lr = config.lr * (0.1 if step >= drop_at else 1.0)
        opt.step(lr)
        if config.query_design == "anchor" and config.anchor_kind == "learned":
            np.clip(model.anchors.positions.data, 0.0, 1.0, out=model.anchors.positions.data)
        history.append({"step": step, **loss.terms, "grad_norm": gnorm, "lr": lr})
        if log_every and step % log_every == 0:
            log.info("step %d total %.4f focal %.4f l1 %.4f giou %.4f", step, loss.terms["total"],
                     loss.terms["focal"], loss.terms["l1"], loss.terms["giou"])
    return TrainResult(model=model, log=history, initial_anchors=anchors0)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def checkpoint_dict(model: AnchorDetector) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.cfg.to_dict(),
        "params": {
            name: {"shape": list(arr.shape), "dtype": str(arr.dtype),
                   "data": [float(x) for x in arr.reshape(-1)]}
            for name, arr in sorted(model.state_dict().items())
        },
    }


def checkpoint_to_bytes(model: AnchorDetector) -> bytes:
    return json.dumps(checkpoint_dict(model), sort_keys=True, separators=(",", ":")).encode()


def save_checkpoint(path: Union[str, Path], model: AnchorDetector) -> None:
    Path(path).write_bytes(checkpoint_to_bytes(model))


def model_from_checkpoint(ckpt: Union[str, Path, bytes, dict, AnchorDetector]) -> AnchorDetector:
    if isinstance(ckpt, AnchorDetector):
        return ckpt
    if isinstance(ckpt, (str, Path)):
        ckpt = Path(ckpt).read_bytes()
    if isinstance(ckpt, bytes):
        ckpt = json.loads(ckpt)
    if ckpt.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a detector checkpoint")
    if ckpt.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {ckpt.get('version')}")
    model = AnchorDetector(DetectorConfig.from_dict(ckpt["config"]))
    state = {name: np.array(rec["data"], dtype=rec["dtype"]).reshape(rec["shape"])
             for name, rec in ckpt["params"].items()}
    model.load_state_dict(state)
    return model
