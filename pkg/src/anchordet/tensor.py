"""Dense numpy-backed tensors with reverse-mode differentiation.

Every op produces a new :class:`Tensor`; when any input requires a gradient
the op records a closure that maps the output gradient to input gradients.
:meth:`Tensor.backward` walks the recorded graph in reverse topological order.

Intermediate buffers can be accounted with :class:`BufferArena`, which tracks
live bytes of every array that backs a tensor (or a gradient) created while the
arena is active.
"""

from __future__ import annotations

import contextlib
import threading
import weakref
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

ArrayLike = Union[np.ndarray, float, int, Sequence]

_state = threading.local()


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class NonFiniteError(FloatingPointError):
    """Raised when an op produces NaN or Inf."""


class GradContractError(RuntimeError):
    """Raised when backward is called on something other than a scalar."""


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


# ---------------------------------------------------------------------------
# buffer accounting
# ---------------------------------------------------------------------------


class BufferArena:
    """Counts live bytes of tensor data and gradient buffers.

    Only one arena may be active per thread. Only arrays that own their memory
    are counted, so views never count twice; a buffer is released when its
    array is garbage collected.
    """

    def __init__(self):
        self.live = 0
        self.peak = 0
        self._seen: set[int] = set()

    def track(self, arr: np.ndarray) -> None:
        # views share a buffer that is either already tracked or pre-existing
        if arr.base is not None:
            return
        base = arr
        key = id(base)
        if key in self._seen:
            return
        self._seen.add(key)
        self.live += base.nbytes
        if self.live > self.peak:
            self.peak = self.live
        weakref.finalize(base, self._release, key, base.nbytes)

    def _release(self, key: int, nbytes: int) -> None:
        self._seen.discard(key)
        self.live -= nbytes

    def __enter__(self) -> "BufferArena":
        if getattr(_state, "arena", None) is not None:
            raise RuntimeError("a BufferArena is already active on this thread")
        _state.arena = self
        return self

    def __exit__(self, *exc) -> None:
        _state.arena = None


def _track(arr: np.ndarray) -> None:
    arena = getattr(_state, "arena", None)
    if arena is not None:
        arena.track(arr)


# ---------------------------------------------------------------------------
# tensor
# ---------------------------------------------------------------------------


def _as_array(data: ArrayLike, dtype=None) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64 if dtype is None else dtype)
    return arr


class Tensor:
    """An n-dimensional float32/float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype=None, name: Optional[str] = None):
        self.data = _as_array(data, dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{rg})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    # -- method forms -----------------------------------------------------
    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)

    def swapaxes(self, a: int, b: int):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def abs(self):
        return abs_(self)

    # -- differentiation --------------------------------------------------
    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable leaf."""
        if grad is None:
            if self.data.size != 1:
                raise GradContractError(f"backward() needs a scalar output, got shape {self.shape}")
            grad = np.ones_like(self.data)
        _run_backward(self, np.asarray(grad, dtype=self.dtype))


def _wrap(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else np.float64))


def _coerce(a, b) -> tuple[Tensor, Tensor]:
    """Promote python scalars / arrays to tensors of the partner's dtype."""
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    return a, b


def make_op(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    """Wrap an op result; ``backward(g)`` must return one gradient (or None) per parent."""
    if not np.isfinite(data).all():
        raise NonFiniteError(f"non-finite values produced by {getattr(backward, '__qualname__', 'op')}")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._parents = ()
    out._backward = None
    out.requires_grad = False
    _track(data)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _run_backward(root: Tensor, grad: np.ndarray) -> None:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in reversed(node._parents):
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(root): grad}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
                _track(node.grad)
            continue
        parent_grads = node._backward(g)
        del g
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            pg = unbroadcast(np.asarray(pg, dtype=p.dtype), p.shape)
            _track(pg)
            prev = grads.get(id(p))
            grads[id(p)] = pg if prev is None else prev + pg


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------


def _check_broadcast(a: Tensor, b: Tensor, opname: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{opname}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a, b) -> Tensor:
    a, b = _coerce(a, b)
    _check_broadcast(a, b, "add")
    return make_op(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = _coerce(a, b)
    _check_broadcast(a, b, "sub")
    return make_op(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = _coerce(a, b)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data
    return make_op(ad * bd, (a, b), lambda g: (g * bd if a.requires_grad else None,
                                               g * ad if b.requires_grad else None))


def div(a, b) -> Tensor:
    a, b = _coerce(a, b)
    _check_broadcast(a, b, "div")
    ad, bd = a.data, b.data
    out = ad / bd

    def backward(g):
        ga = g / bd if a.requires_grad else None
        gb = -g * out / bd if b.requires_grad else None
        return ga, gb

    return make_op(out, (a, b), backward)


def power(a: Tensor, exponent: float) -> Tensor:
    ad = a.data
    out = ad ** exponent
    return make_op(out, (a,), lambda g: (g * exponent * ad ** (exponent - 1),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return make_op(np.where(mask, a.data, 0).astype(a.dtype), (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(a.dtype)
    return make_op(out, (a,), lambda g: (g * out * (1.0 - out),))


def inverse_sigmoid(a, eps: float = 1e-5) -> Tensor:
    """logit(x) with x clamped into [eps, 1 - eps]; zero gradient where clamped."""
    a = _wrap(a)
    x = a.data
    xc = np.clip(x, eps, 1.0 - eps)
    inside = (x >= eps) & (x <= 1.0 - eps)
    out = np.log(xc / (1.0 - xc))
    return make_op(out.astype(a.dtype), (a,), lambda g: (g * inside / (xc * (1.0 - xc)),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make_op(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    x = a.data
    return make_op(np.log(x), (a,), lambda g: (g / x,))


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)), computed without overflow."""
    x = a.data
    out = np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))
    e = np.exp(-np.abs(x))
    sig = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return make_op(out.astype(a.dtype), (a,), lambda g: (g * sig,))


def sin(a: Tensor) -> Tensor:
    x = a.data
    return make_op(np.sin(x), (a,), lambda g: (g * np.cos(x),))


def cos(a: Tensor) -> Tensor:
    x = a.data
    return make_op(np.cos(x), (a,), lambda g: (-g * np.sin(x),))


def abs_(a: Tensor) -> Tensor:
    x = a.data
    return make_op(np.abs(x), (a,), lambda g: (g * np.sign(x),))


def maximum(a, b) -> Tensor:
    """Elementwise max; ties send the gradient to ``a``."""
    a, b = _coerce(a, b)
    _check_broadcast(a, b, "maximum")
    pick_a = a.data >= b.data
    return make_op(np.maximum(a.data, b.data), (a, b), lambda g: (g * pick_a, g * ~pick_a))


def minimum(a, b) -> Tensor:
    """Elementwise min; ties send the gradient to ``a``."""
    a, b = _coerce(a, b)
    _check_broadcast(a, b, "minimum")
    pick_a = a.data <= b.data
    return make_op(np.minimum(a.data, b.data), (a, b), lambda g: (g * pick_a, g * ~pick_a))


def clamp_min(a: Tensor, lo: float) -> Tensor:
    keep = a.data >= lo
    return make_op(np.maximum(a.data, lo).astype(a.dtype), (a,), lambda g: (g * keep,))


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------


def _norm_axis(axis, ndim: int):
    if axis is None:
        return None
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise np.exceptions.AxisError(ax, ndim)
        out.append(ax % ndim)
    return tuple(out)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    shape = a.shape

    def backward(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape),)

    return make_op(np.asarray(a.data.sum(axis=axes, keepdims=keepdims)), (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    count = a.size if axes is None else int(np.prod([a.shape[i] for i in axes]))
    shape = a.shape

    def backward(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, shape),)

    return make_op(np.asarray(a.data.mean(axis=axes, keepdims=keepdims)), (a,), backward)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {src} into {tuple(shape)}") from None
    return make_op(out, (a,), lambda g: (g.reshape(src),))


def transpose(a: Tensor, axes: Optional[tuple] = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return make_op(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, slice, type(None), type(Ellipsis))) for i in items)


def getitem(a: Tensor, idx) -> Tensor:
    if isinstance(idx, Tensor):
        idx = idx.data.astype(np.intp)
    shape, dtype = a.shape, a.dtype
    basic = _is_basic_index(idx)

    def backward(g):
        full = np.zeros(shape, dtype=dtype)
        if basic:
            full[idx] += g
        else:
            np.add.at(full, idx, g)
        return (full,)

    out = a.data[idx]
    if not basic:
        out = np.ascontiguousarray(out)
    return make_op(out, (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    axis = axis % tensors[0].ndim
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from None
    return make_op(out, tensors, lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    return concat([t.reshape(t.shape[:axis % (t.ndim + 1)] + (1,) + t.shape[axis % (t.ndim + 1):])
                   for t in tensors], axis=axis)


# ---------------------------------------------------------------------------
# linear algebra / normalisation
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes, numpy broadcasting on the rest."""
    a, b = _coerce(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ for shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    try:
        out = np.matmul(ad, bd)
    except ValueError:
        raise ShapeError(f"matmul: batch dimensions of {a.shape} and {b.shape} do not broadcast") from None

    def backward(g):
        ga = np.matmul(g, np.swapaxes(bd, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(ad, -1, -2), g) if b.requires_grad else None
        return ga, gb

    return make_op(out, (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x W^T + b for x [..., in], W [out, in], b [out]."""
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input width {x.shape[-1]} does not match weight shape {weight.shape}")
    xd, wd = x.data, weight.data
    out = np.matmul(xd, wd.T)
    if bias is not None:
        out += bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gx = np.matmul(g, wd) if x.requires_grad else None
        g2 = g.reshape(-1, g.shape[-1])
        gw = np.matmul(g2.T, xd.reshape(-1, xd.shape[-1])) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, (g2.sum(axis=0) if bias.requires_grad else None)

    return make_op(out, parents, backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    axis = _norm_axis(axis, a.ndim)[0]
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    out = np.exp(shifted)
    out /= out.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_op(out, (a,), backward)


def mean_pool(x: Tensor, axis: Union[str, int]) -> Tensor:
    """Average a ``[..., H, W, C]`` map over H (-> ``[..., W, C]``) or W (-> ``[..., H, C]``)."""
    if x.ndim < 3:
        raise ShapeError(f"mean_pool expects a [..., H, W, C] tensor, got shape {x.shape}")
    if isinstance(axis, str):
        try:
            axis = {"H": -3, "W": -2}[axis.upper()]
        except KeyError:
            raise ValueError(f"mean_pool axis must be 'H' or 'W', got {axis!r}") from None
    elif axis not in (-3, -2, x.ndim - 3, x.ndim - 2):
        raise np.exceptions.AxisError(f"mean_pool axis {axis} is not a spatial axis of shape {x.shape}")
    return mean(x, axis=axis)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale and shift."""
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gd = gamma.data
    out = xhat * gd + beta.data
    n = xd.shape[-1]

    def backward(g):
        gx = gh = gb = None
        if x.requires_grad:
            dxhat = g * gd
            gx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        if gamma.requires_grad:
            gh = (g * xhat).reshape(-1, n).sum(axis=0)
        if beta.requires_grad:
            gb = g.reshape(-1, n).sum(axis=0)
        return gx, gh, gb

    return make_op(out.astype(xd.dtype, copy=False), (x, gamma, beta), backward)


# ---------------------------------------------------------------------------
# gradient oracle
# ---------------------------------------------------------------------------


def grad_check(
    f: Callable[..., Tensor],
    inputs: Union[Tensor, Sequence[Tensor]],
    h: float = 1e-6,
    indices: Optional[Iterable[tuple[int, int]]] = None,
) -> float:
    """Max relative error between backprop gradients and central differences.

    ``f`` is called as ``f(*inputs)`` and must return a scalar tensor. Inputs are
    perturbed in place, so ``f`` may also ignore its arguments and read shared
    parameters. ``indices`` restricts the check to ``(input_no, flat_index)``
    pairs; by default every element of every input is checked.
    """
    xs = [inputs] if isinstance(inputs, Tensor) else list(inputs)
    saved = [(x.requires_grad, x.grad) for x in xs]
    for x in xs:
        if not x.data.flags.c_contiguous:
            x.data = np.ascontiguousarray(x.data)
        x.requires_grad = True
        x.grad = None
    try:
        f(*xs).backward()
        analytic = [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in xs]
        if indices is None:
            indices = [(i, j) for i, x in enumerate(xs) for j in range(x.size)]
        worst = 0.0
        with no_grad():
            for i, j in indices:
                flat = xs[i].data.reshape(-1)
                orig = flat[j]
                flat[j] = orig + h
                up = flat[j]
                fp = f(*xs).item()
                flat[j] = orig - h
                down = flat[j]
                fm = f(*xs).item()
                flat[j] = orig
                # divide by the step actually taken after rounding
                num = (fp - fm) / float(up - down)
                ana = float(analytic[i].reshape(-1)[j])
                err = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
                worst = max(worst, err)
        return worst
    finally:
        for x, (rg, gr) in zip(xs, saved):
            x.requires_grad = rg
            x.grad = gr
