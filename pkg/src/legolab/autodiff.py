"""Dense-tensor reverse-mode differentiation on numpy arrays.

Two execution modes: "checked" (float64, non-finite values raise) for
tests and gradient audits, and "fast" (float32) for training.  A Tape
records primitive applications in creation order; backward() replays it
in reverse, accumulating gradients additively at fan-out.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

_MODES = {
    "checked": {"dtype": np.float64, "trap": True},
    "fast": {"dtype": np.float32, "trap": False},
}
_mode = dict(_MODES["checked"], name="checked")


def set_mode(name: str) -> None:
    if name not in _MODES:
        raise ValueError(f"unknown mode: {name!r}")
    _mode.update(_MODES[name], name=name)


def get_mode() -> str:
    return _mode["name"]


def default_dtype():
    return _mode["dtype"]


class Tape:
    """Creation-ordered record of primitive outputs."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def record(self, t: "Tensor") -> None:
        t.node = len(self.nodes)
        self.nodes.append(t)


_tape = Tape()


def reset_tape() -> Tape:
    """Start a fresh tape; previously built graphs can no longer backprop."""
    global _tape
    _tape = Tape()
    return _tape


def current_tape() -> Tape:
    return _tape


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node", "_parents",
                 "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=_mode["dtype"])
        self.grad = None
        self.requires_grad = requires_grad
        self.node = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.grad is not None})"

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        return float(self.data)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _check(arr: np.ndarray) -> None:
    if _mode["trap"] and not np.all(np.isfinite(arr)):
        raise FloatingPointError("non-finite value produced")


_grad_enabled = [True]


class no_grad:
    """Context manager disabling graph construction (evaluation paths)."""

    def __enter__(self):
        self._prev = _grad_enabled[0]
        _grad_enabled[0] = False
        return self

    def __exit__(self, *exc):
        _grad_enabled[0] = self._prev
        return False


def _make(data, parents, backward) -> Tensor:
    _check(np.asarray(data))
    out = Tensor(data)
    if _grad_enabled[0] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        _tape.record(out)
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def backward(loss: Tensor) -> None:
    """Populate gradients of every reachable parameter of a scalar loss."""
    if loss.data.ndim != 0:
        raise ValueError("backward root must be a scalar")
    reachable = set()
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in reachable:
            continue
        reachable.add(id(t))
        stack.extend(t._parents)
    loss.grad = np.ones_like(loss.data)
    for t in reversed(_tape.nodes):
        if id(t) in reachable and t._backward is not None and t.grad is not None:
            t._backward(t.grad)


# --- elementwise and shape primitives ---------------------------------------

def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bwd(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))
    return _make(a.data + b.data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bwd(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))
    return _make(a.data - b.data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))
    return _make(a.data * b.data, (a, b), bwd)


def scale(a: Tensor, s: float) -> Tensor:
    def bwd(g):
        _accum(a, g * s)
    return _make(a.data * s, (a,), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape

    def bwd(g):
        _accum(a, g.reshape(old))
    return _make(a.data.reshape(shape), (a,), bwd)


def transpose(a: Tensor, axes) -> Tensor:
    inv = tuple(np.argsort(axes))

    def bwd(g):
        _accum(a, g.transpose(inv))
    return _make(a.data.transpose(axes), (a,), bwd)


def swap_last(a: Tensor) -> Tensor:
    def bwd(g):
        _accum(a, np.swapaxes(g, -1, -2))
    return _make(np.swapaxes(a.data, -1, -2), (a,), bwd)


def concat_last(tensors: list[Tensor]) -> Tensor:
    sizes = [t.shape[-1] for t in tensors]

    def bwd(g):
        offset = 0
        for t, size in zip(tensors, sizes):
            _accum(t, g[..., offset:offset + size])
            offset += size
    return _make(np.concatenate([t.data for t in tensors], axis=-1),
                 tuple(tensors), bwd)


def select_axis1(a: Tensor, index: int) -> Tensor:
    """a[:, index] for a 4-axis tensor (head selection)."""

    def bwd(g):
        da = np.zeros_like(a.data)
        da[:, index] = g
        _accum(a, da)
    return _make(a.data[:, index], (a,), bwd)


def tsum(a: Tensor, axis=None) -> Tensor:
    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.shape).copy())
        else:
            _accum(a, np.broadcast_to(np.expand_dims(g, axis), a.shape).copy())
    return _make(a.data.sum(axis=axis), (a,), bwd)


def tmean(a: Tensor, axis=None) -> Tensor:
    count = a.data.size if axis is None else a.shape[axis]

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g / count, a.shape).copy())
        else:
            _accum(a, np.broadcast_to(np.expand_dims(g, axis) / count,
                                      a.shape).copy())
    return _make(a.data.mean(axis=axis), (a,), bwd)


def tlog(a: Tensor) -> Tensor:
    def bwd(g):
        _accum(a, g / a.data)
    return _make(np.log(a.data), (a,), bwd)


def relu(a: Tensor) -> Tensor:
    def bwd(g):
        _accum(a, g * (a.data > 0))
    return _make(np.maximum(a.data, 0), (a,), bwd)


_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(a: Tensor) -> Tensor:
    phi = 0.5 * (1.0 + erf(a.data / _SQRT2))

    def bwd(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * a.data * a.data)
        _accum(a, g * (phi + a.data * pdf))
    return _make(a.data * phi, (a,), bwd)


# --- linear algebra ----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def bwd(g):
        _accum(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)),
                               a.shape))
        _accum(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g),
                               b.shape))
    return _make(np.matmul(a.data, b.data), (a, b), bwd)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    out = matmul(x, weight)
    if bias is not None:
        out = add(out, bias)
    return out


def softmax_rows(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * p).sum(axis=-1, keepdims=True)
        _accum(x, p * (g - dot))
    return _make(p, (x,), bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor,
               eps: float = 1e-12) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std

    def bwd(g):
        dxhat = g * gain.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        _accum(x, inv_std * (dxhat - m1 - xhat * m2))
        axes = tuple(range(g.ndim - 1))
        _accum(gain, (g * xhat).sum(axis=axes))
        _accum(bias, g.sum(axis=axes))
    return _make(xhat * gain.data + bias.data, (x, gain, bias), bwd)


def depthwise_conv1d(x: Tensor, kernel: Tensor) -> Tensor:
    """Per-channel temporal convolution with "same" zero padding.

    x: [..., T, c], kernel: [k, c] with k odd.
    """
    k, c = kernel.shape
    if k % 2 == 0:
        raise ValueError("kernel size must be odd")
    if x.shape[-1] != c:
        raise ValueError(f"channel mismatch: {x.shape[-1]} vs {c}")
    half = k // 2
    T = x.shape[-2]
    pad = [(0, 0)] * (x.data.ndim - 2) + [(half, half), (0, 0)]
    xp = np.pad(x.data, pad)
    out = np.zeros_like(x.data)
    for j in range(k):
        out += xp[..., j:j + T, :] * kernel.data[j]

    def bwd(g):
        gp = np.pad(g, pad)
        dx = np.zeros_like(x.data)
        dk = np.zeros_like(kernel.data)
        for j in range(k):
            # correlation flips the offset for the input gradient
            dx += gp[..., k - 1 - j:k - 1 - j + T, :] * kernel.data[j]
            patch = xp[..., j:j + T, :] * g
            dk[j] = patch.reshape(-1, c).sum(axis=0)
        _accum(x, dx)
        _accum(kernel, dk)
    return _make(out, (x, kernel), bwd)


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)

    def bwd(g):
        if not weight.requires_grad:
            return
        if weight.grad is None:
            weight.grad = np.zeros_like(weight.data)
        np.add.at(weight.grad, ids, g)
    return _make(weight.data[ids], (weight,), bwd)


def take_positions(x: Tensor, positions: np.ndarray) -> Tensor:
    """Gather x[b, positions[b, i], :] -> [B, n, d]."""
    positions = np.asarray(positions)
    if positions.max(initial=0) >= x.shape[-2]:
        raise ValueError("position out of range")
    idx = positions[..., None]
    out_data = np.take_along_axis(x.data, idx, axis=-2)

    def bwd(g):
        dx = np.zeros_like(x.data)
        np.put_along_axis(dx, idx, g, axis=-2)
        # put_along_axis overwrites on duplicate positions; anchors are
        # distinct within a sequence so overwrite equals scatter-add
        _accum(x, dx)
    return _make(out_data, (x,), bwd)


def cross_entropy(logits: Tensor, labels: np.ndarray,
                  mask: np.ndarray | None = None) -> Tensor:
    """Mean negative log-softmax over masked positions.

    logits: [..., C]; labels: integer array of the leading shape; mask:
    boolean array of the leading shape selecting supervised positions.
    """
    labels = np.asarray(labels)
    if mask is None:
        mask = np.ones(labels.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("cross_entropy mask selects no positions")
    z = logits.data
    zmax = z.max(axis=-1, keepdims=True)
    lse = zmax[..., 0] + np.log(np.exp(z - zmax).sum(axis=-1))
    picked = np.take_along_axis(z, labels[..., None], axis=-1)[..., 0]
    loss = ((lse - picked) * mask).sum() / count

    def bwd(g):
        p = np.exp(z - zmax)
        p /= p.sum(axis=-1, keepdims=True)
        onehot = np.zeros_like(z)
        np.put_along_axis(onehot, labels[..., None], 1.0, axis=-1)
        _accum(logits, (p - onehot) * mask[..., None] * (g / count))
    return _make(loss, (logits,), bwd)
