"""Adam with bias correction and the cosine learning-rate schedule."""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Tensor


def adam_init(params: dict[str, Tensor]) -> dict:
    state = {"t": 0}
    for name, p in params.items():
        state[name] = {"m": np.zeros_like(p.data), "v": np.zeros_like(p.data)}
    return state


def adam_step(params: dict[str, Tensor], state: dict, lr: float = 5e-5,
              beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One in-place Adam update from the gradients stored on the params."""
    state["t"] += 1
    t = state["t"]
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.items():
        if p.grad is None:
            continue
        g = p.grad
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        s = state[name]
        s["m"] = beta1 * s["m"] + (1.0 - beta1) * g
        s["v"] = beta2 * s["v"] + (1.0 - beta2) * g * g
        mhat = s["m"] / bc1
        vhat = s["v"] / bc2
        p.data -= lr * mhat / (np.sqrt(vhat) + eps)


def cosine_lr(base_lr: float, epoch: int, t_max: int) -> float:
    """Cosine decay from base_lr at epoch 0 to 0 at epoch t_max."""
    if t_max <= 0:
        return base_lr
    frac = min(epoch, t_max) / t_max
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * frac))


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None
