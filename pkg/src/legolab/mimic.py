"""Mimicking initialization: train designated attention heads to match
the manipulation band and the zero-diagonal association pattern via a
row-wise KL objective on uniformly random token sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .attention_maps import (build_manipulation_target,
                             build_mimic_association_target)
from .autodiff import Tensor
from .model import ModelConfig, encoder_forward
from .optim import adam_init, adam_step, zero_grads

TARGET_FLOOR = 1e-8

DEFAULT_STEPS = 2000
DEFAULT_BATCH = 32
DEFAULT_LR = 1e-4


@dataclass
class MimicPlan:
    head_pairs: list[tuple[int, int]]  # (manipulation head, association head) per layer
    seq_len: int
    steps: int = DEFAULT_STEPS
    batch_size: int = DEFAULT_BATCH
    lr: float = DEFAULT_LR

    def __post_init__(self):
        for hm, ha in self.head_pairs:
            if hm == ha:
                raise ValueError("designated heads must be distinct")

    @classmethod
    def default(cls, config: ModelConfig, seq_len: int, **kw) -> "MimicPlan":
        if config.heads < 2:
            raise ValueError("mimicking needs at least two heads")
        return cls(head_pairs=[(0, 1)] * config.depth, seq_len=seq_len, **kw)

    @classmethod
    def random(cls, config: ModelConfig, seq_len: int,
               rng: np.random.Generator, **kw) -> "MimicPlan":
        pairs = []
        for _ in range(config.depth):
            hm, ha = rng.choice(config.heads, size=2, replace=False)
            pairs.append((int(hm), int(ha)))
        return cls(head_pairs=pairs, seq_len=seq_len, **kw)


def _floored(target: np.ndarray) -> np.ndarray:
    q = np.maximum(target, TARGET_FLOOR)
    return q / q.sum(axis=-1, keepdims=True)


def _kl_rows(p: Tensor, log_q: np.ndarray) -> Tensor:
    """Row-wise KL(p || q) summed over the last axis; q is constant."""
    pf = np.maximum(p.data, 1e-30)
    terms = p.data * (np.log(pf) - log_q)

    def bwd(g):
        ad._accum(p, g[..., None] * (np.log(pf) - log_q + 1.0))
    return ad._make(terms.sum(axis=-1), (p,), bwd)


def mimic_loss(config: ModelConfig, params: dict[str, Tensor],
               ids: np.ndarray, plan: MimicPlan) -> Tensor:
    """Mean over the batch of the per-layer designated-head KL terms."""
    ids = np.atleast_2d(np.asarray(ids))
    B, T = ids.shape
    manip = _floored(build_manipulation_target(T).matrix)
    log_manip = np.log(manip)
    log_assoc = np.log(np.stack([
        _floored(build_mimic_association_target(row).matrix) for row in ids]))

    trace = encoder_forward(ids, config, params, mode="eval")
    if len(trace.attention) != len(plan.head_pairs):
        raise ValueError("plan depth does not match executed depth")
    total = None
    for l, (hm, ha) in enumerate(plan.head_pairs):
        heads = trace.attention[l]["heads"]
        if heads is None:
            raise ValueError("variant exposes no trainable attention heads")
        kl_m = _kl_rows(ad.select_axis1(heads, hm), log_manip)   # [B, T]
        kl_a = _kl_rows(ad.select_axis1(heads, ha), log_assoc)   # [B, T]
        layer_term = ad.add(ad.tmean(kl_m, axis=-1), ad.tmean(kl_a, axis=-1))
        total = layer_term if total is None else ad.add(total, layer_term)
    return ad.tmean(total)


def _random_ids(rng: np.random.Generator, batch: int, T: int,
                vocab_size: int) -> np.ndarray:
    return rng.integers(0, vocab_size, size=(batch, T))


def mimic_train(config: ModelConfig, params: dict[str, Tensor],
                plan: MimicPlan, rng: np.random.Generator,
                log_every: int = 0) -> list[float]:
    """Adam on the mimicking loss over fresh random sequences.

    Returns the per-step loss trajectory.  Non-convergence within the
    step budget is reported by the caller inspecting the trajectory, not
    raised.
    """
    state = adam_init(params)
    history = []
    for step in range(plan.steps):
        ids = _random_ids(rng, plan.batch_size, plan.seq_len, config.vocab_size)
        ad.reset_tape()
        zero_grads(params)
        loss = mimic_loss(config, params, ids, plan)
        ad.backward(loss)
        adam_step(params, state, lr=plan.lr)
        history.append(loss.item())
        if log_every and (step + 1) % log_every == 0:
            print(f"mimic step {step + 1}: loss {history[-1]:.4f}")
    ad.reset_tape()
    return history


def mimic_eval(config: ModelConfig, params: dict[str, Tensor],
               plan: MimicPlan, rng: np.random.Generator,
               batches: int = 8) -> float:
    """Mean mimic loss on held-out random sequences."""
    losses = []
    for _ in range(batches):
        ids = _random_ids(rng, plan.batch_size, plan.seq_len, config.vocab_size)
        ad.reset_tape()
        losses.append(mimic_loss(config, params, ids, plan).item())
    ad.reset_tape()
    return float(np.mean(losses))
