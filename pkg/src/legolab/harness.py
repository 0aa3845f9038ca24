"""Training loop, per-variable evaluation, probing classifiers, and
shortcut-onset reporting.

Accuracy is always indexed by chain position (#0 = root-adjacent),
regardless of where each clause lands in the shuffled sentence.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .model import (ModelConfig, classify, encoder_forward, init_params,
                    load_checkpoint, params_digest)
from .optim import adam_init, adam_step, cosine_lr, zero_grads


@dataclass
class TrainConfig:
    model: ModelConfig
    n: int
    n_tr: int
    seed: int = 0
    epochs: int = 200
    batch_size: int = 1000
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t_max: int = 200                     # cosine schedule horizon, in epochs
    group: str = "Z2"
    supervised_positions: list[int] | None = None  # overrides first-n_tr rule
    init: str = "random"                 # "random" or a checkpoint path
    early_stop_accuracy: float | None = None
    eval_batch_size: int = 500
    compute_mode: str = "fast"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not (1 <= self.n_tr <= self.n):
            raise ValueError("n_tr must lie in [1, n]")
        if self.supervised_positions is not None:
            bad = [p for p in self.supervised_positions
                   if not 0 <= p < self.n]
            if bad:
                raise ValueError(f"supervised positions out of range: {bad}")

    def supervised_set(self) -> list[int]:
        if self.supervised_positions is not None:
            return sorted(set(self.supervised_positions))
        return list(range(self.n_tr))


@dataclass
class MetricsTable:
    test_accuracy: np.ndarray            # [epochs_run, n]
    train_loss: list[float]
    probe_grid: np.ndarray | None = None  # [depth, n]
    onsets: list[int | None] | None = None

    @property
    def epochs_run(self) -> int:
        return self.test_accuracy.shape[0]

    def write_metrics_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["epoch", "position", "split", "accuracy"])
            for e, row in enumerate(self.test_accuracy):
                for pos, acc in enumerate(row):
                    w.writerow([e, pos, "test", f"{acc:.6f}"])

    def write_probe_csv(self, path: str | Path) -> None:
        if self.probe_grid is None:
            raise ValueError("no probe grid recorded")
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["layer", "position", "accuracy"])
            for layer, row in enumerate(self.probe_grid):
                for pos, acc in enumerate(row):
                    w.writerow([layer, pos, f"{acc:.6f}"])


def evaluate(config: ModelConfig, params: dict[str, Tensor],
             data: dict[str, np.ndarray],
             batch_size: int = 500) -> np.ndarray:
    """Per-chain-position accuracy over a full split."""
    ids, anchors, labels = data["ids"], data["anchors"], data["labels"]
    n = anchors.shape[1]
    correct = np.zeros(n)
    with ad.no_grad():
        for start in range(0, len(ids), batch_size):
            sl = slice(start, start + batch_size)
            trace = encoder_forward(ids[sl], config, params, mode="eval")
            logits = classify(trace, anchors[sl], params)
            pred = logits.data.argmax(axis=-1)
            correct += (pred == labels[sl]).sum(axis=0)
    return correct / len(ids)


def train(cfg: TrainConfig, train_data: dict[str, np.ndarray],
          test_data: dict[str, np.ndarray],
          params: dict[str, Tensor] | None = None,
          verbose: bool = False) -> tuple[dict[str, Tensor], MetricsTable]:
    """Deterministic training run; returns the parameters and metrics."""
    if train_data["anchors"].shape[1] != cfg.n:
        raise ValueError("dataset chain length does not match config n")
    prev_mode = ad.get_mode()
    ad.set_mode(cfg.compute_mode)
    try:
        rng = np.random.default_rng(cfg.seed)
        if params is None:
            if cfg.init == "random":
                params = init_params(cfg.model, seed=cfg.seed)
            else:
                ckpt_config, params = load_checkpoint(cfg.init)
                if ckpt_config.to_json() != cfg.model.to_json():
                    raise ValueError("checkpoint config mismatch")
                for p in params.values():
                    p.data = p.data.astype(ad.default_dtype())
        else:
            for p in params.values():
                p.data = p.data.astype(ad.default_dtype())
        state = adam_init(params)

        supervised = cfg.supervised_set()
        mask_row = np.zeros(cfg.n, dtype=bool)
        mask_row[supervised] = True

        ids = train_data["ids"]
        anchors = train_data["anchors"]
        labels = train_data["labels"]
        count = len(ids)

        losses, acc_rows = [], []
        for epoch in range(cfg.epochs):
            lr = cosine_lr(cfg.lr, epoch, cfg.t_max)
            order = rng.permutation(count)
            epoch_loss = 0.0
            batches = 0
            for start in range(0, count, cfg.batch_size):
                sel = order[start:start + cfg.batch_size]
                ad.reset_tape()
                zero_grads(params)
                trace = encoder_forward(ids[sel], cfg.model, params,
                                        mode="train", rng=rng)
                logits = classify(trace, anchors[sel], params)
                mask = np.broadcast_to(mask_row, labels[sel].shape)
                loss = ad.cross_entropy(logits, labels[sel], mask)
                ad.backward(loss)
                adam_step(params, state, lr=lr, beta1=cfg.beta1,
                          beta2=cfg.beta2, eps=cfg.eps)
                epoch_loss += loss.item()
                batches += 1
            ad.reset_tape()
            losses.append(epoch_loss / max(batches, 1))
            acc = evaluate(cfg.model, params, test_data,
                           batch_size=cfg.eval_batch_size)
            acc_rows.append(acc)
            if verbose:
                print(f"epoch {epoch}: loss {losses[-1]:.4f} "
                      f"mean acc {acc.mean():.4f}")
            if (cfg.early_stop_accuracy is not None
                    and acc.mean() >= cfg.early_stop_accuracy):
                break
        metrics = MetricsTable(test_accuracy=np.array(acc_rows),
                               train_loss=losses)
        return params, metrics
    finally:
        ad.set_mode(prev_mode)


def _collect_layer_features(config: ModelConfig, params: dict[str, Tensor],
                            data: dict[str, np.ndarray], layer: int,
                            batch_size: int = 500) -> np.ndarray:
    feats = []
    with ad.no_grad():
        for start in range(0, len(data["ids"]), batch_size):
            sl = slice(start, start + batch_size)
            trace = encoder_forward(data["ids"][sl], config, params,
                                    mode="eval")
            h = trace.hidden[layer].data
            idx = data["anchors"][sl][..., None]
            feats.append(np.take_along_axis(h, idx, axis=-2))
    return np.concatenate(feats, axis=0)  # [N, n, d]


def probe(config: ModelConfig, params: dict[str, Tensor],
          train_data: dict[str, np.ndarray],
          test_data: dict[str, np.ndarray],
          num_classes: int, probe_epochs: int = 20, lr: float = 5e-5,
          batch_size: int = 1000, max_train: int = 4000,
          seed: int = 0) -> np.ndarray:
    """Per-layer linear probes on frozen anchor representations.

    Returns a [depth, n] test-accuracy grid; the backbone is untouched
    (verified by content hash).
    """
    digest_before = params_digest(params)
    sub = {k: v[:max_train] for k, v in train_data.items()}
    rng = np.random.default_rng(seed)
    n = train_data["anchors"].shape[1]
    grid = np.zeros((config.depth, n))
    for layer in range(config.depth):
        tr_feats = _collect_layer_features(config, params, sub, layer)
        te_feats = _collect_layer_features(config, params, test_data, layer)
        d = tr_feats.shape[-1]
        x = tr_feats.reshape(-1, d)
        y = sub["labels"].reshape(-1)
        w = ad.parameter(rng.normal(0, 0.02, size=(d, num_classes)))
        b = ad.parameter(np.zeros(num_classes))
        clf = {"w": w, "b": b}
        state = adam_init(clf)
        for _ in range(probe_epochs):
            order = rng.permutation(len(x))
            for start in range(0, len(x), batch_size):
                sel = order[start:start + batch_size]
                ad.reset_tape()
                zero_grads(clf)
                logits = ad.linear(Tensor(x[sel]), w, b)
                loss = ad.cross_entropy(logits, y[sel])
                ad.backward(loss)
                adam_step(clf, state, lr=lr)
        ad.reset_tape()
        pred = (te_feats @ w.data + b.data).argmax(axis=-1)  # [N, n]
        grid[layer] = (pred == test_data["labels"]).mean(axis=0)
    if params_digest(params) != digest_before:
        raise RuntimeError("probing mutated backbone parameters")
    return grid


@dataclass
class OnsetReport:
    onsets: list[int | None]   # first epoch with accuracy above threshold
    threshold: float
    shortcut_flag: bool

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["position", "onset_epoch"])
            for pos, onset in enumerate(self.onsets):
                w.writerow([pos, "" if onset is None else onset])


def shortcut_report(test_accuracy: np.ndarray,
                    threshold: float = 0.9) -> OnsetReport:
    """Onset epoch per position, and whether the last position crosses
    the bar before the median of the interior positions 2..n-2."""
    epochs, n = test_accuracy.shape
    onsets: list[int | None] = []
    for pos in range(n):
        above = np.nonzero(test_accuracy[:, pos] > threshold)[0]
        onsets.append(int(above[0]) if len(above) else None)
    absent = epochs + 1

    def val(pos):
        return absent if onsets[pos] is None else onsets[pos]

    flag = False
    if n >= 4:
        interior = [val(p) for p in range(2, n - 1)]
        flag = val(n - 1) < np.median(interior)
    return OnsetReport(onsets=onsets, threshold=threshold, shortcut_flag=flag)
