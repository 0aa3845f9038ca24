"""Hardcoded attention patterns: association, broadcasting, and the
local Gaussian-band manipulation target.

All builders return row-stochastic [T, T] matrices.  Rows that would
otherwise be all-zero fall back to the uniform distribution.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MANIPULATION_FILTER = np.array([1.0, 2.0, 4.0, 2.0, 1.0])

KINDS = ("association", "broadcast_cls", "broadcast_sep",
         "manipulation_target", "mimic_association_target", "learned")


@dataclass
class AttnMap:
    matrix: np.ndarray  # [T, T], rows sum to 1
    kind: str


def row_normalize(matrix: np.ndarray) -> np.ndarray:
    """Divide each row by its sum; all-zero rows become uniform."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if (matrix < 0).any():
        raise ValueError("negative entry in attention pattern")
    sums = matrix.sum(axis=-1, keepdims=True)
    T = matrix.shape[-1]
    out = np.where(sums > 0, matrix / np.where(sums > 0, sums, 1.0), 1.0 / T)
    return out


def build_association(ids) -> AttnMap:
    """Each position attends equally to all positions with the same id
    (the diagonal is included: a token always matches itself)."""
    ids = np.asarray(ids)
    if ids.size == 0:
        raise ValueError("empty id sequence")
    eq = (ids[:, None] == ids[None, :]).astype(np.float64)
    return AttnMap(matrix=row_normalize(eq), kind="association")


def build_broadcast(ids, special_id: int, kind: str = "broadcast_cls") -> AttnMap:
    """Every position attends to the occurrences of special_id."""
    ids = np.asarray(ids)
    if ids.size == 0:
        raise ValueError("empty id sequence")
    hit = (ids == special_id).astype(np.float64)
    mat = np.tile(hit, (ids.size, 1))
    return AttnMap(matrix=row_normalize(mat), kind=kind)


def build_manipulation_target(T: int) -> AttnMap:
    """Banded (1,2,4,2,1) pattern centered on the diagonal, truncated at
    the boundaries and renormalized per row."""
    if T < 1:
        raise ValueError("T must be >= 1")
    mat = np.zeros((T, T))
    half = len(MANIPULATION_FILTER) // 2
    for t in range(T):
        lo = max(0, t - half)
        hi = min(T, t + half + 1)
        mat[t, lo:hi] = MANIPULATION_FILTER[lo - t + half:hi - t + half]
    return AttnMap(matrix=row_normalize(mat), kind="manipulation_target")


def build_mimic_association_target(ids) -> AttnMap:
    """Association pattern with the diagonal excluded; rows with no
    off-diagonal match fall back to uniform."""
    ids = np.asarray(ids)
    if ids.size == 0:
        raise ValueError("empty id sequence")
    eq = (ids[:, None] == ids[None, :]).astype(np.float64)
    np.fill_diagonal(eq, 0.0)
    return AttnMap(matrix=row_normalize(eq), kind="mimic_association_target")


def save_matrix_csv(matrix: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for row in np.asarray(matrix):
            writer.writerow([f"{v:.10g}" for v in row])
