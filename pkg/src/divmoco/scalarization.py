"""Weighted-sum decomposition, weight sets and diversity-factor schedules."""
from __future__ import annotations

import csv
import itertools
import zlib
from dataclasses import dataclass
from math import comb
from pathlib import Path

import numpy as np


def substream(root_seed: int, name: str) -> np.random.Generator:
    """Named, independent random stream derived from one root seed."""
    return np.random.default_rng(
        np.random.SeedSequence([int(root_seed) & (2**64 - 1), zlib.crc32(name.encode())])
    )


def ws_scalarize(f, lam) -> np.ndarray | float:
    """sum_m lam_m * f_m over the last axis. ``f`` must be in minimization sense."""
    f = np.asarray(f, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    if f.shape[-1] != lam.shape[-1]:
        raise ValueError(f"dimension mismatch: f has {f.shape[-1]}, weight has {lam.shape[-1]}")
    out = f @ lam
    return float(out) if np.ndim(out) == 0 else out


def check_weight(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=np.float64)
    if lam.ndim != 1 or np.any(lam < 0) or abs(lam.sum() - 1.0) > 1e-12:
        raise ValueError(f"not a valid weight vector: {lam}")
    return lam


def uniform_weight_set(M: int, H: int) -> np.ndarray:
    """Simplex-lattice weights {k/H : sum k = H}; C(H+M-1, M-1) rows.

    Rows are ordered lexicographically by decreasing first component, so for
    M=2 the set runs from (1, 0) to (0, 1).
    """
    if H < 1:
        raise ValueError("granularity H must be >= 1")
    rows = [
        k for k in itertools.product(range(H, -1, -1), repeat=M - 1) if sum(k) <= H
    ]
    out = np.array([list(k) + [H - sum(k)] for k in rows], dtype=np.float64) / H
    assert len(out) == comb(H + M - 1, M - 1)
    return out


def apply_weight_scaling(weights: np.ndarray, scale) -> np.ndarray:
    """Element-wise rescale then renormalize onto the simplex (non-uniform weights)."""
    w = np.asarray(weights, dtype=np.float64) * np.asarray(scale, dtype=np.float64)
    return w / w.sum(axis=-1, keepdims=True)


def diversity_schedule(N: int) -> np.ndarray:
    """w^i = ((N-i)/(N-1), (i-1)/(N-1)) for i = 1..N."""
    if N < 2:
        raise ValueError("diversity schedule needs N >= 2")
    i = np.arange(1, N + 1, dtype=np.float64)
    return np.column_stack([(N - i) / (N - 1), (i - 1) / (N - 1)])


@dataclass(frozen=True)
class PreferenceSchedule:
    weights: np.ndarray     # (N, M), shuffled
    factors: np.ndarray     # (N, 2), linear from (1,0) to (0,1) in solve order
    shuffle_seed: int | None
    order: np.ndarray       # permutation applied to the uniform set

    def __len__(self):
        return len(self.weights)

    def __iter__(self):
        return iter(zip(self.weights, self.factors))


def default_granularity(M: int) -> int:
    return {2: 39, 3: 19}[M]


def preference_schedule(
    M: int,
    H: int | None = None,
    shuffle_seed: int | None = 0,
    scale=None,
    weights: np.ndarray | None = None,
) -> PreferenceSchedule:
    """Inference schedule: shuffled uniform weights paired, by solve position,
    with the linear diversity schedule. ``shuffle_seed=None`` keeps lattice order."""
    base = uniform_weight_set(M, H or default_granularity(M)) if weights is None else np.asarray(weights, float)
    if scale is not None:
        base = apply_weight_scaling(base, scale)
    N = len(base)
    order = np.arange(N) if shuffle_seed is None else substream(shuffle_seed, "weights").permutation(N)
    factors = diversity_schedule(N) if N >= 2 else np.array([[1.0, 0.0]])
    return PreferenceSchedule(base[order], factors, shuffle_seed, order)


def sample_training_preference(rng: np.random.Generator | int, M: int = 2):
    """One (weight, diversity factor) draw, each flat-Dirichlet on its simplex."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    lam = rng.dirichlet(np.ones(M))
    w = rng.dirichlet(np.ones(2))
    return lam, w


def sample_training_preferences(rng: np.random.Generator, M: int, size: int):
    return rng.dirichlet(np.ones(M), size=size), rng.dirichlet(np.ones(2), size=size)


def save_weights_csv(path: str | Path, weights: np.ndarray) -> None:
    weights = np.atleast_2d(weights)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"lambda{m + 1}" for m in range(weights.shape[1])])
        for row in weights:
            w.writerow([repr(float(x)) for x in row])


def load_weights_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty weight file")
    body = rows[1:] if not _is_number(rows[0][0]) else rows
    try:
        out = np.array([[float(x) for x in r] for r in body if r], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric weight entry ({exc})") from None
    for i, row in enumerate(out):
        if np.any(row < 0) or abs(row.sum() - 1) > 1e-9:
            raise ValueError(f"{path}: row {i + 1} is not on the simplex")
    return out


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True
