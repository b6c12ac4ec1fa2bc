"""Multiple-Pareto-optima bookkeeping: surrogate fronts and the bounded update."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .pareto import ParetoArchive, dominance_matrix, nondominated_indices
from .scalarization import ws_scalarize


@dataclass(frozen=True)
class MpoConfig:
    K: int = 20
    J: int = 200
    mode: str = "archive_preserving"  # or "literal"
    enabled: bool = True              # False: keep only the max-reward solution

    def __post_init__(self):
        if self.K < 0 or self.J < 1:
            raise ValueError("need K >= 0 and J >= 1")
        if self.mode not in ("literal", "archive_preserving"):
            raise ValueError(f"unknown MPO mode {self.mode!r}")


@dataclass
class SurrogateFront:
    """Top-K archive points for the current weight, ascending in the scalarized
    objective, followed by the reference point."""

    points: np.ndarray          # (k, M), without the reference point
    solutions: list
    r: np.ndarray

    @property
    def with_reference(self) -> np.ndarray:
        return np.vstack([self.points, self.r[None, :]])

    def __len__(self):
        return len(self.points) + 1


def select_top_k(archive: ParetoArchive, lam, K: int, r) -> SurrogateFront:
    r = np.asarray(r, dtype=np.float64)
    if len(archive) == 0 or K == 0:
        return SurrogateFront(np.zeros((0, len(r))), [], r)
    g = ws_scalarize(archive.points, lam)
    # archive rows are kept in insertion order, so a stable sort breaks ties by age
    idx = np.argsort(g, kind="stable")[:K]
    return SurrogateFront(archive.points[idx], [archive.solutions[i] for i in idx], r)


def select_top_j(points: np.ndarray, lam, J: int) -> np.ndarray:
    """Indices of the min(J, len) candidates with the smallest scalarized value,
    ties broken by candidate index."""
    points = np.asarray(points, dtype=np.float64)
    if len(points) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.argsort(ws_scalarize(points, lam), kind="stable")[:J]


@dataclass
class UpdateStats:
    comparisons: int = 0   # pairwise comparisons in the admission step
    admitted: int = 0
    duplicates: int = 0


def _dedupe(points: np.ndarray, solutions: list):
    if len(points) == 0:
        return points, solutions
    _, first = np.unique(points, axis=0, return_index=True)
    first = np.sort(first)
    return points[first], [solutions[i] for i in first]


def mpo_update(
    archive: ParetoArchive,
    front: SurrogateFront,
    cand_points: np.ndarray,
    cand_solutions: Sequence[Any] | None = None,
    mode: str = "archive_preserving",
    stats: UpdateStats | None = None,
) -> ParetoArchive:
    """Merge the (already truncated) candidates into the archive, comparing them
    only against the surrogate front and each other.

    ``literal``: the archive becomes the non-dominated part of F~ u G~.
    ``archive_preserving``: survivors of that comparison are inserted into the
    full archive, which keeps every point outside F~.
    The archive is modified in place and returned.
    """
    stats = stats if stats is not None else UpdateStats()
    G = np.asarray(cand_points, dtype=np.float64).reshape(-1, archive.M)
    sols = list(cand_solutions) if cand_solutions is not None else [None] * len(G)
    F = front.points
    if len(F):
        present = (archive.points[None, :, :] == F[:, None, :]).all(-1).any(1) if len(archive) else np.zeros(len(F), bool)
        if not present.all():
            raise ValueError("surrogate front is not a subset of the archive")

    n_before = len(G)
    G, sols = _dedupe(G, sols)
    stats.duplicates += n_before - len(G)

    # admission step: every pair touching a candidate, both directions at once
    union = np.vstack([F, G])
    dom = dominance_matrix(union, G) if len(G) else np.zeros((len(union), 0), bool)
    stats.comparisons += len(G) * len(union)
    equal_to_front = (G[:, None, :] == F[None, :, :]).all(-1).any(1) if len(F) and len(G) else np.zeros(len(G), bool)
    g_ok = ~dom.any(axis=0) & ~equal_to_front
    stats.duplicates += int(equal_to_front.sum())

    if mode == "literal":
        f_dominated = dominance_matrix(G, F).any(axis=0) if len(G) and len(F) else np.zeros(len(F), bool)
        pts = np.vstack([F[~f_dominated], G[g_ok]])
        new_sols = [s for s, d in zip(front.solutions, f_dominated) if not d] + [
            s for s, ok in zip(sols, g_ok) if ok
        ]
        archive.replace(pts, new_sols)
        stats.admitted += int(g_ok.sum())
        return archive
    if mode != "archive_preserving":
        raise ValueError(f"unknown MPO mode {mode!r}")
    for p, s, ok in zip(G, sols, g_ok):
        if ok and archive.insert(p, s) == "accepted":
            stats.admitted += 1
    return archive


def full_update_oracle(archive: ParetoArchive, points: np.ndarray, solutions=None) -> ParetoArchive:
    """Exhaustive non-dominated filter of archive u candidates (reference path)."""
    G = np.asarray(points, dtype=np.float64).reshape(-1, archive.M)
    sols = list(solutions) if solutions is not None else [None] * len(G)
    allp = np.vstack([archive.points, G])
    alls = list(archive.solutions) + sols
    keep = nondominated_indices(allp)
    out = ParetoArchive(archive.M)
    out.replace(allp[keep], [alls[i] for i in keep])
    return out
