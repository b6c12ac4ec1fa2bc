"""Pareto dominance, non-dominated archives and hypervolume.

All vectors here are in minimization sense.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from numba import njit

from .problems import Kind


def dominates(a, b) -> bool:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return bool(np.all(a <= b) and np.any(a < b))


def dominance_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``out[i, j]`` is True iff ``A[i]`` dominates ``B[j]``."""
    A = np.asarray(A, dtype=np.float64)[:, None, :]
    B = np.asarray(B, dtype=np.float64)[None, :, :]
    return np.all(A <= B, axis=-1) & np.any(A < B, axis=-1)


def nondominated_indices(points: np.ndarray) -> np.ndarray:
    """Indices of non-dominated points; among exact duplicates the first is kept."""
    P = np.asarray(points, dtype=np.float64)
    if len(P) == 0:
        return np.zeros(0, dtype=np.int64)
    _, first = np.unique(P, axis=0, return_index=True)
    first = np.sort(first)
    U = P[first]
    keep = ~dominance_matrix(U, U).any(axis=0)
    return first[keep]


def nondominated_filter(points) -> np.ndarray:
    P = np.asarray(points, dtype=np.float64)
    if P.ndim == 1:
        P = P.reshape(0, 0) if P.size == 0 else P[None, :]
    return P[nondominated_indices(P)]


# ---------------------------------------------------------------- hypervolume


def _prepare(points, r, clip: bool) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    P = np.asarray(points, dtype=np.float64).reshape(-1, len(r))
    if len(r) > 3:
        raise ValueError("exact hypervolume is implemented for M <= 3")
    inside = np.all(P < r, axis=1)
    if not inside.all():
        if not clip:
            bad = P[~inside][0]
            raise ValueError(f"point {bad} does not strictly dominate reference {r}")
        P = P[inside]
    return nondominated_filter(P) if len(P) else P


def _hv2d(P: np.ndarray, r: np.ndarray) -> float:
    # P mutually non-dominated: sorted by f1 ascending means f2 descending
    P = P[np.argsort(P[:, 0], kind="stable")]
    widths = np.diff(np.append(P[:, 0], r[0]))
    return float(np.sum(widths * (r[1] - P[:, 1])))


def _hv3d(P: np.ndarray, r: np.ndarray) -> float:
    # sweep along f3: each slab [z_k, z_{k+1}) is covered by the 2-D front of
    # every point with f3 <= z_k
    P = P[np.argsort(P[:, 2], kind="stable")]
    zs = np.append(P[:, 2], r[2])
    total = 0.0
    for k in range(len(P)):
        depth = zs[k + 1] - zs[k]
        if depth <= 0:
            continue
        total += depth * _hv2d(nondominated_filter(P[: k + 1, :2]), r[:2])
    return total


def hv_exact(points, r, clip: bool = False) -> float:
    """Lebesgue measure of the union of boxes [f, r].

    With ``clip=True`` points that fail to strictly dominate ``r`` contribute
    nothing instead of raising.
    """
    r = np.asarray(r, dtype=np.float64)
    P = _prepare(points, r, clip)
    if len(P) == 0:
        return 0.0
    if len(r) == 1:
        return float(r[0] - P[:, 0].min())
    if len(r) == 2:
        return _hv2d(P, r)
    return _hv3d(P, r)


@dataclass(frozen=True)
class ReferenceBox:
    """Reference point ``r`` (worse than every point) and ideal point ``z``
    (better than every point), both in minimization sense."""

    r: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=np.float64)
        z = np.asarray(self.z, dtype=np.float64)
        if r.shape != z.shape:
            raise ValueError("reference and ideal point differ in dimension")
        if np.any(r <= z):
            raise ValueError(f"degenerate reference box r={r}, z={z}")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "z", z)

    @property
    def volume(self) -> float:
        return float(np.prod(np.abs(self.r - self.z)))

    def normalize(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.z) / (self.r - self.z)


def hv_normalized(points, box: ReferenceBox, clip: bool = False) -> float:
    """HV divided by the box volume; in [0, 1] when every point lies in the box."""
    P = np.asarray(points, dtype=np.float64).reshape(-1, len(box.r))
    if len(P) and np.any(P <= box.z):
        raise ValueError("point is not strictly worse than the ideal point")
    return hv_exact(P, box.r, clip=clip) / box.volume


_CELLS = 1024  # bucket table resolution for the sample lookups


@njit(cache=True)
def _buckets(a, n, lo, w):
    # out[c] = number of entries of the sorted a[:n] that are <= lo + w * c / _CELLS
    out = np.empty(_CELLS, dtype=np.int64)
    j = 0
    for c in range(_CELLS):
        x = lo + w * (c / _CELLS)
        while j < n and a[j] <= x:
            j += 1
        out[c] = j
    return out


@njit(cache=True, inline="always")
def _upper(a, n, table, u, x):
    # number of entries of the sorted a[:n] that are <= x, where x = lo + w * u;
    # the table gives a lower bound, the loop finishes within one cell
    j = table[int(u * _CELLS)]
    while j < n and a[j] <= x:
        j += 1
    return j


@njit(cache=True)
def _count_dominated(P, U, lo, hi):
    """Number of samples lo + (hi - lo) * U[t] weakly dominated by some row
    of P (P sorted by its first column, U in [0, 1))."""
    k, m = P.shape
    w = hi - lo
    hits = 0
    xs = P[:, 0].copy()
    tx = _buckets(xs, k, lo[0], w[0])
    if m == 2:
        # s is dominated iff the smallest second objective among points with
        # P[:, 0] <= s[0] is <= s[1]
        pref = np.empty(k)
        run = np.inf
        for i in range(k):
            run = min(run, P[i, 1])
            pref[i] = run
        for t in range(U.shape[0]):
            j = _upper(xs, k, tx, U[t, 0], lo[0] + w[0] * U[t, 0])
            if j > 0 and pref[j - 1] <= lo[1] + w[1] * U[t, 1]:
                hits += 1
        return hits
    if m == 3:
        # for each x-prefix, its points sorted by the second objective with a
        # running minimum of the third
        Y = np.full((k, k), np.inf)
        Z = np.full((k, k), np.inf)
        TY = np.empty((k, _CELLS), dtype=np.int64)
        for j in range(k):
            order = np.argsort(P[: j + 1, 1])
            run = np.inf
            for q in range(j + 1):
                Y[j, q] = P[order[q], 1]
                run = min(run, P[order[q], 2])
                Z[j, q] = run
            TY[j] = _buckets(Y[j], j + 1, lo[1], w[1])
        for t in range(U.shape[0]):
            j = _upper(xs, k, tx, U[t, 0], lo[0] + w[0] * U[t, 0])
            if j == 0:
                continue
            q = _upper(Y[j - 1], j, TY[j - 1], U[t, 1], lo[1] + w[1] * U[t, 1])
            if q > 0 and Z[j - 1, q - 1] <= lo[2] + w[2] * U[t, 2]:
                hits += 1
        return hits
    s = np.empty(m)
    for t in range(U.shape[0]):
        for d in range(m):
            s[d] = lo[d] + w[d] * U[t, d]
        for i in range(k):
            if P[i, 0] > s[0]:
                break
            ok = True
            for d in range(1, m):
                if P[i, d] > s[d]:
                    ok = False
                    break
            if ok:
                hits += 1
                break
    return hits


def hv_monte_carlo(points, box: ReferenceBox, samples: int = 1_000_000, seed: int = 0):
    """Uniform-sampling estimate of the hypervolume inside ``box``.

    Returns ``(estimate, stderr)``. Independent of :func:`hv_exact`.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    P = np.asarray(points, dtype=np.float64).reshape(-1, len(box.r))
    if len(P) == 0:
        return 0.0, 0.0
    P = np.ascontiguousarray(P[np.argsort(P[:, 0], kind="stable")])
    rng = np.random.default_rng(seed)
    hits, left = 0, int(samples)
    while left:
        size = min(left, 1 << 18)
        hits += _count_dominated(P, rng.random((size, P.shape[1])), box.z, box.r)
        left -= size
    p = hits / samples
    vol = box.volume
    return p * vol, vol * np.sqrt(p * (1 - p) / samples)


# ------------------------------------------------------------- reference box

PAPER_BOXES: dict[tuple[str, int, int], tuple[tuple, tuple]] = {
    ("MOTSP", 2, 20): ((20, 20), (0, 0)),
    ("MOTSP", 2, 50): ((35, 35), (0, 0)),
    ("MOTSP", 2, 100): ((65, 65), (0, 0)),
    ("MOTSP", 2, 150): ((85, 85), (0, 0)),
    ("MOTSP", 2, 200): ((115, 115), (0, 0)),
    ("MOCVRP", 2, 20): ((30, 4), (0, 0)),
    ("MOCVRP", 2, 50): ((45, 4), (0, 0)),
    ("MOCVRP", 2, 100): ((80, 4), (0, 0)),
    # knapsack boxes are in maximization sense: r below, z above every point
    ("MOKP", 2, 50): ((5, 5), (30, 30)),
    ("MOKP", 2, 100): ((20, 20), (50, 50)),
    ("MOKP", 2, 200): ((30, 30), (75, 75)),
    ("MOTSP", 3, 20): ((20, 20, 20), (0, 0, 0)),
    ("MOTSP", 3, 50): ((35, 35, 35), (0, 0, 0)),
    ("MOTSP", 3, 100): ((65, 65, 65), (0, 0, 0)),
}


def _anchored(n: int, anchors: dict[int, float]) -> float:
    xs = sorted(anchors)
    ys = [anchors[x] for x in xs]
    if n < xs[0]:  # extend the first segment downwards
        slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
        return ys[0] - slope * (xs[0] - n)
    return float(np.interp(n, xs, ys))


def reference_box(kind: Kind | str, n: int, M: int = 2) -> ReferenceBox:
    """Reference/ideal points for a problem size, in minimization sense.

    The reference sizes use the published table verbatim; other sizes are
    interpolated linearly between table rows (extrapolating the first segment
    below the smallest size). Small knapsacks scale the reference point
    proportionally and use n as the ideal value, which no solution can beat.
    """
    kind = Kind(kind)
    key = (kind.value, M, n)
    if key in PAPER_BOXES:
        r, z = (np.array(v, dtype=np.float64) for v in PAPER_BOXES[key])
    else:
        rows = {s: v for (k, m, s), v in PAPER_BOXES.items() if k == kind.value and m == M}
        if not rows:
            raise ValueError(f"no reference box for {kind.value} with M={M}")
        if kind is Kind.MOKP and n < min(rows):
            s0 = min(rows)
            r = np.array(rows[s0][0], float) * n / s0
            z = np.full(M, float(n))  # values are at most 1, so n bounds every objective
        else:
            r = np.array([_anchored(n, {s: v[0][m] for s, v in rows.items()}) for m in range(M)])
            z = np.array([_anchored(n, {s: v[1][m] for s, v in rows.items()}) for m in range(M)])
    if kind is Kind.MOKP:
        r, z = -r, -z
    return ReferenceBox(r, z)


# -------------------------------------------------------------------- archive


class InsertResult(str, enum.Enum):
    ACCEPTED = "accepted"
    DOMINATED = "dominated"
    DUPLICATE = "duplicate"


@dataclass
class ParetoArchive:
    """Mutually non-dominated (objective vector, solution) pairs."""

    M: int
    _F: np.ndarray = field(default=None, repr=False)
    solutions: list = field(default_factory=list, repr=False)
    ids: list = field(default_factory=list, repr=False)
    counter: int = 0

    def __post_init__(self):
        if self._F is None:
            self._F = np.zeros((0, self.M))

    def __len__(self):
        return len(self._F)

    @property
    def points(self) -> np.ndarray:
        return self._F

    def copy(self) -> "ParetoArchive":
        return ParetoArchive(self.M, self._F.copy(), list(self.solutions), list(self.ids), self.counter)

    def insert(self, point, solution: Any = None) -> InsertResult:
        p = np.asarray(point, dtype=np.float64)
        if p.shape != (self.M,):
            raise ValueError(f"expected a {self.M}-vector, got shape {p.shape}")
        F = self._F
        if len(F):
            if np.any(np.all(F == p, axis=1)):
                return InsertResult.DUPLICATE
            if np.any(np.all(F <= p, axis=1) & np.any(F < p, axis=1)):
                return InsertResult.DOMINATED
            keep = ~(np.all(p <= F, axis=1) & np.any(p < F, axis=1))
            if not keep.all():
                self._F = F[keep]
                self.solutions = [s for s, k in zip(self.solutions, keep) if k]
                self.ids = [i for i, k in zip(self.ids, keep) if k]
        self._F = np.vstack([self._F, p[None, :]])
        self.solutions.append(solution)
        self.ids.append(self.counter)
        self.counter += 1
        return InsertResult.ACCEPTED

    def replace(self, points: np.ndarray, solutions: list) -> None:
        """Overwrite contents with an already non-dominated set."""
        self._F = np.asarray(points, dtype=np.float64).reshape(-1, self.M)
        self.solutions = list(solutions)
        self.ids = list(range(self.counter, self.counter + len(self.solutions)))
        self.counter += len(self.solutions)

    def check(self) -> None:
        F = self._F
        if len(np.unique(F, axis=0)) != len(F):
            raise AssertionError("archive holds duplicate vectors")
        if dominance_matrix(F, F).any():
            raise AssertionError("archive holds a dominated vector")


def archive_insert(archive: ParetoArchive, point, solution=None) -> InsertResult:
    return archive.insert(point, solution)


def encode_solution(sol) -> str:
    return " ".join(str(int(x)) for x in np.asarray(sol).ravel())


def decode_solution(text: str) -> list[int]:
    return [int(x) for x in text.split()] if text.strip() else []


def save_front_csv(path: str | Path, points: np.ndarray, solutions: Sequence | None = None) -> None:
    """Front as CSV: f1..fM plus a ``solution`` column (space-separated indices).
    Points are written as given; convert to the natural sense before calling."""
    points = np.asarray(points, dtype=np.float64)
    M = points.shape[1] if points.ndim == 2 else 0
    solutions = solutions if solutions is not None else [None] * len(points)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{m + 1}" for m in range(M)] + ["solution"])
        for p, s in zip(points, solutions):
            w.writerow([repr(float(x)) for x in p] + ["" if s is None else encode_solution(s)])


def load_front_csv(path: str | Path) -> tuple[np.ndarray, list]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty front file")
    header = rows[0]
    obj_cols = [i for i, h in enumerate(header) if h.startswith("f") and h[1:].isdigit()]
    if not obj_cols:
        raise ValueError(f"{path}: header has no f1..fM columns")
    sol_col = header.index("solution") if "solution" in header else None
    pts, sols = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            pts.append([float(row[i]) for i in obj_cols])
        except (ValueError, IndexError):
            raise ValueError(f"{path}:{lineno}: malformed objective value") from None
        sols.append(decode_solution(row[sol_col]) if sol_col is not None and sol_col < len(row) else None)
    return np.array(pts, dtype=np.float64).reshape(-1, len(obj_cols)), sols
