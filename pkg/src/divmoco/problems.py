"""Problem families: bi/tri-objective TSP, bi-objective CVRP and bi-objective knapsack.

Objective vectors returned by :func:`evaluate` are in the problem's natural sense
(lengths are minimized, knapsack values are maximized). Everything downstream of
this module works in minimization space; use :func:`to_min` / :func:`from_min`
to cross the boundary.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class Kind(str, enum.Enum):
    MOTSP = "MOTSP"
    MOCVRP = "MOCVRP"
    MOKP = "MOKP"


class InfeasibleSolution(ValueError):
    pass


# size -> capacity anchors
CVRP_CAPACITY = {20: 30.0, 50: 40.0, 100: 50.0}
KP_CAPACITY = {50: 12.5, 100: 25.0, 200: 25.0}

SQUARE_TRANSFORMS = (
    lambda x, y: (x, y),
    lambda x, y: (1 - x, y),
    lambda x, y: (x, 1 - y),
    lambda x, y: (1 - x, 1 - y),
    lambda x, y: (y, x),
    lambda x, y: (1 - y, x),
    lambda x, y: (y, 1 - x),
    lambda x, y: (1 - y, 1 - x),
)


@dataclass(frozen=True, eq=False)
class Instance:
    """One problem instance.

    MOTSP: ``coords`` has shape (n, M, 2), one 2-D coordinate per objective.
    MOCVRP: ``coords`` has shape (n, 2) for customers, ``depot`` shape (2,),
    integer ``demands`` shape (n,).
    MOKP: ``weights`` shape (n,), ``values`` shape (n, 2).
    """

    kind: Kind
    n: int
    M: int
    capacity: float | None = None
    coords: np.ndarray | None = None
    depot: np.ndarray | None = None
    demands: np.ndarray | None = None
    weights: np.ndarray | None = None
    values: np.ndarray | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        for name in ("coords", "depot", "demands", "weights", "values"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=np.int64 if name == "demands" else np.float64)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        if (self.kind, self.n, self.M, self.capacity, self.seed) != (
            other.kind, other.n, other.M, other.capacity, other.seed
        ):
            return False
        for name in ("coords", "depot", "demands", "weights", "values"):
            a, b = getattr(self, name), getattr(other, name)
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(a, b):
                return False
        return True

    __hash__ = None

    @property
    def sense(self) -> str:
        return "max" if self.kind is Kind.MOKP else "min"

    @property
    def feature_dim(self) -> int:
        """Raw per-node feature width fed to the encoder."""
        if self.kind is Kind.MOTSP:
            return 2 * self.M
        return 3

    def check(self) -> None:
        """Raise ``ValueError`` if any structural invariant is violated."""
        _check_kind_m(self.kind, self.M)
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.kind is Kind.MOTSP:
            _in_unit(self.coords, "coords", (self.n, self.M, 2))
        elif self.kind is Kind.MOCVRP:
            _in_unit(self.coords, "coords", (self.n, 2))
            _in_unit(self.depot, "depot", (2,))
            d = self.demands
            if d is None or d.shape != (self.n,) or d.min() < 1 or d.max() > 9:
                raise ValueError("demands must be n integers in {1..9}")
            if not self.capacity or self.capacity <= d.max():
                raise ValueError("capacity must exceed the largest demand")
        else:
            _in_unit(self.weights, "weights", (self.n,))
            _in_unit(self.values, "values", (self.n, 2))
            if not self.capacity or self.capacity <= self.weights.max():
                raise ValueError("capacity must exceed the largest item weight")


def _in_unit(arr, name, shape):
    if arr is None or arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0 or arr.max() > 1:
        raise ValueError(f"{name} must lie in [0, 1]")


def _check_kind_m(kind: Kind, M: int) -> None:
    if kind is Kind.MOTSP and M not in (2, 3):
        raise ValueError(f"MOTSP supports M in {{2, 3}}, got {M}")
    if kind in (Kind.MOCVRP, Kind.MOKP) and M != 2:
        raise ValueError(f"{kind.value} is bi-objective, got M={M}")


def _interp_anchors(n: int, anchors: dict[int, float]) -> float:
    xs = sorted(anchors)
    return float(np.interp(n, xs, [anchors[x] for x in xs]))


def default_capacity(kind: Kind | str, n: int) -> float | None:
    """Vehicle / knapsack capacity for size ``n``.

    Exact anchor values at the reference sizes, linear interpolation between
    them. CVRP clamps outside [20, 100]; the knapsack grows proportionally
    (n / 4) below 50 items, with a floor that keeps it above any single weight.
    """
    kind = Kind(kind)
    if kind is Kind.MOCVRP:
        return _interp_anchors(n, CVRP_CAPACITY)
    if kind is Kind.MOKP:
        if n < 50:
            return max(n / 4.0, 1.25)
        return _interp_anchors(n, KP_CAPACITY)
    return None


def generate_instance(kind: Kind | str, n: int, M: int, seed: int) -> Instance:
    kind = Kind(kind)
    _check_kind_m(kind, M)
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1)))
    if kind is Kind.MOTSP:
        inst = Instance(kind, n, M, coords=rng.random((n, M, 2)), seed=seed)
    elif kind is Kind.MOCVRP:
        inst = Instance(
            kind, n, M,
            capacity=default_capacity(kind, n),
            depot=rng.random(2),
            coords=rng.random((n, 2)),
            demands=rng.integers(1, 10, size=n),
            seed=seed,
        )
    else:
        inst = Instance(
            kind, n, M,
            capacity=default_capacity(kind, n),
            weights=rng.random(n),
            values=rng.random((n, 2)),
            seed=seed,
        )
    return inst


def generate_dataset(kind, n, M, count, seed) -> list[Instance]:
    seeds = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)
    return [generate_instance(kind, n, M, int(s)) for s in seeds]


# ---------------------------------------------------------------- evaluation


def _stable_sum(x: np.ndarray, axis=-1) -> np.ndarray:
    # summing sorted terms makes the result independent of visiting order,
    # so rotated / reversed tours and reordered routes evaluate bit-identically
    return np.sort(x, axis=axis).sum(axis=axis)


def cvrp_routes(instance: Instance, sequence: Sequence[int]) -> list[list[int]]:
    """Split a giant customer sequence into routes, returning to the depot
    whenever the next customer's demand exceeds the remaining capacity."""
    routes, cur, rem = [], [], instance.capacity
    for c in sequence:
        dem = instance.demands[c]
        if dem > instance.capacity:
            raise InfeasibleSolution(f"customer {c} demand exceeds capacity")
        if dem > rem:
            routes.append(cur)
            cur, rem = [], instance.capacity
        cur.append(int(c))
        rem -= dem
    if cur:
        routes.append(cur)
    return routes


def _check_permutation(sol: np.ndarray, n: int) -> None:
    if sol.ndim != 1 or len(sol) != n:
        raise InfeasibleSolution(f"expected {n} nodes, got {len(sol)}")
    if sol.min() < 0 or sol.max() >= n or len(np.unique(sol)) != n:
        raise InfeasibleSolution("solution is not a permutation of the nodes")


def _route_length(depot, pts) -> float:
    path = np.vstack([depot, pts, depot])
    return float(_stable_sum(np.linalg.norm(np.diff(path, axis=0), axis=1)))


def evaluate(instance: Instance, solution: Sequence[int]) -> np.ndarray:
    """Objective vector of ``solution`` in the natural sense of the problem."""
    sol = np.asarray(solution, dtype=np.int64)
    if instance.kind is Kind.MOTSP:
        _check_permutation(sol, instance.n)
        pts = instance.coords[sol]  # (n, M, 2)
        edges = np.linalg.norm(pts - np.roll(pts, -1, axis=0), axis=-1)  # (n, M)
        return _stable_sum(edges.T)
    if instance.kind is Kind.MOCVRP:
        _check_permutation(sol, instance.n)
        lengths = [
            _route_length(instance.depot, instance.coords[r])
            for r in cvrp_routes(instance, sol)
        ]
        return np.array([float(_stable_sum(np.array(lengths))), max(lengths)])
    # knapsack
    if len(sol) and (sol.min() < 0 or sol.max() >= instance.n):
        raise InfeasibleSolution("item index out of range")
    if len(np.unique(sol)) != len(sol):
        raise InfeasibleSolution("repeated item")
    if _stable_sum(instance.weights[sol]) > instance.capacity + 1e-9:
        raise InfeasibleSolution("selected weight exceeds capacity")
    if len(sol) == 0:
        return np.zeros(2)
    return _stable_sum(instance.values[sol].T)


def evaluate_many(instance: Instance, solutions: Sequence[Sequence[int]]) -> np.ndarray:
    if instance.kind is Kind.MOTSP and len(solutions):
        sols = np.asarray(solutions, dtype=np.int64)
        pts = instance.coords[sols]  # (S, n, M, 2)
        edges = np.linalg.norm(pts - np.roll(pts, -1, axis=1), axis=-1)
        return _stable_sum(np.swapaxes(edges, 1, 2))
    return np.array([evaluate(instance, s) for s in solutions]).reshape(-1, instance.M)


def to_min(kind: Kind | str, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    return -f if Kind(kind) is Kind.MOKP else f


from_min = to_min


# --------------------------------------------------------------- feasibility


def feasible_actions(instance: Instance, partial: Sequence[int]) -> np.ndarray:
    """Boolean mask, True where an action is *masked* (not selectable)."""
    partial = [int(p) for p in partial]
    masked = np.zeros(instance.n, dtype=bool)
    masked[partial] = True
    if instance.kind is Kind.MOTSP:
        return masked
    if instance.kind is Kind.MOCVRP:
        rem = instance.capacity
        for c in partial:
            if instance.demands[c] > rem:
                rem = instance.capacity
            rem -= instance.demands[c]
        out = masked | (instance.demands > rem)
        if out.all() and not masked.all():
            out = masked  # implicit depot return refills the vehicle
        return out
    rem = instance.capacity - (instance.weights[partial].sum() if partial else 0.0)
    return masked | (instance.weights > rem)


# -------------------------------------------------------------- augmentation


def _transform_xy(xy: np.ndarray, t: int) -> np.ndarray:
    x, y = SQUARE_TRANSFORMS[t](xy[..., 0], xy[..., 1])
    return np.stack([x, y], axis=-1)


def augmentation_plan(kind: Kind | str, M: int, mode: str) -> list[tuple[int, ...]]:
    """Per-coordinate-group transform indices for every variant."""
    kind = Kind(kind)
    if kind is Kind.MOKP:
        raise ValueError("knapsack instances have no augmentation")
    groups = M if kind is Kind.MOTSP else 1
    if mode == "none":
        return [(0,) * groups]
    if mode == "full":
        return list(itertools.product(range(8), repeat=groups))
    if mode == "partial":
        first = itertools.product(range(4), repeat=groups)
        last = itertools.product(range(4, 8), repeat=groups)
        return list(first) + list(last)
    raise ValueError(f"unknown augmentation mode {mode!r}")


def augment(instance: Instance, mode: str = "full") -> list[Instance]:
    """Coordinate-symmetric variants of an instance; ``mode`` in none|partial|full."""
    out = []
    for plan in augmentation_plan(instance.kind, instance.M, mode):
        if instance.kind is Kind.MOTSP:
            coords = np.stack(
                [_transform_xy(instance.coords[:, m], t) for m, t in enumerate(plan)], axis=1
            )
            out.append(Instance(instance.kind, instance.n, instance.M, coords=coords,
                                seed=instance.seed, meta={"transform": plan}))
        else:
            t = plan[0]
            out.append(Instance(
                instance.kind, instance.n, instance.M, capacity=instance.capacity,
                coords=_transform_xy(instance.coords, t), depot=_transform_xy(instance.depot, t),
                demands=instance.demands, seed=instance.seed, meta={"transform": plan},
            ))
    return out


# ------------------------------------------------------------------ features


def node_features(instance: Instance) -> np.ndarray:
    """Encoder input per action node: (n, Z)."""
    if instance.kind is Kind.MOTSP:
        return instance.coords.reshape(instance.n, 2 * instance.M)
    if instance.kind is Kind.MOCVRP:
        return np.column_stack([instance.coords, instance.demands / instance.capacity])
    return np.column_stack([instance.weights, instance.values])
