"""Non-learned references: exact scalarized knapsack DP, greedy construction,
a single-archive Pareto local search and uniformly random solutions."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .pareto import ParetoArchive
from .problems import Instance, Kind, evaluate, evaluate_many, to_min
from .scalarization import check_weight


def discretize(x, resolution: int) -> np.ndarray:
    # flooring makes every truly feasible subset feasible after scaling too,
    # so the DP optimum bounds the continuous problem from above
    return np.floor(np.asarray(x, dtype=np.float64) * resolution + 1e-9).astype(np.int64)


def ws_dp_knapsack(instance: Instance, lam, resolution: int = 1000) -> tuple[float, list[int]]:
    """Maximize lam . values subject to the discretized capacity.

    Returns (scalarized value, sorted item indices).
    """
    if instance.kind is not Kind.MOKP:
        raise ValueError("ws_dp_knapsack needs a knapsack instance")
    lam = check_weight(lam)
    cap = int(discretize(instance.capacity, resolution))
    if cap <= 0:
        raise ValueError(f"resolution {resolution} rounds the capacity to 0")
    w = discretize(instance.weights, resolution)
    v = instance.values @ lam
    n = instance.n
    best = np.zeros(cap + 1)
    take = np.zeros((n, cap + 1), dtype=bool)
    for i in range(n):
        if w[i] > cap:
            continue
        cand = np.full(cap + 1, -np.inf)
        cand[w[i]:] = best[: cap + 1 - w[i]] + v[i]
        take[i] = cand > best
        best = np.where(take[i], cand, best)
    c, items = cap, []
    for i in range(n - 1, -1, -1):
        if take[i, c]:
            items.append(i)
            c -= w[i]
    items.sort()
    return float(best[cap]), items


def knapsack_feasible_at(instance: Instance, items, resolution: int = 1000) -> bool:
    return int(discretize(instance.weights, resolution)[list(items)].sum()) <= int(
        discretize(instance.capacity, resolution)
    )


def enumerate_knapsack(instance: Instance, lam, resolution: int = 1000) -> float:
    """Brute-force optimum over all 2^n subsets (small n only)."""
    n = instance.n
    if n > 20:
        raise ValueError("enumeration is limited to n <= 20")
    masks = ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(bool)
    w = discretize(instance.weights, resolution)
    ok = masks @ w <= discretize(instance.capacity, resolution)
    vals = masks.astype(np.float64) @ (instance.values @ check_weight(lam))
    return float(vals[ok].max())


def _scalar_edges(instance: Instance, lam) -> np.ndarray:
    c = instance.coords  # (n, M, 2)
    d = np.linalg.norm(c[:, None] - c[None, :], axis=-1)  # (n, n, M)
    return d @ np.asarray(lam, dtype=np.float64)


def greedy_ws_construct(instance: Instance, lam, start: int = 0) -> list[int]:
    lam = check_weight(lam)
    n = instance.n
    if instance.kind is Kind.MOKP:
        dens = (instance.values @ lam) / np.maximum(instance.weights, 1e-12)
        rem, chosen = instance.capacity, []
        for i in np.argsort(-dens, kind="stable"):
            if instance.weights[i] <= rem:
                chosen.append(int(i))
                rem -= instance.weights[i]
        return sorted(chosen)
    if instance.kind is Kind.MOTSP:
        D = _scalar_edges(instance, lam)
        tour, seen = [start], np.zeros(n, bool)
        seen[start] = True
        for _ in range(n - 1):
            d = np.where(seen, np.inf, D[tour[-1]])
            nxt = int(np.argmin(d))
            tour.append(nxt)
            seen[nxt] = True
        return tour
    # CVRP: both objectives are lengths, so the scalarized edge is plain distance
    pos, rem, seq = instance.depot, instance.capacity, []
    seen = np.zeros(n, bool)
    while len(seq) < n:
        fits = ~seen & (instance.demands <= rem)
        if not fits.any():
            pos, rem = instance.depot, instance.capacity
            continue
        d = np.where(fits, np.linalg.norm(instance.coords - pos, axis=1), np.inf)
        nxt = int(np.argmin(d))
        seq.append(nxt)
        seen[nxt] = True
        pos, rem = instance.coords[nxt], rem - instance.demands[nxt]
    return seq


def random_policy(instance: Instance, count: int, seed: int = 0) -> list[list[int]]:
    """``count`` uniformly random feasible solutions. Knapsack subsets are
    built by adding items in random order while they fit."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        perm = rng.permutation(instance.n)
        if instance.kind is Kind.MOKP:
            rem, chosen = instance.capacity, []
            for i in perm:
                if instance.weights[i] <= rem:
                    chosen.append(int(i))
                    rem -= instance.weights[i]
            out.append(sorted(chosen))
        else:
            out.append([int(x) for x in perm])
    return out


def _two_opt(sol: Sequence[int]) -> list[list[int]]:
    s = list(sol)
    n = len(s)
    out = []
    for i in range(n - 1):
        for j in range(i + 2, n if i > 0 else n - 1):
            out.append(s[:i + 1] + s[i + 1 : j + 1][::-1] + s[j + 1 :])
    return out


def _kp_swaps(instance: Instance, sol: Sequence[int]) -> list[list[int]]:
    chosen = set(sol)
    ratio = instance.values.sum(1) / np.maximum(instance.weights, 1e-12)
    order = np.argsort(-ratio, kind="stable")
    out = []
    for i in list(chosen) + [None]:
        base = chosen - {i} if i is not None else set(chosen)
        for j in range(instance.n):
            if j in chosen:
                continue
            new = base | {j}
            rem = instance.capacity - instance.weights[list(new)].sum()
            if rem < 0:
                continue
            for k in order:  # greedy repair
                if k not in new and instance.weights[k] <= rem:
                    new.add(int(k))
                    rem -= instance.weights[k]
            out.append(sorted(int(x) for x in new))
    return out


def neighborhood(instance: Instance, sol) -> list[list[int]]:
    if instance.kind is Kind.MOKP:
        return _kp_swaps(instance, sol)
    return _two_opt(sol)


def pareto_local_search(instance: Instance, seeds: Sequence, iterations: int, seed: int = 0) -> ParetoArchive:
    """Pareto local search over one archive.

    Each iteration explores the full neighbourhood of a random unexplored
    archive member and inserts every neighbour; the loop stops early once
    every member has been explored.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    rng = np.random.default_rng(seed)
    archive = ParetoArchive(instance.M)
    for s in seeds:
        archive.insert(to_min(instance.kind, evaluate(instance, s)), list(s))
    explored: set[int] = set()
    for _ in range(iterations):
        todo = [k for k, i in enumerate(archive.ids) if i not in explored]
        if not todo:
            break
        k = todo[int(rng.integers(len(todo)))]
        explored.add(archive.ids[k])
        nbrs = neighborhood(instance, archive.solutions[k])
        if not nbrs:
            continue
        F = to_min(instance.kind, evaluate_many(instance, nbrs))
        for f, s in zip(F, nbrs):
            archive.insert(f, s)
    return archive
