"""Sequential subproblem solving and evaluation metrics."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from .env import batch_tensors
from .hga import HGAPolicy, actions_to_solutions, point_tensors, start_nodes
from .mpo import MpoConfig, UpdateStats, select_top_k
from .pareto import ParetoArchive, ReferenceBox, hv_normalized, reference_box
from .problems import Instance, Kind, augment, evaluate_many, from_min, to_min
from .training import Variant, candidate_rewards, fold_candidates


@dataclass
class SolveConfig:
    mpo: MpoConfig = field(default_factory=MpoConfig)
    aug: str = "none"              # none | partial | full
    rollout: str = "greedy"        # greedy | sample
    starts: int | None = None
    seed: int = 0
    variant: Variant = field(default_factory=Variant)


@dataclass
class SolveResult:
    archive: ParetoArchive
    trace: list                    # per subproblem: {"i", "hv", "archive_size"}
    generated: int
    duplicates: int
    time_ms: float
    kind: str
    box: ReferenceBox
    comparisons: list = field(default_factory=list)
    duplicates_across: int = 0     # repeats of a vector seen in an earlier subproblem

    @property
    def duplicates_within(self) -> int:
        """Repeats inside one subproblem's candidate batch (e.g. converging starts)."""
        return self.duplicates - self.duplicates_across

    @property
    def hv(self) -> float:
        return metrics(self.archive, self.box)["hv"]

    @property
    def nds(self) -> int:
        return len(self.archive)

    @property
    def dominated(self) -> int:
        return self.generated - self.duplicates - self.nds

    def natural_points(self) -> np.ndarray:
        return from_min(self.kind, self.archive.points)

    def metrics(self) -> dict:
        return {"hv": self.hv, "nds": self.nds, "ds": self.duplicates, "time_ms": self.time_ms}


def metrics(archive: ParetoArchive | np.ndarray, box: ReferenceBox) -> dict:
    """Normalized HV (points beyond the reference point contribute nothing)
    and the number of non-dominated solutions."""
    pts = archive.points if isinstance(archive, ParetoArchive) else np.asarray(archive, float)
    pts = pts.reshape(-1, len(box.r))
    return {"hv": hv_normalized(pts, box, clip=True), "nds": len(pts)}


def duplicates_count(points) -> int:
    """Number of objective vectors that exactly repeat an earlier one."""
    seen, dup = set(), 0
    for p in np.asarray(points, dtype=np.float64).reshape(len(points), -1):
        key = p.tobytes()
        if key in seen:
            dup += 1
        else:
            seen.add(key)
    return dup


def solve_sequence(model: HGAPolicy, instance: Instance, schedule, config: SolveConfig | None = None,
                   box: ReferenceBox | None = None,
                   submodels: Sequence[HGAPolicy] | None = None) -> SolveResult:
    """Solve the N scalarized subproblems in order, each conditioned on the
    archive built so far.

    ``schedule`` yields (weight, diversity factor) pairs. With ``submodels``
    (fine-tuned meta-model copies), subproblem i uses ``submodels[i]``.
    """
    config = config or SolveConfig()
    box = box or reference_box(instance.kind, instance.n, instance.M)
    variant, mpo = config.variant, config.mpo
    kind = Kind(instance.kind)
    t0 = time.perf_counter()
    variants = [instance] if config.aug == "none" else augment(instance, config.aug)
    V, n, M = len(variants), instance.n, instance.M
    batch = batch_tensors(variants, model.dtype)
    starts = start_nodes(V, n, config.starts)
    gen = torch.Generator().manual_seed(int(config.seed) % (2**63))
    archive = ParetoArchive(M)
    seen: set[bytes] = set()
    generated = duplicates = across = 0
    trace, comparisons = [], []
    cached_emb = None
    schedule = list(schedule)
    if submodels is not None and len(submodels) < len(schedule):
        raise ValueError("need one submodel per preference")
    for i, (lam, w) in enumerate(schedule):
        net = submodels[i] if submodels is not None else model
        lam_i, w_i = variant.weight(lam, M), variant.factor(w)
        front = select_top_k(archive, lam_i, variant.front_size(mpo.K, len(archive)), box.r)
        with torch.no_grad():
            if net.cfg.use_points:
                pts, valid = point_tensors([front.with_reference] * V, box, net.dtype)
                emb = net.encode(batch, pts, valid)
            else:
                if cached_emb is None or submodels is not None:
                    cached_emb = net.encode(batch)
                emb = cached_emb
            dec = net.decoder_params(lam_i, w_i)
            acts, _ = net.rollout(batch, emb, dec, starts, mode=config.rollout, generator=gen)
        sols = [s for row in actions_to_solutions(kind, acts) for s in row]
        F = to_min(kind, evaluate_many(instance, sols))
        generated += len(F)
        batch_keys = set()
        for p in F:
            key = p.tobytes()
            if key in seen or key in batch_keys:
                duplicates += 1
                if key in seen and key not in batch_keys:
                    across += 1
            batch_keys.add(key)
        seen |= batch_keys
        R = candidate_rewards(F, front, lam_i, w_i, box) if not mpo.enabled else None
        stats = UpdateStats()
        fold_candidates(archive, front, F, sols, lam_i, R, mpo, stats)
        comparisons.append(stats.comparisons)
        trace.append({"i": i + 1, "hv": metrics(archive, box)["hv"], "archive_size": len(archive)})
    elapsed = (time.perf_counter() - t0) * 1000
    return SolveResult(archive, trace, generated, duplicates, elapsed, kind.value, box, comparisons, across)


def archive_from_solutions(instance: Instance, solutions: Sequence) -> ParetoArchive:
    archive = ParetoArchive(instance.M)
    F = to_min(instance.kind, evaluate_many(instance, solutions))
    for f, s in zip(F, solutions):
        archive.insert(f, list(s))
    return archive
