"""Batched construction state used by the decoder (torch mirror of
:func:`divmoco.problems.feasible_actions`)."""
from __future__ import annotations

from typing import Sequence

import numpy as np
import torch

from .problems import Instance, Kind, node_features


def batch_tensors(instances: Sequence[Instance], dtype=torch.float64) -> dict:
    """Stack same-kind, same-size instances into encoder/env tensors."""
    first = instances[0]
    if any(i.kind is not first.kind or i.n != first.n or i.M != first.M for i in instances):
        raise ValueError("batched instances must share kind, n and M")
    out = {
        "kind": first.kind,
        "n": first.n,
        "M": first.M,
        "nodes": torch.as_tensor(np.stack([node_features(i) for i in instances]), dtype=dtype),
    }
    if first.kind is Kind.MOCVRP:
        out["depot"] = torch.as_tensor(np.stack([i.depot for i in instances]), dtype=dtype)
        out["demand"] = torch.as_tensor(np.stack([i.demands for i in instances]), dtype=torch.float64)
        out["capacity"] = torch.as_tensor([i.capacity for i in instances], dtype=torch.float64)
    elif first.kind is Kind.MOKP:
        out["demand"] = torch.as_tensor(np.stack([i.weights for i in instances]), dtype=torch.float64)
        out["capacity"] = torch.as_tensor([i.capacity for i in instances], dtype=torch.float64)
    return out


class ConstructionState:
    """Partial solutions for a (B instances) x (S starts) grid.

    ``last`` / ``first`` hold action indices; -1 stands for the depot.
    """

    def __init__(self, batch: dict, S: int):
        self.kind = batch["kind"]
        B, n = batch["nodes"].shape[:2]
        self.B, self.S, self.n = B, S, n
        self.visited = torch.zeros(B, S, n, dtype=torch.bool)
        self.first = torch.full((B, S), -1, dtype=torch.long)
        self.last = torch.full((B, S), -1, dtype=torch.long)
        self.done = torch.zeros(B, S, dtype=torch.bool)
        self.t = 0
        if self.kind in (Kind.MOCVRP, Kind.MOKP):
            self.demand = batch["demand"][:, None, :].expand(B, S, n)
            self.capacity = batch["capacity"][:, None].expand(B, S).clone()
            self.rem = self.capacity.clone()

    def mask(self) -> torch.Tensor:
        """(B, S, n) True where masked."""
        if self.kind is Kind.MOTSP:
            return self.visited.clone()
        return self.visited | (self.demand > self.rem[..., None] + 1e-12)

    def step(self, action: torch.Tensor) -> None:
        live = ~self.done
        a = action.clamp(min=0)
        sel = torch.zeros_like(self.visited).scatter_(-1, a[..., None], True) & live[..., None]
        self.visited |= sel
        self.first = torch.where(live & (self.first < 0), a, self.first)
        self.last = torch.where(live, a, self.last)
        if self.kind in (Kind.MOCVRP, Kind.MOKP):
            used = torch.gather(self.demand, -1, a[..., None]).squeeze(-1)
            self.rem = torch.where(live, self.rem - used, self.rem)
        if self.kind is Kind.MOCVRP:
            stuck = self.mask().all(-1) & ~self.visited.all(-1)
            # implicit return to the depot
            self.rem = torch.where(stuck, self.capacity, self.rem)
            self.last = torch.where(stuck, torch.full_like(self.last, -1), self.last)
        if self.kind is Kind.MOKP:
            self.done = self.mask().all(-1)
        else:
            self.done = self.visited.all(-1)
        self.t += 1

    def remaining_fraction(self) -> torch.Tensor:
        return self.rem / self.capacity
