"""Heterogeneous graph attention policy.

Two graphs are embedded jointly: the instance's node graph and the point graph
made of the surrogate front plus the reference point. Each encoder layer uses
node-to-node, node-to-point and point-to-node attention (point-to-point is an
optional ablation). The decoder's parameters are either produced by a
hypernetwork from (weight, diversity factor) or trained directly.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .env import ConstructionState, batch_tensors
from .pareto import ReferenceBox
from .problems import Instance, Kind

DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass
class ModelConfig:
    kind: str = "MOTSP"
    M: int = 2
    d: int = 16
    L: int = 2
    Y: int = 2
    C: float = 10.0
    ff_hidden: int = 64
    hyper_hidden: int = 64
    conditioning: str = "hypernet"   # "hypernet" (NHDE-P) or "direct" (NHDE-M)
    use_points: bool = True          # False drops the point graph entirely
    node_to_point: bool = True
    point_to_node: bool = True
    point_to_point: bool = False
    norm: str = "instance"           # "instance", "batch" or "auto"
    dtype: str = "float64"

    def __post_init__(self):
        self.kind = Kind(self.kind).value
        if self.d % self.Y:
            raise ValueError(f"d={self.d} is not divisible by Y={self.Y}")
        if self.conditioning not in ("hypernet", "direct"):
            raise ValueError(f"unknown conditioning {self.conditioning!r}")
        if self.norm not in ("instance", "batch", "auto"):
            raise ValueError(f"unknown norm {self.norm!r}")

    @classmethod
    def paper(cls, **kw) -> "ModelConfig":
        return cls(**{"d": 128, "L": 6, "Y": 8, "ff_hidden": 512, "hyper_hidden": 256, **kw})

    @property
    def feature_dim(self) -> int:
        return 2 * self.M if self.kind == "MOTSP" else 3

    @property
    def context_dim(self) -> int:
        return {"MOTSP": 3 * self.d, "MOCVRP": 2 * self.d + 1, "MOKP": self.d + 1}[self.kind]

    def decoder_shapes(self) -> dict[str, tuple[int, int]]:
        d = self.d
        shapes = {"Wq_c": (d, self.context_dim), "Wk_h": (d, d), "Wv_h": (d, d)}
        if self.use_points:
            shapes.update({"Wk_g": (d, d), "Wv_g": (d, d)})
        shapes.update({"Wo": (d, d), "Wk": (d, d)})
        return shapes

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


class Norm(nn.Module):
    """Feature normalization with learnable affine, ignoring padded rows."""

    def __init__(self, d: int, mode: str, eps: float = 1e-5):
        super().__init__()
        self.mode, self.eps = mode, eps
        self.weight = nn.Parameter(torch.ones(d))
        self.bias = nn.Parameter(torch.zeros(d))

    def forward(self, x, valid=None):
        w = torch.ones_like(x[..., :1]) if valid is None else valid[..., None].to(x.dtype)
        mode = self.mode
        if mode == "auto":
            mode = "batch" if x.shape[0] >= 8 else "instance"
        dims = (1,) if mode == "instance" else (0, 1)
        cnt = w.sum(dim=dims, keepdim=True).clamp(min=1)
        mean = (x * w).sum(dim=dims, keepdim=True) / cnt
        var = (((x - mean) ** 2) * w).sum(dim=dims, keepdim=True) / cnt
        return (x - mean) / torch.sqrt(var + self.eps) * self.weight + self.bias


class FeedForward(nn.Sequential):
    def __init__(self, d, hidden):
        super().__init__(nn.Linear(d, hidden), nn.ReLU(), nn.Linear(hidden, d))


def _split(x, Y):
    B, k, d = x.shape
    return x.view(B, k, Y, d // Y).transpose(1, 2)  # (B, Y, k, dk)


def _merge(x):
    B, Y, k, dk = x.shape
    return x.transpose(1, 2).reshape(B, k, Y * dk)


def _attend(q, k, v, key_valid=None):
    scores = q @ k.transpose(-1, -2) / math.sqrt(q.shape[-1])
    if key_valid is not None:
        scores = scores.masked_fill(~key_valid[:, None, None, :], float("-inf"))
    return torch.softmax(scores, dim=-1) @ v


class HGALayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.d
        self.cfg = cfg
        for name in ("Wq_h", "Wk_h", "Wv_h", "Wo_h", "Wq_g", "Wk_g", "Wv_g", "Wo_g"):
            self.add_module(name, nn.Linear(d, d, bias=False))
        self.norm_h1, self.norm_h2 = Norm(d, cfg.norm), Norm(d, cfg.norm)
        self.norm_g1, self.norm_g2 = Norm(d, cfg.norm), Norm(d, cfg.norm)
        self.ff_h, self.ff_g = FeedForward(d, cfg.ff_hidden), FeedForward(d, cfg.ff_hidden)

    def forward(self, h, g=None, g_valid=None):
        cfg, Y = self.cfg, self.cfg.Y
        Qh, Kh, Vh = (_split(W(h), Y) for W in (self.Wq_h, self.Wk_h, self.Wv_h))
        out_h = _attend(Qh, Kh, Vh)
        if g is None:
            h_hat = self.norm_h1(h + self.Wo_h(_merge(out_h)))
            return self.norm_h2(h_hat + self.ff_h(h_hat)), None
        Kg, Vg = _split(self.Wk_g(g), Y), _split(self.Wv_g(g), Y)
        if cfg.node_to_point:
            out_h = out_h + _attend(Qh, Kg, Vg, g_valid)
        out_g = torch.zeros_like(Kg)
        if cfg.point_to_node or cfg.point_to_point:
            Qg = _split(self.Wq_g(g), Y)
            if cfg.point_to_node:
                out_g = out_g + _attend(Qg, Kh, Vh)
            if cfg.point_to_point:
                out_g = out_g + _attend(Qg, Kg, Vg, g_valid)
        h_hat = self.norm_h1(h + self.Wo_h(_merge(out_h)))
        h = self.norm_h2(h_hat + self.ff_h(h_hat))
        g_hat = self.norm_g1(g + self.Wo_g(_merge(out_g)), g_valid)
        g = self.norm_g2(g_hat + self.ff_g(g_hat), g_valid)
        return h, g


class HyperNetwork(nn.Module):
    """MLP on (lambda, w) -> hidden embedding -> one linear head per decoder tensor."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        H = cfg.hyper_hidden
        self.shapes = cfg.decoder_shapes()
        self.mlp = nn.Sequential(nn.Linear(cfg.M + 2, H), nn.ReLU(), nn.Linear(H, H), nn.ReLU())
        self.heads = nn.ModuleDict({k: nn.Linear(H, math.prod(s)) for k, s in self.shapes.items()})

    def forward(self, lam, w) -> dict[str, torch.Tensor]:
        x = torch.cat([lam, w]).to(self.mlp[0].weight.dtype)
        if x.shape[0] != self.mlp[0].in_features:
            raise ValueError(f"hypernetwork expects {self.mlp[0].in_features} inputs, got {x.shape[0]}")
        emb = self.mlp(x)
        return {k: self.heads[k](emb).view(s) for k, s in self.shapes.items()}


@dataclass
class Embeddings:
    h: torch.Tensor            # (B, n_nodes, d); CVRP row 0 is the depot
    g: torch.Tensor | None     # (B, k, d)
    g_valid: torch.Tensor | None
    offset: int                # index of the first action node in h

    @property
    def mean(self):
        return self.h.mean(dim=1)


class HGAPolicy(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.d
        self.W_h = nn.Linear(cfg.feature_dim, d)
        if cfg.kind == "MOCVRP":
            self.W_depot = nn.Linear(2, d)
        if cfg.use_points:
            self.W_g = nn.Linear(cfg.M, d)
        self.layers = nn.ModuleList(HGALayer(cfg) for _ in range(cfg.L))
        if cfg.conditioning == "hypernet":
            self.hyper = HyperNetwork(cfg)
        else:
            self.decoder = nn.ParameterDict(
                {k: nn.Parameter(torch.empty(s)) for k, s in cfg.decoder_shapes().items()}
            )
        self.to(DTYPES[cfg.dtype])

    @property
    def dtype(self):
        return self.W_h.weight.dtype

    # ------------------------------------------------------------ encoder
    def encode(self, batch: dict, points=None, point_valid=None) -> Embeddings:
        """``points``: (B, k, M) normalized surrogate front incl. reference point."""
        x = batch["nodes"].to(self.dtype)
        if not torch.isfinite(x).all():
            raise ValueError("non-finite node features")
        h = self.W_h(x)
        offset = 0
        if self.cfg.kind == "MOCVRP":
            h = torch.cat([self.W_depot(batch["depot"].to(self.dtype))[:, None, :], h], dim=1)
            offset = 1
        g = None
        if self.cfg.use_points:
            if points is None:
                raise ValueError("this model expects point features")
            points = torch.as_tensor(points, dtype=self.dtype)
            if not torch.isfinite(points).all():
                raise ValueError("non-finite point features")
            if point_valid is None:
                point_valid = torch.ones(points.shape[:2], dtype=torch.bool)
            g = self.W_g(points)
        for layer in self.layers:
            h, g = layer(h, g, point_valid)
        return Embeddings(h, g, point_valid if g is not None else None, offset)

    # ------------------------------------------------------------ decoder
    def decoder_params(self, lam=None, w=None) -> dict[str, torch.Tensor]:
        if self.cfg.conditioning == "direct":
            return dict(self.decoder.items())
        lam = torch.as_tensor(np.asarray(lam, dtype=np.float64), dtype=self.dtype)
        w = torch.as_tensor(np.asarray(w, dtype=np.float64), dtype=self.dtype)
        return self.hyper(lam, w)

    def _context(self, emb: Embeddings, state: ConstructionState) -> torch.Tensor:
        B, S = state.B, state.S
        hbar = emb.mean[:, None, :].expand(B, S, -1)

        def node(idx):  # action index (-1 = depot) -> embedding
            flat = (idx + emb.offset).clamp(min=0)
            return torch.gather(emb.h, 1, flat[..., None].expand(B, S, emb.h.shape[-1]))

        kind = self.cfg.kind
        if kind == "MOTSP":
            return torch.cat([hbar, node(state.first), node(state.last)], dim=-1)
        if kind == "MOCVRP":
            frac = state.remaining_fraction().to(self.dtype)[..., None]
            return torch.cat([hbar, node(state.last), frac], dim=-1)
        return torch.cat([hbar, state.rem.to(self.dtype)[..., None]], dim=-1)

    def precompute(self, emb: Embeddings, dec: dict) -> dict:
        Y = self.cfg.Y
        out = {
            "Kh": _split(emb.h @ dec["Wk_h"].T, Y),
            "Vh": _split(emb.h @ dec["Wv_h"].T, Y),
            "Kfin": emb.h[:, emb.offset:] @ dec["Wk"].T,
        }
        if emb.g is not None:
            out["Kg"] = _split(emb.g @ dec["Wk_g"].T, Y)
            out["Vg"] = _split(emb.g @ dec["Wv_g"].T, Y)
        return out

    def decode_step(self, emb: Embeddings, dec: dict, pre: dict, state: ConstructionState,
                    mask: torch.Tensor) -> torch.Tensor:
        """Log-probabilities (B, S, n) over actions; masked actions get -inf."""
        cfg = self.cfg
        Y, d = cfg.Y, cfg.d
        dk = d // Y
        B, S, n = mask.shape
        if mask.all(-1).any():
            raise ValueError("decode_step called with every action masked")
        q = self._context(emb, state) @ dec["Wq_c"].T                  # (B, S, d)
        q = q.view(B, S, Y, dk).transpose(1, 2)                        # (B, Y, S, dk)
        scores = q @ pre["Kh"].transpose(-1, -2) / math.sqrt(dk)      # (B, Y, S, n_nodes)
        node_mask = mask
        if emb.offset:
            node_mask = torch.cat([torch.zeros(B, S, emb.offset, dtype=torch.bool), mask], dim=-1)
        scores = scores.masked_fill(node_mask[:, None], float("-inf"))
        glimpse = torch.softmax(scores, -1) @ pre["Vh"]
        if "Kg" in pre:
            sg = q @ pre["Kg"].transpose(-1, -2) / math.sqrt(dk)
            sg = sg.masked_fill(~emb.g_valid[:, None, None, :], float("-inf"))
            glimpse = glimpse + torch.softmax(sg, -1) @ pre["Vg"]
        glimpse = glimpse.transpose(1, 2).reshape(B, S, d) @ dec["Wo"].T
        logits = glimpse @ pre["Kfin"].transpose(-1, -2) / math.sqrt(dk)   # (B, S, n)
        logits = cfg.C * torch.tanh(logits)
        logits = logits.masked_fill(mask, float("-inf"))
        return torch.log_softmax(logits, dim=-1)

    # ------------------------------------------------------------ rollout
    def rollout(self, batch: dict, emb: Embeddings, dec: dict, starts: torch.Tensor,
                mode: str = "greedy", generator: torch.Generator | None = None,
                actions: torch.Tensor | None = None):
        """Construct one solution per start node.

        ``starts``: (B, S) forced first actions. ``actions`` (B, S, T) replays a
        given sequence (teacher forcing, -1 padded) instead of choosing.
        Returns (actions (B, S, T) padded with -1, log-probability (B, S)).
        """
        B, S = starts.shape
        state = ConstructionState(batch, S)
        pre = self.precompute(emb, dec)
        state.step(starts)
        taken = [starts]
        logp = torch.zeros(B, S, dtype=self.dtype)
        t = 1
        while not state.done.all():
            mask = state.mask()
            live = ~state.done
            safe_mask = mask & live[..., None]        # finished rows: anything goes
            lp = self.decode_step(emb, dec, pre, state, safe_mask)
            if actions is not None:
                a = actions[:, :, t].clamp(min=0)
            elif mode == "greedy":
                a = lp.argmax(-1)
            elif mode == "sample":
                probs = lp.exp().reshape(B * S, -1)
                a = torch.multinomial(probs, 1, generator=generator).view(B, S)
            else:
                raise ValueError(f"unknown rollout mode {mode!r}")
            chosen = torch.gather(lp, -1, a[..., None]).squeeze(-1)
            logp = logp + torch.where(live, chosen, torch.zeros_like(chosen))
            a = torch.where(live, a, torch.full_like(a, -1))
            state.step(a)
            taken.append(a)
            t += 1
        acts = torch.stack(taken, dim=-1)
        return acts, logp


# -------------------------------------------------------------------- helpers


def init_params(cfg: ModelConfig, seed: int = 0) -> HGAPolicy:
    """Fresh policy; every weight and bias ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    model = HGAPolicy(cfg)
    gen = torch.Generator().manual_seed(int(seed) % (2**63))
    with torch.no_grad():
        for name, p in model.named_parameters():
            if ".norm" in name:
                continue  # normalization affine stays at (1, 0)
            if name.startswith("decoder."):
                fan_in = p.shape[-1]
            else:
                mod = model.get_submodule(name.rsplit(".", 1)[0])
                fan_in = mod.in_features
            bound = 1.0 / math.sqrt(fan_in)
            p.copy_(torch.rand(p.shape, generator=gen, dtype=p.dtype) * 2 * bound - bound)
    return model


def point_tensors(fronts: Sequence[np.ndarray], box: ReferenceBox, dtype=torch.float64):
    """Pad per-instance fronts (each already including the reference point as
    its last row) with copies of the reference point; returns features and a
    validity mask. Features are mapped through (f - z) / (r - z)."""
    kmax = max(len(f) for f in fronts)
    M = len(box.r)
    feats = np.ones((len(fronts), kmax, M))
    valid = np.zeros((len(fronts), kmax), dtype=bool)
    for i, f in enumerate(fronts):
        feats[i, : len(f)] = box.normalize(f)
        valid[i, : len(f)] = True
    return torch.as_tensor(feats, dtype=dtype), torch.as_tensor(valid)


def start_nodes(B: int, n: int, S: int | None = None) -> torch.Tensor:
    S = n if S is None else S
    if not 1 <= S <= n:
        raise ValueError(f"starts must be in [1, {n}]")
    return torch.arange(S).expand(B, S).clone()


def actions_to_solutions(kind: Kind | str, acts: torch.Tensor) -> list[list[list[int]]]:
    """(B, S, T) padded actions -> nested lists of solutions (KP: sorted items)."""
    arr = acts.numpy()
    out = []
    for b in range(arr.shape[0]):
        row = []
        for s in range(arr.shape[1]):
            seq = [int(x) for x in arr[b, s] if x >= 0]
            row.append(sorted(seq) if Kind(kind) is Kind.MOKP else seq)
        out.append(row)
    return out


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def sequence_log_prob(model: HGAPolicy, instance: Instance, front: np.ndarray, box: ReferenceBox,
                      lam, w, actions: torch.Tensor) -> torch.Tensor:
    """Summed log-probability of fixed action sequences (S, T) on one instance."""
    batch = batch_tensors([instance], model.dtype)
    pts, valid = point_tensors([front], box, model.dtype) if model.cfg.use_points else (None, None)
    emb = model.encode(batch, pts, valid)
    dec = model.decoder_params(lam, w)
    acts = actions[None]
    _, logp = model.rollout(batch, emb, dec, acts[:, :, 0], actions=acts)
    return logp.sum()


def grad_check(model: HGAPolicy, instance: Instance, front: np.ndarray, box: ReferenceBox,
               lam, w, eps: float = 1e-4, seed: int = 0, n_params: int = 100,
               starts: int | None = None, include: Sequence[str] | None = None) -> dict:
    """Compare autograd against central finite differences on ``n_params``
    randomly chosen scalar parameters, for the log-probability of a fixed
    (greedily produced) action sequence.

    ``include`` restricts sampling to parameters whose name starts with one
    of the given prefixes. Returns a dict with ``max_rel_error`` plus the
    per-entry records.
    """
    if model.dtype != torch.float64:
        raise ValueError("gradient checks need a float64 model")
    with torch.no_grad():
        batch = batch_tensors([instance], model.dtype)
        pts, valid = point_tensors([front], box) if model.cfg.use_points else (None, None)
        emb = model.encode(batch, pts, valid)
        acts, _ = model.rollout(batch, emb, model.decoder_params(lam, w),
                                start_nodes(1, instance.n, starts))
    acts = acts[0]
    model.zero_grad()
    sequence_log_prob(model, instance, front, box, lam, w, acts).backward()
    params = [(n, p) for n, p in model.named_parameters()
              if include is None or any(n.startswith(pre) for pre in include)]
    sizes = np.array([p.numel() for _, p in params])
    rng = np.random.default_rng(seed)
    flat = rng.choice(sizes.sum(), size=min(n_params, sizes.sum()), replace=False)
    bounds = np.cumsum(sizes)
    records = []
    with torch.no_grad():
        for f in flat:
            k = int(np.searchsorted(bounds, f, side="right"))
            name, p = params[k]
            j = int(f - (bounds[k] - sizes[k]))
            view = p.view(-1)
            analytic = 0.0 if p.grad is None else float(p.grad.view(-1)[j])
            orig = float(view[j])
            view[j] = orig + eps
            fp = float(sequence_log_prob(model, instance, front, box, lam, w, acts))
            view[j] = orig - eps
            fm = float(sequence_log_prob(model, instance, front, box, lam, w, acts))
            view[j] = orig
            numeric = (fp - fm) / (2 * eps)
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
            records.append({"param": name, "index": j, "analytic": analytic,
                            "numeric": numeric, "rel_error": rel})
    model.zero_grad()
    return {"max_rel_error": max(r["rel_error"] for r in records), "records": records}


# ----------------------------------------------------------------- checkpoint


class CheckpointError(ValueError):
    pass


CHECKPOINT_FORMAT = "divmoco-checkpoint"


def checkpoint_dict(model: HGAPolicy, lineage: dict | None = None) -> dict:
    tensors = {
        k: {"shape": list(v.shape), "data": v.detach().cpu().reshape(-1).tolist()}
        for k, v in model.state_dict().items()
    }
    return {"format": CHECKPOINT_FORMAT, "version": 1, "config": asdict(model.cfg),
            "lineage": lineage or {}, "tensors": tensors}


def model_from_dict(obj: dict, where: str = "checkpoint") -> HGAPolicy:
    if not isinstance(obj, dict) or obj.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{where}: field 'format' must be {CHECKPOINT_FORMAT!r}")
    for key in ("config", "tensors"):
        if not isinstance(obj.get(key), dict):
            raise CheckpointError(f"{where}: missing or malformed field {key!r}")
    try:
        cfg = ModelConfig.from_dict(obj["config"])
    except (TypeError, ValueError) as exc:
        raise CheckpointError(f"{where}: field 'config': {exc}") from None
    model = HGAPolicy(cfg)
    expected = model.state_dict()
    tensors = obj["tensors"]
    missing = set(expected) - set(tensors)
    extra = set(tensors) - set(expected)
    if missing or extra:
        raise CheckpointError(f"{where}: tensor names differ (missing {sorted(missing)}, unexpected {sorted(extra)})")
    state = {}
    for name, ref in expected.items():
        entry = tensors[name]
        if not isinstance(entry, dict) or "shape" not in entry or "data" not in entry:
            raise CheckpointError(f"{where}: tensor {name!r} needs 'shape' and 'data'")
        if list(entry["shape"]) != list(ref.shape):
            raise CheckpointError(f"{where}: tensor {name!r} has shape {entry['shape']}, expected {list(ref.shape)}")
        data = entry["data"]
        if not isinstance(data, list) or len(data) != ref.numel():
            raise CheckpointError(f"{where}: tensor {name!r} has {len(data) if isinstance(data, list) else '?'} values, expected {ref.numel()}")
        try:
            state[name] = torch.tensor(data, dtype=ref.dtype).view(ref.shape)
        except (TypeError, ValueError):
            raise CheckpointError(f"{where}: tensor {name!r} holds non-numeric data") from None
    model.load_state_dict(state)
    return model


def save_checkpoint(path: str | Path, model: HGAPolicy, lineage: dict | None = None) -> None:
    Path(path).write_text(json.dumps(checkpoint_dict(model, lineage)))


def load_checkpoint(path: str | Path) -> HGAPolicy:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not valid JSON (line {exc.lineno}, column {exc.colno})") from None
    return model_from_dict(obj, str(path))


def load_lineage(path: str | Path) -> dict:
    return json.loads(Path(path).read_text()).get("lineage", {})
