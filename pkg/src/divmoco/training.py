"""Hypervolume-shaped REINFORCE training.

``train_nhde_p`` trains one hypernetwork-conditioned model over sampled
(weight, diversity factor) pairs; ``meta_train_nhde_m`` / ``finetune_nhde_m``
train a directly parameterized meta-model and adapt it per preference.
"""
from __future__ import annotations

import copy
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import torch

from .env import batch_tensors
from .hga import HGAPolicy, ModelConfig, actions_to_solutions, init_params, point_tensors, start_nodes
from .mpo import MpoConfig, SurrogateFront, mpo_update, select_top_j, select_top_k
from .pareto import ParetoArchive, ReferenceBox, hv_exact, reference_box
from .problems import Instance, Kind, evaluate_many, generate_instance, to_min
from .scalarization import sample_training_preference, substream, ws_scalarize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProblemSpec:
    kind: str = "MOTSP"
    n: int = 10
    M: int = 2

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind).value)

    def box(self) -> ReferenceBox:
        return reference_box(self.kind, self.n, self.M)

    def sample(self, rng: np.random.Generator, count: int) -> list[Instance]:
        seeds = rng.integers(0, 2**63 - 1, size=count)
        return [generate_instance(self.kind, self.n, self.M, int(s)) for s in seeds]


@dataclass
class Variant:
    """Ablation switches shared by training and inference."""

    indicator: bool = True       # False: no HV term, no front input (w pinned to (1, 0))
    decomposition: bool = True   # False: HV-only reward, whole archive as input
    mpo: bool = True             # False: keep only the max-reward solution per subproblem

    def weight(self, lam, M):
        return np.full(M, 1.0 / M) if not self.decomposition else np.asarray(lam, float)

    def factor(self, w):
        if not self.indicator:
            return np.array([1.0, 0.0])
        if not self.decomposition:
            return np.array([0.0, 1.0])
        return np.asarray(w, float)

    def front_size(self, K: int, archive_size: int) -> int:
        if not self.indicator:
            return 0
        return archive_size if not self.decomposition else K


@dataclass
class TrainConfig:
    B: int = 8
    N_prime: int = 5
    E: int = 200
    lr: float = 1e-3
    weight_decay: float = 1e-6
    starts: int | None = None       # None: one start per node
    grad_clip: float | None = None
    seed: int = 0
    K: int = 20
    J: int = 200
    mpo_mode: str = "archive_preserving"
    log_every: int = 20
    val_weights: int = 10

    @classmethod
    def paper(cls, kind: str = "MOTSP", **kw) -> "TrainConfig":
        lr = 1e-5 if Kind(kind) is Kind.MOKP else 1e-4
        return cls(**{"B": 64, "N_prime": 20, "E": 200 * 5000 // 64, "lr": lr, "log_every": 100, **kw})

    def mpo(self, variant: Variant) -> MpoConfig:
        return MpoConfig(K=self.K, J=self.J, mode=self.mpo_mode, enabled=variant.mpo)


@dataclass
class MetaConfig:
    T_m: int = 4
    N_prime: int = 3
    N_tilde: int | None = None      # None: M
    E: int = 5
    E_f: int = 5
    eps0: float = 1.0
    B: int = 8
    lr: float = 1e-3
    weight_decay: float = 1e-6
    starts: int | None = None
    grad_clip: float | None = None
    seed: int = 0
    K: int = 20
    J: int = 200
    mpo_mode: str = "archive_preserving"

    @classmethod
    def paper(cls, **kw) -> "MetaConfig":
        return cls(**{"T_m": 150, "N_prime": 20, "E": 100, "E_f": 50, "B": 64, "lr": 1e-4, **kw})


# ------------------------------------------------------------------- rewards


def reward(g_value, hv_value, w):
    """R = -w1 * g + w2 * HV."""
    return -w[0] * np.asarray(g_value) + w[1] * np.asarray(hv_value)


def scalar_span(box: ReferenceBox, lam) -> float:
    return float(ws_scalarize(np.abs(box.r - box.z), lam))


def hv_with(front: SurrogateFront, F: np.ndarray, box: ReferenceBox) -> np.ndarray:
    """Normalized HV of the surrogate front plus each candidate row of ``F``."""
    base = front.points
    vol = box.volume
    return np.array([hv_exact(np.vstack([base, f[None]]), box.r, clip=True) / vol for f in F])


def candidate_rewards(F: np.ndarray, front: SurrogateFront, lam, w, box: ReferenceBox) -> np.ndarray:
    """Rewards for candidate objective vectors (minimization space, shape (S, M)).

    The scalarized term is divided by the box's scalarized span and the HV term
    is the normalized ratio, so both live on a unit scale.
    """
    g = ws_scalarize(F, lam) / scalar_span(box, lam)
    hv = hv_with(front, F, box) if w[1] > 0 else np.zeros(len(F))
    return reward(g, hv, w)


def reinforce_step(optimizer: torch.optim.Optimizer, logp: torch.Tensor, R: np.ndarray,
                   grad_clip: float | None = None) -> dict:
    """One policy-gradient update with the per-instance multi-start mean baseline.

    ``logp`` and ``R`` have shape (B, S).
    """
    cost = -torch.as_tensor(R, dtype=logp.dtype)
    adv = cost - cost.mean(dim=1, keepdim=True)
    loss = (adv * logp).mean()
    if not torch.isfinite(loss):
        raise FloatingPointError("non-finite policy-gradient loss")
    optimizer.zero_grad()
    loss.backward()
    params = [p for g in optimizer.param_groups for p in g["params"]]
    if grad_clip:
        torch.nn.utils.clip_grad_norm_(params, grad_clip)
    optimizer.step()
    return {"loss": float(loss.detach()), "advantage": adv.detach()}


def make_optimizer(model: HGAPolicy, lr: float, weight_decay: float) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=lr, weight_decay=weight_decay)


# ------------------------------------------------------------------ episodes


@dataclass
class EpisodeResult:
    mean_reward: float
    loss: float
    F: np.ndarray          # (B, S, M) minimization space


def run_episode(model: HGAPolicy, optimizer, instances: Sequence[Instance],
                archives: list[ParetoArchive], lam, w, box: ReferenceBox, mpo: MpoConfig,
                variant: Variant, generator: torch.Generator, starts: int | None = None,
                grad_clip: float | None = None) -> EpisodeResult:
    """Sample, reward, update the policy once, then fold the samples into the archives."""
    kind = Kind(instances[0].kind)
    n, M = instances[0].n, instances[0].M
    lam = variant.weight(lam, M)
    w = variant.factor(w)
    fronts = [select_top_k(a, lam, variant.front_size(mpo.K, len(a)), box.r) for a in archives]
    batch = batch_tensors(instances, model.dtype)
    pts, valid = (point_tensors([f.with_reference for f in fronts], box, model.dtype)
                  if model.cfg.use_points else (None, None))
    emb = model.encode(batch, pts, valid)
    dec = model.decoder_params(lam, w)
    acts, logp = model.rollout(batch, emb, dec, start_nodes(len(instances), n, starts),
                               mode="sample", generator=generator)
    sols = actions_to_solutions(kind, acts)
    F = np.stack([to_min(kind, evaluate_many(inst, s)) for inst, s in zip(instances, sols)])
    R = np.stack([candidate_rewards(F[i], fronts[i], lam, w, box) for i in range(len(instances))])
    step = reinforce_step(optimizer, logp, R, grad_clip)
    for i, archive in enumerate(archives):
        fold_candidates(archive, fronts[i], F[i], sols[i], lam, R[i], mpo)
    return EpisodeResult(float(R.mean()), step["loss"], F)


def fold_candidates(archive, front, F, sols, lam, R, mpo: MpoConfig, stats=None):
    if mpo.enabled:
        idx = select_top_j(F, lam, mpo.J)
        mpo_update(archive, front, F[idx], [sols[j] for j in idx], mode=mpo.mode, stats=stats)
    else:
        best = int(np.argmax(R))
        archive.insert(F[best], sols[best])


# ------------------------------------------------------------------- NHDE-P


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)

    def add(self, **row):
        self.rows.append(row)

    def to_csv(self, path) -> None:
        import csv
        if not self.rows:
            return
        keys = list(self.rows[0])
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            w.writerows(self.rows)


def _validate(model, problem: ProblemSpec, cfg: TrainConfig, variant: Variant, val_instance) -> float:
    from .inference import SolveConfig, solve_sequence
    from .scalarization import preference_schedule, uniform_weight_set

    sched = preference_schedule(problem.M, weights=uniform_weight_set(problem.M, max(cfg.val_weights - 1, 1)))
    res = solve_sequence(model, val_instance, sched,
                         SolveConfig(mpo=cfg.mpo(variant), variant=variant, starts=cfg.starts),
                         box=problem.box())
    return res.hv


def initial_model(cfg: TrainConfig, model_cfg: ModelConfig) -> HGAPolicy:
    """The parameters ``train_nhde_p`` starts from for this seed."""
    return init_params(model_cfg, int(substream(cfg.seed, "init").integers(2**62)))


def train_nhde_p(cfg: TrainConfig, model_cfg: ModelConfig, problem: ProblemSpec,
                 variant: Variant | None = None, model: HGAPolicy | None = None,
                 on_log: Callable[[dict], None] | None = None,
                 on_checkpoint: Callable[[int, HGAPolicy], None] | None = None,
                 checkpoint_every: int = 0) -> tuple[HGAPolicy, TrainLog]:
    """Train a hypernetwork-conditioned policy.

    Every outer step draws ``B`` fresh instances with empty archives, then
    trains on ``N_prime`` sampled preferences in sequence so later subproblems
    see the fronts built by earlier ones.
    """
    variant = variant or Variant()
    if Kind(model_cfg.kind).value != problem.kind or model_cfg.M != problem.M:
        raise ValueError("model config does not match the problem")
    torch.manual_seed(cfg.seed)
    model = model or initial_model(cfg, model_cfg)
    opt = make_optimizer(model, cfg.lr, cfg.weight_decay)
    inst_rng = substream(cfg.seed, "instance")
    pref_rng = substream(cfg.seed, "weights")
    gen = torch.Generator().manual_seed(int(substream(cfg.seed, "rollout").integers(2**62)))
    val_instance = problem.sample(substream(cfg.seed, "validation"), 1)[0]
    box, mpo = problem.box(), cfg.mpo(variant)
    trainlog = TrainLog()
    t0 = time.time()
    for e in range(1, cfg.E + 1):
        instances = problem.sample(inst_rng, cfg.B)
        archives = [ParetoArchive(problem.M) for _ in instances]
        rewards = []
        for _ in range(cfg.N_prime):
            lam, w = sample_training_preference(pref_rng, problem.M)
            res = run_episode(model, opt, instances, archives, lam, w, box, mpo, variant, gen,
                              cfg.starts, cfg.grad_clip)
            rewards.append(res.mean_reward)
        if cfg.log_every and (e % cfg.log_every == 0 or e == cfg.E):
            row = {"step": e, "mean_reward": float(np.mean(rewards)),
                   "val_hv": _validate(model, problem, cfg, variant, val_instance),
                   "elapsed_s": round(time.time() - t0, 3)}
            trainlog.add(**row)
            log.info("step %d reward %.4f val_hv %.4f", e, row["mean_reward"], row["val_hv"])
            if on_log:
                on_log(row)
        if on_checkpoint and checkpoint_every and e % checkpoint_every == 0:
            on_checkpoint(e, model)
    return model, trainlog


# ------------------------------------------------------------------- NHDE-M


def _interpolate_(meta: HGAPolicy, subs: Sequence[HGAPolicy], eps: float) -> None:
    with torch.no_grad():
        sub_params = [dict(s.named_parameters()) for s in subs]
        for name, p in meta.named_parameters():
            avg = torch.stack([sp[name] for sp in sub_params]).mean(0)
            p.add_(eps * (avg - p))


def meta_train_nhde_m(cfg: MetaConfig, model_cfg: ModelConfig, problem: ProblemSpec,
                      variant: Variant | None = None, model: HGAPolicy | None = None,
                      on_log: Callable[[dict], None] | None = None) -> tuple[HGAPolicy, TrainLog]:
    """Reptile-style meta-training with a linearly decaying meta step size."""
    variant = variant or Variant()
    if model_cfg.conditioning != "direct":
        model_cfg = replace(model_cfg, conditioning="direct")
    meta = model or init_params(model_cfg, int(substream(cfg.seed, "init").integers(2**62)))
    N_tilde = cfg.N_tilde or problem.M
    inst_rng, pref_rng = substream(cfg.seed, "instance"), substream(cfg.seed, "weights")
    gen = torch.Generator().manual_seed(int(substream(cfg.seed, "rollout").integers(2**62)))
    box = problem.box()
    mpo = MpoConfig(cfg.K, cfg.J, cfg.mpo_mode, variant.mpo)
    eps = cfg.eps0
    trainlog = TrainLog()
    for t_m in range(1, cfg.T_m + 1):
        instances = [problem.sample(inst_rng, cfg.B) for _ in range(cfg.E)]
        archives = [[ParetoArchive(problem.M) for _ in range(cfg.B)] for _ in range(cfg.E)]
        for n_prime in range(1, cfg.N_prime + 1):
            subs, rewards = [], []
            for _ in range(N_tilde):
                lam, w = sample_training_preference(pref_rng, problem.M)
                sub = copy.deepcopy(meta)
                opt = make_optimizer(sub, cfg.lr, cfg.weight_decay)
                for e in range(cfg.E):
                    res = run_episode(sub, opt, instances[e], archives[e], lam, w, box, mpo,
                                      variant, gen, cfg.starts, cfg.grad_clip)
                    rewards.append(res.mean_reward)
                subs.append(sub)
            _interpolate_(meta, subs, eps)
            row = {"meta_iter": t_m, "sampling_step": n_prime, "eps": eps,
                   "mean_reward": float(np.mean(rewards))}
            eps -= cfg.eps0 / (cfg.T_m * cfg.N_prime)
            trainlog.add(**row)
            if on_log:
                on_log(row)
    return meta, trainlog


def finetune_nhde_m(meta: HGAPolicy, preferences: Sequence[tuple], E_f: int, problem: ProblemSpec,
                    cfg: MetaConfig | None = None, variant: Variant | None = None,
                    instances: Sequence[Sequence[Instance]] | None = None) -> list[HGAPolicy]:
    """One fine-tuned copy of ``meta`` per (weight, diversity factor).

    The fine-tuning instances and their archives are created once and shared
    across all preferences, so later submodels train against fronts left by
    earlier ones.
    """
    if E_f < 0:
        raise ValueError("E_f must be >= 0")
    cfg = cfg or MetaConfig()
    variant = variant or Variant()
    box = problem.box()
    mpo = MpoConfig(cfg.K, cfg.J, cfg.mpo_mode, variant.mpo)
    if instances is None:
        rng = substream(cfg.seed, "finetune-instance")
        instances = [problem.sample(rng, cfg.B) for _ in range(E_f)]
    archives = [[ParetoArchive(problem.M) for _ in batch] for batch in instances]
    gen = torch.Generator().manual_seed(int(substream(cfg.seed, "finetune-rollout").integers(2**62)))
    subs = []
    for lam, w in preferences:
        sub = copy.deepcopy(meta)
        if E_f:
            opt = make_optimizer(sub, cfg.lr, cfg.weight_decay)
            for e in range(E_f):
                run_episode(sub, opt, instances[e], archives[e], lam, w, box, mpo, variant, gen,
                            cfg.starts, cfg.grad_clip)
        subs.append(sub)
    return subs
