"""Train NHDE-P on Bi-TSP n=10 at desk scale and compare it against the
untrained starting point, a random-tour archive and the exact Pareto front.

    python scripts/desk_experiment.py --seed 0 --out runs/desk
"""
import argparse
import itertools
import json
import time
from pathlib import Path

import numpy as np
import torch

from divmoco.baselines import random_policy
from divmoco.hga import ModelConfig
from divmoco.inference import SolveConfig, archive_from_solutions, metrics, solve_sequence
from divmoco.problems import evaluate_many
from divmoco.scalarization import preference_schedule
from divmoco.training import ProblemSpec, TrainConfig, initial_model, train_nhde_p


def exact_front(inst):
    perms = np.array([(0,) + p for p in itertools.permutations(range(1, inst.n))], dtype=np.int64)
    F = np.concatenate([evaluate_many(inst, perms[k:k + 50_000]) for k in range(0, len(perms), 50_000)])
    F = F[np.lexsort((F[:, 1], F[:, 0]))]
    return F[F[:, 1] < np.minimum.accumulate(np.r_[np.inf, F[:-1, 1]])]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--instances", type=int, default=20)
    ap.add_argument("--no-exact", action="store_true", help="skip the 9! enumeration")
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()
    torch.set_num_threads(1)

    problem = ProblemSpec("MOTSP", 10, 2)
    mc = ModelConfig(kind="MOTSP", M=2)
    cfg = TrainConfig(E=args.steps, lr=args.lr, seed=args.seed, log_every=50)
    t0 = time.perf_counter()
    model, log = train_nhde_p(cfg, mc, problem, on_log=lambda row: print("train", row, flush=True))
    train_s = time.perf_counter() - t0

    test = problem.sample(np.random.default_rng(999), args.instances)
    sched, box = preference_schedule(2), problem.box()
    start = initial_model(cfg, mc)
    rows = {"trained": [], "untrained": [], "random": [], "exact": []}
    for k, inst in enumerate(test):
        rows["trained"].append(solve_sequence(model, inst, sched, SolveConfig()).hv)
        rows["untrained"].append(solve_sequence(start, inst, sched, SolveConfig()).hv)
        sols = random_policy(inst, len(sched) * inst.n, seed=k)
        rows["random"].append(metrics(archive_from_solutions(inst, sols), box)["hv"])
        if not args.no_exact:
            rows["exact"].append(metrics(exact_front(inst), box)["hv"])
    summary = {k: float(np.mean(v)) for k, v in rows.items() if v}
    summary["train_s"] = train_s
    summary["ratio_untrained"] = summary["trained"] / summary["untrained"]
    summary["ratio_random"] = summary["trained"] / summary["random"]
    if "exact" in summary:
        summary["ceiling_random"] = summary["exact"] / summary["random"]
    print(json.dumps(summary, indent=2))
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        log.to_csv(args.out / "train_log.csv")


if __name__ == "__main__":
    main()
