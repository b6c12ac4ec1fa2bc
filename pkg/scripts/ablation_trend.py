"""Full NHDE-P against the no-indicator, no-MPO ablation on Bi-TSP n=10.

Prints mean HV, |NDS| and |DS| per seed and averaged over seeds.
"""
import argparse
import time

import numpy as np
import torch

from divmoco.hga import ModelConfig
from divmoco.inference import SolveConfig, solve_sequence
from divmoco.mpo import MpoConfig
from divmoco.scalarization import preference_schedule
from divmoco.training import ProblemSpec, TrainConfig, Variant, train_nhde_p

VARIANTS = {
    "full": (Variant(), True),
    "no-indicator-no-mpo": (Variant(indicator=False, mpo=False), False),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--instances", type=int, default=20)
    args = ap.parse_args()
    torch.set_num_threads(1)

    problem = ProblemSpec("MOTSP", 10, 2)
    test = problem.sample(np.random.default_rng(999), args.instances)
    sched = preference_schedule(2)
    table = {name: [] for name in VARIANTS}
    for seed in args.seeds:
        for name, (variant, use_points) in VARIANTS.items():
            t0 = time.perf_counter()
            mc = ModelConfig(kind="MOTSP", M=2, use_points=use_points)
            model, _ = train_nhde_p(TrainConfig(E=args.steps, seed=seed, log_every=0), mc, problem,
                                    variant=variant)
            cfg = SolveConfig(variant=variant, mpo=MpoConfig(enabled=variant.mpo))
            runs = [solve_sequence(model, inst, sched, cfg) for inst in test]
            row = (np.mean([r.hv for r in runs]), np.mean([r.nds for r in runs]),
                   np.mean([r.duplicates for r in runs]))
            table[name].append(row)
            print(f"seed {seed} {name:<22} hv {row[0]:.4f} nds {row[1]:6.2f} ds {row[2]:7.2f} "
                  f"({time.perf_counter() - t0:.0f}s)", flush=True)
    for name, rows in table.items():
        hv, nds, ds = np.mean(rows, axis=0)
        print(f"mean {name:<22} hv {hv:.4f} nds {nds:6.2f} ds {ds:7.2f}")


if __name__ == "__main__":
    main()
