"""Command-line entry point: ``divmoco <command> [options]``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import baselines
from .hga import CheckpointError, ModelConfig, load_checkpoint, save_checkpoint
from .inference import SolveConfig, archive_from_solutions, metrics, solve_sequence
from .io import (SchemaError, fill_dataclass, load_instances, read_config, save_instances,
                 save_metrics, save_trace, write_manifest)
from .mpo import MpoConfig
from .pareto import ParetoArchive, ReferenceBox, load_front_csv, reference_box, save_front_csv
from .problems import Kind, generate_dataset, to_min
from .scalarization import preference_schedule, substream
from .training import (MetaConfig, ProblemSpec, TrainConfig, Variant, finetune_nhde_m,
                       meta_train_nhde_m, train_nhde_p)

ABLATIONS = ("no-indicator", "no-decomposition", "no-mpo",
             "no-node-to-point", "no-point-to-node", "point-to-point")


class CliError(Exception):
    pass


@dataclass
class SolveSettings:
    N: int | None = None          # number of preferences; None: 40 (M=2) / 210 (M=3)
    K: int = 20
    J: int = 200
    aug: str = "none"
    mpo_mode: str = "archive_preserving"
    rollout: str = "greedy"
    starts: int | None = None
    shuffle_seed: int = 0


def lattice_granularity(M: int, N: int) -> int:
    for H in range(1, 200):
        if math.comb(H + M - 1, M - 1) == N:
            return H
    raise CliError(f"N={N} is not a simplex-lattice size for M={M}")


# ------------------------------------------------------------------ config


@dataclass
class RunConfig:
    problem: ProblemSpec
    model: ModelConfig
    train: TrainConfig
    meta: MetaConfig
    solve: SolveSettings
    variant: Variant

    def as_dict(self) -> dict:
        return {k: dataclasses.asdict(getattr(self, k)) for k in
                ("problem", "model", "train", "meta", "solve", "variant")}


def build_config(args) -> RunConfig:
    sections = read_config(args.config) if args.config else {}
    unknown = set(sections) - {"problem", "model", "train", "meta", "solve", "variant"}
    if unknown:
        raise SchemaError(f"{args.config}: unknown section(s) {sorted(unknown)}")
    problem = fill_dataclass(ProblemSpec, sections.get("problem"), "problem",
                             kind=getattr(args, "kind", None), n=getattr(args, "n", None),
                             M=getattr(args, "M", None))
    model_over = {"kind": problem.kind, "M": problem.M}
    flags = set(getattr(args, "ablate", None) or [])
    if "no-node-to-point" in flags:
        model_over["node_to_point"] = False
    if "no-point-to-node" in flags:
        model_over["point_to_node"] = False
    if "point-to-point" in flags:
        model_over["point_to_point"] = True
    if "no-indicator" in flags:
        model_over["use_points"] = False
    if args.variant == "nhde-m":
        model_over["conditioning"] = "direct"
    model = fill_dataclass(ModelConfig, sections.get("model"), "model", **model_over)
    seed = args.seed
    mpo_mode = args.mpo_mode.replace("-", "_") if args.mpo_mode else None
    train = fill_dataclass(TrainConfig, sections.get("train"), "train", seed=seed, mpo_mode=mpo_mode)
    meta = fill_dataclass(MetaConfig, sections.get("meta"), "meta", seed=seed, mpo_mode=mpo_mode)
    solve = fill_dataclass(SolveSettings, sections.get("solve"), "solve", aug=args.aug, mpo_mode=mpo_mode)
    variant = fill_dataclass(Variant, sections.get("variant"), "variant",
                             indicator=False if "no-indicator" in flags else None,
                             decomposition=False if "no-decomposition" in flags else None,
                             mpo=False if "no-mpo" in flags else None)
    if solve.aug not in ("none", "partial", "full"):
        raise SchemaError(f"solve.aug: unknown augmentation {solve.aug!r}")
    if solve.aug != "none" and problem.kind == Kind.MOKP.value:
        raise SchemaError("knapsack instances cannot be augmented")
    return RunConfig(problem, model, train, meta, solve, variant)


def solve_config(cfg: RunConfig, seed: int) -> SolveConfig:
    s = cfg.solve
    return SolveConfig(mpo=MpoConfig(s.K, s.J, s.mpo_mode, cfg.variant.mpo), aug=s.aug,
                       rollout=s.rollout, starts=s.starts, seed=seed, variant=cfg.variant)


def schedule_for(cfg: RunConfig):
    M = cfg.problem.M
    H = lattice_granularity(M, cfg.solve.N) if cfg.solve.N else None
    return preference_schedule(M, H, shuffle_seed=cfg.solve.shuffle_seed)


# ----------------------------------------------------------------- helpers


def require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"{what} not found: {path}")
    return p


def prepare_out(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def check_kind(model, instances, where: str) -> None:
    for inst in instances:
        if model.cfg.kind != inst.kind.value or model.cfg.M != inst.M:
            raise CliError(f"{where}: model is for {model.cfg.kind} M={model.cfg.M}, "
                           f"instance is {inst.kind.value} M={inst.M}")


def box_for(inst) -> ReferenceBox:
    return reference_box(inst.kind, inst.n, inst.M)


def write_front(path: Path, kind, archive: ParetoArchive) -> None:
    order = np.lexsort(archive.points.T[::-1]) if len(archive) else []
    pts = to_min(kind, archive.points)[order] if len(archive) else archive.points
    save_front_csv(path, pts, [archive.solutions[i] for i in order])


def summarize(rows: list[dict]) -> dict:
    keys = ("hv", "nds", "ds", "time_ms")
    return {k: float(np.mean([r[k] for r in rows])) for k in keys if rows and k in rows[0]} | {"instances": len(rows)}


def write_table(path: Path, rows: list[dict]) -> None:
    import csv
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def solve_dataset(cfg: RunConfig, model, instances, out: Path | None, seed: int,
                  submodel_factory=None) -> list[dict]:
    rows = []
    sched = schedule_for(cfg)
    for idx, inst in enumerate(instances):
        subs = submodel_factory(sched) if submodel_factory else None
        res = solve_sequence(model, inst, sched, solve_config(cfg, seed + idx), box=box_for(inst),
                             submodels=subs)
        m = res.metrics()
        rows.append({"instance": idx, **m})
        if out is not None:
            write_front(out / f"front_{idx:04d}.csv", inst.kind, res.archive)
            save_metrics(out / f"metrics_{idx:04d}.json", m)
            save_trace(out / f"trace_{idx:04d}.csv", res.trace)
    return rows


# ---------------------------------------------------------------- commands


def cmd_gen(args, cfg: RunConfig) -> int:
    out = prepare_out(args)
    data = generate_dataset(cfg.problem.kind, cfg.problem.n, cfg.problem.M, args.count, args.seed)
    save_instances(out / "instances.jsonl", data)
    write_manifest(out, "gen", args.argv, cfg.as_dict() | {"count": args.count}, args.seed)
    print(f"wrote {len(data)} instances to {out / 'instances.jsonl'}")
    return 0


def _train(cfg: RunConfig, out: Path, name: str):
    if cfg.model.conditioning == "direct":
        raise CliError("train expects --variant nhde-p; use meta-train for nhde-m")
    ckpt_every = cfg.train.log_every

    def on_ckpt(step, model):
        save_checkpoint(out / f"{name}_step{step:06d}.json", model, {"step": step})

    model, log = train_nhde_p(cfg.train, cfg.model, cfg.problem, cfg.variant,
                              on_checkpoint=on_ckpt if ckpt_every else None,
                              checkpoint_every=ckpt_every * 5)
    save_checkpoint(out / f"{name}.json", model, {"command": "train", "config": cfg.as_dict()})
    log.to_csv(out / "train_log.csv")
    return model


def cmd_train(args, cfg: RunConfig) -> int:
    out = prepare_out(args)
    write_manifest(out, "train", args.argv, cfg.as_dict(), args.seed)
    _train(cfg, out, "model")
    print(f"checkpoint: {out / 'model.json'}")
    return 0


def cmd_meta_train(args, cfg: RunConfig) -> int:
    out = prepare_out(args)
    write_manifest(out, "meta-train", args.argv, cfg.as_dict(), args.seed)
    model_cfg = dataclasses.replace(cfg.model, conditioning="direct")
    meta, log = meta_train_nhde_m(cfg.meta, model_cfg, cfg.problem, cfg.variant)
    save_checkpoint(out / "meta.json", meta, {"command": "meta-train", "config": cfg.as_dict()})
    log.to_csv(out / "meta_log.csv")
    print(f"checkpoint: {out / 'meta.json'}")
    return 0


def cmd_finetune(args, cfg: RunConfig) -> int:
    meta = load_checkpoint(require_file(args.model, "checkpoint"))
    if meta.cfg.conditioning != "direct":
        raise CliError("finetune needs a meta-trained (nhde-m) checkpoint")
    check_kind(meta, [_probe(cfg)], "finetune")
    out = prepare_out(args)
    write_manifest(out, "finetune", args.argv, cfg.as_dict(), args.seed)
    sched = schedule_for(cfg)
    subs = finetune_nhde_m(meta, list(sched), cfg.meta.E_f, cfg.problem, cfg.meta, cfg.variant)
    for i, sub in enumerate(subs):
        save_checkpoint(out / f"submodel_{i:04d}.json", sub,
                        {"command": "finetune", "index": i, "weight": sched.weights[i].tolist(),
                         "factor": sched.factors[i].tolist()})
    print(f"wrote {len(subs)} submodels to {out}")
    return 0


def _probe(cfg: RunConfig):
    from .problems import generate_instance
    return generate_instance(cfg.problem.kind, max(cfg.problem.n, 2), cfg.problem.M, 0)


def _load_solver(args, cfg: RunConfig, instances):
    model = load_checkpoint(require_file(args.model, "checkpoint"))
    check_kind(model, instances, args.model)
    factory = None
    if model.cfg.conditioning == "direct":
        if args.submodels:
            d = Path(args.submodels)
            if not d.is_dir():
                raise CliError(f"submodel directory not found: {d}")
            subs = [load_checkpoint(p) for p in sorted(d.glob("submodel_*.json"))]
            factory = lambda sched: subs  # noqa: E731
        else:
            problem = dataclasses.replace(cfg.problem, kind=instances[0].kind.value, n=instances[0].n)
            factory = lambda sched: finetune_nhde_m(model, list(sched), cfg.meta.E_f,  # noqa: E731
                                                    problem, cfg.meta, cfg.variant)
    return model, factory


def cmd_solve(args, cfg: RunConfig) -> int:
    instances = load_instances(require_file(args.data, "dataset"))
    model, factory = _load_solver(args, cfg, instances)
    if args.limit:
        instances = instances[: args.limit]
    out = prepare_out(args)
    write_manifest(out, "solve", args.argv, cfg.as_dict() | {"model": args.model, "data": args.data}, args.seed)
    torch.manual_seed(args.seed)
    rows = solve_dataset(cfg, model, instances, out, args.seed, factory)
    write_table(out / "results.csv", rows)
    summary = summarize(rows)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    instances = load_instances(require_file(args.data, "dataset"))
    model, factory = _load_solver(args, cfg, instances)
    if args.limit:
        instances = instances[: args.limit]
    out = prepare_out(args)
    write_manifest(out, "eval", args.argv, cfg.as_dict() | {"model": args.model, "data": args.data}, args.seed)
    rows = solve_dataset(cfg, model, instances, None, args.seed, factory)
    write_table(out / "eval.csv", rows)
    summary = summarize(rows)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"{'instances':>10} {'HV':>8} {'|NDS|':>7} {'|DS|':>7} {'ms':>9}")
    print(f"{summary['instances']:>10} {summary['hv']:>8.4f} {summary['nds']:>7.1f} "
          f"{summary['ds']:>7.1f} {summary['time_ms']:>9.1f}")
    return 0


def cmd_baseline(args, cfg: RunConfig) -> int:
    import time
    instances = load_instances(require_file(args.data, "dataset"))
    if args.method == "ws-dp" and any(i.kind is not Kind.MOKP for i in instances):
        raise CliError("ws-dp only applies to knapsack instances")
    if args.limit:
        instances = instances[: args.limit]
    out = prepare_out(args)
    write_manifest(out, "baseline", args.argv, cfg.as_dict() | {"method": args.method, "data": args.data}, args.seed)
    sched = schedule_for(cfg)
    rows = []
    for idx, inst in enumerate(instances):
        t0 = time.perf_counter()
        if args.method == "ws-dp":
            sols = [baselines.ws_dp_knapsack(inst, lam, args.resolution)[1] for lam in sched.weights]
        elif args.method == "greedy":
            sols = [baselines.greedy_ws_construct(inst, lam) for lam in sched.weights]
        elif args.method == "random":
            sols = baselines.random_policy(inst, args.count, args.seed + idx)
        else:
            seeds = [baselines.greedy_ws_construct(inst, lam) for lam in sched.weights]
            sols = None
        if sols is None:
            archive = baselines.pareto_local_search(inst, seeds, args.iterations, args.seed + idx)
            ds = 0
        else:
            from .inference import duplicates_count
            from .problems import evaluate_many
            archive = archive_from_solutions(inst, sols)
            ds = duplicates_count(evaluate_many(inst, sols))
        elapsed = (time.perf_counter() - t0) * 1000
        m = metrics(archive, box_for(inst)) | {"ds": ds, "time_ms": elapsed}
        rows.append({"instance": idx, **m})
        write_front(out / f"front_{idx:04d}.csv", inst.kind, archive)
        save_metrics(out / f"metrics_{idx:04d}.json", m)
    write_table(out / "results.csv", rows)
    summary = summarize(rows)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return 0


def cmd_hv(args, cfg: RunConfig) -> int:
    pts, _ = load_front_csv(require_file(args.front, "front file"))
    if args.ref:
        r = np.array([float(x) for x in args.ref.split(",")])
        z = np.array([float(x) for x in args.ideal.split(",")]) if args.ideal else np.zeros_like(r)
        box = ReferenceBox(r, z)
        if args.maximize:
            box, pts = ReferenceBox(-r, -z), -pts
    else:
        if not args.kind or not args.n:
            raise CliError("hv needs --ref/--ideal or --kind and --n")
        box = reference_box(args.kind, args.n, pts.shape[1])
        pts = to_min(args.kind, pts)
    if pts.shape[1] != len(box.r):
        raise CliError(f"front has {pts.shape[1]} objectives, box has {len(box.r)}")
    m = metrics(pts, box)
    print(f"{m['hv']:.12g}")
    return 0


def cmd_ablate(args, cfg: RunConfig) -> int:
    instances = load_instances(require_file(args.data, "dataset")) if args.data else None
    out = prepare_out(args)
    write_manifest(out, "ablate", args.argv, cfg.as_dict() | {"ablate": args.ablate}, args.seed)
    model = _train(cfg, out, "model")
    if instances is None:
        instances = generate_dataset(cfg.problem.kind, cfg.problem.n, cfg.problem.M, args.count,
                                     int(substream(args.seed, "test").integers(2**62)))
    rows = solve_dataset(cfg, model, instances[: args.limit or None], None, args.seed)
    write_table(out / "eval.csv", rows)
    summary = summarize(rows) | {"ablate": args.ablate}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [problem] [model] [train] [meta] [solve] [variant]")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out-dir", default="runs/latest")
    common.add_argument("--aug", choices=("none", "partial", "full"))
    common.add_argument("--mpo-mode", choices=("literal", "archive-preserving"))
    common.add_argument("--variant", choices=("nhde-p", "nhde-m"), default="nhde-p")
    common.add_argument("--kind", choices=[k.value for k in Kind])
    common.add_argument("--n", type=int)
    common.add_argument("--M", type=int)

    p = argparse.ArgumentParser(prog="divmoco", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    g = sub.add_parser("gen", parents=[common], help="generate an instance dataset")
    g.add_argument("--count", type=int, default=20)
    sub.add_parser("train", parents=[common], help="train a hypernetwork-conditioned model")
    sub.add_parser("meta-train", parents=[common], help="meta-train a directly parameterized model")
    f = sub.add_parser("finetune", parents=[common], help="fine-tune a meta-model per preference")
    f.add_argument("--model", required=True)
    for name, hlp in (("solve", "solve a dataset"), ("eval", "HV / |NDS| / |DS| table over a dataset")):
        s = sub.add_parser(name, parents=[common], help=hlp)
        s.add_argument("--model", required=True)
        s.add_argument("--data", required=True)
        s.add_argument("--submodels", help="directory of fine-tuned submodels (nhde-m)")
        s.add_argument("--limit", type=int, default=0)
    b = sub.add_parser("baseline", parents=[common], help="non-learned baselines")
    b.add_argument("--method", choices=("ws-dp", "pls", "greedy", "random"), required=True)
    b.add_argument("--data", required=True)
    b.add_argument("--resolution", type=int, default=1000)
    b.add_argument("--iterations", type=int, default=200)
    b.add_argument("--count", type=int, default=400)
    b.add_argument("--limit", type=int, default=0)
    h = sub.add_parser("hv", parents=[common], help="normalized HV of a front CSV")
    h.add_argument("--front", required=True)
    h.add_argument("--ref")
    h.add_argument("--ideal")
    h.add_argument("--maximize", action="store_true", help="front and box are in maximization sense")
    a = sub.add_parser("ablate", parents=[common], help="train and evaluate an ablated variant")
    a.add_argument("ablate", nargs="+", choices=ABLATIONS)
    a.add_argument("--data")
    a.add_argument("--count", type=int, default=20)
    a.add_argument("--limit", type=int, default=0)
    return p


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "meta-train": cmd_meta_train, "finetune": cmd_finetune,
            "solve": cmd_solve, "eval": cmd_eval, "baseline": cmd_baseline, "hv": cmd_hv,
            "ablate": cmd_ablate}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    torch.set_num_threads(max(1, args.threads))
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](args, cfg)
    except (CliError, SchemaError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
