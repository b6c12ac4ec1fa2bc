"""File formats: instance datasets, metrics, traces, run manifests and configs."""
from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import platform
import sys
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .problems import Instance, Kind

ARRAY_FIELDS = {
    Kind.MOTSP: ("coords",),
    Kind.MOCVRP: ("coords", "depot", "demands"),
    Kind.MOKP: ("weights", "values"),
}


class SchemaError(ValueError):
    pass


def instance_to_dict(inst: Instance) -> dict:
    out: dict[str, Any] = {"kind": inst.kind.value, "n": inst.n, "M": inst.M}
    for name in ARRAY_FIELDS[inst.kind]:
        out[name] = getattr(inst, name).tolist()
    out["capacity"] = inst.capacity
    out["seed"] = inst.seed
    return out


def instance_from_dict(obj: dict, where: str = "instance") -> Instance:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected a JSON object")
    try:
        kind = Kind(obj.get("kind"))
    except ValueError:
        raise SchemaError(f"{where}: field 'kind' must be one of MOTSP, MOCVRP, MOKP") from None
    for key in ("n", "M"):
        if not isinstance(obj.get(key), int):
            raise SchemaError(f"{where}: field {key!r} must be an integer")
    arrays = {}
    for name in ARRAY_FIELDS[kind]:
        if name not in obj:
            raise SchemaError(f"{where}: missing field {name!r}")
        try:
            arrays[name] = np.asarray(obj[name], dtype=np.float64)
        except (TypeError, ValueError):
            raise SchemaError(f"{where}: field {name!r} is not a numeric array") from None
    if kind is Kind.MOCVRP:
        d = arrays["demands"]
        if not np.array_equal(d, np.round(d)):
            raise SchemaError(f"{where}: field 'demands' must hold integers")
    cap = obj.get("capacity")
    if kind is not Kind.MOTSP and not isinstance(cap, (int, float)):
        raise SchemaError(f"{where}: field 'capacity' must be a number")
    inst = Instance(kind, obj["n"], obj["M"], capacity=None if cap is None else float(cap),
                    seed=obj.get("seed"), **arrays)
    try:
        inst.check()
    except ValueError as exc:
        raise SchemaError(f"{where}: {exc}") from None
    return inst


def save_instances(path: str | Path, instances: Iterable[Instance]) -> None:
    with open(path, "w") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_dict(inst)) + "\n")


def load_instances(path: str | Path) -> list[Instance]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            out.append(instance_from_dict(obj, f"{path}:{lineno}"))
    return out


def save_metrics(path: str | Path, metrics: dict) -> None:
    Path(path).write_text(json.dumps({k: metrics[k] for k in ("hv", "nds", "ds", "time_ms") if k in metrics},
                                     indent=2) + "\n")


def save_trace(path: str | Path, trace: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "hv", "archive_size"])
        for row in trace:
            w.writerow([row["i"], repr(float(row["hv"])), row["archive_size"]])


def versions() -> dict:
    import numba
    import torch

    from . import __version__
    return {"divmoco": __version__, "python": sys.version.split()[0], "platform": platform.platform(),
            "numpy": np.__version__, "torch": torch.__version__, "numba": numba.__version__}


def write_manifest(out_dir: str | Path, command: str, argv: list[str], config: dict, seed: int) -> Path:
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps({"command": command, "argv": argv, "seed": seed,
                                "config": config, "versions": versions()}, indent=2, default=_jsonable) + "\n")
    return path


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer, np.floating)):
        return x.item()
    if dataclasses.is_dataclass(x):
        return dataclasses.asdict(x)
    return str(x)


# ------------------------------------------------------------------ configs


def read_config(path: str | Path) -> dict[str, dict[str, str]]:
    """INI file -> {section: {key: raw string}}. Keys keep their case (K, N_prime, ...)."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise SchemaError(f"{path}: malformed config ({exc.message.splitlines()[0]})") from None
    return {s: dict(parser[s]) for s in parser.sections()}


def _coerce(raw: str, default, where: str):
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise SchemaError(f"{where}: expected a boolean, got {raw!r}")
    if raw.strip().lower() == "none":
        return None
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise SchemaError(f"{where}: expected a number, got {raw!r}") from None
    if default is None:
        for conv in (int, float):
            try:
                return conv(raw)
            except ValueError:
                pass
    return raw.strip()


def fill_dataclass(cls, section: dict[str, str] | None, where: str, **overrides):
    """Build ``cls`` from its defaults, the config section and explicit overrides."""
    base = cls()
    values = {}
    names = {f.name for f in dataclasses.fields(cls)}
    for key, raw in (section or {}).items():
        if key not in names:
            raise SchemaError(f"{where}: unknown key {key!r}")
        values[key] = _coerce(raw, getattr(base, key), f"{where}.{key}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return dataclasses.replace(base, **values)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {exc}") from None
