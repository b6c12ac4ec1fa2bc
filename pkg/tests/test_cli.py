import json

import numpy as np
import pytest

from divmoco.cli import main
from divmoco.io import SchemaError, load_instances, read_config, save_instances
from divmoco.pareto import load_front_csv
from divmoco.problems import generate_instance

TINY = """
[problem]
kind = {kind}
n = 7
[model]
d = 8
L = 1
Y = 2
ff_hidden = 16
hyper_hidden = 16
[train]
B = 2
N_prime = 2
E = 2
log_every = 1
[meta]
T_m = 1
N_prime = 1
E = 1
B = 2
E_f = 1
[solve]
N = 4
K = 3
"""


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def config(path, kind="MOTSP"):
    path.write_text(TINY.format(kind=kind))
    return str(path)


def test_hv_command(workdir, capsys):
    (workdir / "f.csv").write_text("f1,f2\n1,3\n2,2\n3,1\n")
    assert main(["hv", "--front", "f.csv", "--ref", "4,4", "--ideal", "0,0"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.375)


def test_train_solve_eval_roundtrip(workdir):
    cfg = config(workdir / "c.ini")
    assert main(["gen", "--config", cfg, "--count", "2", "--out-dir", "data"]) == 0
    assert main(["train", "--config", cfg, "--out-dir", "tr", "--seed", "3"]) == 0
    man = json.loads((workdir / "tr" / "manifest.json").read_text())
    assert man["seed"] == 3 and man["config"]["train"]["E"] == 2 and "torch" in man["versions"]
    assert main(["solve", "--config", cfg, "--model", "tr/model.json", "--data", "data/instances.jsonl",
                 "--out-dir", "sol"]) == 0
    m = json.loads((workdir / "sol" / "metrics_0000.json").read_text())
    assert set(m) == {"hv", "nds", "ds", "time_ms"} and 0 <= m["hv"] <= 1
    trace = (workdir / "sol" / "trace_0001.csv").read_text().splitlines()
    assert trace[0] == "i,hv,archive_size" and len(trace) == 5
    pts, sols = load_front_csv(workdir / "sol" / "front_0000.csv")
    assert pts.shape[1] == 2 and all(len(s) == 7 for s in sols)
    assert main(["eval", "--config", cfg, "--model", "tr/model.json", "--data", "data/instances.jsonl",
                 "--out-dir", "ev", "--aug", "partial", "--mpo-mode", "literal"]) == 0
    assert json.loads((workdir / "ev" / "summary.json").read_text())["instances"] == 2


def test_training_reproducible_from_manifest(workdir):
    cfg = config(workdir / "c.ini")
    main(["train", "--config", cfg, "--out-dir", "a"])
    main(["train", "--config", cfg, "--out-dir", "b"])
    ta = json.loads((workdir / "a" / "model.json").read_text())["tensors"]
    tb = json.loads((workdir / "b" / "model.json").read_text())["tensors"]
    assert ta == tb


def test_meta_pipeline(workdir):
    cfg = config(workdir / "c.ini", "MOKP")
    assert main(["gen", "--config", cfg, "--count", "1", "--out-dir", "data"]) == 0
    assert main(["meta-train", "--config", cfg, "--variant", "nhde-m", "--out-dir", "meta"]) == 0
    assert main(["finetune", "--config", cfg, "--variant", "nhde-m", "--model", "meta/meta.json",
                 "--out-dir", "subs"]) == 0
    assert len(list((workdir / "subs").glob("submodel_*.json"))) == 4
    assert main(["solve", "--config", cfg, "--variant", "nhde-m", "--model", "meta/meta.json",
                 "--submodels", "subs", "--data", "data/instances.jsonl", "--out-dir", "sol"]) == 0


def test_baselines(workdir):
    cfg = config(workdir / "c.ini", "MOKP")
    main(["gen", "--config", cfg, "--count", "2", "--out-dir", "data"])
    for method in ("ws-dp", "greedy", "random", "pls"):
        assert main(["baseline", "--config", cfg, "--method", method, "--data", "data/instances.jsonl",
                     "--out-dir", method, "--iterations", "3"]) == 0
        assert (workdir / method / "summary.json").exists()


def test_ablate(workdir):
    cfg = config(workdir / "c.ini")
    assert main(["ablate", "no-indicator", "no-mpo", "--config", cfg, "--count", "2", "--out-dir", "ab"]) == 0
    summary = json.loads((workdir / "ab" / "summary.json").read_text())
    assert summary["ablate"] == ["no-indicator", "no-mpo"]
    assert json.loads((workdir / "ab" / "model.json").read_text())["config"]["use_points"] is False


def test_missing_dataset_leaves_no_outputs(workdir, capsys):
    cfg = config(workdir / "c.ini")
    main(["train", "--config", cfg, "--out-dir", "tr"])
    assert main(["solve", "--config", cfg, "--model", "tr/model.json", "--data", "nope.jsonl",
                 "--out-dir", "out"]) != 0
    assert not (workdir / "out").exists()
    assert "not found" in capsys.readouterr().err


def test_bad_inputs(workdir, capsys):
    (workdir / "bad.ini").write_text("[train]\nlr = fast\n")
    assert main(["train", "--config", "bad.ini", "--out-dir", "x"]) == 1
    assert "train.lr" in capsys.readouterr().err
    (workdir / "bad2.ini").write_text("[model]\nwidth = 3\n")
    assert main(["train", "--config", "bad2.ini", "--out-dir", "x"]) == 1
    (workdir / "bad3.ini").write_text("no section\n")
    assert main(["train", "--config", "bad3.ini", "--out-dir", "x"]) == 1
    assert not (workdir / "x").exists()
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code != 0


def test_kind_mismatch(workdir, capsys):
    cfg = config(workdir / "c.ini")
    main(["train", "--config", cfg, "--out-dir", "tr"])
    save_instances(workdir / "kp.jsonl", [generate_instance("MOKP", 7, 2, 0)])
    assert main(["solve", "--config", cfg, "--model", "tr/model.json", "--data", "kp.jsonl",
                 "--out-dir", "o"]) == 1
    assert "MOKP" in capsys.readouterr().err


@pytest.mark.parametrize("kind,M", [("MOTSP", 3), ("MOCVRP", 2), ("MOKP", 2)])
def test_instance_roundtrip(tmp_path, kind, M):
    insts = [generate_instance(kind, 9, M, s) for s in range(3)]
    save_instances(tmp_path / "d.jsonl", insts)
    assert load_instances(tmp_path / "d.jsonl") == insts


def test_instance_schema_errors(tmp_path):
    good = (tmp_path / "ok.jsonl")
    save_instances(good, [generate_instance("MOCVRP", 5, 2, 0)])
    line = json.loads(good.read_text())
    del line["demands"]
    (tmp_path / "bad.jsonl").write_text(good.read_text() + json.dumps(line) + "\n")
    with pytest.raises(SchemaError, match=r"bad.jsonl:2: missing field 'demands'"):
        load_instances(tmp_path / "bad.jsonl")
    (tmp_path / "junk.jsonl").write_text("{not json\n")
    with pytest.raises(SchemaError, match=":1: invalid JSON"):
        load_instances(tmp_path / "junk.jsonl")


def test_config_keeps_symbol_case(tmp_path):
    (tmp_path / "c.ini").write_text("[meta]\nT_m = 3\nE_f = 50\n")
    assert read_config(tmp_path / "c.ini") == {"meta": {"T_m": "3", "E_f": "50"}}
