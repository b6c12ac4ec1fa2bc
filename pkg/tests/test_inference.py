import numpy as np
import pytest
import torch

from divmoco.hga import ModelConfig, init_params
from divmoco.inference import SolveConfig, duplicates_count, metrics, solve_sequence
from divmoco.mpo import MpoConfig
from divmoco.pareto import ParetoArchive, ReferenceBox, reference_box
from divmoco.problems import evaluate, generate_instance, to_min
from divmoco.scalarization import preference_schedule
from divmoco.training import Variant

TINY = dict(d=8, L=1, Y=2, ff_hidden=16, hyper_hidden=16)


def model_for(kind, M=2, **kw):
    return init_params(ModelConfig(kind=kind, M=M, **TINY, **kw), 0)


def test_metrics_examples():
    box = ReferenceBox(np.array([2.0, 2.0]), np.zeros(2))
    a = ParetoArchive(2)
    assert metrics(a, box) == {"hv": 0.0, "nds": 0}
    a.insert((1.0, 1.0))
    assert metrics(a, box) == {"hv": 0.25, "nds": 1}
    b = reference_box("MOTSP", 20, 2)
    assert b.r.tolist() == [20, 20]
    with pytest.raises(ValueError):
        metrics(np.array([[-1.0, 1.0]]), box)


def test_duplicates_count():
    assert duplicates_count([(1, 2), (1, 2), (3, 4)]) == 1
    assert duplicates_count([(1, 2), (2, 1)]) == 0


@pytest.mark.parametrize("kind,M,aug", [("MOTSP", 2, "none"), ("MOTSP", 3, "none"), ("MOCVRP", 2, "full"),
                                        ("MOKP", 2, "none"), ("MOTSP", 2, "partial")])
@pytest.mark.parametrize("mode", ["archive_preserving", "literal"])
def test_pipeline_invariants(kind, M, aug, mode):
    inst = generate_instance(kind, 8, M, 5)
    sched = preference_schedule(M, H=5 if M == 2 else 3)
    res = solve_sequence(model_for(kind, M), inst, sched, SolveConfig(aug=aug, mpo=MpoConfig(K=3, J=20, mode=mode)))
    res.archive.check()
    hv = [t["hv"] for t in res.trace]
    assert len(hv) == len(sched)
    if mode == "archive_preserving":
        assert all(b >= a - 1e-15 for a, b in zip(hv, hv[1:]))
    assert 0 <= res.hv <= 1
    assert res.nds + res.duplicates + res.dominated == res.generated
    assert res.dominated >= 0
    for p, s in zip(res.natural_points(), res.archive.solutions):
        assert np.array_equal(evaluate(inst, s), p)
    assert max(res.comparisons) <= (3 + 1 + 20) * 20


def test_partial_augmentation_multiplies_candidates():
    inst = generate_instance("MOTSP", 6, 2, 0)
    sched = preference_schedule(2, H=1)
    plain = solve_sequence(model_for("MOTSP"), inst, sched, SolveConfig())
    aug = solve_sequence(model_for("MOTSP"), inst, sched, SolveConfig(aug="partial"))
    assert aug.generated == 32 * plain.generated


def test_single_scalarized_solve():
    inst = generate_instance("MOTSP", 7, 2, 1)
    res = solve_sequence(model_for("MOTSP"), inst, [(np.array([1.0, 0.0]), np.array([1.0, 0.0]))],
                         SolveConfig(mpo=MpoConfig(enabled=False)))
    assert res.nds == 1 and len(res.trace) == 1


def test_no_indicator_variant_ignores_front():
    inst = generate_instance("MOTSP", 7, 2, 2)
    model = model_for("MOTSP", use_points=False)
    res = solve_sequence(model, inst, preference_schedule(2, H=4),
                         SolveConfig(variant=Variant(indicator=False), mpo=MpoConfig(K=0)))
    assert res.nds >= 1


def test_permuted_schedule_gives_valid_archives():
    inst = generate_instance("MOTSP", 8, 2, 3)
    model = model_for("MOTSP")
    a = solve_sequence(model, inst, preference_schedule(2, H=9, shuffle_seed=0))
    b = solve_sequence(model, inst, preference_schedule(2, H=9, shuffle_seed=1))
    for r in (a, b):
        r.archive.check()
        assert 0 <= r.hv <= 1


def test_submodels_are_used_per_preference():
    inst = generate_instance("MOTSP", 6, 2, 0)
    cfg = ModelConfig(kind="MOTSP", M=2, conditioning="direct", **TINY)
    subs = [init_params(cfg, s) for s in range(3)]
    sched = preference_schedule(2, H=2)
    res = solve_sequence(subs[0], inst, sched, submodels=subs)
    assert len(res.trace) == 3
    with pytest.raises(ValueError):
        solve_sequence(subs[0], inst, sched, submodels=subs[:2])


def test_solve_is_deterministic():
    inst = generate_instance("MOCVRP", 8, 2, 0)
    m = model_for("MOCVRP")
    a = solve_sequence(m, inst, preference_schedule(2, H=4), SolveConfig(rollout="sample", seed=3))
    b = solve_sequence(m, inst, preference_schedule(2, H=4), SolveConfig(rollout="sample", seed=3))
    assert np.array_equal(a.archive.points, b.archive.points)


def test_duplicate_split_matches_batch_oracle(monkeypatch):
    import divmoco.inference as inference
    batches = []
    real = inference.evaluate_many

    def record(inst, sols):
        F = real(inst, sols)
        batches.append(F.copy())
        return F

    monkeypatch.setattr(inference, "evaluate_many", record)
    inst = generate_instance("MOTSP", 8, 2, 4)
    res = solve_sequence(model_for("MOTSP"), inst, preference_schedule(2, H=9))
    seen, within, across = set(), 0, 0
    for F in batches:
        keys = [tuple(p) for p in F]
        within += len(keys) - len(set(keys))
        across += len(set(keys) & seen)
        seen |= set(keys)
    assert (res.duplicates_within, res.duplicates_across) == (within, across)
    assert res.duplicates == duplicates_count(np.concatenate(batches))

    one = solve_sequence(model_for("MOTSP"), inst, [(np.array([0.5, 0.5]), np.array([1.0, 0.0]))])
    assert one.duplicates_across == 0
