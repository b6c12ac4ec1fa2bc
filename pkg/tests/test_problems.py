import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from divmoco.problems import (Instance, InfeasibleSolution, Kind, augment, augmentation_plan,
                              cvrp_routes, default_capacity, evaluate, evaluate_many,
                              feasible_actions, generate_instance, node_features, to_min)


def square_tsp():
    pts = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    return Instance("MOTSP", 4, 2, coords=np.stack([pts, pts[::-1]], axis=1))


def test_square_tour_lengths():
    inst = square_tsp()
    assert np.allclose(evaluate(inst, [0, 1, 2, 3]), [4.0, 4.0])
    assert np.allclose(evaluate(inst, [0, 2, 1, 3]), [2 + 2 * np.sqrt(2)] * 2)


def test_tsp_rejects_non_permutation():
    inst = square_tsp()
    with pytest.raises(InfeasibleSolution):
        evaluate(inst, [0, 1, 1, 3])
    with pytest.raises(InfeasibleSolution):
        evaluate(inst, [0, 1, 2])


def test_tour_rotation_and_reversal_are_bit_identical():
    inst = generate_instance("MOTSP", 15, 3, 7)
    tour = list(np.random.default_rng(0).permutation(15))
    base = evaluate(inst, tour)
    for k in range(15):
        rot = tour[k:] + tour[:k]
        assert np.array_equal(evaluate(inst, rot), base)
        assert np.array_equal(evaluate(inst, rot[::-1]), base)


def test_cvrp_giant_sequence_split():
    inst = Instance("MOCVRP", 3, 2, capacity=10.0, depot=[0, 0],
                    coords=[[1, 0], [2, 0], [3, 0]], demands=[6, 5, 4])
    assert cvrp_routes(inst, [0, 1, 2]) == [[0], [1, 2]]
    total, longest = evaluate(inst, [0, 1, 2])
    assert total == pytest.approx(2 + 6)
    assert longest == pytest.approx(6)


def test_knapsack_objectives_and_capacity():
    inst = Instance("MOKP", 3, 2, capacity=1.0, weights=[0.5, 0.6, 0.4],
                    values=[[1, 0], [0, 1], [0.5, 0.5]])
    assert np.allclose(evaluate(inst, [0, 2]), [1.5, 0.5])
    assert np.allclose(evaluate(inst, []), [0, 0])
    with pytest.raises(InfeasibleSolution):
        evaluate(inst, [0, 1])
    assert np.allclose(to_min("MOKP", [1.5, 0.5]), [-1.5, -0.5])


@given(st.sampled_from(["MOTSP", "MOCVRP", "MOKP"]), st.integers(2, 30), st.integers(0, 2**63 - 1))
@settings(max_examples=300)
def test_generated_instances_are_valid(kind, n, seed):
    M = 2
    inst = generate_instance(kind, n, M, seed)
    inst.check()
    assert inst == generate_instance(kind, n, M, seed)


def test_generation_over_many_seeds():
    for seed in range(10_000):
        kind = ("MOTSP", "MOCVRP", "MOKP")[seed % 3]
        generate_instance(kind, 10 + seed % 7, 2, seed).check()


def test_capacity_anchors():
    assert default_capacity("MOCVRP", 20) == 30
    assert default_capacity("MOCVRP", 50) == 40
    assert default_capacity("MOCVRP", 100) == 50
    assert default_capacity("MOCVRP", 75) == pytest.approx(45)
    assert default_capacity("MOKP", 50) == 12.5
    assert default_capacity("MOKP", 100) == 25
    assert default_capacity("MOKP", 200) == 25
    assert default_capacity("MOKP", 12) == 3.0


def test_mask_examples():
    tsp = generate_instance("MOTSP", 3, 2, 0)
    assert feasible_actions(tsp, [0]).tolist() == [True, False, False]
    cvrp = Instance("MOCVRP", 2, 2, capacity=7.0, depot=[0, 0], coords=[[0, 1], [1, 0]], demands=[5, 5])
    # after customer 0 the remaining capacity is 2, so customer 1 needs a depot refill first
    rem_mask = feasible_actions(cvrp, [0])
    assert rem_mask.tolist() == [True, False]
    kp = Instance("MOKP", 2, 2, capacity=0.6, weights=[0.5, 0.5], values=[[1, 1], [1, 1]])
    assert feasible_actions(kp, [0]).tolist() == [True, True]


@given(st.integers(0, 10_000), st.sampled_from(["MOTSP", "MOCVRP", "MOKP"]))
@settings(max_examples=100)
def test_random_masked_walk_terminates_feasibly(seed, kind):
    inst = generate_instance(kind, 9, 2, seed)
    rng = np.random.default_rng(seed)
    sol = []
    while True:
        mask = feasible_actions(inst, sol)
        if mask.all():
            break
        sol.append(int(rng.choice(np.flatnonzero(~mask))))
    if kind != "MOKP":
        assert len(sol) == inst.n
    evaluate(inst, sol)


def test_augmentation_counts():
    assert len(augmentation_plan("MOTSP", 2, "full")) == 64
    assert len(augmentation_plan("MOTSP", 2, "partial")) == 32
    assert len(augmentation_plan("MOTSP", 3, "full")) == 512
    assert len(augmentation_plan("MOTSP", 3, "partial")) == 128
    assert len(augmentation_plan("MOCVRP", 2, "full")) == 8
    with pytest.raises(ValueError):
        augmentation_plan("MOKP", 2, "full")


@given(st.integers(0, 2**32), st.sampled_from(["full", "partial"]))
@settings(max_examples=20)
def test_augmentation_preserves_objectives(seed, mode):
    inst = generate_instance("MOCVRP", 8, 2, seed)
    sol = list(np.random.default_rng(seed).permutation(8))
    base = evaluate(inst, sol)
    for v in augment(inst, mode):
        assert np.allclose(evaluate(v, sol), base, atol=1e-9, rtol=0)


def test_evaluate_many_matches_single():
    inst = generate_instance("MOTSP", 12, 3, 3)
    rng = np.random.default_rng(3)
    sols = [list(rng.permutation(12)) for _ in range(20)]
    assert np.array_equal(evaluate_many(inst, sols), np.array([evaluate(inst, s) for s in sols]))


def test_node_features_shapes():
    assert node_features(generate_instance("MOTSP", 5, 3, 0)).shape == (5, 6)
    assert node_features(generate_instance("MOCVRP", 5, 2, 0)).shape == (5, 3)
    assert node_features(generate_instance("MOKP", 5, 2, 0)).shape == (5, 3)


def test_invalid_objective_counts():
    with pytest.raises(ValueError):
        generate_instance("MOCVRP", 5, 3, 0)
    with pytest.raises(ValueError):
        generate_instance("MOTSP", 5, 4, 0)
