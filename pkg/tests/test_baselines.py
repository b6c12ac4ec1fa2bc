import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from divmoco.baselines import (enumerate_knapsack, greedy_ws_construct, knapsack_feasible_at,
                               pareto_local_search, random_policy, ws_dp_knapsack)
from divmoco.pareto import hv_exact, reference_box
from divmoco.problems import Instance, evaluate, generate_instance, to_min


def two_items():
    return Instance("MOKP", 2, 2, capacity=1.0, weights=[1.0, 1.0], values=[[1, 2], [2, 1]])


def test_dp_examples():
    assert ws_dp_knapsack(two_items(), [0.5, 0.5])[0] == pytest.approx(1.5)
    value, items = ws_dp_knapsack(two_items(), [1.0, 0.0])
    assert value == 2.0 and items == [1]
    with pytest.raises(ValueError):
        ws_dp_knapsack(two_items(), [0.5, 0.5], resolution=0)


@given(st.integers(0, 2**32), st.floats(0, 1))
@settings(max_examples=40)
def test_dp_matches_enumeration(seed, a):
    inst = generate_instance("MOKP", 12, 2, seed)
    lam = np.array([a, 1 - a])
    value, items = ws_dp_knapsack(inst, lam)
    assert value == pytest.approx(enumerate_knapsack(inst, lam), abs=1e-12)
    assert knapsack_feasible_at(inst, items)
    assert float(inst.values[items].sum(0) @ lam) == pytest.approx(value, abs=1e-12)


@given(st.integers(0, 2**32))
@settings(max_examples=30)
def test_dp_bounds_every_feasible_solution(seed):
    inst = generate_instance("MOKP", 15, 2, seed)
    lam = np.array([0.3, 0.7])
    best, _ = ws_dp_knapsack(inst, lam)
    for sol in random_policy(inst, 50, seed) + [greedy_ws_construct(inst, lam)]:
        assert evaluate(inst, sol) @ lam <= best + 1e-12


def test_greedy_collinear_tsp():
    xs = np.array([[0.0, 0], [0.3, 0], [0.9, 0]])
    inst = Instance("MOTSP", 3, 2, coords=np.stack([xs, xs], axis=1))
    tour = greedy_ws_construct(inst, [0.5, 0.5], start=0)
    assert tour == [0, 1, 2]
    best = min(itertools.permutations(range(3)), key=lambda t: evaluate(inst, t)[0])
    assert evaluate(inst, tour)[0] == pytest.approx(evaluate(inst, best)[0])


def test_greedy_uses_only_weighted_objective():
    rng = np.random.default_rng(0)
    c = rng.random((6, 2, 2))
    a = Instance("MOTSP", 6, 2, coords=c)
    c2 = c.copy()
    c2[:, 1] = rng.random((6, 2))
    b = Instance("MOTSP", 6, 2, coords=c2)
    assert greedy_ws_construct(a, [1, 0]) == greedy_ws_construct(b, [1, 0])


def test_greedy_single_item_fits():
    inst = Instance("MOKP", 2, 2, capacity=0.5, weights=[0.4, 0.45], values=[[0.1, 0.1], [0.9, 0.9]])
    assert greedy_ws_construct(inst, [0.5, 0.5]) == [1]


@given(st.sampled_from(["MOTSP", "MOCVRP", "MOKP"]), st.integers(0, 2**32), st.floats(0, 1))
@settings(max_examples=200)
def test_greedy_is_feasible(kind, seed, a):
    inst = generate_instance(kind, 12, 2, seed)
    evaluate(inst, greedy_ws_construct(inst, [a, 1 - a]))


def test_greedy_feasible_on_many_instances():
    for seed in range(10_000):
        kind = ("MOTSP", "MOCVRP", "MOKP")[seed % 3]
        inst = generate_instance(kind, 8, 2, seed)
        evaluate(inst, greedy_ws_construct(inst, [0.5, 0.5]))


def test_two_opt_uncrosses_square():
    sq = np.array([[0.0, 0], [1, 0], [1, 1], [0, 1]])
    inst = Instance("MOTSP", 4, 2, coords=np.stack([sq, sq], axis=1))
    archive = pareto_local_search(inst, [[0, 2, 1, 3]], 5)
    assert archive.points.tolist() == [[4.0, 4.0]]


def test_pls_zero_iterations_is_seed_filter():
    inst = generate_instance("MOTSP", 8, 2, 1)
    seeds = random_policy(inst, 30, 0)
    archive = pareto_local_search(inst, seeds, 0)
    F = np.array([evaluate(inst, s) for s in seeds])
    from oracles import brute_nondominated
    assert {tuple(p) for p in archive.points} == brute_nondominated(F)


@pytest.mark.parametrize("kind", ["MOTSP", "MOCVRP", "MOKP"])
def test_pls_hv_non_decreasing(kind):
    inst = generate_instance(kind, 10, 2, 3)
    box = reference_box(kind, 10, 2)
    seeds = random_policy(inst, 5, 1)
    prev = -1.0
    for it in range(0, 12, 3):
        a = pareto_local_search(inst, seeds, it, seed=0)
        a.check()
        hv = hv_exact(a.points, box.r, clip=True)
        assert hv >= prev - 1e-12
        prev = hv


def test_random_policy():
    inst = generate_instance("MOCVRP", 7, 2, 0)
    sols = random_policy(inst, 10, 3)
    assert sols == random_policy(inst, 10, 3)
    for s in sols:
        evaluate(inst, s)
    with pytest.raises(ValueError):
        random_policy(inst, 0)
