import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from divmoco.scalarization import (diversity_schedule, load_weights_csv, preference_schedule,
                                   sample_training_preference, sample_training_preferences,
                                   save_weights_csv, uniform_weight_set, ws_scalarize)

finite = st.floats(-100, 100, allow_nan=False)


def simplex(M):
    return arrays(np.float64, M, elements=st.floats(0, 1)).filter(lambda a: a.sum() > 1e-6).map(lambda a: a / a.sum())


def test_ws_examples():
    assert ws_scalarize([10, 0], [0.3, 0.7]) == pytest.approx(3.0)
    assert ws_scalarize([4.5, 9], [1, 0]) == 4.5
    assert ws_scalarize([3, 3, 3], [1 / 3] * 3) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        ws_scalarize([1, 2, 3], [0.5, 0.5])


@given(arrays(np.float64, 2, elements=finite), arrays(np.float64, 2, elements=finite), finite, finite, simplex(2))
def test_ws_is_linear(f1, f2, a, b, lam):
    lhs = ws_scalarize(a * f1 + b * f2, lam)
    rhs = a * ws_scalarize(f1, lam) + b * ws_scalarize(f2, lam)
    assert lhs == pytest.approx(rhs, abs=1e-7)


@given(arrays(np.float64, 3, elements=finite), arrays(np.float64, 3, elements=st.floats(0, 10)), simplex(3))
def test_ws_respects_dominance(f, delta, lam):
    assert ws_scalarize(f, lam) <= ws_scalarize(f + delta, lam) + 1e-9


def test_lattice_examples():
    assert np.allclose(uniform_weight_set(2, 2), [[1, 0], [0.5, 0.5], [0, 1]])
    assert len(uniform_weight_set(2, 39)) == 40
    assert len(uniform_weight_set(3, 19)) == 210


@pytest.mark.parametrize("M", [2, 3])
def test_lattice_count_formula(M):
    for H in range(1, 51):
        W = uniform_weight_set(M, H)
        assert len(W) == math.comb(H + M - 1, M - 1)
        assert np.allclose(W.sum(1), 1, atol=1e-12) and (W >= 0).all()
        assert len(np.unique(np.round(W * H).astype(int), axis=0)) == len(W)


def test_diversity_schedule():
    assert np.allclose(diversity_schedule(3), [[1, 0], [0.5, 0.5], [0, 1]])
    assert np.allclose(diversity_schedule(2), [[1, 0], [0, 1]])
    assert np.allclose(diversity_schedule(40).sum(1), 1)
    with pytest.raises(ValueError):
        diversity_schedule(1)


@given(st.integers(0, 2**31), st.sampled_from([2, 3]))
@settings(max_examples=50)
def test_shuffle_is_a_permutation(seed, M):
    sched = preference_schedule(M, shuffle_seed=seed)
    base = uniform_weight_set(M, 39 if M == 2 else 19)
    assert sorted(sched.order) == list(range(len(base)))
    assert np.array_equal(sched.weights, base[sched.order])
    assert np.allclose(sched.factors, diversity_schedule(len(base)))


def test_training_preference_is_deterministic_and_valid():
    lam, w = sample_training_preference(7, 3)
    lam2, w2 = sample_training_preference(7, 3)
    assert np.array_equal(lam, lam2) and np.array_equal(w, w2)
    assert abs(lam.sum() - 1) < 1e-12 and (lam >= 0).all()
    assert abs(w.sum() - 1) < 1e-12


@pytest.mark.parametrize("M", [2, 3])
def test_training_preference_mean(M):
    lam, w = sample_training_preferences(np.random.default_rng(0), M, 10**6)
    assert np.allclose(lam.mean(0), 1 / M, atol=0.01)
    assert np.allclose(w.mean(0), 0.5, atol=0.01)


def test_weight_scaling_renormalizes():
    sched = preference_schedule(2, H=3, shuffle_seed=None, scale=[2.0, 1.0])
    assert np.allclose(sched.weights.sum(1), 1)
    assert sched.weights[1][0] > 2 / 3 - 1e-12


def test_weights_csv_roundtrip(tmp_path):
    W = uniform_weight_set(3, 5)
    save_weights_csv(tmp_path / "w.csv", W)
    assert np.array_equal(load_weights_csv(tmp_path / "w.csv"), W)
    (tmp_path / "bad.csv").write_text("lambda1,lambda2\n0.5,0.6\n")
    with pytest.raises(ValueError, match="row 1"):
        load_weights_csv(tmp_path / "bad.csv")
