"""Transport solver checks: primal vs brute force, constructed duals,
cyclical monotonicity, planar non-crossing, and serialization."""

import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lclab import monge as T


def _random_uniform(rng, m, dim=2):
    return T.uniform_instance(rng.random((m, dim)), rng.random((m, dim)))


# ---------------------------------------------------------------------------
# primal
# ---------------------------------------------------------------------------

def test_single_atom_pair():
    inst = T.uniform_instance([[0.0, 0.0]], [[1.0, 0.0]])
    r = T.solve_primal(inst)
    assert r["cost"] == 1.0
    assert np.array_equal(r["coupling"], [[1.0]])


def test_identical_measures_zero_cost_diagonal():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0, 2.0]])
    inst = T.uniform_instance(pts, pts)
    r = T.solve_primal(inst)
    assert r["cost"] == 0.0
    assert np.allclose(r["coupling"], np.eye(4) / 4.0)


def test_vertical_matching_beats_crossing():
    inst = T.uniform_instance([[0.0, 0.0], [1.0, 0.0]],
                              [[0.0, 1.0], [1.0, 1.0]])
    r = T.solve_primal(inst)
    assert abs(r["cost"] - 1.0) < 1e-14  # crossing would cost sqrt(2)
    assert np.allclose(r["coupling"], np.eye(2) / 2.0)


def test_unequal_mass_rejected():
    inst = T.TransportInstance([[0.0]], [1.0], [[1.0]], [0.7])
    with pytest.raises(ValueError, match="unequal total mass"):
        T.solve_primal(inst)


def test_oversized_instance_rejected():
    pts = np.zeros((1001, 1))
    inst = T.uniform_instance(pts, pts)
    with pytest.raises(ValueError, match="too large"):
        T.solve_primal(inst)


def test_lp_handles_unequal_weights():
    inst = T.TransportInstance([[0.0]], [1.0], [[-1.0], [1.0]], [0.5, 0.5])
    r = T.solve_primal(inst)
    assert r["method"] == "lp"
    assert abs(r["cost"] - 1.0) < 1e-12
    assert np.allclose(r["coupling"], [[0.5, 0.5]], atol=1e-12)
    assert inst.validate()


def test_assignment_lp_and_brute_force_agree():
    rng = np.random.default_rng(7)
    for _ in range(30):
        xs, ys = rng.random((6, 2)), rng.random((6, 2))
        cost_asgn = T.solve_primal(T.uniform_instance(xs, ys))["cost"]
        cost_lp = T.solve_primal(T.uniform_instance(xs, ys),
                                 method="lp")["cost"]
        cost_brute = T.brute_force_matching(T.uniform_instance(xs, ys))["cost"]
        assert abs(cost_asgn - cost_brute) < 1e-12
        assert abs(cost_lp - cost_brute) < 1e-9


def test_brute_force_guards():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="8 atoms"):
        T.brute_force_matching(_random_uniform(rng, 9))
    inst = T.TransportInstance([[0.0]], [1.0], [[-1.0], [1.0]], [0.5, 0.5])
    with pytest.raises(ValueError, match="uniform"):
        T.brute_force_matching(inst)


def test_two_opt_stability_of_optimal_matching():
    rng = np.random.default_rng(11)
    xs, ys = rng.random((30, 2)), rng.random((30, 2))
    inst = T.uniform_instance(xs, ys)
    T.solve_primal(inst)
    pairs = T._support_pairs(inst)
    x, y = xs[pairs[:, 0]], ys[pairs[:, 1]]
    d = lambda a, b: float(np.hypot(*(a - b)))
    for i in range(30):
        for j in range(i + 1, 30):
            kept = d(x[i], y[i]) + d(x[j], y[j])
            swapped = d(x[i], y[j]) + d(x[j], y[i])
            assert swapped >= kept - 1e-10


def test_cost_invariant_under_rotation_translation():
    rng = np.random.default_rng(3)
    xs, ys = rng.random((20, 2)), rng.random((20, 2))
    base = T.solve_primal(T.uniform_instance(xs, ys))["cost"]
    th = 0.83
    R = np.array([[math.cos(th), -math.sin(th)],
                  [math.sin(th), math.cos(th)]])
    moved = T.solve_primal(
        T.uniform_instance(xs @ R.T + 3.0, ys @ R.T + 3.0))["cost"]
    assert abs(base - moved) < 1e-10


# ---------------------------------------------------------------------------
# dual construction
# ---------------------------------------------------------------------------

def test_dual_single_pair_gains_the_distance():
    inst = T.uniform_instance([[0.0, 0.0]], [[3.0, 4.0]])
    T.solve_primal(inst)
    rep = T.build_dual(inst)
    assert abs((rep["u"][1] - rep["u"][0]) - 5.0) < 1e-12
    assert abs(rep["dual_value"] - 5.0) < 1e-12


def test_dual_identical_measures_value_zero():
    pts = np.array([[0.0, 0.0], [1.0, 2.0], [-1.0, 0.5]])
    inst = T.uniform_instance(pts, pts)
    T.solve_primal(inst)
    rep = T.build_dual(inst)
    assert abs(rep["dual_value"]) < 1e-12
    assert rep["support_gap"] < 1e-12


def test_strong_duality_on_random_instances():
    rng = np.random.default_rng(5)
    for _ in range(25):
        inst = _random_uniform(rng, 5)
        primal = T.solve_primal(inst)["cost"]
        rep = T.build_dual(inst)
        assert abs(rep["dual_value"] - primal) < 1e-9
        assert rep["lipschitz_slack"] <= 1e-9
        assert rep["support_gap"] <= 1e-9
        assert inst.validate()


def test_dual_requires_coupling():
    inst = T.uniform_instance([[0.0, 0.0]], [[1.0, 0.0]])
    with pytest.raises(ValueError, match="needs a coupling"):
        T.build_dual(inst)


def test_crossed_coupling_is_not_cyclically_monotone():
    inst = T.uniform_instance([[0.0, 0.0], [1.0, 0.0]],
                              [[0.0, 1.0], [1.0, 1.0]])
    inst.coupling = np.array([[0.0, 0.5], [0.5, 0.0]])  # the sqrt(2) match
    with pytest.raises(ValueError, match="not cyclically monotone"):
        T.build_dual(inst)


def test_duality_gap_helper():
    rng = np.random.default_rng(9)
    inst = _random_uniform(rng, 6)
    T.solve_primal(inst)
    rep = T.duality_gap(inst)
    assert abs(rep["gap"]) < 1e-9


# ---------------------------------------------------------------------------
# cyclical monotonicity
# ---------------------------------------------------------------------------

def test_optimal_coupling_has_no_violations():
    rng = np.random.default_rng(13)
    inst = _random_uniform(rng, 40)
    T.solve_primal(inst)
    rep = T.cyclical_monotonicity_check(inst, subset_size=4, n_subsets=150)
    assert rep["ok"] and rep["worst"] >= -1e-10


def test_crossed_matching_violation_detected():
    inst = T.uniform_instance([[0.0, 0.0], [1.0, 0.0]],
                              [[0.0, 1.0], [1.0, 1.0]])
    inst.coupling = np.array([[0.0, 0.5], [0.5, 0.0]])
    rep = T.cyclical_monotonicity_check(inst)
    assert not rep["ok"]
    assert abs(rep["worst"] - (2.0 - 2.0 * math.sqrt(2.0))) < 1e-12


def test_single_pair_is_vacuous():
    inst = T.uniform_instance([[0.0, 0.0]], [[1.0, 0.0]])
    T.solve_primal(inst)
    rep = T.cyclical_monotonicity_check(inst)
    assert rep["worst"] == 0.0 and rep["n_subsets"] == 0


def test_subset_size_capped():
    inst = T.uniform_instance([[0.0, 0.0]], [[1.0, 0.0]])
    T.solve_primal(inst)
    with pytest.raises(ValueError, match="capped at 7"):
        T.cyclical_monotonicity_check(inst, subset_size=8)


# ---------------------------------------------------------------------------
# planar crossings
# ---------------------------------------------------------------------------

def test_optimal_matching_has_no_crossings():
    rng = np.random.default_rng(17)
    inst = _random_uniform(rng, 50)
    T.solve_primal(inst)
    rep = T.noncrossing_check(inst)
    assert rep["crossings"] == 0
    assert rep["pairs_checked"] == 50 * 49 // 2


def test_random_matching_crossings_reported():
    rng = np.random.default_rng(17)
    xs, ys = rng.random((50, 2)), rng.random((50, 2))
    inst = T.uniform_instance(xs, ys)
    perm = rng.permutation(50)
    inst.coupling = np.zeros((50, 50))
    inst.coupling[np.arange(50), perm] = 1.0 / 50.0
    rep = T.noncrossing_check(inst)
    assert rep["crossings"] >= 0  # reported, not asserted to be positive


def test_crossing_predicate_cases():
    x_pattern = np.array([[[0.0, 0.0], [1.0, 1.0]],
                          [[0.0, 1.0], [1.0, 0.0]]])
    assert T.noncrossing_check(x_pattern)["crossings"] == 1
    overlap = np.array([[[0.0, 0.0], [2.0, 0.0]],
                        [[1.0, 0.0], [3.0, 0.0]]])
    assert T.noncrossing_check(overlap)["crossings"] == 0
    shared = np.array([[[0.0, 0.0], [1.0, 1.0]],
                       [[1.0, 1.0], [2.0, 0.0]]])
    assert T.noncrossing_check(shared)["crossings"] == 0


def test_crossing_check_needs_permutation_coupling():
    inst = T.TransportInstance([[0.0, 0.0]], [1.0],
                               [[-1.0, 0.0], [1.0, 0.0]], [0.5, 0.5])
    T.solve_primal(inst)
    with pytest.raises(ValueError, match="permutation coupling"):
        T.noncrossing_check(inst)
    inst1d = T.uniform_instance([[0.0]], [[1.0]])
    T.solve_primal(inst1d)
    with pytest.raises(ValueError, match="planar"):
        T.noncrossing_check(inst1d)


# ---------------------------------------------------------------------------
# properties and serialization
# ---------------------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(m=st.integers(2, 6), seed=st.integers(0, 10_000))
def test_duality_and_monotonicity_property(m, seed):
    rng = np.random.default_rng(seed)
    inst = _random_uniform(rng, m)
    primal = T.solve_primal(inst)["cost"]
    brute = T.brute_force_matching(inst)["cost"]
    assert abs(primal - brute) < 1e-12
    assert abs(T.build_dual(inst)["dual_value"] - primal) < 1e-9
    assert T.cyclical_monotonicity_check(inst, subset_size=min(m, 5))["ok"]


def test_instance_json_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    inst = _random_uniform(rng, 4)
    path = os.path.join(tmp_path, "inst.json")
    T.instance_to_json(inst, path)
    back = T.instance_from_json(path)
    assert np.allclose(back.source_points, inst.source_points)
    assert np.allclose(back.target_weights, inst.target_weights)
    assert abs(T.solve_primal(back)["cost"]
               - T.solve_primal(inst)["cost"]) < 1e-12


def test_results_csv(tmp_path):
    path = os.path.join(tmp_path, "rows.csv")
    T.results_to_csv([{"cost": 1.25, "dual_value": 1.25, "gap": 0.0,
                       "crossings": 0}], path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    assert lines[0] == "cost,dual_value,gap,crossings"
    assert lines[1].split(",") == ["1.25", "1.25", "0.0", "0"]
