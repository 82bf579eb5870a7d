import math

import numpy as np
import pytest
from scipy.linalg import expm

from lclab import matrixineq as X
from lclab import measures as M
from lclab import mc


# --- trace inequality ------------------------------------------------------

def test_trace_identity_equality():
    H = X.random_symmetric(3, 1)
    assert X.trace_inequality_check(np.eye(3), H, 1.0, 2.0) == pytest.approx(0.0, abs=1e-12)


def test_trace_two_by_two():
    K = np.diag([2.0, 1.0])
    H = np.array([[0.0, 1.0], [1.0, 0.0]])
    # LHS = 2 Tr(K H K H) terms -> 4, RHS = Tr(K^2 H^2) = 5
    assert X.trace_inequality_check(K, H, 1.0, 1.0) == pytest.approx(1.0)


def test_trace_property_ten_thousand_draws(tmp_path):
    res = X.trace_inequality_property(trials=10_000, seed=3,
                                      dump_path=tmp_path / "bad.json")
    assert res["violations"] == 0
    assert res["min_slack"] >= 0.0
    assert not (tmp_path / "bad.json").exists()


def test_trace_rejects_bad_inputs():
    H = np.eye(2)
    with pytest.raises(ValueError, match="positive semi-definite"):
        X.trace_inequality_check(np.diag([1.0, -0.5]), H, 1.0, 1.0)
    with pytest.raises(ValueError, match="positive"):
        X.trace_inequality_check(np.eye(2), H, -1.0, 1.0)
    with pytest.raises(ValueError, match="symmetric"):
        X.trace_inequality_check(np.array([[1.0, 0.5], [0.0, 1.0]]), H, 1.0, 1.0)


def test_dump_matrices_roundtrip(tmp_path):
    import json
    path = tmp_path / "dump.json"
    X.dump_matrices(path, K=np.eye(2), H=np.array([[0.0, 1.0], [1.0, 0.0]]))
    data = json.loads(path.read_text())
    assert data["K"] == [[1.0, 0.0], [0.0, 1.0]]


# --- Hessian of Tr e^A -----------------------------------------------------

def test_exp_trace_zero_matrix_equality():
    H = X.random_symmetric(3, 5)
    slack = X.exp_trace_hessian_check(np.zeros((3, 3)), H)
    assert abs(slack) < 1e-6 * np.trace(H @ H)


def test_exp_trace_commuting_equality():
    A = np.diag([1.0, -0.5, 0.3])
    H = np.diag([0.7, 0.2, -1.1])
    bound = np.trace(expm(A) @ H @ H)
    assert abs(X.exp_trace_hessian_check(A, H)) < 1e-6 * bound


def test_exp_trace_random_pairs_nonnegative():
    for seed in range(10):
        A = X.random_symmetric(6, 2 * seed)
        H = X.random_symmetric(6, 2 * seed + 1)
        bound = np.trace(expm(A) @ H @ H)
        assert X.exp_trace_hessian_check(A, H) >= -1e-6 * max(bound, 1.0)


def test_exp_trace_shift_invariance():
    A = X.random_symmetric(6, 7)
    H = X.random_symmetric(6, 8)
    b0 = float(np.trace(expm(A) @ H @ H))
    s0 = X.exp_trace_hessian_check(A, H) / b0
    s2 = X.exp_trace_hessian_check(A + 2.0 * np.eye(6), H) / (b0 * math.e ** 2)
    assert abs(s0 - s2) < 1e-5


# --- soft-max proxy --------------------------------------------------------

def test_softmax_frozen_example():
    h = X.softmax_proxy(np.diag([1.0, 0.0]), math.log(2.0))
    assert h == pytest.approx(math.log(3) / math.log(2), abs=1e-12)
    assert 1.0 <= h <= 2.0


def test_softmax_large_beta_limit():
    Mx = X.random_symmetric(4, 9)
    lam = np.linalg.eigvalsh(Mx).max()
    assert abs(X.softmax_proxy(Mx, 1e4) - lam) < 1e-3


def test_softmax_scalar_matrix_closed_form():
    c, n, beta = 0.7, 5, 2.0
    assert X.softmax_proxy(c * np.eye(n), beta) == pytest.approx(
        c + math.log(n) / beta, abs=1e-12)


def test_softmax_sandwich_over_random_draws():
    for seed in range(50):
        Mx = X.random_symmetric(5, 100 + seed)
        beta = 0.1 + 0.3 * seed
        lam = np.linalg.eigvalsh(Mx).max()
        h = X.softmax_proxy(Mx, beta)
        assert lam <= h <= lam + math.log(5) / beta + 1e-12


def test_softmax_rejects_nonpositive_beta():
    with pytest.raises(ValueError):
        X.softmax_proxy(np.eye(2), 0.0)


# --- third-moment tensor ---------------------------------------------------

def test_third_tensor_gaussian_vanishes():
    b = mc.sample(M.gaussian(np.zeros(4), np.eye(4)), 200_000, seed=1)
    res = X.third_tensor_bounds(b, cp_known=1.0)
    assert res["kappa"] < 0.01
    assert res["kappa2"] < 0.05


def test_third_tensor_exponential_1d():
    b = mc.sample(M.product([M.shifted_exponential()]), 400_000, seed=2)
    res = X.third_tensor_bounds(b, cp_known=4.0)
    # E X^3 = 2, so the squared tensor norm is 4, against the bound 16
    assert abs(res["kappa2"] - 2.0) < 0.1
    assert abs(res["kappa"] - 4.0) < 0.4
    assert res["kappa_bound"] == pytest.approx(4.0 * 4.0 * res["cov_op_norm"] ** 2)


def test_third_tensor_exponential_product():
    b = mc.sample(M.product([M.shifted_exponential()] * 8), 200_000, seed=0)
    res = X.third_tensor_bounds(b, cp_known=4.0)
    assert abs(res["kappa"] - 4.0) < 4 * res["kappa_se"] + 0.5
    assert res["kappa"] <= res["kappa_bound"]


def test_third_moment_tensor_symmetry():
    rng = np.random.default_rng(0)
    x = rng.exponential(size=(5000, 3)) - 1.0
    t = X.third_moment_tensor(x - x.mean(axis=0))
    assert np.abs(t - np.transpose(t, (1, 0, 2))).max() < 1e-12
    assert np.abs(t - np.transpose(t, (2, 1, 0))).max() < 1e-12
