"""Isotropic constants, the entropy sandwich, log-Laplace geometry, and
hyperplane sections: closed forms against frozen values, estimator paths
against the closed forms, and the containment/inequality checks."""

import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lclab import measures as M
from lclab import slicing as S

L_CUBE = 1.0 / math.sqrt(12.0)


def _std_gaussian(n):
    return M.gaussian(np.zeros(n), np.eye(n))


# ---------------------------------------------------------------------------
# isotropic constants, closed forms
# ---------------------------------------------------------------------------

def test_cube_constant_every_dim_and_side():
    for m in (M.isotropic_cube(2), M.isotropic_cube(4),
              M.uniform_body(M.ConvexBody("cube", 3, side=1.0,
                                          centered=True))):
        assert abs(S.isotropic_constant(m).L - L_CUBE) < 1e-12


def test_gaussian_constant_is_the_lower_bound():
    for n in (1, 3, 6):
        rep = S.isotropic_constant(_std_gaussian(n))
        assert abs(rep.L - S.GAUSSIAN_L) < 1e-12
        rep.validate()


def test_simplex_constant_closed_form():
    rep = S.isotropic_constant(M.isotropic_simplex(2))
    assert abs(rep.L - 0.3102016197006999) < 1e-12
    assert abs(rep.L - S.simplex_isotropic_constant(2)) < 1e-12
    # a 1-simplex is an interval, so the formula must collapse to the cube
    assert abs(S.simplex_isotropic_constant(1) - L_CUBE) < 1e-12


def test_ball_constant_closed_form():
    rep = S.isotropic_constant(M.isotropic_ball(2))
    assert abs(rep.L - (4.0 * math.pi) ** -0.5) < 1e-12


def test_catalog_lower_bound():
    catalog = [M.isotropic_cube(3), M.isotropic_ball(3),
               M.isotropic_simplex(2), M.exp_product(4), _std_gaussian(2),
               M.complex_exponential(2),
               M.product([M.interval(-2.0, 1.0), M.shifted_exponential()])]
    for m in catalog:
        rep = S.isotropic_constant(m)
        assert rep.L >= S.GAUSSIAN_L - 1e-12
        rep.validate()


def test_affine_invariance():
    out = S.affine_invariance_check(M.isotropic_cube(2), n_trials=12, seed=3)
    assert out["ok"]
    assert out["worst_change"] < 1e-9


def test_product_rule_geometric_mean():
    pairs = [(M.exp_product(2), _std_gaussian(2)),
             (M.isotropic_cube(2), M.isotropic_ball(2))]
    for a, b in pairs:
        Lp = S.isotropic_constant(M.product([a, b])).L
        La, Lb = S.isotropic_constant(a).L, S.isotropic_constant(b).L
        assert abs(Lp - math.sqrt(La * Lb)) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(0.1, 4.0))
def test_interval_constant_is_scale_free(a, width):
    m = M.interval(a, a + width)
    assert abs(S.isotropic_constant(m).L - L_CUBE) < 1e-10


def test_closed_form_requires_exact_entropy():
    atoms = M.finite_atoms(np.array([[0.0], [1.0]]), np.array([0.5, 0.5]))
    with pytest.raises(ValueError, match="closed-form entropy"):
        S.isotropic_constant(atoms)


# ---------------------------------------------------------------------------
# isotropic constants, sampled entropy
# ---------------------------------------------------------------------------

def test_mc_entropy_reproduces_cube():
    rep = S.isotropic_constant(M.isotropic_cube(4), method="mc_entropy",
                               n_samples=100_000, seed=5)
    assert rep.method == "mc_entropy"
    assert abs(rep.L - L_CUBE) / L_CUBE < 0.02
    rep.validate(tol=0.01)


def test_mc_entropy_gaussian():
    rep = S.isotropic_constant(_std_gaussian(3), method="mc_entropy",
                               n_samples=100_000, seed=6)
    assert abs(rep.L - S.GAUSSIAN_L) / S.GAUSSIAN_L < 0.015


def test_mc_entropy_guards():
    cu = M.isotropic_cube(4)
    with pytest.raises(ValueError, match="entropy estimator unreliable"):
        S.isotropic_constant(cu, method="mc_entropy", n_samples=5000)
    with pytest.raises(ValueError, match="dim <= 8"):
        S.isotropic_constant(M.product([M.exp_product(5), M.exp_product(5)]),
                             method="mc_entropy")
    with pytest.raises(ValueError, match="unknown method"):
        S.isotropic_constant(cu, method="nope")


# ---------------------------------------------------------------------------
# entropy sandwich
# ---------------------------------------------------------------------------

def test_sandwich_gaussian_slacks():
    n = 3
    out = S.entropy_sandwich_check(M.gaussian(np.zeros(n), 2.0 * np.eye(n)))
    assert out["ok"]
    assert abs(out["lower_slack"] - n / 2.0) < 1e-10
    assert abs(out["upper_slack"] - n / 2.0) < 1e-10


def test_sandwich_cube_slacks():
    n = 3
    m = M.isotropic_cube(n)
    out = S.entropy_sandwich_check(m)
    assert out["ok"]
    assert abs(out["lower_slack"]) < 1e-10
    assert abs(out["upper_slack"] - n) < 1e-10
    vol = m.params["body"].volume
    assert abs(out["exp_moment"] - math.sqrt(vol)) < 1e-10
    assert abs(out["exp_moment_slack"] - math.sqrt(vol) * 7.0) < 1e-8


def test_sandwich_exp_product_is_the_equality_case():
    n = 4
    out = S.entropy_sandwich_check(M.exp_product(n))
    assert out["ok"]
    assert abs(out["lower_slack"]) < 1e-10
    assert abs(out["upper_slack"]) < 1e-10
    assert abs(out["exp_moment"] - 2.0 ** n) < 1e-10
    assert abs(out["exp_moment_slack"]) < 1e-8


def test_sandwich_quadrature_matches_closed_forms():
    m = M.product([M.interval(-1.0, 2.0), M.shifted_exponential()])
    cf = S.entropy_sandwich_check(m, method="closed_form")
    quad = S.entropy_sandwich_check(m, method="quadrature")
    assert quad["ok"]
    for key in ("entropy", "inf_psi", "exp_moment"):
        assert abs(cf[key] - quad[key]) < 1e-7


# ---------------------------------------------------------------------------
# log-Laplace transform
# ---------------------------------------------------------------------------

def test_gaussian_log_laplace_closed_form():
    mu = np.array([0.5, -1.0])
    cov = np.array([[2.0, 0.3], [0.3, 1.0]])
    out = S.log_laplace(M.gaussian(mu, cov), [0.7, -0.2])
    y = np.array([0.7, -0.2])
    assert abs(out["lam"] - (mu @ y + 0.5 * y @ cov @ y)) < 1e-12
    assert np.allclose(out["grad"], mu + cov @ y, atol=1e-12)
    assert np.allclose(out["hess"], cov, atol=1e-12)


def test_exp_log_laplace_closed_form():
    ll = S.LogLaplace(M.exp_product(1))
    for y in (0.3, -2.0, 0.9):
        assert abs(ll.lam([y]) - (-y - math.log1p(-y))) < 1e-12
    assert abs(ll.grad([0.3])[0] - 0.3 / 0.7) < 1e-12
    assert abs(ll.hess([0.3])[0, 0] - 1.0 / 0.49) < 1e-12
    assert ll.in_domain([0.99]) and not ll.in_domain([1.01])
    with pytest.raises(ValueError, match="Laplace transform diverges"):
        ll.lam([1.0])


def test_cube_log_laplace_matches_sinh_formula():
    side = math.sqrt(12.0)
    ll = S.LogLaplace(M.isotropic_cube(2))

    def lam1(y):
        return math.log(math.sinh(side * y / 2.0) / (side * y / 2.0))

    assert abs(ll.lam([0.6, -0.3]) - (lam1(0.6) + lam1(-0.3))) < 1e-10
    assert np.allclose(ll.grad(np.zeros(2)), 0.0, atol=1e-12)
    assert np.allclose(ll.hess(np.zeros(2)), np.eye(2), atol=1e-10)


def test_two_point_log_laplace_is_log_cosh():
    tp = M.finite_atoms(np.array([[-1.0], [1.0]]), np.array([0.5, 0.5]))
    ll = S.LogLaplace(tp)
    for y in (0.0, 0.7, -2.0):
        assert abs(ll.lam([y]) - math.log(math.cosh(y))) < 1e-12
    assert abs(ll.hess([0.7])[0, 0] - math.cosh(0.7) ** -2) < 1e-12


def test_zero_point_gives_mean_and_cov():
    cases = [(M.exp_product(2), 1e-9),
             (M.product([M.interval(-1.0, 2.0),
                         M.shifted_exponential()]), 1e-7),
             (M.isotropic_ball(2), 1e-2),
             (M.isotropic_simplex(2), 5e-2)]
    for m, tol in cases:
        ll = S.LogLaplace(m)
        assert abs(ll.lam(np.zeros(m.dim))) < 1e-12
        mean = np.asarray(m.exact["mean"], dtype=float)
        cov = np.atleast_2d(np.asarray(m.exact["cov"], dtype=float))
        assert np.allclose(ll.grad(np.zeros(m.dim)), mean, atol=tol)
        assert np.allclose(ll.hess(np.zeros(m.dim)), cov, atol=tol)


def test_finite_difference_consistency():
    cases = [(M.product([M.interval(-1.0, 2.0), M.shifted_exponential()]),
              np.array([0.4, 0.5])),
             (M.isotropic_cube(2), np.array([0.6, -0.3])),
             (M.isotropic_ball(2), np.array([0.3, 0.2]))]
    for m, y in cases:
        out = S.finite_difference_consistency(m, y)
        assert out["grad_err"] < 1e-6
        assert out["hess_err"] < 1e-6


def test_no_engine_for_unsupported_kinds():
    with pytest.raises(ValueError, match="no log-Laplace engine"):
        S.LogLaplace(M.complex_exponential(1))
    body = M.ConvexBody("halfspaces", 2, normals=[[1.0, 0.0]], offsets=[1.0])
    with pytest.raises(ValueError, match="no support function"):
        S._support_function(body, np.eye(2))


def test_log_laplace_convexity():
    for m in (_std_gaussian(2), M.exp_product(2), M.isotropic_ball(2)):
        out = S.log_laplace_convexity_check(m, n_segments=60, seed=1)
        assert out["ok"]


# ---------------------------------------------------------------------------
# Hessian-metric balls
# ---------------------------------------------------------------------------

def test_gaussian_ball_lengths_exact():
    # {Lambda <= r} is the ball of radius sqrt(2r); halving gives
    # |y| = sqrt(r/2), and the metric is Euclidean.
    for n, r in ((2, 1.0), (3, 3.0)):
        out = S.hessian_metric_ball_check(_std_gaussian(n), r,
                                          n_directions=20, seed=0)
        assert out["ok"]
        assert abs(out["max_length"] - math.sqrt(r / 2.0)) < 1e-9
        assert np.all(out["lengths"] <= out["refined_bounds"] + 1e-9)


def test_anisotropic_gaussian_ball_lengths():
    m = M.gaussian(np.zeros(2), np.array([[3.0, 0.5], [0.5, 0.8]]))
    out = S.hessian_metric_ball_check(m, 2.0, n_directions=30, seed=1)
    assert out["ok"]
    assert abs(out["max_length"] - 1.0) < 1e-9  # sqrt(r/2) for every theta


def test_exp_ball_check_and_small_r_limit():
    out = S.hessian_metric_ball_check(M.exp_product(1), 1.0,
                                      n_directions=2, seed=0)
    assert out["ok"] and out["lengths"].shape == (2,)
    tiny = S.hessian_metric_ball_check(M.exp_product(1), 1e-4,
                                       n_directions=2, seed=0)
    assert tiny["ok"]
    assert tiny["max_length"] < 0.02  # both sides collapse with r

    out3 = S.hessian_metric_ball_check(M.exp_product(3), 1.5,
                                       n_directions=40, seed=2)
    assert out3["ok"]


def test_bounded_body_ball_checks():
    cu = M.uniform_body(M.ConvexBody("cube", 3, side=1.0, centered=True))
    out = S.hessian_metric_ball_check(cu, 2.0, n_directions=30, seed=3)
    assert out["ok"]
    out = S.hessian_metric_ball_check(M.isotropic_ball(2), 2.0,
                                      n_directions=20, seed=4)
    assert out["ok"]


# ---------------------------------------------------------------------------
# slicing estimates
# ---------------------------------------------------------------------------

def test_estimates_cube():
    out = S.slicing_estimates_check(M.isotropic_cube(2), seed=0)
    assert out["containment_ok"] and out["containment_slack"] <= 0.0
    assert out["est_i_ok"] and out["est_i_ratio"] >= 1.0
    assert 0.0 < out["est_ii_ratio"] < 1e3
    # canonical radius n / sigma_n^2 with Var(x^2) = 4/5 per coordinate
    assert abs(out["r"] - 2.5) < 0.05


def test_estimates_cube_spec_radius():
    out = S.slicing_estimates_check(M.isotropic_cube(2), r=1.0, seed=1)
    assert out["containment_ok"]
    assert out["est_i_ok"]


def test_estimates_simplex_and_ball():
    out = S.slicing_estimates_check(M.isotropic_simplex(2), n_dirs=80,
                                    seed=0)
    assert out["containment_ok"] and out["est_i_ok"]
    out = S.slicing_estimates_check(M.isotropic_ball(2), n_dirs=60, seed=0)
    assert out["containment_ok"] and out["est_i_ok"]
    assert abs(out["r"] - 3.0) < 0.06  # sigma_n^2 = 2/3 in dim 2


def test_estimates_gaussian_variant_closed_form():
    out = S.slicing_estimates_check(_std_gaussian(2), r=2.0, n_dirs=40,
                                    seed=0)
    assert out["est_ii_ratio"] is None
    assert abs(out["est_i_ratio"] - math.exp(2.0)) < 1e-9
    assert abs(out["est_i_closed_form"] - math.exp(2.0)) < 1e-12


def test_estimates_need_body_or_gaussian():
    with pytest.raises(ValueError, match="uniform body"):
        S.slicing_estimates_check(M.exp_product(2))


def test_f_gradient_bound():
    out = S.f_gradient_bound_check(M.exp_product(4), n_samples=100_000,
                                   seed=4)
    assert out["ok"]
    assert abs(out["value"] - 16.0) < 1e-6  # (dF_j)^2/var_j = 4 per axis
    assert out["bound"] > 16.0
    out = S.f_gradient_bound_check(_std_gaussian(3), n_samples=50_000,
                                   seed=4)
    assert out["ok"] and out["value"] == 0.0
    out = S.f_gradient_bound_check(M.product([M.interval(-1.0, 1.0)] * 3),
                                   n_samples=50_000, seed=4)
    assert out["ok"] and out["value"] < 1e-10
    with pytest.raises(ValueError, match="product base"):
        S.f_gradient_bound_check(M.isotropic_ball(2))


# ---------------------------------------------------------------------------
# hyperplane sections
# ---------------------------------------------------------------------------

def test_cube_sections_axis_vs_diagonal():
    cu = M.uniform_body(M.ConvexBody("cube", 3, side=1.0, centered=True))
    out = S.hyperplane_section_ratio(cu, np.array([1.0, 0.0, 0.0]),
                                     np.array([1.0, 1.0, 1.0]),
                                     n=400_000, seed=0)
    axis, diag = out["sections"]
    assert abs(axis - 1.0) < 0.05
    assert abs(diag - 3.0 * math.sqrt(3.0) / 4.0) < 0.06
    assert 1.0 - 0.05 <= diag <= math.sqrt(2.0) + 0.05
    assert out["ok"] and out["max_over_min"] <= math.sqrt(6.0)


def test_ball_sections_all_equal():
    out = S.hyperplane_section_ratio(M.isotropic_ball(3),
                                     np.array([1.0, 0.0, 0.0]),
                                     np.array([1.0, 2.0, -1.0]),
                                     n=400_000, seed=1)
    assert abs(out["ratio"] - 1.0) < 0.04
    # exact central section: disk of radius sqrt(n + 2)
    assert abs(out["sections"][0] - math.pi * 5.0) < 0.5


def test_simplex_sections_below_sqrt6():
    out = S.hyperplane_section_ratio(M.isotropic_simplex(2),
                                     np.array([1.0, 0.0]),
                                     np.array([0.0, 1.0]),
                                     n=400_000, seed=2)
    assert out["ok"]
    assert out["max_over_min"] <= math.sqrt(6.0)


def test_section_guards():
    with pytest.raises(ValueError, match="uniform body"):
        S.hyperplane_section_ratio(_std_gaussian(2), [1.0, 0.0], [0.0, 1.0])
    cu5 = M.uniform_body(M.ConvexBody("cube", 5, side=1.0, centered=True))
    with pytest.raises(ValueError, match="dim <= 4"):
        S.hyperplane_section_ratio(cu5, np.eye(5)[0], np.eye(5)[1])


def test_section_scale_report():
    cu = M.uniform_body(M.ConvexBody("cube", 3, side=1.0, centered=True))
    out = S.section_scale_report(cu, n_dirs=20, n=100_000, seed=3)
    assert 0.0 < out["min_section"] <= out["max_section"]
    assert out["scaled_max"] > 0.0


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_report_json(tmp_path):
    rep = S.isotropic_constant(M.isotropic_cube(4))
    path = os.path.join(tmp_path, "report.json")
    doc = S.report_to_json(rep, "isotropic-cube-4", path)
    loaded = json.load(open(path))
    assert loaded == doc
    assert loaded["body"] == "isotropic-cube-4"
    assert loaded["dim"] == 4
    assert loaded["method"] == "closed_form"
    assert abs(loaded["L"] - L_CUBE) < 1e-12


def test_sections_csv(tmp_path):
    path = os.path.join(tmp_path, "sections.csv")
    S.sections_to_csv([{"label": "cube3-axis", "v_h1": 1.01, "v_h2": 1.0,
                        "v0": 0.99}], path)
    lines = open(path).read().strip().splitlines()
    assert lines[0] == "label,v_h1,v_h2,v0"
    assert lines[1] == "cube3-axis,1.01,1.0,0.99"
