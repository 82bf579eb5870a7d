import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lclab import onedim as O


@pytest.fixture(scope="module")
def laws():
    return {
        "gauss": O.law_gaussian(0.0, 1.0),
        "exp": O.law_shifted_exponential(),
        "unif": O.law_interval(0.0, 1.0),
        "iso_unif": O.law_interval(-math.sqrt(3.0), math.sqrt(3.0)),
    }


# --- Law1D basics ----------------------------------------------------------

def test_total_mass_and_quantile_roundtrip(laws):
    ps = np.linspace(0.001, 0.999, 101)
    for law in laws.values():
        lo, hi = law.support
        top = hi if np.isfinite(hi) else law.quantile(np.array([1 - 1e-14]))[0]
        assert abs(law.cdf(np.array([top]))[0] - 1.0) < 1e-8
        qs = law.quantile(ps)
        assert np.all(np.diff(qs) > 0)
        assert np.max(np.abs(law.cdf(qs) - ps)) < 1e-8


def test_gaussian_cdf_matches_erf():
    from scipy.special import ndtr
    law = O.law_gaussian(0.0, 1.0)
    xs = np.linspace(-5, 5, 41)
    assert np.max(np.abs(law.cdf(xs) - ndtr(xs))) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.floats(-4, 4), st.floats(0.3, 3), st.floats(0.01, 0.99))
def test_interval_quantile_inverts_cdf(a, width, p):
    law = O.law_interval(a, a + width)
    q = law.quantile(np.array([p]))[0]
    assert abs(law.cdf(np.array([q]))[0] - p) < 1e-10
    assert abs(q - (a + width * p)) < 1e-9


# --- moments ---------------------------------------------------------------

def test_moment_norms_frozen(laws):
    # E|G|^4 = 3, E|X|^3 for the centered exponential = 12/e - 2
    assert abs(O.moment_norm(laws["gauss"], 2) - 1.0) < 1e-9
    assert abs(O.moment_norm(laws["gauss"], 4) - 3 ** 0.25) < 1e-9
    assert abs(O.moment_norm(laws["exp"], 3) - (12 / math.e - 2) ** (1 / 3)) < 1e-9
    # geometric mean of |G|: exp(E log|G|) = exp(-(gamma + log 2)/2)
    target = math.exp(-(np.euler_gamma + math.log(2)) / 2)
    assert abs(O.moment_norm(laws["gauss"], 0) - target) < 1e-6


def test_moment_norm_diverges_below_minus_one(laws):
    with pytest.raises(ValueError, match="moment diverges"):
        O.moment_norm(laws["gauss"], -1)
    with pytest.raises(ValueError, match="moment diverges"):
        O.moment_norm(laws["exp"], -1.5)


def test_reverse_holder_windows(laws):
    for name in ("gauss", "exp", "iso_unif"):
        law = laws[name]
        vals = [O.moment_norm(law, p) for p in (-0.9, -0.5, 0, 1, 2, 4, 8)]
        assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))
        for p, v in zip((-0.9, -0.5, 0, 1, 2, 4, 8), vals):
            assert 0.05 * min(p + 1, 1) <= v <= 20 * (abs(p) + 1)


# --- density envelope ------------------------------------------------------

def test_envelope_uniform_exact():
    law = O.law_interval(-math.sqrt(3.0), math.sqrt(3.0))
    env = O.density_envelope(law)
    assert abs(env["c_prime"] - 1 / (2 * math.sqrt(3.0))) < 1e-6
    assert abs(env["c_doubleprime"] - math.sqrt(3.0)) < 2e-2


def test_envelope_exponential_near_tight(laws):
    # rho(x) = e^{-(x+1)} gives the exact envelope c = 1, C = e
    env = O.density_envelope(laws["exp"])
    assert 0.97 <= env["c"] <= 1.05
    assert 2.5 <= env["C"] <= 3.0


def test_envelope_valid_pointwise(laws):
    for name in ("gauss", "exp", "iso_unif"):
        law = laws[name]
        env = O.density_envelope(law)
        assert env["C"] >= 1 / math.sqrt(2 * math.pi) - 1e-12 or name != "gauss"
        lo, hi = law.support
        lo = lo if np.isfinite(lo) else law.quantile(np.array([1e-9]))[0]
        hi = hi if np.isfinite(hi) else law.quantile(np.array([1 - 1e-9]))[0]
        xs = np.linspace(lo + 1e-9, hi - 1e-9, 801)
        bound = math.log(env["C"]) - env["c"] * np.abs(xs)
        assert np.all(law.log_density(xs) <= bound + 1e-7)


def test_envelope_rejects_non_isotropic():
    with pytest.raises(ValueError):
        O.density_envelope(O.law_interval(0.0, 1.0))


# --- isoperimetric profile -------------------------------------------------

def test_profile_frozen_values(laws):
    grid = np.array([0.25, 0.5, 0.75])
    p_unif = O.isoperimetric_profile(laws["unif"], grid)
    assert np.allclose(p_unif.I, 1.0, atol=1e-9)
    p_g = O.isoperimetric_profile(laws["gauss"], grid)
    assert abs(p_g.I[1] - 1 / math.sqrt(2 * math.pi)) < 1e-9
    p_e = O.isoperimetric_profile(laws["exp"], grid)
    assert abs(p_e.I[1] - 0.5) < 1e-9  # density at the median of Exp is 1/2


def test_profile_rejects_endpoint():
    with pytest.raises(ValueError):
        O.isoperimetric_profile(O.law_gaussian(0.0, 1.0), np.array([0.0, 0.5]))


def test_profile_matches_minkowski_increment(laws):
    ps = np.linspace(0.05, 0.95, 19)
    prof = O.isoperimetric_profile(laws["gauss"], ps)
    for p, I in zip(ps, prof.I):
        inc = O.minkowski_increment(laws["gauss"], p, 1e-6) / 1e-6
        assert abs(inc - I) / I < 1e-4


def test_shift_function_concave(laws):
    grid = np.linspace(0.02, 0.98, 49)
    for law in laws.values():
        for eps in (0.1, 1.0):
            assert O.phi_shift_concave_violation(law, eps, grid) <= 1e-6


def test_neighborhood_mass_lower_bound(laws):
    # mass gained by an eps-enlargement of a ray is at least c*eps*min(p,1-p)
    # with c = 0.5 for every catalog law (profiles checked above)
    eps = 0.2
    for law in laws.values():
        for p in np.linspace(0.1, 0.9, 9):
            gained = O.minkowski_increment(law, p, eps)
            assert gained >= 0.5 * eps * min(p, 1 - p) - 1e-12


def test_profile_csv_roundtrip(tmp_path, laws):
    grid = np.linspace(0.1, 0.9, 9)
    prof = O.isoperimetric_profile(laws["gauss"], grid)
    path = tmp_path / "profile.csv"
    prof.to_csv(path)
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.allclose(rows[:, 0], grid)
    assert np.allclose(rows[:, 1], prof.I)


# --- Cheeger ---------------------------------------------------------------

def test_cheeger_frozen_values(laws):
    targets = {"gauss": math.sqrt(2 * math.pi) / 2, "exp": 1.0,
               "unif": 0.5, "iso_unif": math.sqrt(3.0)}
    for name, psi in targets.items():
        est = O.cheeger_1d(laws[name])
        assert est.bound_kind == "two_sided"
        assert abs(est.value - psi) < 1e-6, name


def test_cheeger_oracle_agrees_within_two_percent(laws):
    for name, law in laws.items():
        est = O.cheeger_1d(law)
        orc = O.cheeger_intervals_oracle(law)
        assert abs(est.value - orc["psi"]) / est.value < 0.02, name
        # half-lines can only lose to interval unions, never win
        assert orc["psi"] <= est.value + 1e-9


def test_cheeger_spectral_sandwich(laws):
    # (1/pi) psi^2 <= C_P <= 4 psi^2
    for name in ("gauss", "exp", "unif", "iso_unif"):
        law = laws[name]
        psi = O.cheeger_1d(law).value
        cp = O.spectral_gap_fd(law).value
        assert psi ** 2 / math.pi <= cp + 1e-9
        assert cp <= 4 * psi ** 2 + 1e-9


# --- finite-difference spectral gap ---------------------------------------

def test_spectral_gap_frozen_values(laws):
    est = O.spectral_gap_fd(O.law_interval(0.0, math.pi))
    assert abs(est.value - 1.0) < 1e-6
    assert not est.meta["warning"]
    est = O.spectral_gap_fd(O.law_interval(0.0, 2.0))
    assert abs(est.value - 4.0 / math.pi ** 2) < 1e-6
    est = O.spectral_gap_fd(laws["gauss"])
    assert abs(est.value - 1.0) < 1e-6
    est = O.spectral_gap_fd(laws["exp"])
    assert abs(est.value - 4.0) < 0.01


@settings(max_examples=15, deadline=None)
@given(st.floats(0.5, 6.0))
def test_spectral_gap_interval_scaling(L):
    est = O.spectral_gap_fd(O.law_interval(0.0, L), grid_size=2000)
    assert abs(est.value - L ** 2 / math.pi ** 2) / est.value < 1e-5


def test_spectral_gap_grid_guard(laws):
    with pytest.raises(ValueError, match="grid too coarse"):
        O.spectral_gap_fd(laws["gauss"], grid_size=50)


def test_spectral_gap_second_order_convergence(laws):
    law = laws["gauss"]
    lo, hi = O.spectral_gap_fd(law).meta["interval"]
    lams = [O._fd_lambda1(law, lo, hi, m) for m in (400, 800, 1600)]
    order = math.log2(abs(lams[0] - lams[1]) / abs(lams[1] - lams[2]))
    assert order >= 1.8


def test_spectral_csv(tmp_path):
    rows = [(100, 1.0, 1.0), (200, 0.999, 1.001)]
    path = tmp_path / "spec.csv"
    O.spectral_runs_to_csv(rows, path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (2, 3)
    assert data[1, 0] == 200


# --- truncated Gaussian variance ------------------------------------------

def test_truncated_variance_frozen():
    v = O.truncated_gaussian_variance
    assert abs(v(np.array([-30.0]))[0] - 1.0) < 1e-9
    assert abs(v(np.array([0.0]))[0] - (1 - 2 / math.pi)) < 1e-12
    # hazard at 0 is sqrt(2/pi)
    assert abs(O.normal_hazard(np.array([0.0]))[0] - math.sqrt(2 / math.pi)) < 1e-12


def test_truncated_variance_tail_window():
    # scanned window for v(x) * (1 + x^2) on [0, 20]: min 0.3300 at x = 0.34
    xs = np.linspace(0.0, 20.0, 401)
    vals = O.truncated_gaussian_variance(xs) * (1.0 + xs ** 2)
    assert np.all(vals >= 0.32)
    assert np.all(vals <= 1.0)
    v10 = O.truncated_gaussian_variance(np.array([10.0]))[0] * 101.0
    assert 0.5 <= v10 <= 3.0


def test_truncated_variance_series_branch():
    v = O.truncated_gaussian_variance
    # asymptotic expansion: v * x^2 = 1 - 6/x^2 + 50/x^4 - ...
    for x in (25.0, 30.0, 50.0):
        lead = 1 - 6 / x ** 2 + 50 / x ** 4 - 518 / x ** 6
        assert abs(v(np.array([x]))[0] * x ** 2 - lead) < 1e-6
    # continuity across the evaluation switch at x = 20
    a = v(np.array([20.0 - 1e-9]))[0]
    b = v(np.array([20.0 + 1e-9]))[0]
    assert abs(a - b) / a < 1e-6


def test_truncated_variance_monotone_decreasing():
    xs = np.linspace(-5, 30, 301)
    vals = O.truncated_gaussian_variance(xs)
    assert np.all(np.diff(vals) < 0)
