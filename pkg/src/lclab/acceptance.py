"""End-to-end verification suite.

Eighteen numbered checks run the whole package against closed forms,
frozen oracle values, and Monte Carlo error bars.  ``run_all`` returns one
``CriterionResult`` per check; both ``lclab verify`` and
``tests/test_acceptance.py`` drive it.  Checks marked quick skip the
long-running Monte Carlo / SDE / combinatorial sweeps.
"""

import math
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import eldansl
from . import localize
from . import matrixineq
from . import mc
from . import measures as M
from . import monge
from . import onedim
from . import slicing
from . import spectral


@dataclass
class CriterionResult:
    number: int
    name: str
    expected: str
    observed: str
    tolerance: str
    passed: bool


def _gauss(dim, cov=None):
    return M.gaussian(np.zeros(dim), np.eye(dim) if cov is None else cov)


# ---------------------------------------------------------------------------
# the criteria
# ---------------------------------------------------------------------------

def _c01_interval_gap(seed):
    t0 = time.perf_counter()
    est = onedim.spectral_gap_fd(onedim.law_interval(0.0, math.pi))
    wall = time.perf_counter() - t0
    err = abs(est.value - 1.0)
    return CriterionResult(
        1, "interval_spectral_gap", "C_P = 1 on Uniform(0, pi)",
        f"C_P = {est.value:.10f} in {wall:.2f} s",
        "rel err < 1e-3, < 1 s", bool(err < 1e-3 and wall < 1.0))


def _c02_hermite_gap(seed):
    est = spectral.rayleigh_ritz_cp(_gauss(2), spectral.hermite_basis(2, 3))
    err = abs(est.value - 1.0)
    return CriterionResult(
        2, "gaussian_hermite_gap", "Rayleigh-Ritz C_P = 1",
        f"C_P = {est.value:.14f}", "err < 1e-12", bool(err < 1e-12))


def _c03_tensorization(seed):
    u = M.interval(0.0, math.pi)
    g = _gauss(1)
    b1 = spectral.trig_basis(0.0, math.pi, 3)
    b2 = spectral.hermite_basis(1, 3)
    r1 = spectral.rayleigh_ritz_cp(u, b1, level=64).value
    r2 = spectral.rayleigh_ritz_cp(g, b2, level=64).value
    rp = spectral.rayleigh_ritz_cp(M.product([u, g]),
                                   spectral.product_basis(b1, b2),
                                   level=64).value
    err = abs(rp - max(r1, r2))
    return CriterionResult(
        3, "tensorization", "product C_P = max(1, 1) = 1",
        f"C_P = {rp:.10f}, factors ({r1:.6f}, {r2:.6f})",
        "err < 1e-8", bool(err < 1e-8 and abs(rp - 1.0) < 1e-6))


def _c04_ball_covariance(seed):
    dim, n = 10, 1_000_000
    ball = M.uniform_body(M.ConvexBody("ball", dim, radius=math.sqrt(dim)))
    x = mc.sample(ball, n, seed).data
    target = dim / (dim + 2.0)
    # entrywise block-means standard errors for the sample covariance
    k = 32
    blocks = np.array([np.cov(b.T, ddof=1)
                       for b in np.array_split(x, k)])
    se = blocks.std(axis=0, ddof=1) / math.sqrt(k)
    cov = np.cov(x.T, ddof=1)
    dev = np.abs(cov - target * np.eye(dim))
    worst = float((dev / np.maximum(se, 1e-12)).max())
    return CriterionResult(
        4, "ball_covariance", f"Cov = {target:.6f} Id (dim 10, 1e6 draws)",
        f"max entry deviation {worst:.2f} se",
        "every entry within 4 se", bool(worst <= 4.0))


def _c05_gaussian_thin_shell(seed):
    s = mc.covariance_summary(mc.sample(_gauss(64), 1_000_000, seed))
    dev = abs(s.thin_shell - 2.0)
    return CriterionResult(
        5, "gaussian_thin_shell", "Var(|X|^2)/n = 2 (dim 64, 1e6 draws)",
        f"{s.thin_shell:.5f} (se {s.se['thin_shell']:.5f})",
        "within 4 se", bool(dev <= 4.0 * s.se["thin_shell"]))


def _c06_complex_monomials(seed):
    ok = spectral.complex_monomial_quotient(1)["quotient"] == Fraction(1, 3)
    prev = Fraction(0)
    for k in range(1, 101):
        res = spectral.complex_monomial_quotient(k)
        q = res["quotient"]
        ok = ok and q == Fraction(k, 2 * k + 1) and prev < q < Fraction(1, 2)
        ok = ok and res["norm_ratio"] == 4 + Fraction(2, k)
        ok = ok and 4 < res["norm_ratio"] <= 6
        prev = q
    q100 = spectral.complex_monomial_quotient(100)["quotient"]
    return CriterionResult(
        6, "complex_monomials",
        "quotient k/(2k+1), increasing, < 1/2; ratio 4 + 2/k",
        f"q(1) = 1/3, q(100) = {q100}, all exact rationals",
        "exact", bool(ok))


def _c07_cheeger_sandwich(seed):
    r3 = math.sqrt(3.0)
    cases = [
        ("uniform", onedim.law_interval(-r3, r3), r3, 12.0 / math.pi ** 2),
        ("gaussian", onedim.law_gaussian(), math.sqrt(2.0 * math.pi) / 2.0, 1.0),
        ("exponential", onedim.law_shifted_exponential(), 1.0, 4.0),
    ]
    ok = True
    parts = []
    for name, law, psi_exact, cp_exact in cases:
        psi = onedim.cheeger_1d(law).value
        cp = onedim.spectral_gap_fd(law).value
        ok = ok and abs(psi - psi_exact) / psi_exact < 0.01
        ok = ok and abs(cp - cp_exact) / cp_exact < 0.01
        ok = ok and psi ** 2 / math.pi <= cp + 1e-9
        ok = ok and cp <= 4.0 * psi ** 2 + 1e-9
        parts.append(f"{name}: psi {psi:.4f}, C_P {cp:.4f}")
    return CriterionResult(
        7, "cheeger_spectral_sandwich",
        "psi^2/pi <= C_P <= 4 psi^2, both within 1%",
        "; ".join(parts), "1% accuracy + sandwich", bool(ok))


def _c08_lichnerowicz_equality(seed):
    g = _gauss(2, np.diag([4.0, 1.0]))
    rr = spectral.rayleigh_ritz_cp(g, spectral.linear_basis(2)).value
    b = spectral.lichnerowicz_bounds(g, rr_value=rr)
    err = max(abs(b["improved"] - 4.0), abs(rr - 4.0))
    return CriterionResult(
        8, "lichnerowicz_equality",
        "sqrt(4 / (1/4)) = 4 = Rayleigh-Ritz C_P",
        f"bound {b['improved']:.10f}, C_P {rr:.10f}", "err < 1e-8",
        bool(err < 1e-8))


def _c09_bochner(seed):
    rng = np.random.default_rng(seed)
    g = _gauss(2)
    worst = 0.0
    for deg in (1, 2, 3, 4):
        u = spectral.PolyFunction.random(2, deg, rng)
        worst = max(worst, spectral.bochner_check(g, u, level=32)["residual"])
    ok = worst < 1e-8
    # Monte Carlo route on tilted catalog measures (Gaussian tilts stay
    # in the catalog, so direct sampling applies)
    tilts = [M.gaussian_tilt(_gauss(2, np.array([[2.0, 0.5], [0.5, 1.0]])),
                             np.array([0.3, -0.2]), 0.5),
             M.gaussian_tilt(_gauss(2), np.array([-1.0, 0.4]), 1.5)]
    mc_devs = []
    for i, m in enumerate(tilts):
        u = spectral.PolyFunction.random(2, 3, rng)
        batch = mc.sample(m, 200_000, seed + 17 * (i + 1))
        res = spectral.bochner_check(m, u, batch=batch)
        dev = abs(res["lhs"] - res["rhs"]) / max(res["se"], 1e-300)
        mc_devs.append(dev)
        ok = ok and dev <= 4.0
    return CriterionResult(
        9, "bochner_identity",
        "residual <= 1e-8 exact; |lhs - rhs| <= 4 se under MC",
        f"exact residual {worst:.2e}; MC deviations "
        + ", ".join(f"{d:.2f} se" for d in mc_devs),
        "1e-8 / 4 se", bool(ok))


def _c10_gaussian_localization(seed):
    s = 0.5
    y = np.array([0.3, -0.2])
    lm, lc = localize._gaussian_local_moments(_gauss(2), s, y)
    err = max(float(np.abs(lm - y / (1 + s)).max()),
              float(np.abs(lc - (s / (1 + s)) * np.eye(2)).max()))
    out = localize.variance_decomposition(_gauss(1), s, lambda x: x[:, 0],
                                          n=4000, seed=seed, cp_known=1.0)
    err = max(err, abs(out["expected_local"] - s / (1 + s)))
    ok = err < 1e-10
    # general catalog bases: the decomposition must balance within 4 se
    # (variance_decomposition asserts that internally)
    gaps = []
    for base, f in [(M.interval(0.0, 1.0),
                     lambda x: np.cos(math.pi * x[:, 0])),
                    (M.shifted_exponential(), lambda x: x[:, 0] ** 2)]:
        r = localize.variance_decomposition(base, 0.4, f, n=6000,
                                            seed=seed + 1)
        gap = abs(r["total"] - r["expected_local"] - r["variance_of_means"])
        gaps.append(gap / max(r["se"]["balance"], 1e-300))
    return CriterionResult(
        10, "gaussian_localization",
        "mean y/(1+s), cov s/(1+s) Id, identity to 1e-10; catalog within 4 se",
        f"closed-form err {err:.2e}; balance "
        + ", ".join(f"{g:.2f} se" for g in gaps),
        "1e-10 / 4 se", bool(ok and max(gaps) <= 4.0))


def _c11_exponential_obstruction(seed):
    dim = 10_000
    t0 = time.perf_counter()
    s_low = 0.5 * math.log(dim)
    low = localize.expo_opnorm_from_oracle(s_low, dim, n_outer=200, seed=seed)
    high = localize.expo_opnorm_from_oracle(20.0 * math.log(dim), dim,
                                            n_outer=200, seed=seed)
    wall = time.perf_counter() - t0
    ok = (low["mean_max"] >= 0.1 * s_low and high["mean_max"] <= 5.0
          and wall < 60.0)
    return CriterionResult(
        11, "exponential_obstruction",
        f">= {0.1 * s_low:.2f} at s = 0.5 ln n; <= 5 at s = 20 ln n",
        f"{low['mean_max']:.3f} / {high['mean_max']:.3f} in {wall:.1f} s",
        "oracle thresholds, < 1 min", bool(ok))


def _c12_sde_laws(seed):
    th = eldansl.gaussian_theta_covariance_check(0.5, 1.0, n_paths=100_000,
                                                seed=seed)
    dev = abs(th["estimate"] - th["target"]) / max(th["se"], 1e-300)
    tl = eldansl.tilt_law_check(M.product([M.shifted_exponential()]), t=0.5,
                                n_paths=100_000, dt=1e-3, seed=seed)
    ok = th["ok"] and dev <= 4.0 and tl["ok"] and tl["ks"] < tl["critical"]
    return CriterionResult(
        12, "sde_law_checks",
        "E theta_s theta_t = st + min(s,t); tilt KS < 1% critical",
        f"theta-cov dev {dev:.2f} se; KS {tl['ks']:.5f} vs {tl['critical']:.5f}",
        "4 se / KS 1%", bool(ok))


def _c13_freedman(seed):
    traces = eldansl.brownian_traces(n_paths=20_000, T=1.0, dt=1e-3, seed=seed)
    rep = eldansl.freedman_tail(traces, u=2.0, sigma2=1.0)
    ok = (abs(rep["bound"] - math.exp(-2.0)) < 1e-12 and rep["ok"]
          and 0.03 <= rep["empirical"] <= 0.055)
    return CriterionResult(
        13, "freedman_brownian",
        "empirical ~ 0.0455 <= exp(-2) ~ 0.1353",
        f"empirical {rep['empirical']:.4f}, bound {rep['bound']:.4f}",
        "empirical in [0.03, 0.055] and <= bound", bool(ok))


def _c14_matrix_inequalities(seed):
    tr = matrixineq.trace_inequality_property(trials=10_000, seed=seed)
    ok = tr["violations"] == 0 and tr["min_slack"] >= 0.0
    sm_viol = 0
    for i in range(10_000):
        mat = matrixineq.random_symmetric(5, seed + i)
        beta = 0.1 + 0.003 * i
        lam = float(np.linalg.eigvalsh(mat).max())
        h = matrixineq.softmax_proxy(mat, beta)
        scale = max(abs(lam), 1.0)
        if not (lam - 1e-10 * scale <= h
                <= lam + math.log(5) / beta + 1e-10 * scale):
            sm_viol += 1
    ok = ok and sm_viol == 0
    worst_slack = math.inf
    for i in range(200):
        a = matrixineq.random_symmetric(4, 1000 + seed + i)
        h = matrixineq.random_symmetric(4, 2000 + seed + i)
        bound = math.exp(float(np.linalg.eigvalsh(a).max()))
        slack = matrixineq.exp_trace_hessian_check(a, h) / max(bound, 1.0)
        worst_slack = min(worst_slack, slack)
    ok = ok and worst_slack >= -1e-6
    return CriterionResult(
        14, "matrix_inequalities",
        "0 violations in 1e4 trace + 1e4 softmax draws; Hessian slack >= -1e-6",
        f"trace {tr['violations']}, softmax {sm_viol}, "
        f"min Hessian slack {worst_slack:.2e}",
        "exact (1e-10 relative)", bool(ok))


def _c15_monge_duality(seed):
    rng = np.random.default_rng(seed)
    worst_gap = 0.0
    mono_bad = 0
    crossings = 0
    for _ in range(200):
        m = int(rng.integers(2, 9))
        inst = monge.uniform_instance(rng.random((m, 2)), rng.random((m, 2)))
        primal = monge.solve_primal(inst)["cost"]
        brute = monge.brute_force_matching(inst)["cost"]
        dual = monge.build_dual(inst)["dual_value"]
        worst_gap = max(worst_gap, abs(primal - brute), abs(primal - dual))
        if not monge.cyclical_monotonicity_check(inst,
                                                 subset_size=min(m, 5))["ok"]:
            mono_bad += 1
        crossings += monge.noncrossing_check(inst)["crossings"]
    ok = worst_gap < 1e-9 and mono_bad == 0 and crossings == 0
    return CriterionResult(
        15, "monge_duality",
        "primal = dual = brute force; monotone, non-crossing (200 instances)",
        f"max gap {worst_gap:.2e}, {mono_bad} monotonicity, "
        f"{crossings} crossings", "gap < 1e-9, zero violations", bool(ok))


def _c16_isotropic_constants(seed):
    l_cube = 1.0 / math.sqrt(12.0)
    r_cube = slicing.isotropic_constant(M.uniform_body(M.ConvexBody("cube", 3, side=2.0)))
    r_gauss = slicing.isotropic_constant(_gauss(3))
    simp = M.uniform_body(M.ConvexBody("simplex", 2, scale=1.0))
    r_simp = slicing.isotropic_constant(simp)
    ok = (abs(r_cube.L - l_cube) < 1e-12
          and abs(r_gauss.L - slicing.GAUSSIAN_L) < 1e-12
          and abs(r_simp.L - 0.3102016197006999) < 1e-12)
    r_mc = slicing.isotropic_constant(M.isotropic_cube(4), method="mc_entropy",
                                      n_samples=100_000, seed=seed)
    rel = abs(r_mc.L - l_cube) / l_cube
    ok = ok and rel < 0.02
    catalog = [_gauss(3), M.isotropic_cube(3), M.exp_product(2), simp,
               M.uniform_body(M.ConvexBody("ball", 2, radius=1.0)),
               M.complex_exponential(2), M.interval(0.0, 5.0)]
    floor = math.inf
    for m in catalog:
        rep = slicing.isotropic_constant(m)
        rep.validate()
        floor = min(floor, rep.L - slicing.GAUSSIAN_L)
    ok = ok and floor >= -1e-9
    return CriterionResult(
        16, "isotropic_constants",
        "L_cube, L_gauss, L_simplex(2) exact; mc within 2%; L >= L_gauss",
        f"simplex {r_simp.L:.5f}, mc rel err {rel:.3%}, "
        f"catalog floor {floor:+.2e}",
        "exact / 2% / lower bound", bool(ok))


def _c17_hessian_ball(seed):
    r = 2.0
    iso = slicing.hessian_metric_ball_check(_gauss(3), r, n_directions=50,
                                            seed=seed)
    exact_err = float(np.abs(iso["lengths"] - math.sqrt(r / 2.0)).max())
    aniso = slicing.hessian_metric_ball_check(
        _gauss(2, np.diag([3.0, 0.5])), r, n_directions=50, seed=seed)
    aniso_err = float(np.abs(aniso["lengths"] - math.sqrt(r / 2.0)).max())
    expo = slicing.hessian_metric_ball_check(M.exp_product(3), 1.0,
                                             n_directions=50, seed=seed)
    cube = slicing.hessian_metric_ball_check(M.isotropic_cube(3), 1.0,
                                             n_directions=50, seed=seed)
    ok = (iso["ok"] and aniso["ok"] and expo["ok"] and cube["ok"]
          and exact_err < 1e-9 and aniso_err < 1e-9)
    return CriterionResult(
        17, "hessian_metric_ball",
        "half-level segments inside sqrt(r) and sqrt(log 2 Lam(2y)) bounds",
        f"gaussian length err {max(exact_err, aniso_err):.2e}; "
        f"exp max {expo['max_length']:.4f}, cube max {cube['max_length']:.4f} "
        f"vs 1.0", "exact Gaussian + quadrature ok flags", bool(ok))


def _c18_property_surrogates(seed):
    flags = []
    # localization chain: C_P carried through the decomposition with an
    # explicit constant
    for base, s in [(_gauss(3), 0.5), (_gauss(3), 2.0), (M.exp_product(8), 1.0)]:
        flags.append(localize.poincare_localization_chain(
            base, s, n_outer=300, seed=seed)["ok"])
    # operator-norm excursions stay under the fitted exp(-1/(C t)) envelope
    exc = eldansl.opnorm_excursion(M.exp_product(16), t_max=0.5, dt=5e-3,
                                   n_paths=2000, seed=seed)
    fitted = np.exp(-1.0 / (exc["C_hat"] * exc["t"]))
    flags.append(bool(np.all(np.diff(exc["prob"]) >= 0.0)
                      and exc["prob"][0] <= 0.01 and exc["prob"][-1] >= 0.5
                      and np.all(exc["prob"] <= fitted + 1e-12)))
    # the two-term concentration split upper-bounds the true tail
    from scipy.special import ndtr
    rows = eldansl.concentration_experiment(
        M.product([_gauss(1) for _ in range(8)]), [0.0, 1.0], n_paths=4000,
        seed=seed, mc_samples=100_000)
    exact = 1.0 - ndtr(1.0)
    flags.append(bool(0.45 <= rows[0]["sum"] <= 0.56
                      and rows[1]["sum"] >= exact - 0.01))
    # sublevel containment and the volume estimate on an isotropic cube,
    # with the slicing ratio L / sigma_n reported
    est = slicing.slicing_estimates_check(M.isotropic_cube(2), seed=seed)
    l_over_sigma = slicing.isotropic_constant(M.isotropic_cube(2)).L / math.sqrt(
        est["sigma_n2"])
    flags.append(bool(est["containment_slack"] <= 1e-9 and est["est_i_ok"]))
    return CriterionResult(
        18, "property_surrogates",
        "chain, excursion envelope, concentration split, slicing containment",
        f"{sum(bool(f) for f in flags)}/{len(flags)} surrogate groups hold; "
        f"L/sigma_n = {l_over_sigma:.4f}",
        "explicit-constant inequalities only", bool(all(flags)))


# registry rows: (number, name, quick, callable)
CRITERIA = [
    (1, "interval_spectral_gap", True, _c01_interval_gap),
    (2, "gaussian_hermite_gap", True, _c02_hermite_gap),
    (3, "tensorization", True, _c03_tensorization),
    (4, "ball_covariance", True, _c04_ball_covariance),
    (5, "gaussian_thin_shell", True, _c05_gaussian_thin_shell),
    (6, "complex_monomials", True, _c06_complex_monomials),
    (7, "cheeger_spectral_sandwich", True, _c07_cheeger_sandwich),
    (8, "lichnerowicz_equality", True, _c08_lichnerowicz_equality),
    (9, "bochner_identity", True, _c09_bochner),
    (10, "gaussian_localization", True, _c10_gaussian_localization),
    (11, "exponential_obstruction", False, _c11_exponential_obstruction),
    (12, "sde_law_checks", False, _c12_sde_laws),
    (13, "freedman_brownian", True, _c13_freedman),
    (14, "matrix_inequalities", True, _c14_matrix_inequalities),
    (15, "monge_duality", False, _c15_monge_duality),
    (16, "isotropic_constants", False, _c16_isotropic_constants),
    (17, "hessian_metric_ball", True, _c17_hessian_ball),
    (18, "property_surrogates", False, _c18_property_surrogates),
]


def run_criterion(number, seed=0):
    for num, _, _, func in CRITERIA:
        if num == number:
            return func(seed)
    raise ValueError(f"no criterion numbered {number}")


def run_all(seed=0, quick=False):
    """Run the suite and return the list of CriterionResult rows."""
    rows = []
    for _, _, is_quick, func in CRITERIA:
        if quick and not is_quick:
            continue
        rows.append(func(seed))
    return rows
