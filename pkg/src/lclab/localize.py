"""Localization at a fixed noise level s.

Observing Y = X + sqrt(s) Z (Z standard Gaussian) conditions X on a Gaussian
window: the local law has density rho(x) gamma_s(x-y) / (rho * gamma_s)(y),
is strongly log-concave with parameter 1/s, and its covariance never exceeds
s Id.  The mixture of the local laws over Y reproduces rho, and the law of
total variance splits Var f into the expected local variance plus the
variance of the local means.

Everything factorizes over product measures, so the conditional covariance
of an n-dimensional product needs only n one-dimensional quadratures per
draw of Y — and for the exponential product not even that: the conditional
variance of one coordinate is s * v(sqrt(s) - Y1/sqrt(s) - G1) with v the
truncated-Gaussian variance, so the op-norm is a max of i.i.d. 1D draws.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import measures as measures_mod
from .onedim import truncated_gaussian_variance
from .spectral import _dense_rule_1d


# ---------------------------------------------------------------------------
# local density
# ---------------------------------------------------------------------------

def _factor_rule(factor):
    """Normalized (points, weights) for one 1D factor (weights carry rho)."""
    cached = getattr(factor, "_local_rule", None)
    if cached is not None:
        return cached

    def logpdf(x):
        return np.array([factor.log_density(np.array([xi])) for xi in x])

    rule = _dense_rule_1d(logpdf)
    factor._local_rule = rule
    return rule


def _factors_of(base):
    if base.kind == "product":
        return list(base.factors)
    if base.dim == 1:
        return [base]
    return None


@dataclass
class LocalDensity:
    base: object
    s: float
    y: np.ndarray
    log_normalizer: float = field(default=None)  # log (rho * gamma_s)(y)

    def __post_init__(self):
        self.y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if self.log_normalizer is None:
            self.log_normalizer = _log_heat_density(self.base, self.s, self.y)

    def log_density(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        n = self.base.dim
        quad = np.sum((x - self.y) ** 2) / (2.0 * self.s)
        return (self.base.log_density(x) - quad
                - 0.5 * n * math.log(2.0 * math.pi * self.s)
                - self.log_normalizer)

    def density(self, x):
        return math.exp(self.log_density(x))


def _log_heat_density(base, s, y):
    """log of (rho * gamma_s)(y), the density of Y = X + sqrt(s) Z at y."""
    if base.kind == "gaussian":
        mean = np.asarray(base.exact["mean"])
        cov = np.asarray(base.exact["cov"]) + s * np.eye(base.dim)
        d = y - mean
        sign, logdet = np.linalg.slogdet(cov)
        return float(-0.5 * d @ np.linalg.solve(cov, d)
                     - 0.5 * (base.dim * math.log(2.0 * math.pi) + logdet))
    factors = _factors_of(base)
    if factors is not None:
        total = 0.0
        for j, f in enumerate(factors):
            pts, wts = _factor_rule(f)
            expo = -(pts - y[j]) ** 2 / (2.0 * s)
            peak = expo.max()
            total += (peak + math.log(float(np.sum(wts * np.exp(expo - peak))))
                      - 0.5 * math.log(2.0 * math.pi * s))
        return total
    raise ValueError("need a Gaussian, 1D, or product-of-1D base")


# ---------------------------------------------------------------------------
# the conditional-expectation operator
# ---------------------------------------------------------------------------

def _gaussian_local_moments(base, s, y):
    """Exact conjugacy: the local law of a Gaussian base is Gaussian."""
    mean = np.asarray(base.exact["mean"])
    cov = np.asarray(base.exact["cov"])
    prec = np.linalg.inv(cov)
    local_cov = np.linalg.inv(prec + np.eye(base.dim) / s)
    local_mean = local_cov @ (prec @ mean + y / s)
    return local_mean, local_cov


def q_s(f, base, s, y, n_inner=20_000, seed=0, diagnostics=None):
    """E[f(X) | X + sqrt(s) Z = y]: the integral of f against the local law.

    Gaussian bases use conjugacy (quadrature on the exact local Gaussian);
    1D and product-of-1D bases use dense quadrature; anything else falls
    back to self-normalized importance sampling with the base as proposal,
    flagging `widened` in `diagnostics` when the effective sample size
    drops below 50.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if base.kind == "gaussian":
        lm, lc = _gaussian_local_moments(base, s, y)
        L = np.linalg.cholesky(lc)
        if base.dim <= 3:
            u, w = np.polynomial.hermite_e.hermegauss(40)
            pts, wts = _tensor_hermite(u, w / w.sum(), base.dim)
        else:
            rng = np.random.default_rng(seed)
            pts = rng.standard_normal((n_inner, base.dim))
            wts = np.full(n_inner, 1.0 / n_inner)
        nodes = lm + pts @ L.T
        vals = np.asarray(f(nodes), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("integrand diverges")
        return float(np.sum(wts * vals))
    factors = _factors_of(base)
    if factors is not None and base.dim <= 3:
        panels = {1: 300, 2: 60, 3: 16}[base.dim]
        rules = []
        for j, fac in enumerate(factors):
            pts, wts = _factor_rule(fac) if base.dim == 1 else _dense_rule_1d(
                lambda x, fac=fac: np.array(
                    [fac.log_density(np.array([xi])) for xi in x]),
                panels=panels)
            logw = np.log(wts) - (pts - y[j]) ** 2 / (2.0 * s)
            logw -= logw.max()
            w = np.exp(logw)
            rules.append((pts[:, None], w / w.sum()))
        pts, wts = rules[0]
        for p2, w2 in rules[1:]:
            n1, n2 = pts.shape[0], p2.shape[0]
            pts = np.concatenate([np.repeat(pts, n2, axis=0),
                                  np.tile(p2, (n1, 1))], axis=1)
            wts = np.repeat(wts, n2) * np.tile(w2, n1)
        vals = np.asarray(f(pts), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("integrand diverges")
        return float(np.sum(wts * vals))
    # self-normalized importance sampling with the base as proposal
    from . import mc as mc_mod
    x = mc_mod.sample(base, n_inner, seed).data
    logw = -np.sum((x - y) ** 2, axis=1) / (2.0 * s)
    logw -= logw.max()
    w = np.exp(logw)
    ess = w.sum() ** 2 / np.sum(w * w)
    w = w / w.sum()
    vals = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand diverges")
    est = float(np.sum(w * vals))
    if diagnostics is not None:
        diagnostics["ess"] = float(ess)
        diagnostics["widened"] = bool(ess < 50)
        mu = est
        diagnostics["se"] = float(math.sqrt(np.sum(w * (vals - mu) ** 2) / ess))
    return est


# ---------------------------------------------------------------------------
# mixture identity and variance decomposition
# ---------------------------------------------------------------------------

def _probe_points(base, k, rng):
    if base.dim == 1:
        ps = np.linspace(0.06, 0.94, k)
        from .onedim import law_from_measure
        law = law_from_measure(base)
        return law.quantile(ps)[:, None]
    from . import mc as mc_mod
    return mc_mod.sample(base, k, int(rng.integers(1 << 31))).data


def mixture_identity_check(base, s, n_outer=2000, seed=0, n_probe=20):
    """rho(x) = E rho_{s, Y}(x) with Y = X + sqrt(s) Z; checked at probes.

    Returns per-probe residuals and the 4-se verdict.
    """
    if base.dim > 3:
        raise ValueError("pointwise mixture check limited to dim <= 3")
    rng = np.random.default_rng([seed, 0x10c])
    from . import mc as mc_mod
    x0 = mc_mod.sample(base, n_outer, seed).data
    ys = x0 + math.sqrt(s) * rng.standard_normal(x0.shape)
    probes = _probe_points(base, n_probe, rng)

    # rho_{s,y}(x) = rho(x) gamma_s(x - y) / heat(y); vectorize over draws
    heat = np.array([_log_heat_density(base, s, yy) for yy in ys])
    resid = np.empty(n_probe)
    ses = np.empty(n_probe)
    ok = True
    for i, x in enumerate(probes):
        lrho = base.log_density(x)
        quad = -np.sum((x[None, :] - ys) ** 2, axis=1) / (2.0 * s)
        terms = np.exp(lrho + quad
                       - 0.5 * base.dim * math.log(2.0 * math.pi * s) - heat)
        est = terms.mean()
        se = terms.std(ddof=1) / math.sqrt(n_outer)
        resid[i] = abs(est - math.exp(lrho))
        ses[i] = se
        if resid[i] > 4.0 * se + 1e-12:
            ok = False
    return {"residuals": resid, "se": ses, "ok": ok,
            "max_residual": float(resid.max()), "probes": probes}


def variance_decomposition(base, s, f, n=4000, seed=0, cp_known=None):
    """Law of total variance under Y = X + sqrt(s) Z.

    Estimates total = Var f(X), expected_local = E Var(f|Y) and
    variance_of_means = Var E(f|Y); checks they balance within 4 se, and
    when C_P is supplied also the local-variance sandwich
    E Var(f|Y) <= Var f <= (1 + C_P/s) E Var(f|Y).
    """
    rng = np.random.default_rng([seed, 0x10c])
    from . import mc as mc_mod
    x0 = mc_mod.sample(base, n, seed).data
    ys = x0 + math.sqrt(s) * rng.standard_normal(x0.shape)
    fx = np.asarray(f(x0), dtype=float)
    total = float(fx.var(ddof=1))
    se_total = _moment_se(fx)

    ms = np.empty(n)
    vs = np.empty(n)
    if base.kind == "gaussian":
        # conditional law is Gaussian with a y-independent covariance
        mean = np.asarray(base.exact["mean"])
        cov = np.asarray(base.exact["cov"])
        prec = np.linalg.inv(cov)
        lc = np.linalg.inv(prec + np.eye(base.dim) / s)
        L = np.linalg.cholesky(lc)
        u, w = np.polynomial.hermite_e.hermegauss(40)
        w = w / w.sum()
        if base.dim == 1:
            nodes0 = (L[0, 0] * u)[None, :]
            lm = (lc @ (prec @ mean)[:, None]).T + (ys / s) @ lc.T
            nodes = lm[:, [0]] + nodes0
            vals = np.asarray(f(nodes.reshape(-1, 1)), dtype=float).reshape(n, -1)
            ms = vals @ w
            vs = (vals - ms[:, None]) ** 2 @ w
        else:
            for i in range(n):
                lm = lc @ (prec @ mean + ys[i] / s)
                pts = _tensor_hermite(u, w, base.dim)
                nodes = lm + pts[0] @ L.T
                vals = np.asarray(f(nodes), dtype=float)
                ms[i] = np.sum(pts[1] * vals)
                vs[i] = np.sum(pts[1] * (vals - ms[i]) ** 2)
    else:
        factors = _factors_of(base)
        if factors is None or len(factors) != 1:
            raise ValueError("variance decomposition needs Gaussian or 1D base")
        pts, wts = _factor_rule(factors[0])
        logw = np.log(wts)[None, :] - (pts[None, :] - ys) ** 2 / (2.0 * s)
        logw -= logw.max(axis=1, keepdims=True)
        w = np.exp(logw)
        w /= w.sum(axis=1, keepdims=True)
        vals = np.asarray(f(pts[:, None]), dtype=float)
        ms = w @ vals
        vs = np.sum(w * (vals[None, :] - ms[:, None]) ** 2, axis=1)
    expected_local = float(vs.mean())
    variance_of_means = float(ms.var(ddof=1))
    se_local = _moment_se(vs) if vs.std() > 0 else 0.0
    se_vm = _moment_se((ms - ms.mean()) ** 2)
    se = math.sqrt(se_total ** 2 + se_local ** 2 + se_vm ** 2)
    gap = abs(total - expected_local - variance_of_means)
    assert gap <= 4.0 * se + 1e-9, (total, expected_local, variance_of_means)
    out = {"total": total, "expected_local": expected_local,
           "variance_of_means": variance_of_means,
           "se": {"total": se_total, "expected_local": se_local,
                  "variance_of_means": se_vm, "balance": se}}
    if cp_known is not None:
        tol = 4.0 * se
        assert expected_local <= total + tol
        assert total <= (1.0 + cp_known / s) * expected_local + tol
        assert total <= (2.0 + cp_known / s) * expected_local + tol
        out["sandwich_factor"] = 1.0 + cp_known / s
    return out


def _moment_se(values, k=32):
    values = np.asarray(values, dtype=float)
    cut = values.size - values.size % k
    means = values[:cut].reshape(k, -1).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(k))


def _tensor_hermite(u, w, dim):
    pts, wts = u[:, None], w
    for _ in range(dim - 1):
        n1, n2 = pts.shape[0], u.size
        pts = np.concatenate([np.repeat(pts, n2, axis=0),
                              np.tile(u[:, None], (n1, 1))], axis=1)
        wts = np.repeat(wts, n2) * np.tile(w, n1)
    return pts, wts


# ---------------------------------------------------------------------------
# conditional covariance op-norms
# ---------------------------------------------------------------------------

@dataclass
class ConditionalCovarianceReport:
    s: float
    n: int
    mean_op_norm: float
    se: float
    quantiles: dict

    def csv_row(self):
        return [self.s, self.n, repr(self.mean_op_norm), repr(self.se),
                repr(self.quantiles["q50"]), repr(self.quantiles["q90"]),
                repr(self.quantiles["q99"])]


def reports_to_csv(reports, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "dim", "mean_op_norm", "se", "q50", "q90", "q99"])
        for r in reports:
            w.writerow(r.csv_row())


def _cond_var_column(factor, s, ycol, force_quadrature=False):
    """Var(X_j | Y_j = y) for one 1D factor, vectorized over draws."""
    if not force_quadrature and factor.kind == "shifted_exponential":
        arg = math.sqrt(s) - (ycol + 1.0) / math.sqrt(s)
        return s * truncated_gaussian_variance(arg)
    if not force_quadrature and factor.kind == "gaussian":
        sig2 = float(np.asarray(factor.exact["cov"]).ravel()[0])
        return np.full(ycol.size, s * sig2 / (s + sig2))
    pts, wts = _factor_rule(factor)
    logw = np.log(wts)[None, :] - (pts[None, :] - ycol[:, None]) ** 2 / (2.0 * s)
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    w /= w.sum(axis=1, keepdims=True)
    m = w @ pts
    return np.sum(w * (pts[None, :] - m[:, None]) ** 2, axis=1)


def conditional_cov_opnorm(base, s, n_outer=500, seed=0,
                           force_quadrature=False) -> ConditionalCovarianceReport:
    """Mean of ||Cov(X | X + sqrt(s) Z)||_op over draws of the observation.

    Gaussian bases are deterministic; products factorize coordinate-wise so
    the op-norm is the max of 1D conditional variances.  Every sampled
    op-norm is checked against the strong-log-concavity ceiling s.
    """
    if base.kind == "gaussian":
        cov = np.asarray(base.exact["cov"])
        lam = np.linalg.eigvalsh(cov).max()
        val = s * lam / (s + lam)
        assert val <= s + 1e-10
        return ConditionalCovarianceReport(
            s=s, n=base.dim, mean_op_norm=float(val), se=0.0,
            quantiles={"q50": float(val), "q90": float(val), "q99": float(val)})
    factors = _factors_of(base)
    if factors is None:
        raise ValueError("need a Gaussian, 1D, or product-of-1D base")
    rng = np.random.default_rng([seed, 0x10c])
    from . import mc as mc_mod
    x0 = mc_mod.sample(base, n_outer, seed).data
    ys = x0 + math.sqrt(s) * rng.standard_normal(x0.shape)
    ops = np.zeros(n_outer)
    for j, f in enumerate(factors):
        col = _cond_var_column(f, s, ys[:, j], force_quadrature)
        assert col.max() <= s + 1e-10
        ops = np.maximum(ops, col)
    qs = np.quantile(ops, [0.5, 0.9, 0.99])
    return ConditionalCovarianceReport(
        s=s, n=base.dim, mean_op_norm=float(ops.mean()),
        se=float(ops.std(ddof=1) / math.sqrt(n_outer)),
        quantiles={"q50": float(qs[0]), "q90": float(qs[1]), "q99": float(qs[2])})


def poincare_localization_chain(base, s, n_outer=500, seed=0, c=3.0):
    """Bootstrap bound: C_P <= c * (1 + C_P/s) * sqrt(s * E ||A_s||).

    The local laws are 1/s-strongly log-concave, so their spectral gaps obey
    the improved Lichnerowicz bound sqrt(s * ||A_s||); averaging over the
    observation and paying the (1 + C_P/s) decomposition factor dominates
    the global Poincare constant up to the universal constant c.
    """
    if base.exact is None or "C_P" not in base.exact:
        raise ValueError("need a catalog measure with exact C_P")
    cp = float(base.exact["C_P"])
    rep = conditional_cov_opnorm(base, s, n_outer=n_outer, seed=seed)
    bound = c * (1.0 + cp / s) * math.sqrt(s * rep.mean_op_norm)
    return {"C_P": cp, "bound": float(bound), "s": s,
            "mean_op_norm": rep.mean_op_norm, "ok": bool(cp <= bound)}


# ---------------------------------------------------------------------------
# the exponential-coordinates obstruction, without n-dimensional sampling
# ---------------------------------------------------------------------------

def expo_conditional_variance_oracle(s, n_draws=100_000, seed=0):
    """Law of Var(X_1 | X_1 + sqrt(s) G) for the centered exponential:
    s * v(sqrt(s) - Y1/sqrt(s) - G1), Y1 ~ Exp(1), G1 ~ N(0,1)."""
    if s <= 0:
        raise ValueError("s must be positive")
    rng = np.random.default_rng(seed)
    y1 = rng.exponential(size=n_draws)
    g1 = rng.standard_normal(n_draws)
    vals = s * truncated_gaussian_variance(math.sqrt(s) - y1 / math.sqrt(s) - g1)
    good = (y1 >= s) & (g1 >= 0.0)
    qs = np.quantile(vals, [0.5, 0.9, 0.99])
    return {"values": vals, "mean": float(vals.mean()),
            "q50": float(qs[0]), "q90": float(qs[1]), "q99": float(qs[2]),
            "good_event_rate": float(good.mean()),
            "good_event_prob": 0.5 * math.exp(-s)}


def expo_opnorm_from_oracle(s, dim, n_outer=200, seed=0):
    """E max over dim coordinates of the 1D conditional variance: the
    product-exponential op-norm, reproduced from i.i.d. 1D draws."""
    rng = np.random.default_rng(seed)
    maxes = np.empty(n_outer)
    for i in range(n_outer):
        y1 = rng.exponential(size=dim)
        g1 = rng.standard_normal(dim)
        vals = s * truncated_gaussian_variance(
            math.sqrt(s) - y1 / math.sqrt(s) - g1)
        maxes[i] = vals.max()
    return {"mean_max": float(maxes.mean()),
            "se": float(maxes.std(ddof=1) / math.sqrt(n_outer)),
            "s": s, "dim": dim}
