"""Stochastic localization as a process in time.

The tilt process solves d theta_t = dW_t + grad phi(t, theta_t) dt with
phi(t, theta) = log int exp(<x, theta> - t/2 |x|^2) dmu(x); the localized
measure mu_t has density proportional to exp(<x, theta_t> - t/2 |x|^2)
against mu, barycenter a_t = grad phi and covariance A_t = hess phi.

Closed-form tilted moments exist for Gaussian bases, finite-atom bases and
products whose factors are Gaussian or shifted-exponential; other 1D
factors fall back to dense quadrature.  Products keep A_t diagonal, so the
operator norm is a max of 1D tilted variances — no eigensolves.

theta_t has the same law as t*X + W_t, which gives a direct sampler to test
the SDE against; mu_t(S) and more general int f dmu_t are martingales,
feeding the Freedman-inequality and operator-norm excursion experiments.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .localize import _factor_rule, _factors_of
from .onedim import normal_hazard, truncated_gaussian_variance


# ---------------------------------------------------------------------------
# tilted moments per base kind
# ---------------------------------------------------------------------------

def _tilt1d_gaussian(mean, sig2, theta, t):
    prec = 1.0 / sig2 + t
    m = (mean / sig2 + theta) / prec
    v = np.full_like(np.atleast_1d(theta), 1.0 / prec, dtype=float)
    return m, v, np.zeros_like(v)


def _tn_third_central(alpha):
    """Third central moment of a standard normal conditioned on >= alpha."""
    alpha = np.asarray(alpha, dtype=float)
    out = np.empty_like(alpha)
    # the cancellation in the direct formula costs ~eps * alpha^6 in relative
    # terms while the three-term series truncates at ~150/alpha^6: cross
    # near 42, where both sit around 5e-7
    big = alpha > 42.0
    if np.any(~big):
        a = alpha[~big]
        lam = normal_hazard(a)
        d = lam - a
        out[~big] = lam * (a * d + 2.0 * d * d - 1.0)
    if np.any(big):
        a = alpha[big]
        out[big] = 2.0 / a ** 3 - 24.0 / a ** 5 + 300.0 / a ** 7
    return out


def _tilt1d_exp_mean(theta, t):
    theta = np.asarray(theta, dtype=float)
    if t == 0.0:
        if np.any(theta >= 1.0):
            raise ValueError("tilt with t=0 needs theta < 1")
        return 1.0 / (1.0 - theta) - 1.0
    sigma = 1.0 / math.sqrt(t)
    m0 = (theta - 1.0) / t
    alpha = (-1.0 - m0) / sigma
    return m0 + sigma * normal_hazard(alpha)


def _tilt1d_exp(theta, t):
    """Moments of exp(-(x+1)) on [-1, inf) tilted by exp(theta x - t x^2/2):
    a Gaussian N((theta-1)/t, 1/t) truncated at -1."""
    theta = np.asarray(theta, dtype=float)
    if t == 0.0:
        if np.any(theta >= 1.0):
            raise ValueError("tilt with t=0 needs theta < 1")
        r = 1.0 / (1.0 - theta)
        return r - 1.0, r ** 2, 2.0 * r ** 3
    sigma = 1.0 / math.sqrt(t)
    m0 = (theta - 1.0) / t
    alpha = (-1.0 - m0) / sigma
    lam = normal_hazard(alpha)
    mean = m0 + sigma * lam
    var = truncated_gaussian_variance(alpha) / t
    m3 = sigma ** 3 * _tn_third_central(alpha)
    return mean, var, m3


def _tilt1d_generic(factor, theta, t):
    pts, wts = _factor_rule(factor)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if not np.all(np.isfinite(theta)):
        raise ValueError(
            "tilt quadrature failed at t=%r, theta=%r" % (t, theta))
    logw = (np.log(wts)[None, :] + theta[:, None] * pts[None, :]
            - 0.5 * t * pts[None, :] ** 2)
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    z = w.sum(axis=1)
    if not np.all(np.isfinite(z)) or np.any(z <= 0):
        bad = int(np.argmin(z))
        raise ValueError(
            "tilt quadrature failed at t=%r, theta=%r" % (t, theta[bad]))
    w /= z[:, None]
    mean = w @ pts
    c = pts[None, :] - mean[:, None]
    var = np.sum(w * c ** 2, axis=1)
    m3 = np.sum(w * c ** 3, axis=1)
    return mean, var, m3


def _product_tilted_stats(base, theta, t, with_m3=True):
    """Per-coordinate tilted (mean, var, m3) for a product base.

    theta has shape (paths, dim); each output shares that shape.
    """
    factors = _factors_of(base)
    mean = np.empty_like(theta)
    var = np.empty_like(theta)
    m3 = np.zeros_like(theta)
    for j, f in enumerate(factors):
        if f.kind == "gaussian":
            mu = float(np.asarray(f.exact["mean"]).ravel()[0])
            s2 = float(np.asarray(f.exact["cov"]).ravel()[0])
            mean[:, j], var[:, j], m3[:, j] = _tilt1d_gaussian(
                mu, s2, theta[:, j], t)
        elif f.kind == "shifted_exponential":
            if with_m3:
                mean[:, j], var[:, j], m3[:, j] = _tilt1d_exp(theta[:, j], t)
            else:
                th = np.asarray(theta[:, j], dtype=float)
                if t == 0.0:
                    mean[:, j], var[:, j] = 0.0, 1.0
                else:
                    m0 = (th - 1.0) / t
                    alpha = (-1.0 - m0) * math.sqrt(t)
                    mean[:, j] = m0 + normal_hazard(alpha) / math.sqrt(t)
                    var[:, j] = truncated_gaussian_variance(alpha) / t
        elif f.kind == "finite_atoms":
            p = _atom_tilted_probs(f, theta[:, [j]], t)
            x = f.points[:, 0]
            m = p @ x
            c = x[None, :] - m[:, None]
            mean[:, j] = m
            var[:, j] = np.sum(p * c ** 2, axis=1)
            m3[:, j] = np.sum(p * c ** 3, axis=1)
        else:
            mean[:, j], var[:, j], m3[:, j] = _tilt1d_generic(
                f, theta[:, j], t)
    return mean, var, m3


def tilted_drift(base, theta, t):
    """Barycenter of mu_t only — the SDE drift; avoids variance work."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if not np.all(np.isfinite(theta)):
        raise ValueError("tilt quadrature failed at t=%r, theta=%r"
                         % (t, theta))
    if base.kind == "gaussian":
        return tilted_moments(base, theta, t)[0]
    if base.kind == "finite_atoms":
        return _atom_tilted_probs(base, theta, t) @ base.points
    factors = _factors_of(base)
    if factors is None:
        raise ValueError("no tilted-moment engine for base kind %r" % base.kind)
    mean = np.empty_like(theta)
    for j, f in enumerate(factors):
        if f.kind == "gaussian":
            mu = float(np.asarray(f.exact["mean"]).ravel()[0])
            s2 = float(np.asarray(f.exact["cov"]).ravel()[0])
            mean[:, j] = _tilt1d_gaussian(mu, s2, theta[:, j], t)[0]
        elif f.kind == "shifted_exponential":
            mean[:, j] = _tilt1d_exp_mean(theta[:, j], t)
        elif f.kind == "finite_atoms":
            p = _atom_tilted_probs(f, theta[:, [j]], t)
            mean[:, j] = p @ f.points[:, 0]
        else:
            mean[:, j] = _tilt1d_generic(f, theta[:, j], t)[0]
    return mean


def _atom_tilted_probs(base, theta, t):
    x = base.points
    logits = (theta @ x.T - 0.5 * t * np.sum(x * x, axis=1)[None, :]
              + np.log(base.weights)[None, :])
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return p


def tilted_moments(base, theta, t, with_m3=True):
    """Barycenter a, diagonal-or-full covariance and op-norm of mu_t.

    Returns (a, cov_diag, opnorm, m3_diag) with cov_diag/m3_diag of shape
    (paths, dim) for product and Gaussian bases; finite-atom bases return
    (a, cov_full, opnorm, central_third_tensor_contraction=None).
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if not np.all(np.isfinite(theta)):
        raise ValueError("tilt quadrature failed at t=%r, theta=%r"
                         % (t, theta))
    if base.kind == "gaussian":
        mean = np.asarray(base.exact["mean"])
        cov = np.asarray(base.exact["cov"])
        if not np.allclose(cov, np.diag(np.diag(cov))):
            prec = np.linalg.inv(cov)
            lc = np.linalg.inv(prec + t * np.eye(base.dim))
            a = (lc @ (prec @ mean)[:, None]).T + theta @ lc.T
            d = np.linalg.eigvalsh(lc)
            diag = np.tile(np.diag(lc), (theta.shape[0], 1))
            return a, diag, float(d.max()), np.zeros_like(theta)
        s2 = np.diag(cov)
        prec = 1.0 / s2 + t
        a = (mean / s2 + theta) / prec
        v = np.tile(1.0 / prec, (theta.shape[0], 1))
        return a, v, float((1.0 / prec).max()), np.zeros_like(theta)
    if base.kind == "finite_atoms":
        p = _atom_tilted_probs(base, theta, t)
        a = p @ base.points
        c = base.points[None, :, :] - a[:, None, :]
        covs = np.einsum("pk,pki,pkj->pij", p, c, c)
        opn = float(np.linalg.eigvalsh(covs).max())
        return a, covs, opn, None
    factors = _factors_of(base)
    if factors is not None:
        mean, var, m3 = _product_tilted_stats(base, theta, t, with_m3)
        return mean, var, float(var.max()), m3
    raise ValueError("no tilted-moment engine for base kind %r" % base.kind)


# ---------------------------------------------------------------------------
# path simulation
# ---------------------------------------------------------------------------

@dataclass
class LocalizationPath:
    base: object
    time_grid: np.ndarray
    theta: np.ndarray        # (n_times, dim)
    barycenter: np.ndarray   # (n_times, dim)
    cov: np.ndarray          # (n_times, dim, dim)
    seed: int
    step_scheme: str
    dW: np.ndarray = None    # (n_times - 1, dim)
    opnorms: np.ndarray = None
    m3_diag: np.ndarray = None

    def validate(self, tol=1e-10):
        for k, t in enumerate(self.time_grid):
            A = self.cov[k]
            assert np.allclose(A, A.T, atol=tol)
            eigs = np.linalg.eigvalsh(A)
            assert eigs.min() >= -tol
            if t > 0 and self.base.kind != "finite_atoms":
                assert eigs.max() <= 1.0 / t + tol
        return True


def default_dt(base):
    """1e-3 scaled down when the initial covariance is large."""
    cov = np.asarray(base.exact["cov"])
    opn = float(np.linalg.eigvalsh(cov).max())
    return 1e-3 * min(1.0, 1.0 / opn)


def _diag_to_cov(diag):
    n_times, dim = diag.shape
    out = np.zeros((n_times, dim, dim))
    idx = np.arange(dim)
    out[:, idx, idx] = diag
    return out


def simulate_path(base, T, dt=None, seed=0, scheme="euler") -> LocalizationPath:
    """One trajectory of the tilt process on [0, T], recording a_t and A_t.

    scheme "euler" is Euler-Maruyama on d theta = dW + a_t dt; scheme
    "exact_gaussian" (standard Gaussian base only) uses the closed-form
    solution theta_t = (1+t) int_0^t dW_s/(1+s), exact in law.
    """
    if dt is None:
        dt = default_dt(base)
    rng = np.random.default_rng(seed)
    times = np.arange(0.0, T + dt / 2, dt)
    K, dim = times.size, base.dim
    theta = np.zeros((K, dim))
    bary = np.zeros((K, dim))
    covd = np.zeros((K, dim))
    m3d = np.zeros((K, dim))
    full_cov = None
    dW = rng.standard_normal((K - 1, dim)) * math.sqrt(dt)

    if scheme == "exact_gaussian":
        if base.kind != "gaussian" or not np.allclose(
                np.asarray(base.exact["cov"]), np.eye(dim)) or \
                not np.allclose(np.asarray(base.exact["mean"]), 0.0):
            raise ValueError("exact_gaussian scheme needs a standard Gaussian base")
        for k in range(K - 1):
            t0, t1 = times[k], times[k + 1]
            var_i = 1.0 / (1.0 + t0) - 1.0 / (1.0 + t1)
            inc = rng.standard_normal(dim) * math.sqrt(var_i)
            theta[k + 1] = (1.0 + t1) * (theta[k] / (1.0 + t0) + inc)
        dW = None
    elif scheme == "euler":
        for k in range(K - 1):
            a = tilted_drift(base, theta[k][None, :], times[k])
            theta[k + 1] = theta[k] + dW[k] + a[0] * dt
    else:
        raise ValueError("unknown scheme %r" % scheme)

    if base.kind == "finite_atoms":
        full_cov = np.zeros((K, dim, dim))
        for k in range(K):
            a, c, _, _ = tilted_moments(base, theta[k][None, :], times[k])
            bary[k], full_cov[k] = a[0], c[0]
        opn = np.linalg.eigvalsh(full_cov)[:, -1]
        path_cov = full_cov
    else:
        for k in range(K):
            a, v, _, m3 = tilted_moments(base, theta[k][None, :], times[k])
            bary[k], covd[k] = a[0], v[0]
            if m3 is not None:
                m3d[k] = m3[0]
        opn = covd.max(axis=1)
        path_cov = _diag_to_cov(covd)
    return LocalizationPath(base=base, time_grid=times, theta=theta,
                            barycenter=bary, cov=path_cov, seed=seed,
                            step_scheme=scheme, dW=dW, opnorms=opn,
                            m3_diag=m3d)


def _simulate_ensemble_theta(base, T, dt, n_paths, seed, scheme="euler",
                             record_times=None, recorder=None):
    """Vectorized Euler ensemble; returns theta at T and any recordings."""
    rng = np.random.default_rng(seed)
    times = np.arange(0.0, T + dt / 2, dt)
    K, dim = times.size, base.dim
    theta = np.zeros((n_paths, dim))
    record_times = [] if record_times is None else list(record_times)
    recorded = []
    next_rec = 0

    def maybe_record(k):
        nonlocal next_rec
        while next_rec < len(record_times) and \
                times[k] >= record_times[next_rec] - dt / 2:
            recorded.append((times[k], recorder(theta, times[k])))
            next_rec += 1

    if scheme == "exact_gaussian":
        if base.kind != "gaussian":
            raise ValueError("exact_gaussian scheme needs a Gaussian base")
        if recorder:
            maybe_record(0)
        for k in range(K - 1):
            t0, t1 = times[k], times[k + 1]
            var_i = 1.0 / (1.0 + t0) - 1.0 / (1.0 + t1)
            inc = rng.standard_normal((n_paths, dim)) * math.sqrt(var_i)
            theta = (1.0 + t1) * (theta / (1.0 + t0) + inc)
            if recorder:
                maybe_record(k + 1)
        return theta, times, recorded
    if recorder:
        maybe_record(0)
    for k in range(K - 1):
        a = tilted_drift(base, theta, times[k])
        theta = theta + rng.standard_normal((n_paths, dim)) * math.sqrt(dt) \
            + a * dt
        if recorder:
            maybe_record(k + 1)
    return theta, times, recorded


# ---------------------------------------------------------------------------
# law of the tilt process
# ---------------------------------------------------------------------------

def tilt_law_check(base, t, n_paths=100_000, dt=1e-3, seed=0, scheme="euler"):
    """Two-sample KS test of theta_t from the SDE against t X + W_t.

    The comparison sample draws X from the base directly and adds an
    independent Brownian increment; the KS statistic is checked against
    the 1% two-sample critical value.
    """
    if base.dim != 1:
        raise ValueError("law check is one-dimensional")
    if t == 0:
        return {"ks": 0.0, "critical": 0.0, "ok": True}
    theta, _, _ = _simulate_ensemble_theta(base, t, dt, n_paths, seed, scheme)
    from . import mc as mc_mod
    rng = np.random.default_rng([seed, 0xe1d])
    x = mc_mod.sample(base, n_paths, seed + 1).data[:, 0]
    direct = t * x + rng.standard_normal(n_paths) * math.sqrt(t)
    from scipy.stats import ks_2samp
    stat = float(ks_2samp(theta[:, 0], direct).statistic)
    critical = 1.628 * math.sqrt(2.0 / n_paths)
    return {"ks": stat, "critical": critical, "ok": bool(stat < critical)}


def gaussian_theta_covariance_check(s, t, n_paths=100_000, dt=1e-2, seed=0):
    """E theta_s theta_t = s t + min(s, t) for the standard Gaussian base,
    via the exact scheme; returns the estimate, target, and se."""
    if not 0 < s <= t:
        raise ValueError("need 0 < s <= t")
    from . import measures as M
    base = M.gaussian(np.zeros(1), np.eye(1))

    def recorder(theta, tt):
        return theta[:, 0].copy()

    _, _, rec = _simulate_ensemble_theta(
        base, t, dt, n_paths, seed, scheme="exact_gaussian",
        record_times=[s, t], recorder=recorder)
    th_s = rec[0][1]
    th_t = rec[-1][1]
    prods = th_s * th_t
    est = float(prods.mean())
    se = float(prods.std(ddof=1) / math.sqrt(n_paths))
    target = s * t + min(s, t)
    return {"estimate": est, "target": target, "se": se,
            "ok": bool(abs(est - target) <= 4 * se)}


# ---------------------------------------------------------------------------
# covariance process checks
# ---------------------------------------------------------------------------

def covariance_process_checks(path: LocalizationPath):
    """Discrete residuals of da = A dW and
    dA = sum_i T_i dW_i - A^2 dt along one path."""
    if path.dW is None:
        raise ValueError("need a path with stored Brownian increments")
    times = path.time_grid
    dt = float(times[1] - times[0])
    K = times.size
    base = path.base
    ra = 0.0
    rA = 0.0
    for k in range(K - 1):
        A = path.cov[k]
        da = path.barycenter[k + 1] - path.barycenter[k]
        ra += float(np.abs(da - A @ path.dW[k]).mean())
        dA = path.cov[k + 1] - path.cov[k]
        drift = -A @ A * dt
        if base.kind == "finite_atoms":
            p = _atom_tilted_probs(base, path.theta[k][None, :], times[k])[0]
            c = base.points - path.barycenter[k]
            tensor = np.einsum("k,ki,kj,kl->ijl", p, c, c, c)
            diff = tensor @ path.dW[k]
        else:
            diff = np.zeros_like(A)
            idx = np.arange(A.shape[0])
            diff[idx, idx] = path.m3_diag[k] * path.dW[k]
        rA += float(np.abs(dA - drift - diff).mean())
    return {"dt": dt, "residual_a": ra / (K - 1), "residual_A": rA / (K - 1)}


def residual_slope_study(base, T=0.5, dts=(1e-2, 5e-3, 2.5e-3), seed=0,
                         n_rep=6):
    """dt-refinement: both residuals should shrink at least linearly.

    Residuals are averaged over n_rep independent paths per dt to keep the
    fitted slope out of the Monte Carlo noise.
    """
    rows = []
    for i, dt in enumerate(dts):
        accum = {"dt": dt, "residual_a": 0.0, "residual_A": 0.0}
        for rep in range(n_rep):
            path = simulate_path(base, T, dt=dt, seed=seed + 1000 * i + rep)
            r = covariance_process_checks(path)
            accum["residual_a"] += r["residual_a"] / n_rep
            accum["residual_A"] += r["residual_A"] / n_rep
        rows.append(accum)
    la = np.log([r["residual_a"] for r in rows])
    lA = np.log([r["residual_A"] for r in rows])
    ld = np.log(list(dts))
    slope_a = float(np.polyfit(ld, la, 1)[0])
    slope_A = float(np.polyfit(ld, lA, 1)[0])
    return {"rows": rows, "slope_a": slope_a, "slope_A": slope_A}


# ---------------------------------------------------------------------------
# martingale machinery
# ---------------------------------------------------------------------------

@dataclass
class MartingaleTrace:
    values: np.ndarray
    increments: np.ndarray = field(default=None)
    quadratic_variation: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.increments is None:
            self.increments = np.diff(self.values)
        if self.quadratic_variation is None:
            qv = np.concatenate([[0.0], np.cumsum(self.increments ** 2)])
            self.quadratic_variation = qv
        assert np.all(np.diff(self.quadratic_variation) >= -1e-15)


def _expectation_recorder(base, f):
    """Returns recorder(theta, t) -> int f dmu_t per path, for 1D bases."""
    if base.kind == "finite_atoms":
        fx = np.array([f(p) for p in base.points])

        def rec(theta, t):
            p = _atom_tilted_probs(base, theta, t)
            return p @ fx
        return rec
    if base.dim != 1:
        raise ValueError("martingale recorder is 1D")
    pts, wts = _factor_rule(base if base.kind != "product"
                            else base.factors[0])
    fx = np.array([f(np.array([p])) for p in pts], dtype=float)

    def rec(theta, t):
        logw = (np.log(wts)[None, :] + theta[:, [0]] * pts[None, :]
                - 0.5 * t * pts[None, :] ** 2)
        logw -= logw.max(axis=1, keepdims=True)
        w = np.exp(logw)
        w /= w.sum(axis=1, keepdims=True)
        return w @ fx
    return rec


def martingale_checks(base, f, T=1.0, dt=1e-3, n_paths=20_000, seed=0,
                      checkpoints=(0.25, 0.5, 1.0)):
    """E int f dmu_T = int f dmu, and increments are uncorrelated with the
    past (two probe functionals: the constant 1 and the current value)."""
    rec = _expectation_recorder(base, f)
    times = sorted(set(c * T for c in checkpoints))
    _, _, recorded = _simulate_ensemble_theta(
        base, T, dt, n_paths, seed, record_times=[0.0] + times, recorder=rec)
    m0 = recorded[0][1]
    target = float(m0.mean())  # at t=0 every path carries int f dmu exactly
    mT = recorded[-1][1]
    se_T = float(mT.std(ddof=1) / math.sqrt(n_paths)) or 1e-15
    report = {"target": target, "terminal_mean": float(mT.mean()),
              "terminal_se": se_T,
              "ok_terminal": bool(abs(mT.mean() - target) <= 4 * se_T)}
    m_mid = recorded[1][1] if len(recorded) > 2 else m0
    inc = mT - m_mid
    for name, g in [("one", np.ones_like(m_mid)), ("value", m_mid)]:
        prods = inc * g
        se = float(prods.std(ddof=1) / math.sqrt(n_paths)) or 1e-15
        report["orth_%s" % name] = float(prods.mean())
        report["orth_%s_ok" % name] = bool(abs(prods.mean()) <= 4 * se)
    return report


def ensemble_martingale_traces(base, f, T=1.0, dt=1e-2, n_paths=10_000,
                               seed=0):
    """MartingaleTrace ensemble of int f dmu_t sampled on the full grid."""
    rec = _expectation_recorder(base, f)
    times = np.arange(0.0, T + dt / 2, dt)
    _, _, recorded = _simulate_ensemble_theta(
        base, T, dt, n_paths, seed, record_times=list(times), recorder=rec)
    values = np.stack([v for _, v in recorded], axis=1)
    return values, np.array([t for t, _ in recorded])


def brownian_traces(n_paths=20_000, T=1.0, dt=1e-3, seed=0):
    """Driftless toy ensemble: M = Brownian motion, <M> = t."""
    rng = np.random.default_rng(seed)
    inc = rng.standard_normal((n_paths, int(round(T / dt)))) * math.sqrt(dt)
    values = np.concatenate(
        [np.zeros((n_paths, 1)), np.cumsum(inc, axis=1)], axis=1)
    return values


def freedman_tail(traces, u, sigma2):
    """P(exists t: M_t >= u and <M>_t <= sigma2) <= exp(-u^2 / (2 sigma2)).

    traces: 2D array (n_traces, n_times) of martingale values, or a list of
    MartingaleTrace.  The empirical frequency must not exceed the bound by
    more than 3 binomial standard errors.
    """
    if isinstance(traces, (list, tuple)):
        values = np.stack([tr.values for tr in traces])
    else:
        values = np.asarray(traces, dtype=float)
    n = values.shape[0]
    if n < 10_000:
        raise ValueError("need at least 10^4 traces")
    qv = np.concatenate([np.zeros((n, 1)),
                         np.cumsum(np.diff(values, axis=1) ** 2, axis=1)],
                        axis=1)
    hit = np.any((values >= u) & (qv <= sigma2), axis=1)
    emp = float(hit.mean())
    bound = math.exp(-u * u / (2.0 * sigma2))
    se = math.sqrt(max(emp * (1 - emp), 1.0 / n) / n)
    return {"empirical": emp, "bound": bound, "se": se,
            "ok": bool(emp <= bound + 3 * se)}


# ---------------------------------------------------------------------------
# operator-norm excursions and concentration
# ---------------------------------------------------------------------------

def opnorm_excursion(base, t_max=1.0, dt=1e-2, n_paths=2000, seed=0,
                     threshold=2.0, n_checkpoints=10):
    """P(exists s <= t : ||A_s|| >= threshold) on a grid of t values.

    Products use the exact per-coordinate tilted variances.  Returns the
    estimated curve and a fitted constant C_hat for exp(-1/(C t)).
    """
    rng = np.random.default_rng(seed)
    times = np.arange(0.0, t_max + dt / 2, dt)
    K, dim = times.size, base.dim
    theta = np.zeros((n_paths, dim))
    ever = np.zeros(n_paths, dtype=bool)
    check_idx = np.unique(np.linspace(1, K - 1, n_checkpoints).astype(int))
    curve_t, curve_p = [], []
    for k in range(K):
        a, v, _, _ = tilted_moments(base, theta, times[k], with_m3=False)
        if base.kind == "finite_atoms":
            opn = np.linalg.eigvalsh(v)[:, -1]
        else:
            opn = v.max(axis=1)
        ever |= opn >= threshold
        if k in check_idx:
            curve_t.append(times[k])
            curve_p.append(float(ever.mean()))
        if k < K - 1:
            theta = theta + rng.standard_normal((n_paths, dim)) \
                * math.sqrt(dt) + a * dt
    curve_t, curve_p = np.array(curve_t), np.array(curve_p)
    assert np.all(np.diff(curve_p) >= -1e-12)  # running sup event
    pos = curve_p > 0
    c_hat = None
    if np.any(pos):
        c_hat = float(np.max(-1.0 / (curve_t[pos] * np.log(
            np.minimum(curve_p[pos], 1 - 1e-12)))))
    return {"t": curve_t, "prob": curve_p, "C_hat": c_hat}


def _product_halfspace_cdf(base, theta, t, r):
    """mu_t(x_1 <= r) per path for a product (or 1D) base."""
    from scipy.special import ndtr
    f = _factors_of(base)[0]
    th = theta[:, 0]
    if f.kind == "gaussian":
        mu = float(np.asarray(f.exact["mean"]).ravel()[0])
        s2 = float(np.asarray(f.exact["cov"]).ravel()[0])
        prec = 1.0 / s2 + t
        m = (mu / s2 + th) / prec
        return ndtr((r - m) * math.sqrt(prec))
    if f.kind == "shifted_exponential" and t > 0:
        sigma = 1.0 / math.sqrt(t)
        m0 = (th - 1.0) / t
        lo = (-1.0 - m0) / sigma
        hi = (r - m0) / sigma
        num = ndtr(-lo) - ndtr(-hi)
        den = ndtr(-lo)
        out = np.where(den < 1e-300, 1.0,
                       num / np.maximum(den, 1e-300))
        return np.clip(out, 0.0, 1.0)
    pts, wts = _factor_rule(f)
    logw = (np.log(wts)[None, :] + th[:, None] * pts[None, :]
            - 0.5 * t * pts[None, :] ** 2)
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    w /= w.sum(axis=1, keepdims=True)
    return w @ (pts <= r)


def concentration_experiment(base, r_grid, t_choice=None, dt=1e-2,
                             n_paths=4000, seed=0, c_log=2.0,
                             mc_samples=200_000):
    """Two-term split of the half-space concentration function.

    1 - mu(S_r) <= E[(1 - mu_t(S_r)) 1{mu_t(S) >= 1/4}] + P(mu_t(S) <= 1/4)
    at t = min(1/r, 1/(c_log log n)^2), reported alongside the direct
    Monte Carlo estimate of alpha(r) = 1 - mu(S_r) for S = {x_1 <= 0}.
    """
    from . import mc as mc_mod
    n = base.dim
    t_cap = 1.0 / (c_log * max(math.log(n), 1.0)) ** 2
    direct = mc_mod.concentration_function(
        base, np.asarray(r_grid, dtype=float), n=mc_samples, seed=seed + 99)
    alpha = direct["alpha"]
    alpha_se = np.sqrt(np.maximum(alpha * (1 - alpha), 1.0 / mc_samples)
                       / mc_samples)
    rows = []
    for i, r in enumerate(r_grid):
        t = t_choice(r) if t_choice else min(1.0 / r if r > 0 else t_cap,
                                             t_cap)
        rng = np.random.default_rng([seed, i])
        theta = np.zeros((n_paths, n))
        times = np.arange(0.0, t + dt / 2, dt)
        for k in range(times.size - 1):
            a = tilted_drift(base, theta, times[k])
            theta = theta + rng.standard_normal((n_paths, n)) \
                * math.sqrt(dt) + a * dt
        t_end = times[-1]
        mu_sr = _product_halfspace_cdf(base, theta, t_end, float(r))
        mu_s = _product_halfspace_cdf(base, theta, t_end, 0.0)
        good = mu_s >= 0.25
        term1 = float(np.mean((1.0 - mu_sr) * good))
        term2 = float(np.mean(~good))
        rows.append({"r": float(r), "t": float(t_end), "term1": term1,
                     "term2": term2, "sum": term1 + term2,
                     "direct": float(alpha[i]), "se": float(alpha_se[i])})
    return rows


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def trace_to_csv(path_obj_or_rows, out_path, mu_s=None, m_values=None):
    """(t, ||A_t||, mu_t(S), M_t) rows for one experiment."""
    if isinstance(path_obj_or_rows, LocalizationPath):
        p = path_obj_or_rows
        k = p.time_grid.size
        mu_s = np.full(k, np.nan) if mu_s is None else mu_s
        m_values = np.full(k, np.nan) if m_values is None else m_values
        rows = zip(p.time_grid, p.opnorms, mu_s, m_values)
    else:
        rows = path_obj_or_rows
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "opnorm_A", "mu_t_S", "M_t"])
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def config_to_json(cfg, out_path):
    with open(out_path, "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)


def config_from_json(path):
    with open(path) as fh:
        return json.load(fh)
