"""One-dimensional log-concave laws: profiles, Cheeger, FD spectral gap.

A Law1D wraps a density on an interval with a cached-quadrature cdf and a
bisection quantile.  On top of it sit the isoperimetric profile
I(p) = min{rho(F^{-1}(p)), rho((1-F)^{-1}(p))}, the half-line Cheeger
constant with its brute-force interval-union oracle, a Neumann
finite-difference solver for the spectral gap (C_P = 1/lambda_1), moment
norms, density envelopes, and the variance of a one-sided truncated
standard Gaussian.

The truncated-Gaussian variance v(x) = Var(g | g >= x) is evaluated through
the hazard function h = phi/(1-Phi):  v = 1 + x h - h^2.  The direct formula
loses ~x^4 ulps to cancellation, so beyond x = 20 an asymptotic series
v = x^{-2} (1 - 6 x^{-2} + 50 x^{-4} - 518 x^{-6} + 6354 x^{-8} - 89782 x^{-10})
takes over; both branches agree to ~1e-11 at the crossover.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.linalg import eigh_tridiagonal
from scipy.special import erfcx, ndtr

from .spectral import SpectralEstimate

_SQRT_2PI = math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Law1D
# ---------------------------------------------------------------------------

class Law1D:
    """A 1D probability law given by its (log-)density on a support interval.

    The cdf is built once from a composite Gauss-Legendre rule on a panel
    grid covering the practical support and cached; arbitrary-point cdf
    values add a partial-panel quadrature on top of the cached edges.
    Quantiles are obtained by bisection to 1e-12.
    """

    #: number of panels in the cached cumulative rule
    N_PANELS = 2000
    #: nodes per panel
    PANEL_ORDER = 10

    def __init__(self, density, support, log_density=None, name=""):
        self.name = name
        self.support = (float(support[0]), float(support[1]))
        self._density_fn = density
        self._log_density_fn = log_density
        lo, hi = self._practical_range()
        self.lo, self.hi = lo, hi
        gx, gw = np.polynomial.legendre.leggauss(self.PANEL_ORDER)
        edges = np.linspace(lo, hi, self.N_PANELS + 1)
        h = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes = mid[:, None] + h[:, None] * gx[None, :]
        vals = self.density(nodes.ravel()).reshape(nodes.shape)
        panel_mass = (vals * gw[None, :]).sum(axis=1) * h
        self._edges = edges
        self._gx, self._gw = gx, gw
        self._cum = np.concatenate([[0.0], np.cumsum(panel_mass)])
        self.total_mass = float(self._cum[-1])
        self._cum /= self.total_mass

    # -- basic evaluations -------------------------------------------------
    def density(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        xv = np.atleast_1d(x)
        out = np.asarray(self._density_fn(xv), dtype=float)
        lo, hi = self.support
        out = np.where((xv < lo) | (xv > hi), 0.0, out)
        return float(out[0]) if scalar else out

    def log_density(self, x):
        if self._log_density_fn is not None:
            x = np.asarray(x, dtype=float)
            scalar = x.ndim == 0
            xv = np.atleast_1d(x)
            out = np.asarray(self._log_density_fn(xv), dtype=float)
            lo, hi = self.support
            out = np.where((xv < lo) | (xv > hi), -np.inf, out)
            return float(out[0]) if scalar else out
        with np.errstate(divide="ignore"):
            return np.log(self.density(x))

    def _practical_range(self):
        lo, hi = self.support
        if math.isfinite(lo) and math.isfinite(hi):
            return lo, hi
        # walk outward from a finite seed until the density is negligible
        seed_lo = lo if math.isfinite(lo) else -1.0
        seed_hi = hi if math.isfinite(hi) else 1.0
        width = max(1.0, seed_hi - seed_lo)
        f = self._density_fn
        peak = max(float(np.max(f(np.linspace(seed_lo, seed_hi, 101)))), 1e-300)
        cut = peak * 1e-17
        a, b = seed_lo, seed_hi
        while not math.isfinite(lo) and float(f(np.array([a]))[0]) > cut:
            a -= width
            width *= 1.3
        width = max(1.0, seed_hi - seed_lo)
        while not math.isfinite(hi) and float(f(np.array([b]))[0]) > cut:
            b += width
            width *= 1.3
        return (lo if math.isfinite(lo) else a), (hi if math.isfinite(hi) else b)

    # -- cdf / quantile ----------------------------------------------------
    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        xv = np.atleast_1d(x).copy()
        out = np.empty_like(xv)
        below = xv <= self._edges[0]
        above = xv >= self._edges[-1]
        out[below], out[above] = 0.0, 1.0
        mid = ~(below | above)
        if np.any(mid):
            xm = xv[mid]
            idx = np.searchsorted(self._edges, xm, side="right") - 1
            left = self._edges[idx]
            h = 0.5 * (xm - left)
            c = left[:, None] + h[:, None] * (self._gx[None, :] + 1.0)
            vals = self.density(c.ravel()).reshape(c.shape)
            partial = (vals * self._gw[None, :]).sum(axis=1) * h
            out[mid] = self._cum[idx] + partial / self.total_mass
        out = np.clip(out, 0.0, 1.0)
        return float(out[0]) if scalar else out

    def quantile(self, p, tol=1e-12):
        p = np.asarray(p, dtype=float)
        scalar = p.ndim == 0
        pv = np.atleast_1d(p)
        if np.any((pv <= 0.0) | (pv >= 1.0)):
            raise ValueError("quantile defined for p in (0,1)")
        a = np.full(pv.shape, self._edges[0])
        b = np.full(pv.shape, self._edges[-1])
        # seed the bracket from the cached panel cdf
        idx = np.searchsorted(self._cum, pv) - 1
        idx = np.clip(idx, 0, self.N_PANELS - 1)
        a = self._edges[idx]
        b = self._edges[idx + 1]
        for _ in range(64):
            m = 0.5 * (a + b)
            fm = self.cdf(m)
            lowside = fm < pv
            a = np.where(lowside, m, a)
            b = np.where(lowside, b, m)
            if np.max(b - a) < tol:
                break
        out = 0.5 * (a + b)
        return float(out[0]) if scalar else out


# -- catalog constructors ---------------------------------------------------

def law_interval(a=0.0, b=1.0):
    a, b = float(a), float(b)
    inv = 1.0 / (b - a)
    return Law1D(lambda x: np.where((x >= a) & (x <= b), inv, 0.0), (a, b),
                 log_density=lambda x: np.where((x >= a) & (x <= b),
                                                math.log(inv), -np.inf),
                 name=f"uniform[{a:g},{b:g}]")


def law_gaussian(mean=0.0, sd=1.0):
    mean, sd = float(mean), float(sd)

    def f(x):
        z = (x - mean) / sd
        return np.exp(-0.5 * z * z) / (sd * _SQRT_2PI)

    def logf(x):
        z = (x - mean) / sd
        return -0.5 * z * z - math.log(sd * _SQRT_2PI)

    return Law1D(f, (-np.inf, np.inf), log_density=logf,
                 name=f"gaussian({mean:g},{sd:g}^2)")


def law_shifted_exponential():
    return Law1D(lambda x: np.where(x >= -1.0, np.exp(-(x + 1.0)), 0.0),
                 (-1.0, np.inf),
                 log_density=lambda x: np.where(x >= -1.0, -(x + 1.0), -np.inf),
                 name="exp(1)-1")


def law_from_measure(m):
    """Law1D view of a 1D catalog measure (pure quadrature path)."""
    if m.dim != 1:
        raise ValueError("law_from_measure needs a 1D measure")
    pot = m.potential

    def f(x):
        return np.array([math.exp(-pot.psi(np.array([u]))) for u in np.atleast_1d(x)])

    def logf(x):
        return np.array([-pot.psi(np.array([u])) for u in np.atleast_1d(x)])

    if m.kind == "interval":
        supp = (m.params["a"], m.params["b"])
    elif m.kind == "shifted_exponential":
        supp = (-1.0, np.inf)
    else:
        supp = (-np.inf, np.inf)
    return Law1D(f, supp, log_density=logf, name=m.kind)


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------

@dataclass
class Profile1D:
    """Isoperimetric profile on a p-grid.

    I(p) = min{rho(F^{-1}(p)), rho(F^{-1}(1-p))}: the smaller boundary
    density of the two rays carrying mass p.  I_eps optionally holds the
    finite-enlargement version (eps, min ray-neighborhood mass / eps).
    """
    grid: np.ndarray
    I: np.ndarray
    I_eps: Optional[tuple] = None

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["p", "I", "psi_candidate"])
            for p, i in zip(self.grid, self.I):
                w.writerow([repr(float(p)), repr(float(i)),
                            repr(float(min(p, 1 - p) / i) if i > 0 else np.inf)])


def isoperimetric_profile(law: Law1D, grid) -> Profile1D:
    """Profile I(p) over the grid; checks concavity of rho o F^{-1}."""
    grid = np.asarray(grid, dtype=float)
    if np.any((grid <= 0.0) | (grid >= 1.0)):
        raise ValueError("profile grid must lie in the open interval (0,1)")
    q_lo = law.quantile(grid)
    q_hi = law.quantile(1.0 - grid)
    I = np.minimum(law.density(q_lo), law.density(q_hi))
    # concavity of rho o F^{-1} (discrete second differences on the grid)
    if grid.size >= 3 and np.allclose(np.diff(grid), grid[1] - grid[0]):
        g = law.density(q_lo)
        d2 = g[:-2] - 2 * g[1:-1] + g[2:]
        scale = max(1.0, float(np.max(np.abs(g))))
        if np.max(d2) > 1e-6 * scale:
            raise AssertionError("rho o F^{-1} concavity violated on the grid")
    return Profile1D(grid=grid, I=I)


def minkowski_increment(law: Law1D, p, eps):
    """min over the two rays with mass p of mu(S_eps \\ S)."""
    q = law.quantile(p)
    left = law.cdf(q + eps) - p          # S = (-inf, q]
    qr = law.quantile(1.0 - p)          # S = [qr, inf) with mass p
    right = law.cdf(qr) - law.cdf(qr - eps)
    return min(left, right)


def phi_shift_concave_violation(law: Law1D, eps, grid):
    """max positive 2nd difference of p -> F(F^{-1}(p) + eps) on the grid."""
    grid = np.asarray(grid, dtype=float)
    vals = law.cdf(law.quantile(grid) + eps)
    d2 = vals[:-2] - 2 * vals[1:-1] + vals[2:]
    return float(np.max(d2))


# ---------------------------------------------------------------------------
# moments and envelopes
# ---------------------------------------------------------------------------

def moment_norm(law: Law1D, p):
    """(E|X|^p)^{1/p}; p = 0 means exp(E log|X|).  Diverges for p <= -1."""
    if p <= -1.0:
        raise ValueError("moment diverges")
    lo, hi = law.lo, law.hi
    pts = [0.0] if lo < 0.0 < hi else None
    if p == 0.0:
        val, _ = integrate.quad(lambda x: np.log(np.abs(x)) * law.density(x),
                                lo, hi, points=pts, limit=200)
        return math.exp(val)
    val, _ = integrate.quad(lambda x: np.abs(x) ** p * law.density(x),
                            lo, hi, points=pts, limit=200)
    return val ** (1.0 / p)


def density_envelope(law: Law1D, grid_size=4001):
    """Fits c' 1_{|x|<=c''} <= rho(x) <= C e^{-c|x|} for an isotropic law.

    The lower box maximizes c' * c'' over grid candidates c'' with
    c' = min rho on [-c'', c'']; the upper envelope is a least-squares fit
    of log rho against -c|x| lifted so it holds pointwise on the grid.
    """
    mu = moment_nth(law, 1)
    var = moment_nth(law, 2) - mu ** 2
    if abs(mu) > 1e-6 or abs(var - 1.0) > 1e-5:
        raise ValueError("density_envelope requires an isotropic law")
    x = np.linspace(law.lo, law.hi, grid_size)
    rho = law.density(x)
    inside = rho > 0
    # lower box
    cands = np.linspace(0.05, max(abs(law.lo), abs(law.hi)), 400)
    best = (0.0, 0.0)
    for cpp in cands:
        mask = np.abs(x) <= cpp
        if not np.any(mask):
            continue
        cp = float(np.min(np.where(mask, rho, np.inf)))
        if cp > 0 and cp * cpp > best[0] * best[1]:
            best = (cp, cpp)
    cp, cpp = best
    # upper exponential envelope, least squares on the log scale
    xs, ls = x[inside], np.log(rho[inside])
    A = np.vstack([np.ones_like(xs), -np.abs(xs)]).T
    coef, *_ = np.linalg.lstsq(A, ls, rcond=None)
    logC, c = coef
    logC = float(np.max(ls + c * np.abs(xs)))  # lift to a valid envelope
    return {"c_prime": cp, "c_doubleprime": cpp, "c": float(c), "C": math.exp(logC)}


def moment_nth(law: Law1D, n):
    val, _ = integrate.quad(lambda x: x ** n * law.density(x), law.lo, law.hi,
                            limit=200)
    return val


# ---------------------------------------------------------------------------
# Cheeger
# ---------------------------------------------------------------------------

def cheeger_1d(law: Law1D, grid_size=2001) -> SpectralEstimate:
    """Half-line Cheeger constant: sup_p min(p, 1-p) / I(p).

    Uses the fact that the worst enlargement set among all finite interval
    unions is a half line; `cheeger_intervals_oracle` brute-forces unions of
    up to two intervals to confirm that numerically.
    """
    eps = 1e-4
    grid = np.linspace(eps, 1.0 - eps, grid_size)
    prof = isoperimetric_profile(law, grid)
    if np.any(prof.I <= 0.0):
        raise ValueError("disconnected support")
    ratios = np.minimum(grid, 1.0 - grid) / prof.I
    k = int(np.argmax(ratios))
    return SpectralEstimate(value=float(ratios[k]), bound_kind="two_sided",
                            method="cheeger_halfline", se=0.0,
                            meta={"argmax_p": float(grid[k])})


def cheeger_intervals_oracle(law: Law1D, n_grid=36):
    """Brute force over unions of <= 2 intervals with quantile endpoints.

    Endpoints live on a quantile grid augmented with the two support ends
    (whose boundary density does not count toward the perimeter).  The
    complement of a 2-interval union has the same ratio, so 3-interval
    complements are covered implicitly.
    """
    ps = np.linspace(1.0 / (n_grid + 1), n_grid / (n_grid + 1.0), n_grid)
    # the even split is the optimizer for symmetric unimodal laws; make sure
    # the grid contains it exactly rather than straddling it
    ps = np.unique(np.concatenate([ps, [0.5]]))
    qs = law.quantile(ps)
    dens = law.density(qs)
    # sentinel endpoints at the support ends: mass 0/1, no boundary density
    mass = np.concatenate([[0.0], ps, [1.0]])
    bdry = np.concatenate([[0.0], dens, [0.0]])
    npts = mass.size
    best = 0.0
    best_sets = None
    idx = np.arange(npts)
    # single intervals
    for i in range(npts - 1):
        for j in range(i + 1, npts):
            m = mass[j] - mass[i]
            per = bdry[i] + bdry[j]
            m = min(m, 1.0 - m)
            if per > 0 and m / per > best:
                best, best_sets = m / per, ((i, j),)
    # unions of two disjoint intervals
    for i in range(npts - 3):
        for j in range(i + 1, npts - 2):
            m1 = mass[j] - mass[i]
            p1 = bdry[i] + bdry[j]
            for k in range(j + 1, npts - 1):
                for l in range(k + 1, npts):
                    m = m1 + mass[l] - mass[k]
                    per = p1 + bdry[k] + bdry[l]
                    m = min(m, 1.0 - m)
                    if per > 0 and m / per > best:
                        best, best_sets = m / per, ((i, j), (k, l))
    return {"psi": best, "sets": best_sets}


# ---------------------------------------------------------------------------
# finite-difference spectral gap
# ---------------------------------------------------------------------------

def spectral_gap_fd(law: Law1D, grid_size=10_000, logdrop=320.0) -> SpectralEstimate:
    """C_P = 1/lambda_1 of the Neumann operator L = d^2/dx^2 - psi' d/dx.

    Finite-volume discretization on cell centers, symmetrized in the
    mu-weighted inner product via density ratios (computed in log space so
    deep tails cost nothing).  Richardson extrapolation over grid_size and
    2*grid_size; a warning flag is set if the two disagree by > 1%.

    The interval is the practical support extended until the log density has
    dropped by `logdrop` nats from its peak: exponential tails converge only
    like pi^2/T^2 in the eigenvalue, so a mass-based cut (e.g. 1e-10) is far
    too short for them while costing nothing for bounded supports.
    """
    if grid_size < 100:
        raise ValueError("grid too coarse")
    lo, hi = _fd_interval(law, logdrop)
    lam_c = _fd_lambda1(law, lo, hi, grid_size)
    lam_f = _fd_lambda1(law, lo, hi, 2 * grid_size)
    lam = (4.0 * lam_f - lam_c) / 3.0
    warn = abs(lam_f - lam_c) > 0.01 * abs(lam)
    return SpectralEstimate(value=1.0 / lam, bound_kind="two_sided",
                            method="fd_neumann",
                            se=abs(1.0 / lam - 1.0 / lam_f),
                            meta={"lambda1": lam, "coarse": lam_c, "fine": lam_f,
                                  "interval": (lo, hi), "warning": bool(warn)})


def _fd_interval(law: Law1D, logdrop):
    slo, shi = law.support
    lo, hi = law.quantile(1e-9), law.quantile(1.0 - 1e-9)
    peak = float(np.max(law.log_density(np.linspace(lo, hi, 513))))
    step = 0.25 * (hi - lo)
    lo_t, hi_t = lo, hi
    for _ in range(200):
        if lo_t - step < slo:
            lo_t = slo
            break
        if float(law.log_density(np.array([lo_t - step]))[0]) < peak - logdrop:
            break
        lo_t -= step
    for _ in range(200):
        if hi_t + step > shi:
            hi_t = shi
            break
        if float(law.log_density(np.array([hi_t + step]))[0]) < peak - logdrop:
            break
        hi_t += step
    return lo_t, hi_t


def _fd_lambda1(law: Law1D, lo, hi, m):
    h = (hi - lo) / m
    centers = lo + (np.arange(m) + 0.5) * h
    logrho_c = law.log_density(centers)
    logrho_e = law.log_density(lo + np.arange(1, m) * h)  # interior edges
    # symmetrized off-diagonal: -rho_edge / (h^2 sqrt(rho_i rho_{i+1}))
    off = -np.exp(logrho_e - 0.5 * (logrho_c[:-1] + logrho_c[1:])) / h ** 2
    # the diagonal of the generator survives the similarity transform as
    # rho_edge / (h^2 rho_center), summed over the cell's interior edges;
    # boundary cells keep only their inner edge (no-flux condition).  The
    # cosh((h/2) d(log rho)) excess over |off| is the discrete form of the
    # ground-state potential psi'^2/4 - psi''/2, so it must not be flattened
    # into -sum(off) or every tail mode collapses toward the free Laplacian.
    diag = np.zeros(m)
    diag[:-1] += np.exp(logrho_e - logrho_c[:-1]) / h ** 2
    diag[1:] += np.exp(logrho_e - logrho_c[1:]) / h ** 2
    vals = eigh_tridiagonal(diag, off, select="i", select_range=(0, 1),
                            eigvals_only=True)
    return float(vals[1])


def spectral_runs_to_csv(rows, path):
    """rows of (grid_size, lambda1, C_P) -> CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["grid_size", "lambda1", "C_P"])
        for r in rows:
            w.writerow([r[0], repr(float(r[1])), repr(float(r[2]))])


# ---------------------------------------------------------------------------
# truncated Gaussian variance
# ---------------------------------------------------------------------------

def normal_hazard(x):
    """h(x) = phi(x)/(1 - Phi(x)), stable on the whole real line."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    xv = np.atleast_1d(x)
    out = np.empty_like(xv)
    pos = xv >= 0.0
    out[pos] = math.sqrt(2.0 / math.pi) / erfcx(xv[pos] / math.sqrt(2.0))
    xn = xv[~pos]
    out[~pos] = np.exp(-0.5 * xn * xn) / (_SQRT_2PI * ndtr(-xn))
    return float(out[0]) if scalar else out


def truncated_gaussian_variance(x):
    """v(x) = Var(g | g >= x) for standard Gaussian g.

    v = 1 + x h(x) - h(x)^2 with the hazard h; asymptotic series branch for
    x > 20 where the direct formula would cancel catastrophically.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    xv = np.atleast_1d(x).astype(float)
    out = np.empty_like(xv)
    big = xv > 20.0
    if np.any(~big):
        xs = xv[~big]
        h = normal_hazard(xs)
        out[~big] = 1.0 + xs * h - h * h
    if np.any(big):
        u = 1.0 / (xv[big] * xv[big])
        out[big] = u * (1.0 - 6.0 * u + 50.0 * u ** 2 - 518.0 * u ** 3
                        + 6354.0 * u ** 4 - 89782.0 * u ** 5)
    return float(out[0]) if scalar else out
