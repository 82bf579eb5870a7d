"""Catalog of log-concave probability measures.

Every measure is represented by its potential psi = -log(density), with the
density normalized whenever the normalizer is known in closed form.  The
catalog covers the standard examples: uniform on an interval / convex body,
the centered exponential Exp(1)-1, Gaussians, the complex-exponential product
density prod_j e^{-|z_j|} / 2pi on R^{2n}, finite products, and Gaussian
tilts  rho(x) * exp(x.theta - (t/2)|x|^2) / Z.

Exact first/second moments, Poincare constants and differential entropies are
stored at construction where closed forms exist, so downstream Monte Carlo
estimators always compare against constants rather than against each other.

All objects are immutable after construction and safe to share across
workers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Potential:
    """Extended-real convex potential psi with derivatives.

    psi returns +inf outside the support.  grad/hessian raise ValueError
    where the derivative is undefined (body boundaries, the origin of the
    complex-exponential factors) instead of silently returning zeros.

    regularity flags: ``smooth`` (C^2 on the support interior),
    ``strongly_convex`` (a value t > 0 meaning hess >= t*Id, or None),
    ``bounded_hessian`` (an upper bound on ||hess||, or None).
    """

    dim: int
    psi: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    regularity: dict = field(default_factory=dict)

    def is_smooth(self):
        return bool(self.regularity.get("smooth", False))

    def strong_convexity(self):
        return self.regularity.get("strongly_convex", None)


def _as_point(x, dim):
    x = np.asarray(x, dtype=float)
    if x.shape != (dim,):
        x = x.reshape(dim)
    return x


# ---------------------------------------------------------------------------
# convex bodies
# ---------------------------------------------------------------------------

class ConvexBody:
    """A convex body given by kind + parameters, with membership test.

    kinds: cube (axis-parallel, side s, anchored at 0 or centered),
    ball (radius r, centered), simplex (regular, centered at the barycenter,
    edge length sqrt(2) before scaling), halfspaces (intersection of
    {x : n_i . x <= c_i}).
    """

    def __init__(self, kind, dim, **params):
        self.kind = kind
        self.dim = int(dim)
        self.params = params
        if kind == "cube":
            side = float(params["side"])
            self.side = side
            self.centered = bool(params.get("centered", False))
            self.lo = -side / 2.0 if self.centered else 0.0
            self.hi = side / 2.0 if self.centered else side
            self.diameter = side * math.sqrt(dim)
            self.volume = side ** dim
        elif kind == "ball":
            r = float(params["radius"])
            self.radius = r
            self.diameter = 2.0 * r
            self.volume = math.exp(
                dim * math.log(r) + (dim / 2.0) * math.log(math.pi)
                - gammaln(dim / 2.0 + 1.0))
        elif kind == "simplex":
            scale = float(params.get("scale", 1.0))
            self.scale = scale
            self.vertices = scale * _regular_simplex_vertices(dim)
            self.diameter = scale * math.sqrt(2.0)
            # volume of the edge-sqrt(2) regular simplex is sqrt(n+1)/n!
            self.volume = scale ** dim * math.exp(
                0.5 * math.log(dim + 1.0) - gammaln(dim + 1.0))
            aug = np.vstack([self.vertices.T, np.ones(dim + 1)])
            self._bary = np.linalg.inv(aug)
        elif kind == "halfspaces":
            self.normals = np.asarray(params["normals"], dtype=float)
            self.offsets = np.asarray(params["offsets"], dtype=float)
            self.diameter = params.get("diameter", None)
            self.volume = params.get("volume", None)
        else:
            raise ValueError(f"unknown body kind {kind!r}")

    def contains(self, x, tol=1e-12):
        x = _as_point(x, self.dim)
        if self.kind == "cube":
            return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))
        if self.kind == "ball":
            return bool(np.dot(x, x) <= (self.radius + tol) ** 2)
        if self.kind == "simplex":
            lam = self._bary @ np.append(x, 1.0)
            return bool(np.all(lam >= -tol))
        return bool(np.all(self.normals @ x <= self.offsets + tol))

    def center(self):
        if self.kind == "cube":
            return np.full(self.dim, (self.lo + self.hi) / 2.0)
        return np.zeros(self.dim)

    def to_json(self):
        d = {"kind": self.kind, "dim": self.dim}
        if self.kind == "cube":
            d.update(side=self.side, centered=self.centered)
        elif self.kind == "ball":
            d.update(radius=self.radius)
        elif self.kind == "simplex":
            d.update(scale=self.scale)
        else:
            d.update(normals=self.normals.tolist(), offsets=self.offsets.tolist())
        return d

    @staticmethod
    def from_json(d):
        kind = d["kind"]
        dim = d["dim"]
        params = {k: v for k, v in d.items() if k not in ("kind", "dim")}
        return ConvexBody(kind, dim, **params)


def _regular_simplex_vertices(n):
    """Vertices of the regular n-simplex centered at 0, edge sqrt(2).

    Standard embedding: project e_1..e_{n+1} in R^{n+1} onto the hyperplane
    orthogonal to (1,...,1) and express in an orthonormal basis of it.
    Sum of the resulting rank-one frames is the identity, which gives
    Cov(uniform) = Id / ((n+1)(n+2)) for free.
    """
    e = np.eye(n + 1)
    c = np.full(n + 1, 1.0 / (n + 1))
    u = e - c
    basis = _ones_complement_basis(n + 1)
    return u @ basis


def _ones_complement_basis(m):
    """Deterministic orthonormal basis (m x (m-1)) of {x in R^m : sum x = 0}."""
    a = np.zeros((m, m - 1))
    for k in range(1, m):
        a[:k, k - 1] = 1.0
        a[k, k - 1] = -k
        a[:, k - 1] /= math.sqrt(k * (k + 1.0))
    return a


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------

class LogConcaveMeasure:
    """A log-concave probability measure from the catalog.

    Attributes:
        kind: tag among {interval, shifted_exponential, gaussian,
            uniform_body, complex_exponential, product, gaussian_tilt,
            affine, finite_atoms}.
        dim: ambient dimension.
        potential: the Potential of -log density (normalized when possible).
        exact: dict with any of mean/cov/C_P/entropy known in closed form,
            or None when no closed form exists for the kind.
        params: kind-specific parameters (used for serialization).
    """

    def __init__(self, kind, dim, potential, exact=None, params=None, meta=None):
        self.kind = kind
        self.dim = int(dim)
        self.potential = potential
        self.exact = exact
        self.params = params or {}
        self.meta = meta or {}

    # density helpers ------------------------------------------------------
    def log_density(self, x):
        return -self.potential.psi(_as_point(x, self.dim))

    def density(self, x):
        ld = self.log_density(x)
        return math.exp(ld) if ld > -np.inf else 0.0

    def __repr__(self):
        return f"LogConcaveMeasure({self.kind}, dim={self.dim})"

    def to_json(self):
        return {"kind": self.kind, "params": _params_to_json(self.kind, self.params)}

    @staticmethod
    def from_json(d):
        return measure_from_json(d)


# -- constructors -----------------------------------------------------------

def interval(a, b):
    """Uniform law on [a, b].  Var = (b-a)^2/12, C_P = (b-a)^2/pi^2."""
    a, b = float(a), float(b)
    if not b > a:
        raise ValueError("need b > a")
    L = b - a
    logL = math.log(L)

    def psi(x):
        return logL if a <= x[0] <= b else np.inf

    def grad(x):
        if a < x[0] < b:
            return np.zeros(1)
        raise ValueError("gradient undefined on the boundary")

    def hess(x):
        if a < x[0] < b:
            return np.zeros((1, 1))
        raise ValueError("hessian undefined on the boundary")

    pot = Potential(1, psi, grad, hess, {"smooth": False})
    exact = {
        "mean": np.array([(a + b) / 2.0]),
        "cov": np.array([[L ** 2 / 12.0]]),
        "C_P": L ** 2 / math.pi ** 2,
        "entropy": logL,
    }
    return LogConcaveMeasure("interval", 1, pot, exact, {"a": a, "b": b})


def shifted_exponential():
    """Law of Exp(1) - 1: density e^{-(x+1)} on [-1, inf).

    Mean 0, variance 1; the Poincare constant is 4 (the spectral gap of
    f'' - f' on the half line is 1/4, the bottom of the essential spectrum).
    """

    def psi(x):
        return x[0] + 1.0 if x[0] >= -1.0 else np.inf

    def grad(x):
        if x[0] > -1.0:
            return np.ones(1)
        raise ValueError("gradient undefined on the boundary")

    def hess(x):
        if x[0] > -1.0:
            return np.zeros((1, 1))
        raise ValueError("hessian undefined on the boundary")

    pot = Potential(1, psi, grad, hess, {"smooth": False})
    exact = {
        "mean": np.zeros(1), "cov": np.eye(1), "C_P": 4.0, "entropy": 1.0,
    }
    return LogConcaveMeasure("shifted_exponential", 1, pot, exact, {})


def gaussian(mean, cov):
    """Gaussian N(mean, cov).  C_P = largest eigenvalue of cov."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    n = mean.shape[0]
    if cov.shape != (n, n):
        raise ValueError("cov shape mismatch")
    prec = np.linalg.inv(cov)
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise ValueError("cov must be positive definite")
    lognorm = 0.5 * (n * math.log(2.0 * math.pi) + logdet)
    eigs = np.linalg.eigvalsh(cov)

    def psi(x):
        d = x - mean
        return 0.5 * d @ prec @ d + lognorm

    def grad(x):
        return prec @ (x - mean)

    def hess(x):
        return prec

    pot = Potential(n, psi, grad, hess,
                    {"smooth": True,
                     "strongly_convex": 1.0 / eigs.max(),
                     "bounded_hessian": 1.0 / eigs.min()})
    exact = {
        "mean": mean, "cov": cov, "C_P": float(eigs.max()),
        "entropy": 0.5 * (n * math.log(2.0 * math.pi * math.e) + logdet),
    }
    return LogConcaveMeasure("gaussian", n, pot, exact,
                             {"mean": mean, "cov": cov})


def uniform_body(body: ConvexBody):
    """Uniform probability measure on a convex body."""
    n = body.dim
    logvol = math.log(body.volume) if body.volume else 0.0

    def psi(x):
        return logvol if body.contains(x) else np.inf

    def grad(x):
        if body.contains(x, tol=-1e-9):  # strict interior
            return np.zeros(n)
        raise ValueError("gradient undefined on the boundary")

    def hess(x):
        if body.contains(x, tol=-1e-9):
            return np.zeros((n, n))
        raise ValueError("hessian undefined on the boundary")

    pot = Potential(n, psi, grad, hess, {"smooth": False})
    exact = None
    if body.kind == "cube":
        s = body.side
        exact = {"mean": body.center(),
                 "cov": (s ** 2 / 12.0) * np.eye(n),
                 "C_P": s ** 2 / math.pi ** 2,
                 "entropy": n * math.log(s)}
    elif body.kind == "ball":
        r = body.radius
        exact = {"mean": np.zeros(n),
                 "cov": (r ** 2 / (n + 2.0)) * np.eye(n),
                 "entropy": math.log(body.volume)}
    elif body.kind == "simplex":
        c = body.scale ** 2 / ((n + 1.0) * (n + 2.0))
        exact = {"mean": np.zeros(n),
                 "cov": c * np.eye(n),
                 "entropy": math.log(body.volume)}
    return LogConcaveMeasure("uniform_body", n, pot, exact, {"body": body})


def complex_exponential(n):
    """Product density prod_{j<=n} e^{-|z_j|}/(2 pi) on C^n = R^{2n}.

    Each factor has radial law Gamma(2); Cov = 3 * Id on R^{2n}.
    """
    n = int(n)
    dim = 2 * n
    lognorm = n * math.log(2.0 * math.pi)

    def psi(x):
        z = x.reshape(n, 2)
        return float(np.sum(np.hypot(z[:, 0], z[:, 1]))) + lognorm

    def grad(x):
        z = x.reshape(n, 2)
        r = np.hypot(z[:, 0], z[:, 1])
        if np.any(r == 0.0):
            raise ValueError("gradient undefined at a factor origin")
        return (z / r[:, None]).reshape(dim)

    def hess(x):
        z = x.reshape(n, 2)
        r = np.hypot(z[:, 0], z[:, 1])
        if np.any(r == 0.0):
            raise ValueError("hessian undefined at a factor origin")
        h = np.zeros((dim, dim))
        for j in range(n):
            v = z[j] / r[j]
            blk = (np.eye(2) - np.outer(v, v)) / r[j]
            h[2 * j:2 * j + 2, 2 * j:2 * j + 2] = blk
        return h

    pot = Potential(dim, psi, grad, hess, {"smooth": False})
    exact = {
        "mean": np.zeros(dim), "cov": 3.0 * np.eye(dim),
        "entropy": n * (math.log(2.0 * math.pi) + 2.0),
    }
    return LogConcaveMeasure("complex_exponential", dim, pot, exact, {"n": n})


def product(factors):
    """Independent product of catalog measures, on the sum of dimensions.

    C_P of the product is the max of the factors' constants (tensorization);
    stored only when every factor has an exact value.
    """
    factors = list(factors)
    dims = [m.dim for m in factors]
    offs = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    dim = int(offs[-1])
    slices = [slice(offs[i], offs[i + 1]) for i in range(len(factors))]

    def psi(x):
        return sum(m.potential.psi(x[s]) for m, s in zip(factors, slices))

    def grad(x):
        return np.concatenate([m.potential.grad(x[s]) for m, s in zip(factors, slices)])

    def hess(x):
        h = np.zeros((dim, dim))
        for m, s in zip(factors, slices):
            h[s, s] = m.potential.hessian(x[s])
        return h

    smooth = all(m.potential.is_smooth() for m in factors)
    scs = [m.potential.strong_convexity() for m in factors]
    sc = min(scs) if all(s is not None for s in scs) else None
    pot = Potential(dim, psi, grad, hess,
                    {"smooth": smooth, "strongly_convex": sc})

    exact = None
    if all(m.exact is not None for m in factors):
        mean = np.concatenate([m.exact["mean"] for m in factors])
        cov = np.zeros((dim, dim))
        for m, s in zip(factors, slices):
            cov[s, s] = m.exact["cov"]
        exact = {"mean": mean, "cov": cov}
        cps = [m.exact.get("C_P") for m in factors]
        if all(c is not None for c in cps):
            exact["C_P"] = float(max(cps))
        ents = [m.exact.get("entropy") for m in factors]
        if all(e is not None for e in ents):
            exact["entropy"] = float(sum(ents))
    meas = LogConcaveMeasure("product", dim, pot, exact, {"factors": factors})
    meas.factors = factors
    meas.slices = slices
    return meas


def finite_atoms(points, weights):
    """Finitely supported measure (used as a localization base).

    Not log-concave in the density sense; it participates in the catalog
    because Gaussian tilts of it have closed-form log-Laplace transforms.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    weights = np.asarray(weights, dtype=float)
    weights = weights / weights.sum()
    n = points.shape[1]

    def psi(x):
        raise ValueError("finite_atoms has no density")

    pot = Potential(n, psi, psi, psi, {"smooth": False})
    mean = weights @ points
    c = points - mean
    cov = (c * weights[:, None]).T @ c
    exact = {"mean": mean, "cov": cov}
    meas = LogConcaveMeasure("finite_atoms", n, pot, exact,
                             {"points": points, "weights": weights})
    meas.points = points
    meas.weights = weights
    return meas


def gaussian_tilt(base, theta, t, log_normalizer=None):
    """Measure with density proportional to rho_base(x) exp(x.theta - t/2 |x|^2).

    For a Gaussian base the result is again Gaussian and is returned as such.
    The identity tilt (theta = 0, t = 0) returns the base unchanged.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    t = float(t)
    if t < 0:
        raise ValueError("t must be nonnegative")
    n = base.dim
    if theta.shape != (n,):
        raise ValueError("theta dimension mismatch")

    if t == 0.0 and not np.any(theta):
        return base
    if base.kind == "gaussian":
        prec = np.linalg.inv(base.exact["cov"])
        new_cov = np.linalg.inv(prec + t * np.eye(n))
        new_mean = new_cov @ (theta + prec @ base.exact["mean"])
        return gaussian(new_mean, new_cov)
    if base.kind == "gaussian_tilt":
        # tilt composition: (theta, t) after (theta0, t0) = (theta+theta0, t+t0)
        return gaussian_tilt(base.params["base"], base.params["theta"] + theta,
                             base.params["t"] + t)

    if log_normalizer is None:
        log_normalizer = _tilt_log_normalizer(base, theta, t)
    if not np.isfinite(log_normalizer):
        raise ValueError("tilt not integrable")

    bpot = base.potential

    def psi(x):
        return bpot.psi(x) - x @ theta + 0.5 * t * x @ x + log_normalizer

    def grad(x):
        return bpot.grad(x) - theta + t * x

    def hess(x):
        return bpot.hessian(x) + t * np.eye(n)

    sc = bpot.strong_convexity()
    sc = t + (sc or 0.0) if (sc is not None or t > 0) else None
    pot = Potential(n, psi, grad, hess,
                    {"smooth": bpot.is_smooth(),
                     "strongly_convex": sc if sc and sc > 0 else (t if t > 0 else None)})
    meas = LogConcaveMeasure("gaussian_tilt", n, pot, None,
                             {"base": base, "theta": theta, "t": t},
                             meta={"log_normalizer": log_normalizer})
    return meas


def _tilt_log_normalizer(base, theta, t):
    """log of Z = int exp(x.theta - t/2 |x|^2) d(base).

    Closed form for finite-atom bases; 1D Gauss-Legendre panels for dim <= 3
    against the base density; self-normalized importance sampling otherwise.
    """
    from scipy.special import logsumexp

    if base.kind == "finite_atoms":
        p, w = base.points, base.weights
        ex = p @ theta - 0.5 * t * np.sum(p * p, axis=1)
        return float(logsumexp(ex, b=w))
    if base.kind == "product":
        tot = 0.0
        for m, s in zip(base.factors, base.slices):
            tot += _tilt_log_normalizer(m, theta[s], t)
        return tot
    if base.dim == 1:
        lo, hi = _support_1d(base)
        nodes, wts = _panel_legendre(lo, hi, 4000)
        logf = np.array([base.log_density(np.array([u])) for u in nodes])
        ex = logf + theta[0] * nodes - 0.5 * t * nodes ** 2
        return float(logsumexp(ex, b=wts))
    if base.dim <= 3 and base.exact is not None:
        # tensor-grid quadrature over a box covering the bulk of the mass
        mean, cov = base.exact["mean"], base.exact["cov"]
        sd = np.sqrt(np.diag(cov))
        lo, hi = mean - 12 * sd, mean + 12 * sd
        axes = []
        for d in range(base.dim):
            nd, wd = _panel_legendre(lo[d], hi[d], 160)
            axes.append((nd, wd))
        grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        logw = sum(np.log(np.meshgrid(*[a[1] for a in axes], indexing="ij")[i]).ravel()
                   for i in range(base.dim))
        logf = np.array([base.log_density(p) for p in pts])
        ex = logf + pts @ theta - 0.5 * t * np.sum(pts * pts, axis=1) + logw
        return float(logsumexp(ex))
    # importance sampling with the base itself as proposal
    from . import mc
    batch = mc.sample(base, 200_000, seed=20240517, method="direct")
    x = batch.data
    ex = x @ theta - 0.5 * t * np.sum(x * x, axis=1)
    return float(logsumexp(ex) - math.log(x.shape[0]))


def _support_1d(m, logdrop=60.0):
    """Practical support [lo, hi] of a 1D measure, by log-density walk-out."""
    if m.kind == "interval":
        return m.params["a"], m.params["b"]
    if m.kind == "shifted_exponential":
        return -1.0, -1.0 + logdrop
    if m.kind == "gaussian":
        mu = m.exact["mean"][0]
        sd = math.sqrt(m.exact["cov"][0, 0])
        w = math.sqrt(2 * logdrop)
        return mu - w * sd, mu + w * sd
    if m.exact is not None:
        mu = m.exact["mean"][0]
        sd = math.sqrt(m.exact["cov"][0, 0])
        return mu - 15 * sd, mu + 15 * sd
    raise ValueError("cannot determine 1D support")


def _panel_legendre(lo, hi, n_nodes):
    """Composite Gauss-Legendre rule on [lo, hi] (panels of 10 nodes)."""
    base_x, base_w = np.polynomial.legendre.leggauss(10)
    n_panels = max(1, n_nodes // 10)
    edges = np.linspace(lo, hi, n_panels + 1)
    h = (edges[1:] - edges[:-1]) / 2.0
    mid = (edges[1:] + edges[:-1]) / 2.0
    nodes = (mid[:, None] + h[:, None] * base_x[None, :]).ravel()
    wts = (h[:, None] * base_w[None, :]).ravel()
    return nodes, wts


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def exact_moments(m: LogConcaveMeasure):
    """Closed-form {mean, cov, C_P?, entropy?} or the "no exact oracle" error."""
    if m.exact is None:
        raise ValueError("no exact oracle")
    return dict(m.exact)


def make_isotropic(m: LogConcaveMeasure, samples=None):
    """Affine image of m with mean 0 and covariance Id.

    Uses exact moments when available, otherwise the empirical moments of the
    given sample batch.  The applied transform y = W(x - mu), W = cov^{-1/2},
    is recorded in meta["transform"].

    Catalog kinds that stay in the catalog under their own scaling (interval,
    cube, ball, simplex, gaussian, 1D products) are returned in native form;
    anything else is wrapped as an affine image.
    """
    if m.exact is not None:
        mean, cov = np.asarray(m.exact["mean"]), np.asarray(m.exact["cov"])
    elif samples is not None:
        x = samples.data
        mean = x.mean(axis=0)
        cov = np.cov(x.T).reshape(m.dim, m.dim)
    else:
        raise ValueError("need exact moments or a sample batch")
    eigval, eigvec = np.linalg.eigh(cov)
    if eigval.min() <= 1e-12 * max(1.0, eigval.max()):
        raise ValueError("degenerate support")
    w = eigvec @ np.diag(eigval ** -0.5) @ eigvec.T
    transform = {"matrix": w, "shift": mean}

    out = None
    if m.kind == "interval":
        a, b = m.params["a"], m.params["b"]
        s = w[0, 0]
        out = interval(s * (a - mean[0]), s * (b - mean[0]))
    elif m.kind == "gaussian":
        out = gaussian(np.zeros(m.dim), np.eye(m.dim))
    elif m.kind == "shifted_exponential":
        out = m
    elif m.kind == "uniform_body":
        body = m.params["body"]
        if body.kind == "cube":
            out = uniform_body(ConvexBody("cube", m.dim,
                                          side=body.side * w[0, 0], centered=True))
        elif body.kind == "ball":
            out = uniform_body(ConvexBody("ball", m.dim,
                                          radius=body.radius * w[0, 0]))
        elif body.kind == "simplex":
            out = uniform_body(ConvexBody("simplex", m.dim,
                                          scale=body.scale * w[0, 0]))
    elif m.kind == "product" and all(f.dim == 1 for f in m.factors):
        out = product([make_isotropic(f) for f in m.factors])
    if out is None:
        out = _affine_image(m, w, mean)
    out.meta = dict(out.meta)
    out.meta["transform"] = transform
    return out


def _affine_image(base, matrix, shift):
    """Law of W(X - shift) for X ~ base (W invertible)."""
    w = np.asarray(matrix, dtype=float)
    shift = np.asarray(shift, dtype=float)
    n = base.dim
    winv = np.linalg.inv(w)
    sign, logdet = np.linalg.slogdet(w)
    bpot = base.potential

    def psi(y):
        return bpot.psi(winv @ y + shift) - logdet

    def grad(y):
        return winv.T @ bpot.grad(winv @ y + shift)

    def hess(y):
        return winv.T @ bpot.hessian(winv @ y + shift) @ winv

    pot = Potential(n, psi, grad, hess, dict(bpot.regularity))
    exact = None
    if base.exact is not None:
        mean = w @ (base.exact["mean"] - shift)
        cov = w @ base.exact["cov"] @ w.T
        exact = {"mean": mean, "cov": cov}
        if base.exact.get("entropy") is not None:
            exact["entropy"] = base.exact["entropy"] + logdet
        cp = base.exact.get("C_P")
        if cp is not None and np.allclose(w, w[0, 0] * np.eye(n)):
            exact["C_P"] = cp * w[0, 0] ** 2
    meas = LogConcaveMeasure("affine", n, pot, exact,
                             {"base": base, "matrix": w, "shift": shift})
    return meas


def tilt(m: LogConcaveMeasure, theta, t):
    """Gaussian tilt of m; see gaussian_tilt."""
    return gaussian_tilt(m, theta, t)


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def _params_to_json(kind, params):
    if kind == "interval":
        return {"a": params["a"], "b": params["b"]}
    if kind == "shifted_exponential":
        return {}
    if kind == "gaussian":
        return {"mean": params["mean"].tolist(), "cov": params["cov"].tolist()}
    if kind == "uniform_body":
        return {"body": params["body"].to_json()}
    if kind == "complex_exponential":
        return {"n": params["n"]}
    if kind == "product":
        return {"factors": [f.to_json() for f in params["factors"]]}
    if kind == "finite_atoms":
        return {"points": params["points"].tolist(),
                "weights": params["weights"].tolist()}
    if kind == "gaussian_tilt":
        return {"base": params["base"].to_json(),
                "theta": params["theta"].tolist(), "t": params["t"]}
    if kind == "affine":
        return {"base": params["base"].to_json(),
                "matrix": params["matrix"].tolist(),
                "shift": params["shift"].tolist()}
    raise ValueError(f"cannot serialize kind {kind!r}")


def measure_from_json(d):
    """Rebuild a measure from its {"kind": ..., "params": ...} description."""
    if isinstance(d, str):
        d = json.loads(d)
    kind, p = d["kind"], d.get("params", {})
    if kind == "interval":
        return interval(p["a"], p["b"])
    if kind == "shifted_exponential":
        return shifted_exponential()
    if kind == "gaussian":
        return gaussian(p["mean"], p["cov"])
    if kind == "uniform_body":
        return uniform_body(ConvexBody.from_json(p["body"]))
    if kind == "complex_exponential":
        return complex_exponential(p["n"])
    if kind == "product":
        return product([measure_from_json(f) for f in p["factors"]])
    if kind == "finite_atoms":
        return finite_atoms(p["points"], p["weights"])
    if kind == "gaussian_tilt":
        return gaussian_tilt(measure_from_json(p["base"]),
                             np.asarray(p["theta"]), p["t"])
    if kind == "affine":
        return _affine_image(measure_from_json(p["base"]),
                             np.asarray(p["matrix"]), np.asarray(p["shift"]))
    raise ValueError(f"unknown measure kind {kind!r}")


def measure_to_json(m):
    return m.to_json()


# convenience: the isotropic versions used throughout the test-beds ---------

def isotropic_interval():
    return interval(-math.sqrt(3.0), math.sqrt(3.0))


def isotropic_cube(n):
    return uniform_body(ConvexBody("cube", n, side=math.sqrt(12.0), centered=True))


def isotropic_ball(n):
    return uniform_body(ConvexBody("ball", n, radius=math.sqrt(n + 2.0)))


def isotropic_simplex(n):
    return uniform_body(ConvexBody("simplex", n,
                                   scale=math.sqrt((n + 1.0) * (n + 2.0))))


def exp_product(n):
    return product([shifted_exponential() for _ in range(n)])
