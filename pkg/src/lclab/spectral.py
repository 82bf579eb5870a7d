"""Poincare-constant estimation and the integral identities behind it.

Rayleigh-Ritz: for a basis g_1..g_k, the largest generalized eigenvalue of
(A, B) with A_ij = Cov(g_i, g_j) and B_ij = E grad g_i . grad g_j is a
certified lower bound on C_P, exact when the quadrature is exact and the
true eigenfunction lies in the span.  The generalized problem is solved by
Cholesky-whitening B (scipy.linalg.eigh does exactly that internally).

Also here: the integral Bochner identity

    int (Lu)^2 dmu = int <hess(psi) grad u, grad u> dmu + int ||hess u||_HS^2 dmu,

Lichnerowicz bounds C_P <= 1/t and C_P <= sqrt(||Cov||_op / t) for
t-uniformly log-concave measures, Brascamp-Lieb, the Hermite degree
inequality E|grad f|^2 <= d Var f, the exact rational Rayleigh quotients of
holomorphic monomials z^k (with the |grad f|^2 = 2|f'|^2 convention), and
the explicit proof-constant integral

    C_n <= 1/2 int_0^1 min{1/t^n + 1/(1-t)^n, 1/|1-2t|^n} dt.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import integrate, linalg, optimize
from scipy.special import roots_genlaguerre

from . import measures as measures_mod


@dataclass
class SpectralEstimate:
    """A Poincare/Cheeger-type value with method and bound-direction tags."""
    value: float
    bound_kind: str  # "lower", "upper", or "two_sided"
    method: str
    se: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        assert self.value >= 0.0

    def to_json(self, measure="", basis=""):
        return {"measure": measure, "method": self.method,
                "value": self.value, "bound_kind": self.bound_kind,
                "se": self.se, "basis": basis}


# ---------------------------------------------------------------------------
# function bases
# ---------------------------------------------------------------------------

class FunctionBasis:
    """List of (eval, grad) pairs; eval maps (N,d) -> (N,), grad -> (N,d)."""

    def __init__(self, functions, description, dim):
        self.functions = functions
        self.description = description
        self.dim = dim

    def __len__(self):
        return len(self.functions)


def _herme(k, x):
    c = np.zeros(k + 1)
    c[k] = 1.0
    return np.polynomial.hermite_e.hermeval(x, c)


def hermite_basis(dim, degree):
    """Products of probabilists' Hermite polynomials, total degree in [1, d]."""
    funcs = []
    for alpha in _multi_indices(dim, degree):
        funcs.append(_hermite_pair(alpha, dim))
    return FunctionBasis(funcs, f"hermite({degree})", dim)


def _hermite_pair(alpha, dim):
    alpha = tuple(alpha)

    def ev(x):
        out = np.ones(x.shape[0])
        for j, k in enumerate(alpha):
            if k:
                out = out * _herme(k, x[:, j])
        return out

    def gr(x):
        g = np.zeros_like(x)
        for j, k in enumerate(alpha):
            if k == 0:
                continue
            part = k * _herme(k - 1, x[:, j])
            for i, ki in enumerate(alpha):
                if i != j and ki:
                    part = part * _herme(ki, x[:, i])
            g[:, j] = part
        return g

    return (ev, gr)


def _multi_indices(dim, degree):
    """All nonzero multi-indices with total degree <= degree."""
    out = []
    for total in range(1, degree + 1):
        for comb in itertools.combinations_with_replacement(range(dim), total):
            alpha = [0] * dim
            for c in comb:
                alpha[c] += 1
            out.append(tuple(alpha))
    return sorted(set(out))


def trig_basis(a, b, k):
    """Neumann cosine modes cos(j pi (x-a)/L), j = 1..k, on [a, b] (1D)."""
    L = b - a
    funcs = []
    for j in range(1, k + 1):
        w = j * math.pi / L

        def ev(x, w=w):
            return np.cos(w * (x[:, 0] - a))

        def gr(x, w=w):
            g = np.zeros_like(x)
            g[:, 0] = -w * np.sin(w * (x[:, 0] - a))
            return g

        funcs.append((ev, gr))
    return FunctionBasis(funcs, f"trig({k})", 1)


def poly_basis(dim, degree):
    """Monomials of total degree in [1, degree]."""
    funcs = []
    for alpha in _multi_indices(dim, degree):
        funcs.append(_mono_pair(alpha))
    return FunctionBasis(funcs, f"poly({degree})", dim)


def _mono_pair(alpha):
    alpha = tuple(alpha)

    def ev(x):
        out = np.ones(x.shape[0])
        for j, k in enumerate(alpha):
            if k:
                out = out * x[:, j] ** k
        return out

    def gr(x):
        g = np.zeros_like(x)
        for j, k in enumerate(alpha):
            if k == 0:
                continue
            part = k * x[:, j] ** (k - 1)
            for i, ki in enumerate(alpha):
                if i != j and ki:
                    part = part * x[:, i] ** ki
            g[:, j] = part
        return g

    return (ev, gr)


def linear_basis(dim):
    funcs = []
    for j in range(dim):
        def ev(x, j=j):
            return x[:, j].copy()

        def gr(x, j=j):
            g = np.zeros_like(x)
            g[:, j] = 1.0
            return g

        funcs.append((ev, gr))
    return FunctionBasis(funcs, "linear", dim)


def embed_basis(basis, offset, dim):
    """Lift a basis on coordinates [offset, offset+basis.dim) to R^dim."""
    sl = slice(offset, offset + basis.dim)
    funcs = []
    for ev, gr in basis.functions:
        def ev2(x, ev=ev):
            return ev(x[:, sl])

        def gr2(x, gr=gr, ev=ev):
            g = np.zeros_like(x)
            g[:, sl] = gr(x[:, sl])
            return g

        funcs.append((ev2, gr2))
    return FunctionBasis(funcs, basis.description, dim)


def product_basis(b1, b2):
    """Tensor basis on R^{d1+d2}: lifts of both factors plus all products."""
    dim = b1.dim + b2.dim
    e1 = embed_basis(b1, 0, dim)
    e2 = embed_basis(b2, b1.dim, dim)
    funcs = list(e1.functions) + list(e2.functions)
    for (ev1, gr1) in e1.functions:
        for (ev2, gr2) in e2.functions:
            def ev(x, ev1=ev1, ev2=ev2):
                return ev1(x) * ev2(x)

            def gr(x, ev1=ev1, ev2=ev2, gr1=gr1, gr2=gr2):
                return gr1(x) * ev2(x)[:, None] + ev1(x)[:, None] * gr2(x)

            funcs.append((ev, gr))
    return FunctionBasis(funcs, f"{b1.description}x{b2.description}", dim)


# ---------------------------------------------------------------------------
# quadrature rules for catalog measures
# ---------------------------------------------------------------------------

def quadrature_rule(m, level=32):
    """(points, weights) with sum(weights) = 1, exact/converged for smooth f.

    Supports gaussian (tensor Gauss-Hermite), interval (Gauss-Legendre),
    shifted_exponential (Gauss-Laguerre), complex_exponential (radial
    generalized Laguerre x uniform angles), and products of these.
    """
    kind = m.kind
    if kind == "gaussian":
        x1, w1 = np.polynomial.hermite_e.hermegauss(level)
        w1 = w1 / w1.sum()
        pts, wts = _tensor([(x1, w1)] * m.dim)
        cov = m.exact["cov"]
        L = np.linalg.cholesky(cov)
        return m.exact["mean"] + pts @ L.T, wts
    if kind == "interval":
        a, b = m.params["a"], m.params["b"]
        x1, w1 = np.polynomial.legendre.leggauss(level)
        return (0.5 * (a + b) + 0.5 * (b - a) * x1)[:, None], w1 / w1.sum()
    if kind == "shifted_exponential":
        u, w = np.polynomial.laguerre.laggauss(level)
        return (u - 1.0)[:, None], w / w.sum()
    if kind == "complex_exponential":
        r, wr = roots_genlaguerre(level, 1.0)
        wr = wr / wr.sum()
        n_ang = 2 * level
        ang = 2.0 * math.pi * (np.arange(n_ang) + 0.5) / n_ang
        cs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        pts2 = (r[:, None, None] * cs[None, :, :]).reshape(-1, 2)
        wts2 = np.repeat(wr / n_ang, n_ang)
        rules = [(pts2, wts2)] * m.params["n"]
        return _tensor_nd(rules)
    if kind == "product":
        rules = [quadrature_rule(f, level) for f in m.factors]
        return _tensor_nd(rules)
    if kind == "uniform_body" and m.params["body"].kind == "cube":
        body = m.params["body"]
        x1, w1 = np.polynomial.legendre.leggauss(level)
        x1 = body.lo + (x1 + 1.0) * 0.5 * (body.hi - body.lo)
        w1 = w1 / w1.sum()
        return _tensor([(x1, w1)] * m.dim)
    if kind == "gaussian_tilt":
        base = m.params["base"]
        theta = np.atleast_1d(np.asarray(m.params["theta"], dtype=float))
        t = float(m.params["t"])
        factors = base.factors if base.kind == "product" else [base]
        if all(f.dim == 1 for f in factors):
            rules = []
            for i, f in enumerate(factors):
                def logpdf(x, f=f, th=theta[i]):
                    lp = np.array([f.log_density(np.array([xi])) for xi in x])
                    return lp + th * x - 0.5 * t * x * x
                rules.append(_dense_rule_1d(logpdf))
            return _tensor(rules)
    raise ValueError(f"no quadrature rule for kind {kind!r}")


def _dense_rule_1d(logpdf, scan=60.0, panels=300, order=10, logdrop=45.0):
    """Normalized composite Gauss-Legendre rule for an unnormalized 1D
    log-density.  Scans [-scan, scan] for the effective support (mode minus
    `logdrop` nats), then lays `panels` GL panels over it."""
    xs = np.linspace(-scan, scan, 2401)
    with np.errstate(invalid="ignore"):
        lp = logpdf(xs)
    lp = np.where(np.isnan(lp), -np.inf, lp)
    peak = lp.max()
    keep = np.nonzero(lp >= peak - logdrop)[0]

    def edge(bad, good):
        # support boundary between two grid points: panels must start exactly
        # there or the density jump sits inside a panel and wrecks the rule
        for _ in range(80):
            mid = 0.5 * (bad + good)
            if np.isfinite(logpdf(np.array([mid]))[0]):
                good = mid
            else:
                bad = mid
        return good

    i0, i1 = keep[0], keep[-1]
    if i0 > 0 and not np.isfinite(lp[i0 - 1]):
        lo = edge(xs[i0 - 1], xs[i0])
    else:
        lo = xs[max(i0 - 1, 0)]
    if i1 < xs.size - 1 and not np.isfinite(lp[i1 + 1]):
        hi = edge(xs[i1 + 1], xs[i1])
    else:
        hi = xs[min(i1 + 1, xs.size - 1)]
    u, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * (edges[1] - edges[0])
    mids = 0.5 * (edges[:-1] + edges[1:])
    pts = (mids[:, None] + half * u[None, :]).ravel()
    wts = np.tile(w, panels) * half
    with np.errstate(invalid="ignore"):
        dens = np.exp(logpdf(pts) - peak)
    dens = np.where(np.isnan(dens), 0.0, dens)
    wts = wts * dens
    return pts, wts / wts.sum()


def _tensor(rules_1d):
    pts_nd = [(x[:, None], w) for x, w in rules_1d]
    return _tensor_nd(pts_nd)


def _tensor_nd(rules):
    pts, wts = rules[0]
    pts = np.asarray(pts, dtype=float)
    for p2, w2 in rules[1:]:
        p2 = np.asarray(p2, dtype=float)
        n1, n2 = pts.shape[0], p2.shape[0]
        pts = np.concatenate([np.repeat(pts, n2, axis=0),
                              np.tile(p2, (n1, 1))], axis=1)
        wts = np.repeat(wts, n2) * np.tile(w2, n1)
    return pts, wts


# ---------------------------------------------------------------------------
# Rayleigh-Ritz
# ---------------------------------------------------------------------------

def rayleigh_ritz_cp(m, basis: FunctionBasis, batch=None, level=32) -> SpectralEstimate:
    """Largest generalized eigenvalue of (Cov(g_i,g_j), E grad_i.grad_j).

    A certified lower bound on C_P(m).  Uses the measure's quadrature rule
    unless a sample batch is supplied.
    """
    if batch is not None:
        pts, wts = batch.data, np.full(batch.data.shape[0], 1.0 / batch.data.shape[0])
    else:
        pts, wts = quadrature_rule(m, level)
    k = len(basis)
    G = np.empty((k, pts.shape[0]))
    B = np.zeros((k, k))
    grads = []
    for i, (ev, gr) in enumerate(basis.functions):
        G[i] = ev(pts)
        grads.append(gr(pts))
    mu = G @ wts
    Gc = G - mu[:, None]
    A = (Gc * wts[None, :]) @ Gc.T
    for i in range(k):
        for j in range(i, k):
            B[i, j] = B[j, i] = np.sum(wts * np.sum(grads[i] * grads[j], axis=1))
    if np.linalg.cond(B) > 1e10:
        raise ValueError("reduce basis")
    vals = linalg.eigh(A, B, eigvals_only=True)
    return SpectralEstimate(value=float(vals[-1]), bound_kind="lower",
                            method="rayleigh_ritz",
                            se=0.0 if batch is None else float("nan"),
                            meta={"basis": basis.description, "size": k})


# ---------------------------------------------------------------------------
# polynomial test functions
# ---------------------------------------------------------------------------

class PolyFunction:
    """Multivariate polynomial with exact gradient/Hessian/Laplacian."""

    def __init__(self, dim, coeffs):
        # coeffs: dict {exponent tuple: coefficient}
        self.dim = dim
        self.coeffs = {tuple(a): float(c) for a, c in coeffs.items() if c != 0.0}

    @staticmethod
    def random(dim, degree, rng):
        coeffs = {}
        for alpha in _multi_indices(dim, degree):
            coeffs[alpha] = rng.normal()
        return PolyFunction(dim, coeffs)

    def value(self, x):
        out = np.zeros(x.shape[0])
        for a, c in self.coeffs.items():
            t = np.full(x.shape[0], c)
            for j, k in enumerate(a):
                if k:
                    t = t * x[:, j] ** k
            out += t
        return out

    def grad(self, x):
        g = np.zeros_like(x)
        for a, c in self.coeffs.items():
            for j, k in enumerate(a):
                if k == 0:
                    continue
                t = np.full(x.shape[0], c * k)
                for i, ki in enumerate(a):
                    e = ki - (1 if i == j else 0)
                    if e:
                        t = t * x[:, i] ** e
                g[:, j] += t
        return g

    def hess(self, x):
        n = x.shape[0]
        h = np.zeros((n, self.dim, self.dim))
        for a, c in self.coeffs.items():
            for j in range(self.dim):
                for i in range(j, self.dim):
                    if i == j:
                        k = a[j]
                        if k < 2:
                            continue
                        t = np.full(n, c * k * (k - 1))
                        mult = list(a)
                        mult[j] -= 2
                    else:
                        if a[i] == 0 or a[j] == 0:
                            continue
                        t = np.full(n, c * a[i] * a[j])
                        mult = list(a)
                        mult[i] -= 1
                        mult[j] -= 1
                    for d, e in enumerate(mult):
                        if e:
                            t = t * x[:, d] ** e
                    h[:, i, j] += t
                    if i != j:
                        h[:, j, i] += t
        return h

    def lap(self, x):
        return np.trace(self.hess(x), axis1=1, axis2=2)


# ---------------------------------------------------------------------------
# integral identities and bounds
# ---------------------------------------------------------------------------

def _potential_arrays(m, pts):
    """grad psi and hess psi stacked over the points (pointwise API)."""
    n, d = pts.shape
    gp = np.empty((n, d))
    hp = np.empty((n, d, d))
    grad, hess = m.potential.grad, m.potential.hessian
    for i in range(n):
        gp[i] = grad(pts[i])
        hp[i] = hess(pts[i])
    return gp, hp


def bochner_check(m, u, batch=None, level=24):
    """Relative residual of the integral Bochner identity for test function u.

    Returns {lhs, rhs, residual, se}: residual = |lhs-rhs| / max(|lhs|, eps).
    With a batch, se is the batch-means standard error of lhs - rhs.
    """
    if batch is not None:
        pts = batch.data
        wts = np.full(pts.shape[0], 1.0 / pts.shape[0])
    else:
        pts, wts = quadrature_rule(m, level)
    gp, hp = _potential_arrays(m, pts)
    gu = u.grad(pts)
    hu = u.hess(pts)
    lu = u.lap(pts) - np.sum(gp * gu, axis=1)
    term_lhs = lu ** 2
    term_a = np.einsum("nij,ni,nj->n", hp, gu, gu)
    term_b = np.sum(hu * hu, axis=(1, 2))
    lhs = float(np.sum(wts * term_lhs))
    rhs = float(np.sum(wts * (term_a + term_b)))
    diff = term_lhs - (term_a + term_b)
    se = 0.0
    if batch is not None:
        se = _batch_means_se(diff)
    residual = abs(lhs - rhs) / max(abs(lhs), 1e-300)
    return {"lhs": lhs, "rhs": rhs, "residual": residual, "se": se}


def _batch_means_se(values, n_batches=32):
    values = np.asarray(values, dtype=float)
    n = values.size - (values.size % n_batches)
    means = values[:n].reshape(n_batches, -1).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def lichnerowicz_bounds(m, rr_value=None, cov_opnorm=None):
    """{plain: 1/t, improved: sqrt(||Cov||_op / t)} for a t-convex potential.

    If rr_value (a Rayleigh-Ritz lower bound) is given, asserts the chain
    rr <= improved <= plain.
    """
    t = m.potential.strong_convexity()
    if t is None or t <= 0:
        raise ValueError("strong convexity not certified")
    if cov_opnorm is None:
        if m.exact is None:
            raise ValueError("need ||Cov||_op (no exact moments)")
        cov_opnorm = float(np.linalg.eigvalsh(np.asarray(m.exact["cov"])).max())
    plain = 1.0 / t
    improved = math.sqrt(cov_opnorm / t)
    if rr_value is not None:
        assert rr_value <= improved + 1e-9, (rr_value, improved)
    assert improved <= plain + 1e-12
    return {"plain": plain, "improved": improved}


def brascamp_lieb_check(m, f, batch=None, level=24):
    """Slack of Var(f) <= E <(hess psi)^{-1} grad f, grad f>; >= 0 expected."""
    if batch is not None:
        pts = batch.data
        wts = np.full(pts.shape[0], 1.0 / pts.shape[0])
    else:
        pts, wts = quadrature_rule(m, level)
    _, hp = _potential_arrays(m, pts)
    gf = f.grad(pts)
    vals = f.value(pts)
    rhs_terms = np.empty(pts.shape[0])
    for i in range(pts.shape[0]):
        w = np.linalg.eigvalsh(hp[i])
        if w.min() <= 0:
            raise ValueError("singular potential Hessian at a sample point")
        rhs_terms[i] = gf[i] @ np.linalg.solve(hp[i], gf[i])
    mean = np.sum(wts * vals)
    var = float(np.sum(wts * (vals - mean) ** 2))
    rhs = float(np.sum(wts * rhs_terms))
    se = _batch_means_se(rhs_terms) if batch is not None else 0.0
    return {"variance": var, "bound": rhs, "slack": rhs - var, "se": se}


def unconditional_thinshell_check(m, batch):
    """Var(|X|^2) / (16 sum_i E X_i^4) for an unconditional isotropic law."""
    x = batch.data
    sq = np.sum(x * x, axis=1)
    var = float(sq.var(ddof=1))
    fourth = float(np.sum(np.mean(x ** 4, axis=0)))
    return {"ratio": var / (16.0 * fourth),
            "thin_shell": var / x.shape[1],
            "se": _batch_means_se((sq - sq.mean()) ** 2) / (16.0 * fourth)}


def hermite_degree_inequality(dim, degree, seed=0, level=24, f=None):
    """Slack of E|grad f|^2 <= degree * Var(f) under the standard Gaussian.

    f defaults to a seeded random polynomial of total degree <= degree;
    passing an eigenfunction (a degree-d Hermite polynomial) gives slack 0.
    """
    if f is None:
        rng = np.random.default_rng(seed)
        f = PolyFunction.random(dim, degree, rng)
    g = measures_mod.gaussian(np.zeros(dim), np.eye(dim))
    pts, wts = quadrature_rule(g, level)
    vals = f.value(pts)
    grads = f.grad(pts)
    mean = np.sum(wts * vals)
    var = float(np.sum(wts * (vals - mean) ** 2))
    dirich = float(np.sum(wts * np.sum(grads * grads, axis=1)))
    return {"variance": var, "dirichlet": dirich,
            "slack": degree * var - dirich}


def complex_monomial_quotient(k):
    """Exact rational Rayleigh data of f(z) = z^k under e^{-|z|}/(2 pi).

    ||z^k||^2 = (2k+1)!,  ||f'||^2 = k^2 (2k-1)!; with the holomorphic
    convention |grad f|^2 = 2 |f'|^2 the Rayleigh quotient is
    2 k^2 (2k-1)!/(2k+1)! = k/(2k+1), inside [1/3, 1/2); the norm ratio
    ||f||^2 / ||f'||^2 is (4k+2)/k = 4 + 2/k, inside (4, 6].
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    k = int(k)
    sq_norm = math.factorial(2 * k + 1)           # exact big integer
    dsq_norm = k * k * math.factorial(2 * k - 1)
    quotient = Fraction(2 * dsq_norm, sq_norm)
    norm_ratio = Fraction(sq_norm, dsq_norm)
    assert Fraction(1, 3) <= quotient < Fraction(1, 2)
    return {"quotient": quotient, "norm_ratio": norm_ratio,
            "sq_norm": sq_norm, "deriv_sq_norm": dsq_norm}


def poincare_proof_constant(n):
    """(1/2) int_0^1 min{1/t^n + 1/(1-t)^n, 1/|1-2t|^n} dt by quadrature.

    The integrand is symmetric about t = 1/2 where the second branch blows
    up but loses the min; the single crossover point on (0, 1/2) is located
    by bisection and the two smooth pieces are integrated separately.
    """
    if n > 30:
        raise ValueError("overflow regime")
    if n < 1:
        raise ValueError("n must be >= 1")

    def branch1(t):
        return 1.0 / t ** n + 1.0 / (1.0 - t) ** n

    def branch2(t):
        return 1.0 / abs(1.0 - 2.0 * t) ** n

    # crossover: branch1 decreasing, branch2 increasing on (0, 1/2)
    f = lambda t: branch1(t) - branch2(t)
    tstar = optimize.brentq(f, 1e-12, 0.5 - 1e-12, xtol=1e-15)
    v1, _ = integrate.quad(branch2, 0.0, tstar, limit=200)
    v2, _ = integrate.quad(branch1, tstar, 0.5, limit=200)
    # symmetric about 1/2: total = 2 * (piece on [0, 1/2]); with the 1/2
    # prefactor this is just the [0, 1/2] piece itself
    return v1 + v2


def proof_constant_fit(n_max=20):
    """Fitted C with C_n-integral <= C * 3^n / n over n = 1..n_max."""
    vals = [poincare_proof_constant(n) for n in range(1, n_max + 1)]
    ratios = [v / (3.0 ** n / n) for v, n in zip(vals, range(1, n_max + 1))]
    return {"values": vals, "ratios": ratios, "C_hat": max(ratios)}
