"""Sampling engine and Monte Carlo estimators.

Direct samplers are exact (no rejection): ball points via Gaussian direction
times a Beta-law radius, simplex points via exponential spacings, the radial
part of the two-dimensional exponential law via Gamma(2).  Langevin chains
(ULA, and MALA with the Metropolis correction) follow the convention

    dX_t = sqrt(2) dW_t - grad V(X_t) dt,

so the Euler step is x - h grad V + sqrt(2h) xi.  Estimators report standard
errors from 32 batch means and all stochastic assertions sit at 3-4 se.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

_MAGIC = b"LCL1"
_N_BATCH_MEANS = 32


@dataclass
class SampleBatch:
    measure_id: str
    data: np.ndarray  # n_samples x dim
    seed: int
    method: str  # direct | ula | mala
    step_size: float = None
    burn_in: int = None

    @property
    def n_samples(self):
        return self.data.shape[0]

    @property
    def dim(self):
        return self.data.shape[1]

    def content_hash(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.data, dtype=np.float64).tobytes())
        h.update(struct.pack("<q", self.seed))
        return h.hexdigest()


@dataclass
class CovarianceSummary:
    mean: np.ndarray
    cov: np.ndarray
    op_norm: float
    trace: float
    thin_shell: float  # Var(|X|^2) / dim
    se: dict


def measure_id(m):
    try:
        blob = json.dumps(m.to_json(), sort_keys=True, default=str)
    except Exception:
        blob = f"{m.kind}:{m.dim}"
    digest = hashlib.sha1(blob.encode()).hexdigest()[:10]
    return f"{m.kind}:{m.dim}:{digest}"


# ---------------------------------------------------------------------------
# direct samplers
# ---------------------------------------------------------------------------

_DIRECT_KINDS = ("interval", "shifted_exponential", "gaussian", "uniform_body",
                 "complex_exponential", "product", "finite_atoms", "affine")


def _direct(m, n, rng):
    kind = m.kind
    if kind == "interval":
        return rng.uniform(m.params["a"], m.params["b"], size=(n, 1))
    if kind == "shifted_exponential":
        return rng.exponential(size=(n, 1)) - 1.0
    if kind == "gaussian":
        L = np.linalg.cholesky(np.asarray(m.exact["cov"]))
        z = rng.standard_normal((n, m.dim))
        return np.asarray(m.exact["mean"]) + z @ L.T
    if kind == "uniform_body":
        body = m.params["body"]
        if body.kind == "cube":
            return rng.uniform(body.lo, body.hi, size=(n, m.dim))
        if body.kind == "ball":
            z = rng.standard_normal((n, m.dim))
            z /= np.linalg.norm(z, axis=1, keepdims=True)
            r = body.radius * rng.random(n) ** (1.0 / m.dim)
            return z * r[:, None]
        if body.kind == "simplex":
            e = rng.exponential(size=(n, m.dim + 1))
            bary = e / e.sum(axis=1, keepdims=True)
            return bary @ body.vertices
        raise ValueError(f"no direct sampler for body kind {body.kind!r}")
    if kind == "complex_exponential":
        npairs = m.params["n"]
        r = rng.gamma(2.0, size=(n, npairs))
        ang = rng.uniform(0.0, 2.0 * math.pi, size=(n, npairs))
        out = np.empty((n, 2 * npairs))
        out[:, 0::2] = r * np.cos(ang)
        out[:, 1::2] = r * np.sin(ang)
        return out
    if kind == "product":
        return np.hstack([_direct(f, n, rng) for f in m.factors])
    if kind == "finite_atoms":
        pts = np.asarray(m.params["points"], dtype=float)
        w = np.asarray(m.params["weights"], dtype=float)
        idx = rng.choice(pts.shape[0], size=n, p=w / w.sum())
        return pts[idx]
    if kind == "affine":
        x = _direct(m.params["base"], n, rng)
        return (x - m.params["shift"]) @ np.asarray(m.params["matrix"]).T
    raise ValueError(
        f"no direct sampler for kind {kind!r}; supported: {_DIRECT_KINDS}")


# ---------------------------------------------------------------------------
# Langevin chains
# ---------------------------------------------------------------------------

def _batched_grad(m):
    """Vectorized grad V over rows; closed form for Gaussians, loop otherwise."""
    if m.kind == "gaussian":
        prec = np.linalg.inv(np.asarray(m.exact["cov"]))
        mean = np.asarray(m.exact["mean"])
        return lambda X: (X - mean) @ prec
    grad = m.potential.grad
    return lambda X: np.array([grad(x) for x in X])


def _batched_psi(m):
    if m.kind == "gaussian":
        prec = np.linalg.inv(np.asarray(m.exact["cov"]))
        mean = np.asarray(m.exact["mean"])
        sign, logdet = np.linalg.slogdet(np.asarray(m.exact["cov"]))
        c = 0.5 * (m.dim * math.log(2.0 * math.pi) + logdet)
        return lambda X: 0.5 * np.einsum("ni,ij,nj->n", X - mean, prec, X - mean) + c
    psi = m.potential.psi
    return lambda X: np.array([psi(x) for x in X])


def _langevin(m, n, rng, method, step_size, burn_in):
    if m.potential is None or not m.potential.is_smooth():
        if m.kind == "uniform_body":
            raise ValueError("use direct or reflected sampler")
        raise ValueError("ula/mala require a smooth potential")
    if step_size is None:
        t = m.potential.strong_convexity()
        step_size = 0.01 / t if t else 0.01
    if burn_in is None:
        burn_in = int(round(10.0 / step_size))
    grad = _batched_grad(m)
    X = np.zeros((n, m.dim))
    s = step_size
    root = math.sqrt(2.0 * s)
    if method == "ula":
        for _ in range(burn_in):
            X = X - s * grad(X) + root * rng.standard_normal(X.shape)
        return X, step_size, burn_in
    psi = _batched_psi(m)
    pX = psi(X)
    gX = grad(X)
    for _ in range(burn_in):
        xi = rng.standard_normal(X.shape)
        Y = X - s * gX + root * xi
        pY = psi(Y)
        gY = grad(Y)
        fwd = np.sum((Y - X + s * gX) ** 2, axis=1)
        bwd = np.sum((X - Y + s * gY) ** 2, axis=1)
        log_acc = pX - pY + (fwd - bwd) / (4.0 * s)
        accept = np.log(rng.random(n)) < log_acc
        X[accept] = Y[accept]
        pX[accept] = pY[accept]
        gX[accept] = gY[accept]
    return X, step_size, burn_in


def sample(m, n, seed, method="direct", step_size=None, burn_in=None):
    """Draw n rows from m.  `direct` gives i.i.d. samples for catalog kinds;
    `ula`/`mala` run n parallel chains and return the post-burn-in states."""
    rng = np.random.default_rng(seed)
    if method == "direct":
        data = _direct(m, int(n), rng)
    elif method in ("ula", "mala"):
        data, step_size, burn_in = _langevin(m, int(n), rng, method,
                                             step_size, burn_in)
    else:
        raise ValueError(f"unknown method {method!r}")
    return SampleBatch(measure_id=measure_id(m), data=data, seed=int(seed),
                       method=method, step_size=step_size, burn_in=burn_in)


# ---------------------------------------------------------------------------
# persistence: flat little-endian binary with a 28-byte header
# ---------------------------------------------------------------------------

def save_batch(batch: SampleBatch, path):
    data = np.ascontiguousarray(batch.data, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QQQ", batch.dim, batch.n_samples,
                             batch.seed & 0xFFFFFFFFFFFFFFFF))
        fh.write(data.tobytes())


def load_batch(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError("bad magic: not a sample-batch file")
        dim, n, seed = struct.unpack("<QQQ", fh.read(24))
        data = np.frombuffer(fh.read(8 * dim * n), dtype="<f8").reshape(n, dim)
    return SampleBatch(measure_id=f"file:{path}", data=data.copy(),
                       seed=int(seed), method="direct")


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def _block_means(values, k=_N_BATCH_MEANS):
    values = np.asarray(values, dtype=float)
    n = values.shape[0] - (values.shape[0] % k)
    return values[:n].reshape(k, n // k, *values.shape[1:]).mean(axis=1)


def covariance_summary(batch: SampleBatch) -> CovarianceSummary:
    x = batch.data
    n, dim = x.shape
    if n < 1000:
        raise ValueError("need at least 1000 samples")
    mean = x.mean(axis=0)
    cov = np.cov(x.T, ddof=1).reshape(dim, dim)
    eigs = np.linalg.eigvalsh(cov)
    assert eigs.min() >= -1e-10 * max(1.0, eigs.max())
    sq = np.sum(x * x, axis=1)
    thin = sq.var(ddof=1) / dim

    bm = _block_means(x)
    bsq = _block_means(sq)
    bvar = _block_means((sq - sq.mean()) ** 2)
    block_ops = []
    for blk in np.array_split(x[: n - n % _N_BATCH_MEANS], _N_BATCH_MEANS):
        block_ops.append(np.linalg.eigvalsh(np.cov(blk.T, ddof=1).reshape(dim, dim)).max())
    k = _N_BATCH_MEANS
    se = {
        "mean": bm.std(axis=0, ddof=1) / math.sqrt(k),
        "sq_mean": float(bsq.std(ddof=1) / math.sqrt(k)),
        "thin_shell": float(bvar.std(ddof=1) / math.sqrt(k)) / dim,
        "op_norm": float(np.std(block_ops, ddof=1) / math.sqrt(k)),
    }
    return CovarianceSummary(mean=mean, cov=cov,
                             op_norm=float(np.abs(eigs).max()),
                             trace=float(np.trace(cov)),
                             thin_shell=float(thin), se=se)


def summary_to_csv(summaries, path):
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["measure_id", "n", "op_norm", "trace", "thin_shell",
                    "se_op_norm", "se_thin_shell"])
        for mid, n, s in summaries:
            w.writerow([mid, n, repr(s.op_norm), repr(s.trace),
                        repr(s.thin_shell), repr(s.se["op_norm"]),
                        repr(s.se["thin_shell"])])


def lipschitz_variance(batch: SampleBatch, f, lip=1.0, seed=0):
    """Sample variance of a 1-Lipschitz statistic (Poincare lower-bound proxy).

    The Lipschitz claim is spot-checked on 100 random row pairs first.
    """
    x = batch.data
    vals = np.asarray(f(x), dtype=float)
    rng = np.random.default_rng(seed)
    i = rng.integers(0, x.shape[0], size=100)
    j = rng.integers(0, x.shape[0], size=100)
    dist = np.linalg.norm(x[i] - x[j], axis=1)
    dv = np.abs(vals[i] - vals[j])
    if np.any(dv > lip * dist * (1.0 + 1e-8) + 1e-12):
        raise ValueError("function failed the Lipschitz spot check")
    var = float(vals.var(ddof=1))
    blocks = _block_means((vals - vals.mean()) ** 2)
    se = float(blocks.std(ddof=1) / math.sqrt(_N_BATCH_MEANS))
    return {"variance": var, "se": se}


# ---------------------------------------------------------------------------
# couplings
# ---------------------------------------------------------------------------

def parallel_coupling(m, x, y, T, step, seed=0):
    """Two Euler chains driven by the same noise; for convex potentials the
    distance |X - Y| is nonincreasing up to discretization error."""
    rng = np.random.default_rng(seed)
    grad = m.potential.grad
    X = np.asarray(x, dtype=float).copy()
    Y = np.asarray(y, dtype=float).copy()
    steps = int(round(T / step))
    root = math.sqrt(2.0 * step)
    d = np.empty(steps + 1)
    d[0] = np.linalg.norm(X - Y)
    for k in range(steps):
        xi = rng.standard_normal(X.shape)
        X = X - step * grad(X) + root * xi
        Y = Y - step * grad(Y) + root * xi
        d[k + 1] = np.linalg.norm(X - Y)
    return {"distances": d,
            "max_increase": float(d.max() - d[0]),
            "max_step_increase": float(np.max(np.diff(d))),
            "final": float(d[-1])}


def mirror_bound(s):
    """P(|B_1| <= s) for a standard Brownian bridge argument: 2 Phi(s) - 1."""
    return 2.0 * float(ndtr(s)) - 1.0


def mirror_coupling_meeting(m, x, y, t, step, trials, seed=0):
    """Reflection coupling: the second chain sees the noise mirrored across
    the separating hyperplane; chains glue once within one noise scale.

    Returns the estimated non-meeting probability at time t with a Wilson
    interval, and asserts it below 2 Phi(|x-y| / (2 sqrt(2t))) - 1 plus 3 se.
    """
    rng = np.random.default_rng(seed)
    gradf = _batched_grad(m)
    d = len(x)
    X = np.tile(np.asarray(x, dtype=float), (trials, 1))
    Y = np.tile(np.asarray(y, dtype=float), (trials, 1))
    alive = np.ones(trials, dtype=bool)
    steps = int(round(t / step))
    root = math.sqrt(2.0 * step)
    glue = root  # one-step noise scale in the difference process
    for _ in range(steps):
        if not alive.any():
            break
        idx = np.nonzero(alive)[0]
        xi = rng.standard_normal((idx.size, d))
        diff = X[idx] - Y[idx]
        dist = np.linalg.norm(diff, axis=1, keepdims=True)
        e = diff / np.maximum(dist, 1e-300)
        xi_m = xi - 2.0 * np.sum(e * xi, axis=1, keepdims=True) * e
        X[idx] = X[idx] - step * gradf(X[idx]) + root * xi
        Y[idx] = Y[idx] - step * gradf(Y[idx]) + root * xi_m
        met = np.linalg.norm(X[idx] - Y[idx], axis=1) <= glue
        alive[idx[met]] = False
    p_hat = alive.mean()
    z = 1.96
    denom = 1.0 + z * z / trials
    center = (p_hat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p_hat * (1 - p_hat) / trials + z * z / (4 * trials ** 2)) / denom
    s0 = np.linalg.norm(np.asarray(x) - np.asarray(y)) / (2.0 * math.sqrt(2.0 * t))
    bound = mirror_bound(s0)
    se = math.sqrt(p_hat * (1 - p_hat) / trials) + 1.0 / trials
    assert p_hat <= bound + 3.0 * se, (p_hat, bound, se)
    return {"p_not_met": float(p_hat), "wilson": (center - half, center + half),
            "bound": bound, "se": se}


# ---------------------------------------------------------------------------
# concentration and norm tails
# ---------------------------------------------------------------------------

def _direction_net(dim, k=100):
    rng = np.random.default_rng(424242)  # fixed net shared by all runs
    d = rng.standard_normal((k, dim))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def concentration_function(m, radii, n, seed):
    """Lower bound for the concentration function over half-space sets.

    For each direction theta in a fixed 100-direction net, the set is
    {x . theta <= median}; alpha(r) is the largest mass found beyond the
    r-enlargement of any of these sets.
    """
    data = sample(m, n, seed).data
    dirs = _direction_net(m.dim)
    proj = data @ dirs.T
    proj.sort(axis=0)
    med = proj[proj.shape[0] // 2]
    radii = np.asarray(radii, dtype=float)
    alpha = np.empty(radii.size)
    for ridx, r in enumerate(radii):
        worst = 0.0
        for jd in range(dirs.shape[0]):
            hi = proj.shape[0] - np.searchsorted(proj[:, jd], med[jd] + r,
                                                 side="right")
            worst = max(worst, hi / proj.shape[0])
        alpha[ridx] = worst
    return {"radii": radii, "alpha": alpha, "n_directions": dirs.shape[0]}


def paouris_tail(m, r_values, n=1_000_000, seed=0, block=100_000):
    """Empirical P(|X| >= r) for isotropic m, dim >= 16.

    Counts below 10 get a widened-interval flag and a rule-of-three style
    upper bound.  Where at least two radii beyond 2 sqrt(dim) have solid
    counts, a log-linear slope is fitted and checked to be negative.
    """
    if m.dim < 16:
        raise ValueError("dimension too small for the tail regime (need >= 16)")
    r_values = np.asarray(sorted(r_values), dtype=float)
    counts = np.zeros(r_values.size, dtype=np.int64)
    rng_seq = np.random.SeedSequence(seed).spawn(math.ceil(n / block))
    total = 0
    for ss in rng_seq:
        k = min(block, n - total)
        norms = np.linalg.norm(_direct(m, k, np.random.default_rng(ss)), axis=1)
        counts += (norms[None, :] >= r_values[:, None]).sum(axis=1)
        total += k
    p_hat = counts / total
    widened = counts < 10
    upper95 = p_hat + 3.0 * np.sqrt(p_hat * (1 - p_hat) / total) + 3.0 / total
    solid = (~widened) & (r_values >= 2.0 * math.sqrt(m.dim)) & (p_hat > 0)
    slope = None
    if solid.sum() >= 2:
        slope = float(np.polyfit(r_values[solid], np.log(p_hat[solid]), 1)[0])
        assert slope < 0.0
    return {"r": r_values, "p_hat": p_hat, "counts": counts,
            "upper95": upper95, "widened": widened, "slope": slope}
