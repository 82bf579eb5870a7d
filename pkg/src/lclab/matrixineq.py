"""Exact matrix and tensor inequalities used by the localization bounds.

Everything here is finite-dimensional linear algebra: the trace inequality
Tr(K^a H K^b H) <= Tr(K^{a+b} H^2) for PSD K, the concavity-type bound for
the Hessian of A -> Tr e^A, the soft-max eigenvalue proxy
h_beta(M) = (1/beta) log Tr e^{beta M}, and the third-moment tensor bounds
behind the kappa estimates.  The Hessian check deliberately uses finite
differences of Tr e^A, so it exercises the inequality without reusing the
series expansion that proves it.
"""

from __future__ import annotations

import json
import math

import numpy as np
from scipy.linalg import expm


def _check_symmetric(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square")
    if np.abs(a - a.T).max() > 1e-12 * max(1.0, np.abs(a).max()):
        raise ValueError(f"{name} must be symmetric")
    return 0.5 * (a + a.T)


def trace_inequality_check(K, H, alpha, beta):
    """Slack of Tr(K^a H K^b H) <= Tr(K^{a+b} H^2); asserted >= -1e-10 rel."""
    if alpha <= 0 or beta <= 0:
        raise ValueError("exponents must be positive")
    K = _check_symmetric(K, "K")
    H = _check_symmetric(H, "H")
    w, Q = np.linalg.eigh(K)
    if w.min() < -1e-12 * max(1.0, w.max()):
        raise ValueError("K must be positive semi-definite")
    w = np.clip(w, 0.0, None)
    Ka = (Q * w ** alpha) @ Q.T
    Kb = (Q * w ** beta) @ Q.T
    Kab = (Q * w ** (alpha + beta)) @ Q.T
    lhs = float(np.trace(Ka @ H @ Kb @ H))
    rhs = float(np.trace(Kab @ H @ H))
    slack = rhs - lhs
    assert slack >= -1e-10 * abs(rhs), (slack, rhs)
    return slack


def exp_trace_hessian_check(A, H, step=1e-4):
    """Slack of d^2/ds^2 Tr e^{A+sH} <= Tr(e^A H^2).

    The second derivative comes from central differences at two step sizes
    with Richardson extrapolation; asserted >= -1e-6 relative to the bound.
    """
    A = _check_symmetric(A, "A")
    H = _check_symmetric(H, "H")

    def phi(mat):
        w = np.linalg.eigvalsh(mat)
        return float(np.sum(np.exp(w)))

    base = phi(A)

    def second(h):
        return (phi(A + h * H) - 2.0 * base + phi(A - h * H)) / h ** 2

    form = (4.0 * second(step / 2.0) - second(step)) / 3.0
    eA = expm(A)
    bound = float(np.trace(eA @ H @ H))
    slack = bound - form
    assert slack >= -1e-6 * max(abs(bound), 1.0), (slack, bound)
    return slack


def softmax_proxy(M, beta):
    """h_beta(M) = (1/beta) log Tr e^{beta M}, shifted by lambda_max so the
    exponentials cannot overflow.  lambda_max <= h <= lambda_max + log(n)/beta."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    M = _check_symmetric(M, "M")
    w = np.linalg.eigvalsh(M)
    lam = w[-1]
    h = lam + math.log(float(np.sum(np.exp(beta * (w - lam))))) / beta
    n = M.shape[0]
    assert lam <= h <= lam + math.log(n) / beta + 1e-12, (lam, h)
    return h


# ---------------------------------------------------------------------------
# third-moment tensor
# ---------------------------------------------------------------------------

def third_moment_tensor(x, block=20_000):
    """H[i] = E X_i X X^T for centered rows x, as an (n, n, n) array."""
    x = np.asarray(x, dtype=float)
    d = x.shape[1]
    t = np.zeros((d, d, d))
    for lo in range(0, x.shape[0], block):
        blk = x[lo:lo + block]
        t += np.einsum("na,nb,nc->abc", blk, blk, blk)
    return t / x.shape[0]


def third_tensor_bounds(batch, cp_known=None, n_directions=200, seed=0):
    """kappa2: sup_u ||E (X.u) X^{(x)2}||_op over a direction net (plus axes);
    kappa: ||sum_i H_i^2||_op, asserted <= 4 C_P ||Cov||^2 + 4 se when C_P
    is supplied (that inequality carries an explicit constant)."""
    x = np.asarray(batch.data, dtype=float)
    x = x - x.mean(axis=0)
    n, d = x.shape
    cov = np.cov(x.T, ddof=1).reshape(d, d)
    op = float(np.linalg.eigvalsh(cov).max())
    t = third_moment_tensor(x)

    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_directions, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs = np.vstack([dirs, np.eye(d)])
    kappa2 = 0.0
    for u in dirs:
        hu = np.tensordot(u, t, axes=(0, 0))
        kappa2 = max(kappa2, float(np.abs(np.linalg.eigvalsh(hu)).max()))

    sq = np.zeros((d, d))
    for i in range(d):
        sq += t[i] @ t[i]
    kappa = float(np.linalg.eigvalsh(sq).max())

    # block-means error bar on kappa
    k_blocks = 16
    cut = n - n % k_blocks
    vals = []
    for blk in np.split(x[:cut], k_blocks):
        tb = third_moment_tensor(blk)
        sb = np.zeros((d, d))
        for i in range(d):
            sb += tb[i] @ tb[i]
        vals.append(np.linalg.eigvalsh(sb).max())
    se = float(np.std(vals, ddof=1) / math.sqrt(k_blocks))

    out = {"kappa2": kappa2, "kappa2_bound_ref": op ** 1.5,
           "kappa2_ratio": kappa2 / op ** 1.5,
           "kappa": kappa, "kappa_se": se, "cov_op_norm": op}
    if cp_known is not None:
        bound = 4.0 * cp_known * op ** 2
        out["kappa_bound"] = bound
        assert kappa <= bound + 4.0 * se, (kappa, bound, se)
    return out


# ---------------------------------------------------------------------------
# seeded random-matrix generators and the property driver
# ---------------------------------------------------------------------------

def wishart(dim, seed):
    g = np.random.default_rng(seed).standard_normal((dim, dim))
    return g @ g.T / dim


def random_symmetric(dim, seed):
    g = np.random.default_rng(seed).standard_normal((dim, dim))
    return 0.5 * (g + g.T)


def dump_matrices(path, **arrays):
    with open(path, "w") as fh:
        json.dump({k: np.asarray(v).tolist() for k, v in arrays.items()}, fh,
                  indent=1)


def trace_inequality_property(trials=10_000, dim=8, seed=0, dump_path=None):
    """Runs the trace inequality over seeded Wishart/symmetric draws with
    exponents in (0, 3]; dumps any offending triple as JSON for replay."""
    rng = np.random.default_rng(seed)
    min_slack = math.inf
    violations = 0
    for k in range(trials):
        K = wishart(dim, seed * 1_000_003 + 2 * k)
        H = random_symmetric(dim, seed * 1_000_003 + 2 * k + 1)
        alpha, beta = rng.uniform(1e-3, 3.0, size=2)
        try:
            slack = trace_inequality_check(K, H, alpha, beta)
        except AssertionError:
            violations += 1
            if dump_path is not None:
                dump_matrices(dump_path, K=K, H=H,
                              alpha=np.array([alpha]), beta=np.array([beta]))
            raise
        min_slack = min(min_slack, slack)
    return {"trials": trials, "min_slack": min_slack, "violations": violations}
