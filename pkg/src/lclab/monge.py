"""Discrete optimal transport with the distance cost |x - y|.

Primal couplings come from exact linear programming (the assignment solver
for uniform matchings, HiGHS otherwise); the Kantorovich dual potential is
built constructively from an optimal coupling by chaining tight transport
edges, which is a shortest-path problem with negative edge weights.  A
negative cycle in that graph is exactly a cyclical-monotonicity violation,
so Bellman-Ford doubles as the optimality certificate.

Planar matchings additionally get an exact segment-crossing count: optimal
distance-cost matchings never cross (two crossing segments can always be
uncrossed at smaller total length, by the triangle inequality).
"""

import csv
import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist
from scipy.sparse.csgraph import bellman_ford, csgraph_from_dense, \
    NegativeCycleError

_MASS_TOL = 1e-10


@dataclass
class TransportInstance:
    """Two weighted point clouds with equal total mass.

    coupling (if set) is a nonnegative (m, k) matrix with the two weight
    vectors as marginals; dual_u (if set) holds potential values on the
    concatenated support, sources first.
    """
    source_points: np.ndarray
    source_weights: np.ndarray
    target_points: np.ndarray
    target_weights: np.ndarray
    coupling: np.ndarray = None
    dual_u: np.ndarray = None

    def __post_init__(self):
        self.source_points = np.atleast_2d(
            np.asarray(self.source_points, dtype=float))
        self.target_points = np.atleast_2d(
            np.asarray(self.target_points, dtype=float))
        self.source_weights = np.asarray(self.source_weights, dtype=float)
        self.target_weights = np.asarray(self.target_weights, dtype=float)

    @property
    def all_points(self):
        return np.vstack([self.source_points, self.target_points])

    def cost_matrix(self):
        return cdist(self.source_points, self.target_points)

    def validate(self, tol=_MASS_TOL):
        if self.coupling is not None:
            g = self.coupling
            assert g.min() >= -tol
            assert np.abs(g.sum(axis=1) - self.source_weights).max() <= tol
            assert np.abs(g.sum(axis=0) - self.target_weights).max() <= tol
        if self.dual_u is not None:
            pts = self.all_points
            d = cdist(pts, pts)
            du = np.abs(self.dual_u[:, None] - self.dual_u[None, :])
            assert (du - d).max() <= tol  # 1-Lipschitz on the point set
        return True


def uniform_instance(source_points, target_points):
    """Equal-mass uniform atoms on both sides (total mass 1)."""
    source_points = np.atleast_2d(np.asarray(source_points, dtype=float))
    target_points = np.atleast_2d(np.asarray(target_points, dtype=float))
    m, k = source_points.shape[0], target_points.shape[0]
    return TransportInstance(source_points, np.full(m, 1.0 / m),
                             target_points, np.full(k, 1.0 / k))


def _is_uniform_matching(inst):
    m, k = inst.source_weights.size, inst.target_weights.size
    if m != k:
        return False
    w = inst.source_weights[0]
    return (np.allclose(inst.source_weights, w, atol=1e-14)
            and np.allclose(inst.target_weights, w, atol=1e-14))


def solve_primal(inst, method="auto"):
    """Optimal coupling and cost for the distance-cost transport problem.

    method "assignment" (uniform matchings), "lp" (general weights) or
    "auto".  The coupling is stored on the instance and returned.
    """
    ms = float(inst.source_weights.sum())
    mt = float(inst.target_weights.sum())
    if abs(ms - mt) > _MASS_TOL * max(1.0, ms):
        raise ValueError("unequal total mass: %g vs %g" % (ms, mt))
    m, k = inst.source_weights.size, inst.target_weights.size
    if max(m, k) > 1000:
        raise ValueError("instance too large (> 1000 support points)")
    C = inst.cost_matrix()
    if method == "auto":
        method = "assignment" if _is_uniform_matching(inst) else "lp"
    if method == "assignment":
        if not _is_uniform_matching(inst):
            raise ValueError("assignment method needs uniform matchings")
        rows, cols = linear_sum_assignment(C)
        coupling = np.zeros((m, k))
        coupling[rows, cols] = inst.source_weights
    elif method == "lp":
        # equality-constrained LP on the m*k transport variables; the last
        # column constraint is implied by the others and dropped
        a_rows = np.zeros((m, m * k))
        for i in range(m):
            a_rows[i, i * k:(i + 1) * k] = 1.0
        a_cols = np.zeros((k - 1, m * k)) if k > 1 else np.zeros((0, m * k))
        for j in range(k - 1):
            a_cols[j, j::k] = 1.0
        a_eq = np.vstack([a_rows, a_cols])
        b_eq = np.concatenate([inst.source_weights,
                               inst.target_weights[:k - 1]])
        res = linprog(C.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None),
                      method="highs")
        if not res.success:
            raise RuntimeError("transport LP failed: %s" % res.message)
        coupling = res.x.reshape(m, k)
    else:
        raise ValueError("unknown method %r" % method)
    inst.coupling = coupling
    cost = float((coupling * C).sum())
    return {"coupling": coupling, "cost": cost, "method": method}


def brute_force_matching(inst):
    """Exhaustive minimum over all matchings; the independent oracle.

    Both sides must be <= 8 uniform atoms.
    """
    if not _is_uniform_matching(inst):
        raise ValueError("brute force needs uniform matchings")
    m = inst.source_weights.size
    if m > 8:
        raise ValueError("brute force is limited to 8 atoms")
    C = inst.cost_matrix()
    w = inst.source_weights[0]
    best, best_perm = math.inf, None
    for perm in itertools.permutations(range(m)):
        c = sum(C[i, perm[i]] for i in range(m))
        if c < best:
            best, best_perm = c, perm
    coupling = np.zeros((m, m))
    coupling[np.arange(m), best_perm] = w
    return {"coupling": coupling, "cost": float(w * best),
            "permutation": best_perm}


def _support_pairs(inst, tol=1e-12):
    g = inst.coupling
    scale = max(g.max(), 1.0)
    return np.argwhere(g > tol * scale)


def build_dual(inst, tol=1e-9):
    """Kantorovich potential chained through the coupling support.

    u is the shortest-path distance from the first source point in the
    graph with Lipschitz edges |p - q| between all points and tight edges
    -|x_i - y_j| from each coupled target back to its source.  Certifies
    the 1-Lipschitz property and tightness on every support pair.
    """
    if inst.coupling is None:
        raise ValueError("build_dual needs a coupling; run solve_primal")
    m = inst.source_weights.size
    pts = inst.all_points
    G = cdist(pts, pts)
    C = inst.cost_matrix()
    pairs = _support_pairs(inst)
    for i, j in pairs:
        G[m + j, i] = -C[i, j]
    try:
        u = bellman_ford(csgraph_from_dense(G, null_value=np.inf),
                         directed=True, indices=0)
    except NegativeCycleError:
        raise ValueError("coupling not cyclically monotone")
    u = np.asarray(u, dtype=float).ravel()
    inst.dual_u = u
    du = np.abs(u[:, None] - u[None, :])
    lipschitz_slack = float((du - cdist(pts, pts)).max())
    support_gap = max((abs(u[m + j] - u[i] - C[i, j]) for i, j in pairs),
                      default=0.0)
    dual_value = float(inst.target_weights @ u[m:]
                       - inst.source_weights @ u[:m])
    report = {"u": u, "dual_value": dual_value,
              "lipschitz_slack": lipschitz_slack,
              "support_gap": float(support_gap)}
    assert lipschitz_slack <= tol
    assert support_gap <= tol
    return report


def duality_gap(inst):
    """Primal cost minus constructed dual value (zero at optimality)."""
    primal = float((inst.coupling * inst.cost_matrix()).sum())
    dual = build_dual(inst)["dual_value"]
    return {"primal": primal, "dual": dual, "gap": primal - dual}


def cyclical_monotonicity_check(inst, subset_size=5, n_subsets=200, seed=0):
    """Worst (permuted - identity) cost gap over support-pair subsets.

    Nonnegative iff no sampled subset of the coupling support can be
    rearranged at lower cost; subsets are capped at 7 pairs because every
    permutation is enumerated.
    """
    if subset_size > 7:
        raise ValueError("subset_size is capped at 7")
    if inst.coupling is None:
        raise ValueError("needs a coupling; run solve_primal")
    pairs = _support_pairs(inst)
    n = pairs.shape[0]
    if n < 2:
        return {"worst": 0.0, "n_subsets": 0, "ok": True}
    xs = inst.source_points[pairs[:, 0]]
    ys = inst.target_points[pairs[:, 1]]
    rng = np.random.default_rng(seed)
    size = min(subset_size, n)
    if math.comb(n, size) <= n_subsets:
        subsets = list(itertools.combinations(range(n), size))
    else:
        subsets = [rng.choice(n, size=size, replace=False)
                   for _ in range(n_subsets)]
    worst = 0.0
    for sub in subsets:
        sub = np.asarray(sub)
        D = cdist(xs[sub], ys[sub])
        identity = float(np.trace(D))
        best = min(sum(D[t, p[t]] for t in range(size))
                   for p in itertools.permutations(range(size)))
        worst = min(worst, float(best) - identity)
    return {"worst": worst, "n_subsets": len(subsets),
            "ok": bool(worst >= -1e-10)}


# ---------------------------------------------------------------------------
# planar crossings
# ---------------------------------------------------------------------------

def _orient(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _proper_crossing(p1, p2, q1, q2):
    """Open-segment intersection; collinear or endpoint contact is not a
    crossing (overlapping segments are excluded by convention)."""
    o1 = _orient(p1, p2, q1)
    o2 = _orient(p1, p2, q2)
    o3 = _orient(q1, q2, p1)
    o4 = _orient(q1, q2, p2)
    return (o1 * o2 < 0.0) and (o3 * o4 < 0.0)


def matching_segments(inst):
    """(n, 2, 2) array of segments x_i -> y_{sigma(i)} from a permutation
    coupling on a planar instance."""
    if inst.source_points.shape[1] != 2:
        raise ValueError("crossing checks are planar")
    g = inst.coupling
    if g is None:
        raise ValueError("needs a coupling; run solve_primal")
    if np.any((g > 1e-12 * max(g.max(), 1.0)).sum(axis=1) != 1):
        raise ValueError("needs a permutation coupling")
    pairs = _support_pairs(inst)
    return np.stack([np.stack([inst.source_points[i],
                               inst.target_points[j]]) for i, j in pairs])


def noncrossing_check(segments_or_inst):
    """Exact count of properly crossing segment pairs."""
    if isinstance(segments_or_inst, TransportInstance):
        segments = matching_segments(segments_or_inst)
    else:
        segments = np.asarray(segments_or_inst, dtype=float)
    n = segments.shape[0]
    crossings = 0
    for a in range(n):
        for b in range(a + 1, n):
            if _proper_crossing(segments[a, 0], segments[a, 1],
                                segments[b, 0], segments[b, 1]):
                crossings += 1
    return {"crossings": crossings, "pairs_checked": n * (n - 1) // 2}


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def instance_to_json(inst, out_path):
    doc = {"source": [[list(p), float(w)] for p, w in
                      zip(inst.source_points, inst.source_weights)],
           "target": [[list(p), float(w)] for p, w in
                      zip(inst.target_points, inst.target_weights)]}
    with open(out_path, "w") as fh:
        json.dump(doc, fh, indent=2)


def instance_from_json(path):
    with open(path) as fh:
        doc = json.load(fh)
    sp = np.array([e[0] for e in doc["source"]], dtype=float)
    sw = np.array([e[1] for e in doc["source"]], dtype=float)
    tp = np.array([e[0] for e in doc["target"]], dtype=float)
    tw = np.array([e[1] for e in doc["target"]], dtype=float)
    return TransportInstance(sp, sw, tp, tw)


def results_to_csv(rows, out_path):
    """rows of {cost, dual_value, gap, crossings} dicts."""
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cost", "dual_value", "gap", "crossings"])
        for r in rows:
            w.writerow([repr(float(r["cost"])), repr(float(r["dual_value"])),
                        repr(float(r["gap"])), int(r["crossings"])])
