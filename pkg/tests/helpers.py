"""Shared builders for tests."""
import numpy as np

from giacert.graph import Graph, ThreatModel
from giacert.smoothing import SmoothingParams
from giacert.votes import GapVector


def random_graph(n, m, seed):
    rng = np.random.default_rng(seed)
    edges = set()
    while len(edges) < m:
        u, v = rng.integers(0, n, 2)
        if u != v:
            edges.add((int(min(u, v)), int(max(u, v))))
    return Graph.from_edges(n, sorted(edges))


def scale_instance(seed=0, n=2000, m=3500, num_targets=100):
    """Sparse synthetic graph at the size of the large benchmark (avg degree 3.5)."""
    rng = np.random.default_rng(seed)
    g = random_graph(n, m, seed)
    gaps = GapVector.from_gaps(rng.uniform(0.05, 1.0, n))
    targets = np.sort(rng.choice(n, num_targets, replace=False))
    return g, gaps, targets, SmoothingParams(0.9, 0.8)


def walks_brute_force(adj_lists, sources, v, length):
    """Count walks of exactly ``length`` edges from any source to ``v`` by explicit enumeration."""
    count = 0
    frontier = [[s] for s in sources]
    for _ in range(length):
        frontier = [w + [u] for w in frontier for u in adj_lists[w[-1]]]
    for w in frontier:
        if w[-1] == v:
            count += 1
    return count


def tiny_threat(rho, tau):
    return ThreatModel(rho, tau, 2)


# --------------------------------------------------------------------------
# small LPs and a vertex-enumeration oracle

def random_feasible_lp(rng, m, p):
    """Box-bounded max problem made feasible by building b around a point in the box."""
    from giacert.lp import LinearProgram

    A = rng.normal(size=(p, m))
    A[rng.random((p, m)) < 0.2] = 0.0
    lo = rng.uniform(-2.0, 0.0, m)
    hi = lo + rng.uniform(0.5, 3.0, m)
    x0 = rng.uniform(lo, hi)
    b = A @ x0 + rng.uniform(0.0, 1.0, p)
    return LinearProgram(rng.normal(size=m), A, b, lo, hi)


def lp_vertices(lp):
    """All vertices of ``{Ax <= b, lo <= x <= hi}`` by solving every basis subset.

    A basis picks k rows to hold with equality and fixes the other m - k
    variables at one of their two bounds; the sign patterns share one matrix.
    """
    from itertools import combinations, product

    A, b, lo, hi = lp.A.toarray(), lp.b, lp.lo, lp.hi
    p, m = A.shape
    out = []
    for k in range(min(p, m) + 1):
        sides = np.array(list(product((0, 1), repeat=m - k)), dtype=bool).reshape(1 << (m - k), m - k)
        mats, rhss = [], []
        for rows in combinations(range(p), k):
            for fixed in combinations(range(m), m - k):
                M = np.zeros((m, m))
                M[:k] = A[list(rows)]
                M[np.arange(k, m), list(fixed)] = 1.0
                R = np.empty((m, len(sides)))
                R[:k] = b[list(rows)][:, None]
                R[k:] = np.where(sides, hi[list(fixed)], lo[list(fixed)]).T
                mats.append(M)
                rhss.append(R)
        mats, rhss = np.array(mats), np.array(rhss)
        ok = np.abs(np.linalg.det(mats)) > 1e-9
        x = np.linalg.solve(mats[ok], rhss[ok]).transpose(0, 2, 1).reshape(-1, m)
        feas = (np.all(x @ A.T <= b + 1e-9 * (1 + np.abs(b)), axis=1)
                & np.all(x >= lo - 1e-9, axis=1) & np.all(x <= hi + 1e-9, axis=1))
        out.append(x[feas])
    return np.concatenate(out)


def feasible_points(lp, rng, count, vertices=None):
    """Feasible points by box rejection sampling, topped up with random convex combinations of vertices."""
    A, b = lp.A.toarray(), lp.b
    x = rng.uniform(lp.lo, lp.hi, size=(20 * count, lp.num_vars))
    pts = x[np.all(x @ A.T <= b, axis=1)][:count]
    if len(pts) < count:
        if vertices is None:
            vertices = lp_vertices(lp)
        w = rng.dirichlet(np.ones(len(vertices)), size=count - len(pts))
        pts = np.concatenate([pts, w @ vertices])
    return pts
