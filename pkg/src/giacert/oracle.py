"""Brute-force ground truth for tiny instances.

Nothing here shares search logic with :mod:`giacert.certify`: attacks are
enumerated in full, deduplicated by a canonical code over injected-node
permutations, and scored with dense powers of the composed adjacency.
Event probabilities are computed by summing over smoothing outcomes.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations, permutations, product

import numpy as np

from .certify import LimitExceeded, LogCoefficients, non_robust
from .graph import AttackVariables, Graph, ThreatModel, composed_graph
from .smoothing import SmoothingParams, sample_masks
from .votes import GapVector

log = logging.getLogger(__name__)

MAX_SLOTS = 22
MAX_MASK_BITS = 20
MAX_IE_PATHS = 22
_CHUNK = 1 << 15


@dataclass(eq=False)
class TinyInstance:
    g: Graph
    threat: ThreatModel
    gaps: GapVector
    targets: np.ndarray
    params: SmoothingParams

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=np.int64).ravel()
        if self.slots > MAX_SLOTS:
            raise LimitExceeded(f"{self.slots} candidate edge slots exceed the enumeration limit {MAX_SLOTS}")

    @property
    def slots(self) -> int:
        rho = self.threat.rho
        return rho * self.g.n + rho * (rho - 1) // 2


# --------------------------------------------------------------------------
# attack enumeration

def _bit_layout(rho, n):
    """Bit positions in :meth:`AttackVariables.key` order, most significant first."""
    iu, ju = np.triu_indices(rho, 1)
    return iu, ju, rho * n + iu.size


def _codes_for(a1, a2, iu, ju, weights):
    bits = np.concatenate([a1.reshape(a1.shape[0], -1), a2[:, iu, ju]], axis=1)
    return bits.astype(np.int64) @ weights


def _canonical_codes(inst: TinyInstance) -> np.ndarray:
    g, rho = inst.g, inst.threat.rho
    n, tau = g.n, inst.threat.effective_tau(g.n)
    if rho == 0:
        return np.zeros(1, dtype=np.int64)
    iu, ju, L = _bit_layout(rho, n)
    weights = (1 << np.arange(L - 1, -1, -1)).astype(np.int64)
    rows = np.array([[1 if v in s else 0 for v in range(n)]
                     for b in range(min(tau, n) + 1) for s in combinations(range(n), b)], dtype=np.int8)
    graphs = np.array(list(product((0, 1), repeat=iu.size)), dtype=np.int8).reshape(1 << iu.size, iu.size)
    perms = [np.array(p) for p in permutations(range(rho))]
    row_deg = rows.sum(axis=1)
    found = []
    combos = np.array(list(product(range(rows.shape[0]), repeat=rho)), dtype=np.int64).reshape(-1, rho)
    for gbits in graphs:
        a2 = np.zeros((rho, rho), dtype=np.int8)
        a2[iu, ju] = gbits
        a2 = a2 + a2.T
        deg2 = a2.sum(axis=1)
        ok = np.all(row_deg[combos] + deg2 <= tau, axis=1)
        sel = combos[ok]
        for start in range(0, sel.shape[0], _CHUNK):
            part = sel[start:start + _CHUNK]
            a1 = rows[part]                                       # (B, rho, n)
            a2b = np.broadcast_to(a2, (part.shape[0], rho, rho))
            best = None
            for p in perms:
                code = _codes_for(a1[:, p], a2b[:, p][:, :, p], iu, ju, weights)
                best = code if best is None else np.minimum(best, code)
            found.append(np.unique(best))
    return np.unique(np.concatenate(found))


def _decode(code: int, rho: int, n: int) -> AttackVariables:
    iu, ju, L = _bit_layout(rho, n)
    bits = np.array([(int(code) >> (L - 1 - k)) & 1 for k in range(L)], dtype=np.int64)
    a1 = bits[:rho * n].reshape(rho, n)
    a2 = np.zeros((rho, rho), dtype=np.int64)
    a2[iu, ju] = bits[rho * n:]
    return AttackVariables(a1, a2 + a2.T)


def enumerate_attacks(inst: TinyInstance):
    """Every feasible attack once per injected-node permutation class, in key order."""
    rho, n = inst.threat.rho, inst.g.n
    for code in _canonical_codes(inst):
        yield _decode(code, rho, n)


def count_attacks(inst: TinyInstance) -> int:
    return int(_canonical_codes(inst).size)


# --------------------------------------------------------------------------
# worst case

def _walk_counts_dense(g: Graph, a1: np.ndarray, a2: np.ndarray, k: int) -> np.ndarray:
    """Batched ``(k, B, n)`` walk counts from the injected block, via dense composed matrices."""
    B, rho, n = a1.shape
    N = n + rho
    M = np.zeros((B, N, N), dtype=np.int64)
    M[:, :n, :n] = g.adjacency.toarray()
    M[:, n:, :n] = a1
    M[:, :n, n:] = a1.transpose(0, 2, 1)
    M[:, n:, n:] = a2
    x = np.zeros((B, N), dtype=np.int64)
    x[:, n:] = 1
    out = np.zeros((k, B, n), dtype=np.int64)
    for i in range(k):
        x = np.einsum("bij,bj->bi", M, x)
        out[i] = x[:, :n]
    return out


def exact_worst_case(inst: TinyInstance) -> tuple[int, AttackVariables]:
    """Max over all attacks of the number of non-robust targets; ties go to the smallest key."""
    g, rho, k = inst.g, inst.threat.rho, inst.threat.k
    coeffs = LogCoefficients(inst.params, k)
    c = inst.gaps.c[inst.targets]
    codes = _canonical_codes(inst)
    best_val, best_code = -1, None
    for start in range(0, codes.size, _CHUNK):
        part = codes[start:start + _CHUNK]
        atk = [_decode(cd, rho, g.n) for cd in part]
        a1 = np.array([a.a1 for a in atk]).reshape(len(atk), rho, g.n)
        a2 = np.array([a.a2 for a in atk]).reshape(len(atk), rho, rho)
        counts = _walk_counts_dense(g, a1, a2, k)[:, :, inst.targets]
        score = non_robust(counts, c, coeffs).sum(axis=1)
        i = int(np.argmax(score))
        if score[i] > best_val:
            best_val, best_code = int(score[i]), part[i]
    return best_val, _decode(best_code, rho, g.n)


# --------------------------------------------------------------------------
# event probability

@dataclass
class PathSet:
    """Injected->v simple paths of length <= k on the composed graph, as element sets.

    Elements are edge indices ``0..E-1`` followed by node indices ``E + u``.
    The target's own node bit is not an element (see :func:`exact_event_probability`).
    """
    num_edges: int
    num_nodes: int
    paths: list = field(default_factory=list)   # list of (edge ids, node ids)


def injected_paths(g: Graph, attack: AttackVariables, v: int, k: int) -> PathSet:
    cg = composed_graph(g, attack)
    eid = {(int(a), int(b)): i for i, (a, b) in enumerate(cg.edges)}
    out = PathSet(cg.num_edges, cg.n)

    def walk(path):
        u = path[-1]
        if u == v:
            edges = [eid[(min(a, b), max(a, b))] for a, b in zip(path, path[1:])]
            out.paths.append((tuple(edges), tuple(path[:-1])))
            return
        if len(path) > k:
            return
        for w in cg.neighbors(u):
            w = int(w)
            if w not in path:
                walk(path + [w])

    for s in range(g.n, cg.n):
        walk([s])
    return out


def _elements(ps: PathSet):
    return sorted({e for es, _ in ps.paths for e in es}), sorted({u for _, us in ps.paths for u in us})


def _prob_by_masks(ps: PathSet, params: SmoothingParams) -> float:
    edges, nodes = _elements(ps)
    elems = [("e", e) for e in edges] + [("n", u) for u in nodes]
    L = len(elems)
    pos = {x: i for i, x in enumerate(elems)}
    P = np.zeros((len(ps.paths), L), dtype=np.int64)
    for r, (es, us) in enumerate(ps.paths):
        for e in es:
            P[r, pos[("e", e)]] = 1
        for u in us:
            P[r, pos[("n", u)]] = 1
    keep = np.array([params.keep_e if t == "e" else params.keep_n for t, _ in elems])
    lengths = P.sum(axis=1)
    total = 0.0
    for start in range(0, 1 << L, 1 << 16):
        idx = np.arange(start, min(1 << L, start + (1 << 16)), dtype=np.int64)
        masks = (idx[:, None] >> np.arange(L)) & 1
        hit = np.any(masks @ P.T == lengths, axis=1)
        w = np.prod(np.where(masks == 1, keep, 1.0 - keep), axis=1)
        total += float(w[hit].sum())
    return total


def _prob_by_inclusion_exclusion(ps: PathSet, params: SmoothingParams) -> float:
    sets = [(frozenset(es), frozenset(us)) for es, us in ps.paths]
    total = 0.0
    for r in range(1, len(sets) + 1):
        sign = 1.0 if r % 2 else -1.0
        for combo in combinations(sets, r):
            es = frozenset().union(*(c[0] for c in combo))
            us = frozenset().union(*(c[1] for c in combo))
            total += sign * params.keep_e ** len(es) * params.keep_n ** len(us)
    return total


def exact_event_probability(g: Graph, attack: AttackVariables, params: SmoothingParams, v: int, k: int = 2,
                            method: str = "auto") -> float:
    """Chance that some injected->v path of length <= k keeps every edge and node.

    The target's own node bit is left out: its deletion is not an
    interception of an incoming message (the prediction is still made from
    its own features), and leaving it in only lowers the probability.
    """
    ps = injected_paths(g, attack, v, k)
    if not ps.paths:
        return 0.0
    edges, nodes = _elements(ps)
    L = len(edges) + len(nodes)
    if method == "auto":
        method = "masks" if L <= MAX_MASK_BITS else "ie"
    if method == "masks":
        if L > MAX_MASK_BITS:
            raise LimitExceeded(f"{L} smoothing bits exceed mask limit {MAX_MASK_BITS}")
        return _prob_by_masks(ps, params)
    if method == "ie":
        if len(ps.paths) > MAX_IE_PATHS:
            raise LimitExceeded(f"{len(ps.paths)} paths exceed inclusion-exclusion limit {MAX_IE_PATHS}")
        return _prob_by_inclusion_exclusion(ps, params)
    raise ValueError(f"unknown method {method!r}")


def paths_disjoint(g: Graph, attack: AttackVariables, v: int, k: int = 2) -> bool:
    """True when no two injected->v paths share an edge or a node other than ``v``."""
    ps = injected_paths(g, attack, v, k)
    seen_e, seen_n = set(), set()
    for es, us in ps.paths:
        if seen_e & set(es) or seen_n & set(us):
            return False
        seen_e |= set(es)
        seen_n |= set(us)
    return True


def empirical_event_frequency(g: Graph, attack: AttackVariables, params: SmoothingParams, v: int, k: int,
                              num_samples: int, seed: int) -> float:
    """Monte Carlo frequency of the event by checking every path against sampled masks."""
    ps = injected_paths(g, attack, v, k)
    if not ps.paths:
        return 0.0
    cg = composed_graph(g, attack)
    hits = 0
    for start in range(0, num_samples, 10_000):
        count = min(10_000, num_samples - start)
        nodes, edges = sample_masks(cg, params, np.random.SeedSequence([seed, start]), count)
        alive = np.zeros(count, dtype=bool)
        for es, us in ps.paths:
            alive |= edges[:, list(es)].all(axis=1) & nodes[:, list(us)].all(axis=1)
        hits += int(alive.sum())
    return hits / num_samples


# --------------------------------------------------------------------------
# instance battery

PARAM_GRID = ((0.5, 0.5), (0.6, 0.5), (0.7, 0.9), (0.9, 0.8), (0.8, 0.7), (0.3, 0.3))


def random_tiny_instance(rng: np.random.Generator, max_rho: int = 3) -> TinyInstance:
    while True:
        n = int(rng.integers(3, 9))
        rho = int(rng.integers(0, max_rho + 1))
        if rho * n + rho * (rho - 1) // 2 <= MAX_SLOTS:
            break
    tau = int(rng.integers(1, 4))
    density = rng.uniform(0.2, 0.6)
    pairs = [(u, w) for u in range(n) for w in range(u + 1, n) if rng.random() < density]
    g = Graph.from_edges(n, pairs)
    t = int(rng.integers(1, min(4, n) + 1))
    targets = np.sort(rng.choice(n, size=t, replace=False))
    p_e, p_n = PARAM_GRID[int(rng.integers(len(PARAM_GRID)))]
    gaps = GapVector.from_gaps(rng.uniform(-0.05, 1.0, size=n))
    return TinyInstance(g, ThreatModel(rho, tau, 2), gaps, targets, SmoothingParams(p_e, p_n))


@dataclass
class BatteryResult:
    instances: int = 0
    checks: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def run_battery(count: int = 200, seed: int = 0, inject_violation: bool = False) -> BatteryResult:
    """Cross-validate exact solver, LP bounds and the interference bound on seeded tiny instances.

    ``inject_violation`` corrupts one oracle value so the failure path can be exercised.
    """
    from .certify import CertProblem, certify_collective, interference_bound, solve_exact

    rng = np.random.default_rng(seed)
    res = BatteryResult()
    for idx in range(count):
        inst = random_tiny_instance(rng)
        prob = CertProblem(inst.g, inst.threat, inst.gaps, inst.targets, inst.params, "exact")
        m_star, attack = exact_worst_case(inst)
        if inject_violation and idx == 0:
            m_star += 1
        exact = solve_exact(prob)
        res.checks += 1
        if int(round(exact.M_upper)) != m_star:
            res.violations.append((idx, "exact", exact.M_upper, m_star))
        for method in ("lp1", "lp2"):
            rep = certify_collective(prob.with_(method=method))
            res.checks += 1
            if rep.M_upper < m_star:
                res.violations.append((idx, method, rep.M_upper, m_star))
        if attack.rho:
            for v in inst.targets.tolist():
                bound = interference_bound(inst.g, attack, inst.params, v, 2)
                ev = exact_event_probability(inst.g, attack, inst.params, v, 2)
                res.checks += 1
                if ev > bound + 1e-12:
                    res.violations.append((idx, "event", v, ev, bound))
        res.instances += 1
    return res
