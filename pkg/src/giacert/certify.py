"""Certificates against graph injection: interference bound, exact BQCLP and LP relaxations.

For ``k = 2`` the attacker's influence on a target ``v`` is summarized by two
walk counts, ``n1_v`` (direct injected->v edges) and ``n2_v`` (length-two
walks).  With ``s = keep_e * keep_n`` and ``pt_i = log(1 - s**i) < 0`` a node
is non-robust iff::

    pt_1 * n1_v + pt_2 * n2_v <= C_v = log(1 - c_v / 2)

``n2_v = sum_{u in N(v)} reach1_u + sum_j a1[j, v] * d_j`` where ``d_j`` is
the internal (injected-injected) degree of injected node ``j``.  The exact
solver leans on this: ``a2`` only matters through its degree sequence.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations, combinations_with_replacement

import numpy as np
import scipy.sparse as sp

from . import lp as lpcore
from .graph import AttackVariables, Graph, GraphError, ThreatModel, path_counts_to_target
from .smoothing import SmoothingParams
from .votes import GapVector

log = logging.getLogger(__name__)

METHODS = ("exact", "lp1", "lp2", "samplewise")
FLOOR_SLACK = 1e-9
EPS = np.finfo(np.float64).eps


class SolverFailure(RuntimeError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


class LimitExceeded(ValueError):
    pass


# --------------------------------------------------------------------------
# interference bound

@dataclass(frozen=True)
class LogCoefficients:
    params: SmoothingParams
    k: int = 2

    def __post_init__(self):
        self.params.require_positive()
        if self.k < 1:
            raise ValueError("k must be at least 1")

    @cached_property
    def s(self) -> float:
        return self.params.keep_e * self.params.keep_n

    @cached_property
    def p(self) -> np.ndarray:
        return np.array([1.0 - self.s ** i for i in range(1, self.k + 1)])

    @cached_property
    def p_tilde(self) -> np.ndarray:
        return np.array([math.log1p(-self.s ** i) for i in range(1, self.k + 1)])


def log_survival(counts, p_tilde) -> np.ndarray:
    """``sum_i counts[i] * p_tilde[i]``; every caller goes through here so results agree bitwise."""
    out = 0.0
    for i in range(len(p_tilde)):
        out = out + np.asarray(counts[i], dtype=np.float64) * p_tilde[i]
    return out


def interference_from_counts(counts, coeffs: LogCoefficients):
    """Upper bound on the chance that an injected message reaches the target."""
    return -np.expm1(log_survival(counts, coeffs.p_tilde))


def interference_bound(g: Graph, attack: AttackVariables, params: SmoothingParams, v: int, k: int = 2) -> float:
    coeffs = LogCoefficients(params, k)
    return float(interference_from_counts(path_counts_to_target(g, attack, v, k), coeffs))


def is_certified(p_bound, c_v):
    """Strict: certified iff ``p_bound < c_v / 2``; never when ``c_v <= 0``."""
    p_bound, c_v = np.asarray(p_bound), np.asarray(c_v)
    out = (c_v > 0) & (p_bound < c_v / 2)
    return bool(out) if out.ndim == 0 else out


def log_threshold(c_v) -> np.ndarray:
    """Row threshold ``C = log(1 - c/2)``, nudged a few ulps toward zero.

    Every method decides ``lhs <= C`` with this same value, so a tie between
    the bound and ``c/2`` counts as non-robust whatever the rounding did.
    """
    C = np.log1p(-np.asarray(c_v, dtype=np.float64) / 2)
    return C + 4.0 * EPS * np.abs(C)


def non_robust(counts, c_v, coeffs: LogCoefficients):
    c_v = np.asarray(c_v, dtype=np.float64)
    return (c_v <= 0) | (log_survival(counts, coeffs.p_tilde) <= log_threshold(c_v))


# --------------------------------------------------------------------------
# problem and report containers

@dataclass(eq=False)
class CertProblem:
    graph: Graph
    threat: ThreatModel
    gaps: GapVector
    targets: np.ndarray
    params: SmoothingParams
    method: str = "lp2"

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=np.int64).ravel()
        if self.gaps.n != self.graph.n:
            raise GraphError(f"gap vector has {self.gaps.n} entries for {self.graph.n} nodes")
        if self.targets.size and (self.targets.min() < 0 or self.targets.max() >= self.graph.n):
            raise GraphError("target id out of range")
        if np.unique(self.targets).size != self.targets.size:
            raise GraphError("duplicate target ids")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        self.params.require_positive()

    @property
    def c(self) -> np.ndarray:
        return self.gaps.c[self.targets]

    @property
    def C(self) -> np.ndarray:
        return log_threshold(self.c)

    @property
    def abstain_mask(self) -> np.ndarray:
        return self.c <= 0

    @property
    def live_targets(self) -> np.ndarray:
        """Targets that can still be certified (positive gap), in input order."""
        return self.targets[~self.abstain_mask]

    @property
    def tau_eff(self) -> int:
        return self.threat.effective_tau(self.graph.n)

    def with_(self, **kw) -> "CertProblem":
        d = dict(graph=self.graph, threat=self.threat, gaps=self.gaps, targets=self.targets,
                 params=self.params, method=self.method)
        d.update(kw)
        return CertProblem(**d)


@dataclass
class CertificateReport:
    method: str
    rho: int
    tau: int
    p_e: float
    p_n: float
    k: int
    n_targets: int
    abstain: int
    M_upper: float
    certified_count: int
    per_node: list = field(default_factory=list)
    lp: dict = field(default_factory=dict)
    runtime_ms: float = 0.0
    status: str = "ok"

    @property
    def certified_ratio(self) -> float:
        return self.certified_count / self.n_targets if self.n_targets else 1.0

    def to_dict(self) -> dict:
        return {
            "method": self.method, "rho": self.rho, "tau": self.tau, "p_e": self.p_e, "p_n": self.p_n,
            "k": self.k, "n_targets": self.n_targets, "abstain": self.abstain, "M_upper": self.M_upper,
            "certified_count": self.certified_count, "certified_ratio": self.certified_ratio,
            "status": self.status, "lp": self.lp, "runtime_ms": self.runtime_ms,
            "per_node": [{"id": int(v), "robust_flag": bool(f)} for v, f in self.per_node],
        }


def certified_from_bound(n_targets: int, m_upper: float) -> int:
    return int(min(n_targets, max(0, n_targets - math.floor(m_upper + FLOOR_SLACK))))


def _report(problem, m_upper, flags, **kw) -> CertificateReport:
    t = problem.threat
    return CertificateReport(
        method=problem.method, rho=t.rho, tau=t.tau, p_e=problem.params.p_e, p_n=problem.params.p_n,
        k=t.k, n_targets=int(problem.targets.size), abstain=int(problem.abstain_mask.sum()),
        M_upper=float(m_upper), certified_count=certified_from_bound(problem.targets.size, m_upper),
        per_node=list(zip(problem.targets.tolist(), flags)), **kw)


def _require_k2(problem):
    if problem.threat.k != 2:
        raise ValueError(f"collective optimization supports k=2 only, got k={problem.threat.k}")


# --------------------------------------------------------------------------
# exact binary program

@dataclass(frozen=True)
class ExactLimits:
    max_rho: int = 12
    max_slots: int = 200   # n * rho


@dataclass(eq=False)
class BQCLP:
    """The exact program on the live targets (abstaining targets sit in ``baseline``)."""
    problem: CertProblem
    targets: np.ndarray
    C: np.ndarray
    coeffs: LogCoefficients
    baseline: int

    def counts(self, attack: AttackVariables) -> np.ndarray:
        g = self.problem.graph
        n1 = attack.a1.sum(axis=0)
        n2 = g.adjacency @ n1 + attack.a1.T @ attack.a2.sum(axis=1)
        return np.stack([n1[self.targets], n2[self.targets]])

    def constraint_lhs(self, attack) -> np.ndarray:
        return log_survival(self.counts(attack), self.coeffs.p_tilde)

    def feasible(self, attack: AttackVariables, m) -> bool:
        """Degree budget plus ``lhs <= C * m`` row by row."""
        m = np.asarray(m)
        if attack.rho > self.problem.threat.rho:
            return False
        if attack.rho and attack.degrees().max() > self.problem.tau_eff:
            return False
        return bool(np.all(self.constraint_lhs(attack) <= self.C * m))

    def best_m(self, attack) -> np.ndarray:
        c = self.problem.gaps.c[self.targets]
        return non_robust(self.counts(attack), c, self.coeffs).astype(np.int64)

    def objective(self, attack) -> int:
        return self.baseline + int(self.best_m(attack).sum())


def build_bqclp(problem: CertProblem) -> BQCLP:
    _require_k2(problem)
    live = problem.live_targets
    return BQCLP(problem, live, log_threshold(problem.gaps.c[live]), LogCoefficients(problem.params, 2),
                 int(problem.abstain_mask.sum()))


def is_graphical(d) -> bool:
    d = sorted((int(x) for x in d), reverse=True)
    n = len(d)
    if sum(d) % 2 or (d and (d[-1] < 0 or d[0] > n - 1)):
        return False
    prefix = 0
    for k in range(1, n + 1):
        prefix += d[k - 1]
        if prefix > k * (k - 1) + sum(min(x, k) for x in d[k:]):
            return False
    return True


def realize_degree_sequence(d) -> np.ndarray:
    """Havel-Hakimi; returns a symmetric 0/1 matrix with the given degrees."""
    n = len(d)
    a = np.zeros((n, n), dtype=np.int64)
    rem = list(d)
    for _ in range(n):
        order = sorted(range(n), key=lambda i: (-rem[i], i))
        i = order[0]
        if rem[i] == 0:
            break
        partners = order[1:1 + rem[i]]
        if len(partners) < rem[i] or any(rem[j] == 0 for j in partners):
            raise ValueError(f"degree sequence {list(d)} is not graphical")
        for j in partners:
            a[i, j] = a[j, i] = 1
            rem[j] -= 1
        rem[i] = 0
    return a


def _degree_sequences(rho, cap):
    for d in combinations_with_replacement(range(cap, -1, -1), rho):
        if is_graphical(d):
            yield d


class _RowTable:
    """All attachment rows of a given size within the relevant node set ``R``."""

    def __init__(self, g: Graph, R: np.ndarray, targets: np.ndarray):
        self.R = R
        self.targets = targets
        pos = {int(u): i for i, u in enumerate(R)}
        self.is_target = np.zeros((R.size, targets.size), dtype=np.int64)
        self.nbr = np.zeros((R.size, targets.size), dtype=np.int64)
        for t, v in enumerate(targets):
            self.is_target[pos[int(v)], t] = 1
            for u in g.neighbors(int(v)):
                self.nbr[pos[int(u)], t] = 1
        self._cache = {}

    def rows(self, b):
        if b not in self._cache:
            combos = list(combinations(range(self.R.size), b))
            idx = np.array(combos, dtype=np.int64).reshape(len(combos), b)
            h1 = self.is_target[idx].sum(axis=1)
            hn = self.nbr[idx].sum(axis=1)
            # most damaging rows first so the incumbent improves early
            order = np.lexsort((-hn.sum(axis=1), -h1.sum(axis=1)))
            self._cache[b] = (idx[order], h1[order], hn[order])
        return self._cache[b]


def solve_exact(problem: CertProblem, limits: ExactLimits = ExactLimits()) -> CertificateReport:
    """Exact attacker optimum by DFS over internal-degree sequences and attachment rows."""
    t0 = time.perf_counter()
    rho, n = problem.threat.rho, problem.graph.n
    if rho > limits.max_rho or n * rho > limits.max_slots:
        raise LimitExceeded(f"exact mode limited to rho <= {limits.max_rho} and n*rho <= {limits.max_slots}; "
                            f"got rho={rho}, n*rho={n * rho}")
    if problem.threat.k != 2:
        from .oracle import TinyInstance, exact_worst_case
        inst = TinyInstance(problem.graph, problem.threat, problem.gaps, problem.targets, problem.params)
        m_star, attack = exact_worst_case(inst)
        flags = _flags_for_attack_general(problem, attack)
        return _report(problem, m_star, flags, runtime_ms=_ms(t0), lp={"attack": attack.key()})
    q = build_bqclp(problem)
    best, attack = _exact_search(q)
    m = q.best_m(attack)
    flags = _merge_flags(problem, q.targets, m)
    return _report(problem, q.baseline + best, flags, runtime_ms=_ms(t0))


def _ms(t0):
    return round(1000.0 * (time.perf_counter() - t0), 3)


def _merge_flags(problem, live, m_live):
    robust = dict(zip(live.tolist(), (1 - np.asarray(m_live)).astype(bool).tolist()))
    return [robust.get(v, False) for v in problem.targets.tolist()]


def _flags_for_attack_general(problem, attack):
    coeffs = LogCoefficients(problem.params, problem.threat.k)
    flags = []
    for v, c in zip(problem.targets.tolist(), problem.c):
        counts = path_counts_to_target(problem.graph, attack, v, problem.threat.k)
        flags.append(not bool(non_robust(counts, c, coeffs)))
    return flags


def _exact_search(q: BQCLP) -> tuple[int, AttackVariables]:
    g, rho, tau = q.problem.graph, q.problem.threat.rho, q.problem.tau_eff
    T = q.targets
    empty = AttackVariables.empty(rho, g.n)
    if T.size == 0 or rho == 0 or tau == 0:
        return int(q.best_m(empty).sum()), empty
    R = np.unique(np.concatenate([T] + [g.neighbors(int(v)) for v in T]))
    table = _RowTable(g, R, T)
    c = q.problem.gaps.c[T]

    def count(n1, n2):
        return non_robust((n1, n2), c, q.coeffs)

    best = [int(count(np.zeros(T.size), np.zeros(T.size)).sum()), (), None]

    for d in _degree_sequences(rho, min(tau, rho - 1)):
        sizes = [min(tau - dj, R.size) for dj in d]
        tables = [table.rows(b) for b in sizes]
        # per-node optimistic increments for the remaining-suffix bound
        opt1 = np.array([h1.max(axis=0) if h1.size else np.zeros(T.size, np.int64) for _, h1, _ in tables])
        opt2 = np.array([(hn + dj * h1).max(axis=0) if h1.size else np.zeros(T.size, np.int64)
                         for dj, (_, h1, hn) in zip(d, tables)])
        suf1 = np.cumsum(opt1[::-1], axis=0)[::-1]
        suf2 = np.cumsum(opt2[::-1], axis=0)[::-1]

        def dfs(j, n1, n2, chosen, lo):
            if best[0] == T.size:
                return
            if int(count(n1 + suf1[j], n2 + suf2[j]).sum()) <= best[0]:
                return
            idx, h1, hn = tables[j]
            dj = d[j]
            if j == rho - 1:
                cand1 = n1 + h1[lo:]
                cand2 = n2 + hn[lo:] + dj * h1[lo:]
                scores = non_robust((cand1.T, cand2.T), c[:, None], q.coeffs).sum(axis=0)
                if scores.size and scores.max() > best[0]:
                    r = int(np.argmax(scores))
                    best[0], best[1], best[2] = int(scores[r]), chosen + (lo + r,), d
                return
            for r in range(lo, idx.shape[0]):
                nxt = r if d[j + 1] == dj else 0
                dfs(j + 1, n1 + h1[r], n2 + hn[r] + dj * h1[r], chosen + (r,), nxt)
                if best[0] == T.size:
                    return

        dfs(0, np.zeros(T.size, np.int64), np.zeros(T.size, np.int64), (), 0)

    if best[2] is None:
        return best[0], empty
    d = best[2]
    a2 = realize_degree_sequence(d)
    a1 = np.zeros((rho, g.n), dtype=np.int64)
    for j, r in enumerate(best[1]):
        idx = table.rows(min(tau - d[j], R.size))[0]
        a1[j, R[idx[r]]] = 1
    attack = AttackVariables(a1, a2)
    assert q.objective(attack) - q.baseline == best[0]
    return best[0], attack


# --------------------------------------------------------------------------
# LP relaxations

class _Builder:
    """Accumulates sparse rows ``sum coef * x <= rhs`` with orbit labels."""

    def __init__(self, num_vars):
        self.m = num_vars
        self.rows, self.cols, self.vals = [], [], []
        self.rhs, self.row_orbit = [], []
        self.p = 0

    def add(self, rows, cols, vals, rhs, orbit):
        """``rows`` are local indices 0..count-1 for a block of ``count = len(rhs)`` rows."""
        rhs = np.atleast_1d(np.asarray(rhs, dtype=np.float64))
        self.rows.append(np.asarray(rows, dtype=np.int64) + self.p)
        self.cols.append(np.asarray(cols, dtype=np.int64))
        self.vals.append(np.broadcast_to(np.asarray(vals, dtype=np.float64), np.shape(rows)).ravel())
        self.rhs.append(rhs)
        self.row_orbit.append(np.broadcast_to(np.asarray(orbit, dtype=np.int64), rhs.shape).ravel())
        self.p += rhs.size

    def matrix(self):
        if not self.rows:
            return sp.csr_matrix((0, self.m)), np.zeros(0), np.zeros(0, np.int64)
        A = sp.csr_matrix((np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
                          shape=(self.p, self.m))
        A.sum_duplicates()
        return A, np.concatenate(self.rhs), np.concatenate(self.row_orbit)


def _neighbor_pairs(g, T):
    """(target position, neighbor id) for every neighbor of every target."""
    adj = g.adjacency
    sub = adj[T]
    t_pos = np.repeat(np.arange(T.size), np.diff(sub.indptr))
    return t_pos, sub.indices.astype(np.int64)


@dataclass(eq=False)
class RelaxedProblem:
    lp: lpcore.LinearProgram
    targets: np.ndarray        # live targets, one m variable each
    m_index: np.ndarray
    baseline: int
    kind: str


def _names_ok(m):
    return m <= 100_000


def build_lp1(problem: CertProblem) -> RelaxedProblem:
    """Pairwise products ``Q_t[i, j] = a2{i,j} * a1[j, t]`` linearized by McCormick rows."""
    _require_k2(problem)
    q = build_bqclp(problem)
    g, rho, tau = problem.graph, problem.threat.rho, problem.tau_eff
    n, T, nt = g.n, q.targets, q.targets.size
    pt1, pt2 = q.coeffs.p_tilde
    iu, ju = np.triu_indices(rho, 1)
    npair = iu.size
    pair_id = np.full((rho, rho), -1, dtype=np.int64)
    pair_id[iu, ju] = np.arange(npair)
    pair_id[ju, iu] = np.arange(npair)
    oi, oj = np.nonzero(~np.eye(rho, dtype=bool))   # ordered pairs i != j
    nord = oi.size

    a1_off, a2_off = 0, rho * n
    q_off = a2_off + npair
    m_off = q_off + nt * nord
    m = m_off + nt

    def a1(i, v):
        return a1_off + np.asarray(i) * n + np.asarray(v)

    b = _Builder(m)
    # target rows: pt1 * n1 + pt2 * (A0 reach + sum Q_t) - C m <= 0
    tp, nb = _neighbor_pairs(g, T)
    for t in range(nt):
        cols = [a1(np.arange(rho), T[t]), q_off + t * nord + np.arange(nord), [m_off + t]]
        vals = [np.full(rho, pt1), np.full(nord, pt2), [-q.C[t]]]
        nbr = nb[tp == t]
        cols.append(a1(np.repeat(np.arange(rho), nbr.size), np.tile(nbr, rho)))
        vals.append(np.full(rho * nbr.size, pt2))
        cc, vv = np.concatenate(cols), np.concatenate(vals)
        b.add(np.zeros(cc.size), cc, vv, 0.0, t)
    # degree rows
    if rho:
        r = np.repeat(np.arange(rho), n)
        c_ = a1(r, np.tile(np.arange(n), rho))
        pr, pc = np.nonzero(pair_id >= 0)
        b.add(np.concatenate([r, pr]), np.concatenate([c_, a2_off + pair_id[pr, pc]]),
              1.0, np.full(rho, float(tau)), nt)
    # McCormick rows per (t, ordered pair)
    if nord and nt:
        t_rep = np.repeat(np.arange(nt), nord)
        i_rep = np.tile(oi, nt)
        j_rep = np.tile(oj, nt)
        qv = q_off + np.arange(nt * nord)
        a2v = a2_off + pair_id[i_rep, j_rep]
        a1v = a1(j_rep, T[t_rep])
        k = np.arange(nt * nord)
        base = nt + 1
        b.add(np.concatenate([k, k]), np.concatenate([qv, a2v]), np.concatenate([np.ones(k.size), -np.ones(k.size)]),
              np.zeros(k.size), base + t_rep)
        b.add(np.concatenate([k, k]), np.concatenate([qv, a1v]), np.concatenate([np.ones(k.size), -np.ones(k.size)]),
              np.zeros(k.size), base + nt + t_rep)
        b.add(np.concatenate([k, k, k]), np.concatenate([a2v, a1v, qv]),
              np.concatenate([np.ones(2 * k.size), -np.ones(k.size)]), np.ones(k.size), base + 2 * nt + t_rep)
    A, rhs, row_orbit = b.matrix()

    c = np.zeros(m)
    c[m_off:] = 1.0
    var_orbit = np.concatenate([
        np.tile(np.arange(n), rho),                        # a1 by existing node
        np.full(npair, n),                                  # a2 pairs
        n + 1 + np.repeat(np.arange(nt), nord),             # Q by target
        n + 1 + nt + np.arange(nt),                         # m
    ])
    names = None
    if _names_ok(m):
        names = ([f"a1_{i}_{v}" for i in range(rho) for v in range(n)]
                 + [f"a2_{i}_{j}" for i, j in zip(iu, ju)]
                 + [f"q_{T[t]}_{i}_{j}" for t in range(nt) for i, j in zip(oi, oj)]
                 + [f"m_{v}" for v in T])
    lp = lpcore.LinearProgram(c, A, rhs, np.zeros(m), np.ones(m), var_names=names,
                              var_orbit=_dense_labels(var_orbit), row_orbit=_dense_labels(row_orbit))
    return RelaxedProblem(lp, T, m_off + np.arange(nt), q.baseline, "lp1")


def build_lp2(problem: CertProblem) -> RelaxedProblem:
    """Internal degrees ``z = a2 1`` and products ``Q[t, i] = a1[i, t] * z_i`` under McCormick rows."""
    _require_k2(problem)
    q = build_bqclp(problem)
    g, rho, tau = problem.graph, problem.threat.rho, problem.tau_eff
    n, T, nt = g.n, q.targets, q.targets.size
    pt1, pt2 = q.coeffs.p_tilde
    u = float(max(0, min(tau, rho - 1)))    # z_i <= rho - 1 with no self-loops

    a1_off, z_off = 0, rho * n
    q_off = z_off + rho
    m_off = q_off + nt * rho
    m = m_off + nt

    def a1(i, v):
        return a1_off + np.asarray(i) * n + np.asarray(v)

    b = _Builder(m)
    tp, nb = _neighbor_pairs(g, T)
    for t in range(nt):
        nbr = nb[tp == t]
        cc = np.concatenate([a1(np.arange(rho), T[t]), q_off + t * rho + np.arange(rho), [m_off + t],
                             a1(np.repeat(np.arange(rho), nbr.size), np.tile(nbr, rho))])
        vv = np.concatenate([np.full(rho, pt1), np.full(rho, pt2), [-q.C[t]], np.full(rho * nbr.size, pt2)])
        b.add(np.zeros(cc.size), cc, vv, 0.0, t)
    if rho:
        r = np.repeat(np.arange(rho), n)
        b.add(np.concatenate([r, np.arange(rho)]),
              np.concatenate([a1(r, np.tile(np.arange(n), rho)), z_off + np.arange(rho)]),
              1.0, np.full(rho, float(tau)), nt)
    if rho and nt:
        t_rep = np.repeat(np.arange(nt), rho)
        i_rep = np.tile(np.arange(rho), nt)
        qv = q_off + np.arange(nt * rho)
        a1v = a1(i_rep, T[t_rep])
        zv = z_off + i_rep
        k = np.arange(nt * rho)
        one = np.ones(k.size)
        base = nt + 1
        b.add(np.concatenate([k, k]), np.concatenate([qv, a1v]), np.concatenate([one, -u * one]),
              np.zeros(k.size), base + t_rep)
        b.add(np.concatenate([k, k]), np.concatenate([qv, zv]), np.concatenate([one, -one]),
              np.zeros(k.size), base + nt + t_rep)
        b.add(np.concatenate([k, k, k]), np.concatenate([a1v, zv, qv]), np.concatenate([u * one, one, -one]),
              np.full(k.size, u), base + 2 * nt + t_rep)
    A, rhs, row_orbit = b.matrix()

    c = np.zeros(m)
    c[m_off:] = 1.0
    hi = np.ones(m)
    hi[z_off:m_off] = u
    var_orbit = np.concatenate([
        np.tile(np.arange(n), rho),
        np.full(rho, n),
        n + 1 + np.repeat(np.arange(nt), rho),
        n + 1 + nt + np.arange(nt),
    ])
    names = None
    if _names_ok(m):
        names = ([f"a1_{i}_{v}" for i in range(rho) for v in range(n)] + [f"z_{i}" for i in range(rho)]
                 + [f"q_{T[t]}_{i}" for t in range(nt) for i in range(rho)] + [f"m_{v}" for v in T])
    lp = lpcore.LinearProgram(c, A, rhs, np.zeros(m), hi, var_names=names,
                              var_orbit=_dense_labels(var_orbit), row_orbit=_dense_labels(row_orbit))
    return RelaxedProblem(lp, T, m_off + np.arange(nt), q.baseline, "lp2")


def _dense_labels(x):
    return np.unique(x, return_inverse=True)[1].astype(np.int64)


# --------------------------------------------------------------------------
# certification entry points

def solve_relaxation(problem: CertProblem, kind: str, use_symmetry: bool = True):
    rel = (build_lp1 if kind == "lp1" else build_lp2)(problem)
    sol = lpcore.solve(rel.lp, use_symmetry=use_symmetry)
    diag = {"rows": rel.lp.num_rows, "cols": rel.lp.num_vars, "pivots": sol.iterations}
    if sol.status != lpcore.OPTIMAL:
        raise SolverFailure(f"{kind} solve ended with status {sol.status}", {**diag, **sol.diagnostics})
    diag["duality_gap"] = float(sol.gap)
    return rel, sol, diag


def certify_collective(problem: CertProblem, limits: ExactLimits = ExactLimits(),
                       use_symmetry: bool = True) -> CertificateReport:
    t0 = time.perf_counter()
    if problem.method == "exact":
        return solve_exact(problem, limits)
    if problem.method == "samplewise":
        flags = [certify_samplewise(problem.graph, problem.gaps, problem.threat, problem.params, int(v))
                 for v in problem.targets]
        rep = _report(problem, len(flags) - sum(flags), flags)
        rep.runtime_ms = _ms(t0)
        return rep
    _require_k2(problem)
    rel, sol, diag = solve_relaxation(problem, problem.method, use_symmetry)
    m_upper = rel.baseline + sol.dual_bound
    # primal m only as a diagnostic hint: m_t < 1/2 suggests robustness
    flags = _merge_flags(problem, rel.targets, (sol.x[rel.m_index] >= 0.5).astype(np.int64))
    return _report(problem, m_upper, flags, lp=diag, runtime_ms=_ms(t0))


def samplewise_max_counts(g: Graph, threat: ThreatModel, v: int) -> list[tuple[int, int]]:
    """For each number ``a`` of injected nodes wired straight to ``v``, the most
    length-two walks into ``v`` an attacker can add, as ``(a, n2)`` pairs.

    Only the internal-degree sequence matters, so the search runs over the
    degree totals of the direct and indirect groups with each group balanced.
    Balancing keeps the value (both per-node gains are concave) and keeps
    graphicality (a balanced sequence is majorized by any other with the same
    group sums).
    """
    rho, tau = threat.rho, threat.effective_tau(g.n)
    delta = int(g.degrees[v])
    if rho == 0 or tau == 0:
        return [(0, 0)]
    cap = min(tau, rho - 1)
    out = []
    for a in range(0, rho + 1):
        rest = rho - a
        best = min(delta, tau) * rest
        best_n2 = None
        dcap = min(cap, tau - 1)
        for sd in range(a * dcap, -1, -1):
            dd = _balanced(sd, a)
            gain = sum(min(x + delta, tau - 1) for x in dd)
            if best_n2 is not None and gain + best <= best_n2:
                break
            for si in range(sd % 2, min(sd, rest * cap) + 1, 2):
                di = _balanced(si, rest)
                if is_graphical(dd + di):
                    val = gain + sum(min(delta, tau - x) for x in di)
                    if best_n2 is None or val > best_n2:
                        best_n2 = val
                    break
        out.append((a, best_n2 if best_n2 is not None else 0))
    return out


def _balanced(total, parts):
    if parts == 0:
        return []
    q, r = divmod(total, parts)
    return [q + 1] * r + [q] * (parts - r)


def certify_samplewise(g: Graph, gaps: GapVector, threat: ThreatModel, params: SmoothingParams, v: int) -> bool:
    if threat.k != 2:
        raise ValueError(f"sample-wise certificate supports k=2 only, got k={threat.k}")
    c = float(gaps.c[v])
    if c <= 0:
        return False
    coeffs = LogCoefficients(params, 2)
    for a, n2 in samplewise_max_counts(g, threat, v):
        if non_robust((a, n2), c, coeffs):
            return False
    return True
