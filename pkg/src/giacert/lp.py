"""Box-bounded linear programs with a rigorously validated dual bound.

Problems have the form ``max c^T x  s.t.  A x <= b,  lo <= x <= hi`` with
every bound finite.  Because the box is finite, *any* nonnegative row
multiplier vector ``y`` yields the weak-duality bound::

    U(y) = b^T y + sum_j max(d_j lo_j, d_j hi_j),   d = c - A^T y

:func:`dual_upper_bound` evaluates ``U`` with compensated summation plus an
explicit floating-point error term, so the returned value is a true upper
bound on every feasible objective even if the simplex iterates drifted.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

EPS = np.finfo(np.float64).eps
OPTIMAL, INFEASIBLE, NUMERIC_FAILURE = "optimal", "infeasible", "numeric-failure"
# largest dense tableau (entries) the unreduced path will allocate
MAX_DENSE_ENTRIES = 60_000_000


class DualCertificateError(ValueError):
    pass


@dataclass(eq=False)
class LinearProgram:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    var_names: list[str] | None = None
    row_names: list[str] | None = None
    # optional symmetry: indices of variable / row orbits under a permutation group
    var_orbit: np.ndarray | None = None
    row_orbit: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64).ravel()
        self.b = np.asarray(self.b, dtype=np.float64).ravel()
        self.lo = np.asarray(self.lo, dtype=np.float64).ravel()
        self.hi = np.asarray(self.hi, dtype=np.float64).ravel()
        self.A = sp.csr_matrix(self.A, dtype=np.float64)
        m, p = self.c.shape[0], self.b.shape[0]
        if self.A.shape != (p, m):
            raise ValueError(f"A has shape {self.A.shape}, expected {(p, m)}")
        if self.lo.shape != (m,) or self.hi.shape != (m,):
            raise ValueError("bounds must have one entry per variable")
        if not (np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi))):
            raise ValueError("every variable needs finite bounds")
        if np.any(self.lo > self.hi):
            raise ValueError("lower bound exceeds upper bound")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.b))):
            raise ValueError("objective and right-hand side must be finite")

    @property
    def num_vars(self) -> int:
        return self.c.shape[0]

    @property
    def num_rows(self) -> int:
        return self.b.shape[0]


@dataclass(eq=False)
class LpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float = float("nan")
    y: np.ndarray | None = None
    dual_bound: float = float("inf")
    iterations: int = 0
    farkas: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return self.dual_bound - self.objective


# --------------------------------------------------------------------------
# certified bound

def _gamma(k):
    k = np.asarray(k, dtype=np.float64)
    return k * EPS / (1.0 - k * EPS)


def dual_upper_bound(lp: LinearProgram, sol_or_y, repair_tol: float = 1e-7) -> float:
    """Recompute the weak-duality bound ``U(y)`` with outward rounding.

    Slightly negative multipliers (above ``-repair_tol`` relative to the
    largest one) are clipped to zero; anything worse is rejected.
    """
    y = sol_or_y.y if isinstance(sol_or_y, LpSolution) else sol_or_y
    if y is None:
        raise DualCertificateError("solution carries no multipliers")
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape != (lp.num_rows,):
        raise DualCertificateError("multiplier vector has wrong length")
    if not np.all(np.isfinite(y)):
        raise DualCertificateError("non-finite multipliers")
    scale = max(1.0, float(np.abs(y).max(initial=0.0)))
    if np.any(y < -repair_tol * scale):
        raise DualCertificateError(f"multiplier {y.min():.3g} is not dual feasible")
    y = np.maximum(y, 0.0)

    At = lp.A.T.tocsr()
    d = lp.c - At @ y
    mag = np.abs(lp.c) + abs(At) @ y
    nnz = np.diff(At.indptr) + 2
    # error of the computed d_j, itself inflated for the rounding in `mag`
    err_d = _gamma(nnz) * mag * (1.0 + 2.0 * _gamma(nnz))
    reach = np.maximum(np.abs(lp.lo), np.abs(lp.hi))
    box = np.maximum(d * lp.lo, d * lp.hi) + err_d * reach
    rows = lp.b * y
    total = math.fsum(rows) + math.fsum(box)
    slack = 4.0 * EPS * (math.fsum(np.abs(rows)) + math.fsum(np.abs(box))) + 1e-300
    return total + slack


def dual_infeasibility(lp: LinearProgram, x: np.ndarray, y: np.ndarray, tol: float = 1e-9) -> float:
    """Largest reduced-cost sign violation at the given primal point (diagnostic)."""
    d = lp.c - lp.A.T @ np.maximum(y, 0.0)
    at_lo = x <= lp.lo + tol
    at_hi = x >= lp.hi - tol
    viol = np.where(at_lo & ~at_hi, np.maximum(d, 0.0), 0.0)
    viol = np.maximum(viol, np.where(at_hi & ~at_lo, np.maximum(-d, 0.0), 0.0))
    viol = np.maximum(viol, np.where(~at_lo & ~at_hi, np.abs(d), 0.0))
    return float(viol.max(initial=0.0))


def primal_violation(lp: LinearProgram, x: np.ndarray) -> float:
    r = lp.A @ x - lp.b
    v = float(np.maximum(r, 0.0).max(initial=0.0))
    v = max(v, float(np.maximum(lp.lo - x, 0.0).max(initial=0.0)))
    return max(v, float(np.maximum(x - lp.hi, 0.0).max(initial=0.0)))


# --------------------------------------------------------------------------
# bounded-variable primal simplex on a dense tableau

_AT_LO, _AT_HI, _BASIC = 0, 1, 2


class _Tableau:
    """Columns: structural (shifted to [0, u]), slacks, artificials."""

    def __init__(self, lp: LinearProgram, tol: float):
        self.tol = tol
        A = lp.A.toarray()
        p, m = A.shape
        self.p, self.m = p, m
        bshift = lp.b - A @ lp.lo
        neg = np.flatnonzero(bshift < 0)
        self.n_art = neg.size
        ncol = m + p + self.n_art
        T = np.zeros((p, ncol))
        T[:, :m] = A
        T[:, m:m + p] = np.eye(p)
        self.upper = np.concatenate([lp.hi - lp.lo, np.full(p, np.inf), np.full(self.n_art, np.inf)])
        basis = np.arange(m, m + p)
        for k, i in enumerate(neg):
            col = m + p + k
            T[i, col] = -1.0
            # make the artificial basic: flip row sign so its coefficient is +1
            T[i] *= -1.0
            bshift[i] *= -1.0
            basis[i] = col
        self.T = T
        self.beta = bshift.copy()          # values of basic variables
        self.basis = basis
        self.status = np.full(ncol, _AT_LO, dtype=np.int8)
        self.status[basis] = _BASIC
        self.orig_cols = np.concatenate([A, np.eye(p), np.zeros((p, self.n_art))], axis=1)
        for k, i in enumerate(neg):
            self.orig_cols[i, m + p + k] = -1.0
        self.b0 = lp.b - A @ lp.lo
        self.pivots = 0
        self.degenerate_run = 0

    def value_of_nonbasic(self):
        x = np.zeros(self.T.shape[1])
        hi = self.status == _AT_HI
        x[hi] = self.upper[hi]
        return x

    def values(self):
        x = self.value_of_nonbasic()
        x[self.basis] = self.beta
        return x

    def reduced_costs(self, cost):
        cb = cost[self.basis]
        return cost - cb @ self.T

    def run(self, cost, max_iter) -> str:
        tol = self.tol
        ncol = self.T.shape[1]
        idx = np.arange(ncol)
        while True:
            if self.pivots >= max_iter:
                return NUMERIC_FAILURE
            d = self.reduced_costs(cost)
            can_up = (self.status == _AT_LO) & (self.upper > tol) & (d > tol)
            can_dn = (self.status == _AT_HI) & (d < -tol)
            elig = can_up | can_dn
            if not elig.any():
                return OPTIMAL
            if self.degenerate_run > 50:
                j = int(idx[elig][0])   # Bland: lowest eligible index
            else:
                score = np.where(elig, np.abs(d), -1.0)
                j = int(np.argmax(score))   # first max -> lowest index on ties
            sigma = 1.0 if can_up[j] else -1.0
            col = self.T[:, j]
            # ratio test: basic values move by -sigma * t * col
            step = self.upper[j]
            move = sigma * col
            nz = np.flatnonzero(np.abs(move) > 1e-9)
            mv, bv, ubv = move[nz], self.beta[nz], self.upper[self.basis[nz]]
            r = np.full(nz.size, np.inf)
            dec = mv > 0
            r[dec] = np.maximum(bv[dec], 0.0) / mv[dec]
            inc = ~dec & np.isfinite(ubv)
            r[inc] = np.maximum(ubv[inc] - bv[inc], 0.0) / -mv[inc]
            leave, leave_to_upper = -1, False
            if nz.size:
                rmin = r.min()
                if rmin < step - 1e-12:
                    ties = np.flatnonzero(r <= rmin + 1e-12)
                    pick = ties[np.argmin(self.basis[nz[ties]])]
                    step, leave, leave_to_upper = r[pick], int(nz[pick]), bool(inc[pick])
            if not np.isfinite(step):
                return NUMERIC_FAILURE      # cannot happen with a finite box
            self.degenerate_run = self.degenerate_run + 1 if step <= 1e-12 else 0
            self.beta -= step * move
            self.pivots += 1
            if leave < 0:
                # bound flip, basis unchanged
                self.status[j] = _AT_HI if sigma > 0 else _AT_LO
                continue
            entering_value = (0.0 if sigma > 0 else self.upper[j]) + sigma * step
            out = self.basis[leave]
            piv = self.T[leave, j]
            self.T[leave] /= piv
            others = np.flatnonzero(self.T[:, j])
            others = others[others != leave]
            if others.size:
                self.T[others] -= np.outer(self.T[others, j], self.T[leave])
            self.basis[leave] = j
            self.status[j] = _BASIC
            self.status[out] = _AT_HI if leave_to_upper else _AT_LO
            self.beta[leave] = entering_value

    def refresh(self):
        """Recompute basic values and tableau from the original columns."""
        B = self.orig_cols[:, self.basis]
        rhs = self.b0 - self.orig_cols @ self.value_of_nonbasic()
        try:
            self.beta = np.linalg.solve(B, rhs)
            self.T = np.linalg.solve(B, self.orig_cols)
        except np.linalg.LinAlgError:
            return False
        return True

    def duals(self, cost):
        B = self.orig_cols[:, self.basis]
        return np.linalg.solve(B.T, cost[self.basis])


def _simplex(lp: LinearProgram, tol: float, max_iter: int) -> LpSolution:
    tab = _Tableau(lp, tol)
    m, p = tab.m, tab.p
    ncol = tab.T.shape[1]
    if tab.n_art:
        phase1 = np.zeros(ncol)
        phase1[m + p:] = -1.0
        st = tab.run(phase1, max_iter)
        if st != OPTIMAL:
            return LpSolution(NUMERIC_FAILURE, iterations=tab.pivots, diagnostics={"phase": 1})
        if not tab.refresh():
            return LpSolution(NUMERIC_FAILURE, iterations=tab.pivots, diagnostics={"reason": "singular basis"})
        infeas = float(tab.values()[m + p:].sum())
        if infeas > tol * max(1.0, float(np.abs(lp.b).max(initial=0.0))):
            # phase-1 duals: y >= 0 with b^T y < min over the box of (A^T y)^T x
            farkas = tab.duals(phase1)
            return LpSolution(INFEASIBLE, iterations=tab.pivots, farkas=farkas,
                              diagnostics={"phase1_infeasibility": infeas})
        tab.upper[m + p:] = 0.0
        tab.status[m + p:][tab.status[m + p:] == _AT_HI] = _AT_LO
    cost = np.zeros(ncol)
    cost[:m] = lp.c
    st = tab.run(cost, max_iter)
    if st != OPTIMAL:
        return LpSolution(NUMERIC_FAILURE, iterations=tab.pivots, diagnostics={"phase": 2})
    if not tab.refresh():
        return LpSolution(NUMERIC_FAILURE, iterations=tab.pivots, diagnostics={"reason": "singular basis"})
    # the refresh can expose drift; re-optimize from the clean basis
    for _ in range(3):
        d = tab.reduced_costs(cost)
        bad = ((tab.status == _AT_LO) & (tab.upper > tol) & (d > tol)) | ((tab.status == _AT_HI) & (d < -tol))
        if not bad.any():
            break
        if tab.run(cost, max_iter) != OPTIMAL or not tab.refresh():
            return LpSolution(NUMERIC_FAILURE, iterations=tab.pivots, diagnostics={"phase": 2})
    x = tab.values()[:m] + lp.lo
    y = tab.duals(cost)
    return LpSolution(OPTIMAL, x=x, objective=float(lp.c @ x), y=y, iterations=tab.pivots)


def _finish(lp: LinearProgram, sol: LpSolution, tol: float) -> LpSolution:
    """Validate primal feasibility and attach the certified dual bound."""
    if sol.status == INFEASIBLE:
        if sol.farkas is not None and not _farkas_ok(lp, sol.farkas):
            sol.farkas = None
        return sol
    if sol.status != OPTIMAL:
        return sol
    x = np.clip(sol.x, lp.lo, lp.hi)
    viol = primal_violation(lp, x)
    sol.x = x
    sol.objective = math.fsum(lp.c * x)
    try:
        sol.dual_bound = dual_upper_bound(lp, sol.y)
    except DualCertificateError as exc:
        sol.status = NUMERIC_FAILURE
        sol.diagnostics["reason"] = str(exc)
        return sol
    sol.y = np.maximum(sol.y, 0.0)
    gap = sol.dual_bound - sol.objective
    sol.diagnostics.update(primal_violation=viol, duality_gap=gap,
                           dual_infeasibility=dual_infeasibility(lp, x, sol.y))
    scale = max(1.0, float(np.abs(lp.b).max(initial=0.0)))
    if viol > tol * scale * 1e3 or gap > max(1e-6, 1e-6 * abs(sol.dual_bound)):
        sol.status = NUMERIC_FAILURE
        sol.diagnostics["reason"] = "primal infeasible or duality gap open after clean-up"
    return sol


def _farkas_ok(lp, y) -> bool:
    y = np.maximum(np.asarray(y, dtype=np.float64), 0.0)
    if not y.any():
        return False
    g = lp.A.T @ y
    min_lhs = math.fsum(np.minimum(g * lp.lo, g * lp.hi))
    return math.fsum(lp.b * y) < min_lhs - 1e-9 * max(1.0, abs(min_lhs))


# --------------------------------------------------------------------------
# symmetry reduction

def reduce_by_orbits(lp: LinearProgram) -> tuple[LinearProgram, np.ndarray, np.ndarray]:
    """Aggregate orbit-equivalent variables; keep one representative row per row orbit.

    Returns ``(reduced, var_orbit, rep_rows)``.  Substituting ``x_j = xbar_o``
    for every ``j`` in orbit ``o`` maps symmetric feasible points one-to-one.
    """
    vo = np.asarray(lp.var_orbit, dtype=np.int64)
    ro = np.asarray(lp.row_orbit, dtype=np.int64)
    nvo = int(vo.max(initial=-1)) + 1
    _, rep_rows = np.unique(ro, return_index=True)
    P = sp.csr_matrix((np.ones(lp.num_vars), (np.arange(lp.num_vars), vo)), shape=(lp.num_vars, nvo))
    Ared = (lp.A[rep_rows] @ P).tocsr()
    lo = np.full(nvo, np.nan)
    hi = np.full(nvo, np.nan)
    lo[vo] = lp.lo
    hi[vo] = lp.hi
    if np.any(lp.lo != lo[vo]) or np.any(lp.hi != hi[vo]):
        raise ValueError("variables in one orbit must share bounds")
    red = LinearProgram(P.T @ lp.c, Ared, lp.b[rep_rows], lo, hi)
    return red, vo, rep_rows


def _solve_symmetric(lp: LinearProgram, tol: float, max_iter: int | None) -> LpSolution:
    red, vo, rep_rows = reduce_by_orbits(lp)
    if max_iter is None:
        max_iter = 50 * (red.num_rows + red.num_vars)
    rsol = _simplex(red, tol, max_iter)
    diag = {"reduced_rows": red.num_rows, "reduced_cols": red.num_vars, "symmetric": True}
    if rsol.status != OPTIMAL:
        rsol.diagnostics.update(diag)
        return rsol
    ro = np.asarray(lp.row_orbit, dtype=np.int64)
    orbit_size = np.bincount(ro)
    # rows sharing an orbit split the representative multiplier evenly
    row_slot = np.searchsorted(np.unique(ro), ro)
    y = rsol.y[row_slot] / orbit_size[ro]
    x = rsol.x[vo]
    sol = LpSolution(OPTIMAL, x=x, objective=float(lp.c @ x), y=y, iterations=rsol.iterations, diagnostics=diag)
    return sol


def solve(lp: LinearProgram, tol: float = 1e-9, max_iter: int | None = None,
          use_symmetry: bool = True) -> LpSolution:
    """Maximize ``c^T x``.  Status ``optimal`` guarantees a validated dual bound.

    When orbit labels are attached the orbit-reduced problem is solved and
    both primal and dual are lifted back; the certificate is then checked on
    the full problem, and a failed check falls back to the unreduced solve.
    """
    if lp.num_rows == 0:
        x = np.where(lp.c > 0, lp.hi, lp.lo)
        sol = LpSolution(OPTIMAL, x=x, objective=float(lp.c @ x), y=np.zeros(0))
        return _finish(lp, sol, tol)
    if use_symmetry and lp.var_orbit is not None and lp.row_orbit is not None:
        sol = _finish(lp, _solve_symmetric(lp, tol, max_iter), tol)
        if sol.status in (OPTIMAL, INFEASIBLE):
            return sol
        log.warning("symmetric solve failed (%s); retrying without reduction", sol.diagnostics)
    if lp.num_rows * (lp.num_vars + 2 * lp.num_rows) > MAX_DENSE_ENTRIES:
        return LpSolution(NUMERIC_FAILURE, diagnostics={"reason": "too large for the dense tableau",
                                                        "rows": lp.num_rows, "cols": lp.num_vars})
    if max_iter is None:
        max_iter = 50 * (lp.num_rows + lp.num_vars)
    sol = _simplex(lp, tol, max_iter)
    return _finish(lp, sol, tol)


# --------------------------------------------------------------------------
# free-format MPS interchange

def _names(lp):
    vn = lp.var_names or [f"x{j}" for j in range(lp.num_vars)]
    rn = lp.row_names or [f"r{i}" for i in range(lp.num_rows)]
    return vn, rn


def write_mps(lp: LinearProgram, path, name: str = "GIACERT") -> None:
    vn, rn = _names(lp)
    At = lp.A.T.tocsr()
    with open(path, "w") as fh:
        fh.write(f"NAME {name}\nOBJSENSE\n    MAX\nROWS\n N obj\n")
        for r in rn:
            fh.write(f" L {r}\n")
        fh.write("COLUMNS\n")
        for j in range(lp.num_vars):
            if lp.c[j] != 0:
                fh.write(f" {vn[j]} obj {float(lp.c[j])!r}\n")
            for k in range(At.indptr[j], At.indptr[j + 1]):
                fh.write(f" {vn[j]} {rn[At.indices[k]]} {float(At.data[k])!r}\n")
        fh.write("RHS\n")
        for i in range(lp.num_rows):
            if lp.b[i] != 0:
                fh.write(f" rhs {rn[i]} {float(lp.b[i])!r}\n")
        fh.write("BOUNDS\n")
        for j in range(lp.num_vars):
            fh.write(f" LO bnd {vn[j]} {float(lp.lo[j])!r}\n UP bnd {vn[j]} {float(lp.hi[j])!r}\n")
        fh.write("ENDATA\n")


def read_mps(path) -> LinearProgram:
    """Reader for the subset emitted by :func:`write_mps` (used for round trips)."""
    section, rows, cols = None, [], {}
    entries, rhs, lo, hi, obj = [], {}, {}, {}, {}
    sense = 1.0
    with open(path) as fh:
        for raw in fh:
            if not raw.strip():
                continue
            if not raw[0].isspace():
                section = raw.split()[0]
                continue
            tok = raw.split()
            if section == "OBJSENSE":
                sense = -1.0 if tok[0] == "MIN" else 1.0
            elif section == "ROWS" and tok[0] == "L":
                rows.append(tok[1])
            elif section == "COLUMNS":
                cols.setdefault(tok[0], len(cols))
                if tok[1] == "obj":
                    obj[tok[0]] = float(tok[2])
                else:
                    entries.append((tok[1], tok[0], float(tok[2])))
            elif section == "RHS":
                rhs[tok[1]] = float(tok[2])
            elif section == "BOUNDS":
                cols.setdefault(tok[2], len(cols))
                (lo if tok[0] == "LO" else hi)[tok[2]] = float(tok[3])
    ridx = {r: i for i, r in enumerate(rows)}
    m = len(cols)
    A = sp.csr_matrix(([e[2] for e in entries], ([ridx[e[0]] for e in entries], [cols[e[1]] for e in entries])),
                      shape=(len(rows), m))
    names = sorted(cols, key=cols.get)
    c = np.array([sense * obj.get(v, 0.0) for v in names])
    return LinearProgram(c, A, np.array([rhs.get(r, 0.0) for r in rows]),
                         np.array([lo.get(v, 0.0) for v in names]), np.array([hi[v] for v in names]),
                         var_names=names, row_names=rows)
