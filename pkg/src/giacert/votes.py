"""Monte Carlo vote estimation and confidence-bounded classification gaps."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .classifier import BaseClassifier
from .graph import Graph, InputFormatError
from .smoothing import SmoothingParams, sample, sample_seed

BISECTION_TOL = 1e-10
GAPS_HEADER = "node,y_star,p_a_lower,p_b_upper,c_v"


@dataclass(frozen=True, eq=False)
class VoteStats:
    counts: np.ndarray   # (n, K) votes per class
    num_samples: int
    alpha: float

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or np.any(c.sum(axis=1) != self.num_samples):
            raise ValueError("every node's votes must sum to the sample count")
        object.__setattr__(self, "counts", c)

    @property
    def num_classes(self) -> int:
        return self.counts.shape[1]

    def _top2(self):
        # stable sort on -count: lowest class index first among ties
        order = np.argsort(-self.counts, axis=1, kind="stable")
        rows = np.arange(self.counts.shape[0])
        y_a = order[:, 0]
        n_a = self.counts[rows, y_a]
        if self.num_classes < 2:
            return y_a, np.full_like(y_a, -1), n_a, np.zeros_like(n_a)
        y_b = order[:, 1]
        return y_a, y_b, n_a, self.counts[rows, y_b]

    @property
    def y_a(self):
        return self._top2()[0]

    @property
    def y_b(self):
        return self._top2()[1]

    @property
    def n_a(self):
        return self._top2()[2]

    @property
    def n_b(self):
        return self._top2()[3]


@dataclass(frozen=True, eq=False)
class GapVector:
    y_star: np.ndarray
    p_a_lower: np.ndarray
    p_b_upper: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def c(self) -> np.ndarray:
        return self.p_a_lower - self.p_b_upper

    @property
    def n(self) -> int:
        return self.y_star.shape[0]

    @property
    def abstain(self) -> np.ndarray:
        return self.c <= 0.0

    @classmethod
    def from_gaps(cls, c, y_star=None) -> "GapVector":
        """Synthetic gap vector with ``p_b_upper = 0``; handy for tests and sweeps."""
        c = np.asarray(c, dtype=np.float64)
        if y_star is None:
            y_star = np.zeros(c.shape[0], dtype=np.int64)
        return cls(np.asarray(y_star, dtype=np.int64), c.copy(), np.zeros_like(c))


# --------------------------------------------------------------------------
# Monte Carlo

def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("GIACERT_THREADS", "1")))
    except ValueError:
        return 1


def _count_range(g, model, params, seed, start, stop):
    counts = np.zeros((g.n, model.num_classes), dtype=np.int64)
    rows = np.arange(g.n)
    for i in range(start, stop):
        pred = model.predict_all(sample(g, params, sample_seed(seed, i)))
        np.add.at(counts, (rows, pred), 1)
    return counts


def estimate_votes(g: Graph, model: BaseClassifier, params: SmoothingParams, num_samples: int,
                   seed: int, alpha: float = 0.01, threads: int | None = None) -> VoteStats:
    if num_samples < 1:
        raise ValueError("need at least one sample")
    threads = threads or default_threads()
    if threads <= 1:
        counts = _count_range(g, model, params, seed, 0, num_samples)
    else:
        edges = np.linspace(0, num_samples, threads + 1).astype(int)
        with ThreadPoolExecutor(threads) as pool:
            parts = pool.map(lambda ab: _count_range(g, model, params, seed, *ab), zip(edges[:-1], edges[1:]))
            counts = sum(parts)
    return VoteStats(counts, num_samples, alpha)


# --------------------------------------------------------------------------
# one-sided Clopper-Pearson bounds by bisection on the binomial tail

@lru_cache(maxsize=8)
def _log_factorials(n: int) -> np.ndarray:
    return np.array([math.lgamma(i + 1) for i in range(n + 1)])


def _log_pmf(js: np.ndarray, n: int, p: float) -> np.ndarray:
    lf = _log_factorials(n)
    return lf[n] - lf[js] - lf[n - js] + js * math.log(p) + (n - js) * math.log1p(-p)


def _window(n, p):
    sd = math.sqrt(n * p * (1 - p))
    return int(40 * sd + 50)


def _tail_ge(s: int, n: int, p: float) -> float:
    """P[Bin(n, p) >= s]."""
    if s <= 0:
        return 1.0
    if p <= 0.0:
        return 0.0
    if p >= 1.0:
        return 1.0
    if s > n * p:
        js = np.arange(s, min(n, s + _window(n, p)) + 1)
        lp = _log_pmf(js, n, p)
        top = lp.max()
        return float(min(1.0, math.exp(top) * np.exp(lp - top).sum()))
    return 1.0 - _tail_le(s - 1, n, p)


def _tail_le(s: int, n: int, p: float) -> float:
    """P[Bin(n, p) <= s]."""
    if s >= n:
        return 1.0
    if s < 0:
        return 0.0
    if p <= 0.0:
        return 1.0
    if p >= 1.0:
        return 0.0
    if s < n * p:
        js = np.arange(max(0, s - _window(n, p)), s + 1)
        lp = _log_pmf(js, n, p)
        top = lp.max()
        return float(min(1.0, math.exp(top) * np.exp(lp - top).sum()))
    return 1.0 - _tail_ge(s + 1, n, p)


def _check(successes, trials, level):
    if trials < 1 or not 0 <= successes <= trials:
        raise ValueError(f"need 0 <= successes <= trials and trials >= 1, got {successes}/{trials}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")


@lru_cache(maxsize=65536)
def binomial_lower_bound(successes: int, trials: int, level: float) -> float:
    """Largest ``p`` (to within BISECTION_TOL, rounded down) with ``P[Bin >= s] <= level``."""
    _check(successes, trials, level)
    if successes == 0:
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if _tail_ge(successes, trials, mid) <= level:
            lo = mid
        else:
            hi = mid
    return lo


@lru_cache(maxsize=65536)
def binomial_upper_bound(successes: int, trials: int, level: float) -> float:
    """Smallest ``p`` (to within BISECTION_TOL, rounded up) with ``P[Bin <= s] <= level``."""
    _check(successes, trials, level)
    if successes == trials:
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if _tail_le(successes, trials, mid) <= level:
            hi = mid
        else:
            lo = mid
    return hi


def bound_level(alpha: float, num_classes: int) -> float:
    """Per one-sided bound error budget: two bounds per node, Bonferroni over classes."""
    return alpha / (2 * num_classes)


def gaps_from_votes(stats: VoteStats) -> GapVector:
    level = bound_level(stats.alpha, stats.num_classes)
    y_a, _, n_a, n_b = stats._top2()
    N = stats.num_samples
    lower = np.array([binomial_lower_bound(int(s), N, level) for s in n_a])
    upper = np.array([binomial_upper_bound(int(s), N, level) for s in n_b])
    meta = {"N": N, "alpha": stats.alpha, "K": stats.num_classes, "bound_level": level}
    return GapVector(y_a.astype(np.int64), lower, upper, meta)


# --------------------------------------------------------------------------
# gaps CSV

def write_gaps_csv(path, gaps: GapVector) -> None:
    with open(path, "w") as fh:
        if gaps.meta:
            fh.write("# " + ",".join(f"{k}={v}" for k, v in sorted(gaps.meta.items())) + "\n")
        fh.write(GAPS_HEADER + "\n")
        for v in range(gaps.n):
            a, b = float(gaps.p_a_lower[v]), float(gaps.p_b_upper[v])
            fh.write(f"{v},{int(gaps.y_star[v])},{a!r},{b!r},{a - b!r}\n")


def _parse_meta(line: str) -> dict:
    meta = {}
    for item in line.lstrip("#").strip().split(","):
        if "=" in item:
            k, v = item.split("=", 1)
            for cast in (int, float):
                try:
                    v = cast(v)
                    break
                except ValueError:
                    pass
            meta[k.strip()] = v
    return meta


def read_gaps_csv(path) -> GapVector:
    path = Path(path)
    meta, rows, header_seen = {}, [], False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                meta.update(_parse_meta(line))
                continue
            if not header_seen:
                if line != GAPS_HEADER:
                    raise InputFormatError(f"{path}:{lineno}: expected header {GAPS_HEADER!r}")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise InputFormatError(f"{path}:{lineno}: expected 5 columns, got {len(parts)}")
            try:
                rows.append((int(parts[0]), int(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError as exc:
                raise InputFormatError(f"{path}:{lineno}: {exc}") from None
    if not header_seen:
        raise InputFormatError(f"{path}: missing header")
    ids = [r[0] for r in rows]
    if ids != list(range(len(rows))):
        raise InputFormatError(f"{path}: node ids must be 0..n-1 in order")
    arr = np.array([r[1:] for r in rows], dtype=np.float64).reshape(-1, 3)
    return GapVector(arr[:, 0].astype(np.int64), arr[:, 1], arr[:, 2], meta)
