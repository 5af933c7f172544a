"""Graph containers, injected-node attack blocks and walk counting.

The clean graph holds the existing ``n`` nodes.  An attack appends ``rho``
injected nodes; ``a1`` links injected -> existing nodes and ``a2`` links
injected nodes among themselves.  The composed adjacency is::

    [[A0,  a1.T],
     [a1,  a2  ]]
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

# walk counts must stay well inside int64
_COUNT_LIMIT = 2**62


class GraphError(ValueError):
    pass


class InputFormatError(ValueError):
    """Malformed input file; message carries ``path:line[:col]``."""


@dataclass(frozen=True, eq=False)
class Graph:
    n: int
    edges: np.ndarray
    features: np.ndarray | None = None
    labels: np.ndarray | None = None
    num_classes: int | None = None

    def __post_init__(self):
        if self.n < 0:
            raise GraphError(f"node count must be nonnegative, got {self.n}")
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            if e.min() < 0 or e.max() >= self.n:
                raise GraphError("edge endpoint out of range")
            if np.any(e[:, 0] == e[:, 1]):
                raise GraphError("self-loops are not allowed")
            e = np.sort(e, axis=1)
            order = np.lexsort((e[:, 1], e[:, 0]))
            e = e[order]
            if np.any(np.all(e[1:] == e[:-1], axis=1)):
                raise GraphError("duplicate edge")
        object.__setattr__(self, "edges", e)

        if self.features is not None:
            x = np.asarray(self.features, dtype=np.float64)
            if x.ndim != 2 or x.shape[0] != self.n:
                raise GraphError(f"features must have {self.n} rows, got shape {x.shape}")
            object.__setattr__(self, "features", x)
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if y.shape[0] != self.n:
                raise GraphError(f"labels must have length {self.n}")
            k = self.num_classes if self.num_classes is not None else int(y.max(initial=-1)) + 1
            if k < 1 or (y.size and (y.min() < 0 or y.max() >= k)):
                raise GraphError("labels must lie in 0..K-1")
            object.__setattr__(self, "labels", y)
            object.__setattr__(self, "num_classes", int(k))

    @classmethod
    def from_edges(cls, n, pairs, **kwargs) -> "Graph":
        return cls(n, np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2), **kwargs)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency as int64 CSR."""
        u, v = self.edges[:, 0], self.edges[:, 1]
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        data = np.ones(rows.shape[0], dtype=np.int64)
        a = sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))
        a.sort_indices()
        return a

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    def neighbors(self, v: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[v]:a.indptr[v + 1]]


@dataclass(frozen=True)
class ThreatModel:
    rho: int
    tau: int
    k: int = 2

    def __post_init__(self):
        if self.rho < 0 or self.tau < 0:
            raise ValueError("rho and tau must be nonnegative")
        if self.k < 1:
            raise ValueError("k must be at least 1")

    def effective_tau(self, n: int) -> int:
        """Degree cap; an injected node has at most n + rho - 1 distinct endpoints."""
        return min(self.tau, max(n + self.rho - 1, 0))


@dataclass(frozen=True, eq=False)
class AttackVariables:
    a1: np.ndarray
    a2: np.ndarray

    def __post_init__(self):
        a1 = np.asarray(self.a1, dtype=np.int64)
        a2 = np.asarray(self.a2, dtype=np.int64)
        if a1.ndim != 2:
            raise GraphError("a1 must be a rho x n matrix")
        rho = a1.shape[0]
        if a2.shape != (rho, rho):
            raise GraphError(f"a2 must be {rho}x{rho}, got {a2.shape}")
        if np.any((a1 != 0) & (a1 != 1)) or np.any((a2 != 0) & (a2 != 1)):
            raise GraphError("attack matrices must be binary")
        if np.any(a2 != a2.T):
            raise GraphError("a2 must be symmetric")
        if np.any(np.diag(a2)):
            raise GraphError("a2 must have a zero diagonal")
        object.__setattr__(self, "a1", a1)
        object.__setattr__(self, "a2", a2)

    @classmethod
    def empty(cls, rho: int, n: int) -> "AttackVariables":
        return cls(np.zeros((rho, n), dtype=np.int64), np.zeros((rho, rho), dtype=np.int64))

    @property
    def rho(self) -> int:
        return self.a1.shape[0]

    @property
    def n(self) -> int:
        return self.a1.shape[1]

    def degrees(self) -> np.ndarray:
        return self.a1.sum(axis=1) + self.a2.sum(axis=1)

    def validate(self, threat: ThreatModel, n: int | None = None) -> None:
        if n is not None and self.n != n:
            raise GraphError(f"attack spans {self.n} existing nodes, graph has {n}")
        if self.rho > threat.rho:
            raise GraphError(f"{self.rho} injected nodes exceed budget rho={threat.rho}")
        if self.rho and self.degrees().max() > threat.tau:
            raise GraphError(f"injected node degree exceeds tau={threat.tau}")

    def key(self) -> tuple:
        iu = np.triu_indices(self.rho, 1)
        return tuple(self.a1.ravel().tolist()) + tuple(self.a2[iu].tolist())


def _check_attack(g: Graph, attack: AttackVariables) -> None:
    if attack.n != g.n:
        raise GraphError(f"attack spans {attack.n} existing nodes, graph has {g.n}")


def composed_adjacency(g: Graph, attack: AttackVariables) -> sp.csr_matrix:
    _check_attack(g, attack)
    a1 = sp.csr_matrix(attack.a1)
    a2 = sp.csr_matrix(attack.a2)
    a = sp.bmat([[g.adjacency, a1.T], [a1, a2]], format="csr", dtype=np.int64)
    a.sort_indices()
    return a


def composed_graph(g: Graph, attack: AttackVariables) -> Graph:
    """Existing nodes keep ids ``0..n-1``; injected node ``i`` becomes ``n + i``."""
    _check_attack(g, attack)
    i1, j1 = np.nonzero(attack.a1)
    i2, j2 = np.nonzero(np.triu(attack.a2, 1))
    extra = np.concatenate([
        np.stack([j1, g.n + i1], axis=1),
        np.stack([g.n + i2, g.n + j2], axis=1),
    ]) if (i1.size or i2.size) else np.zeros((0, 2), dtype=np.int64)
    return Graph(g.n + attack.rho, np.concatenate([g.edges, extra.astype(np.int64)]))


def walk_counts_from_injected(g: Graph, attack: AttackVariables, k: int) -> np.ndarray:
    """``out[i-1, v]`` = number of length-``i`` walks from any injected node to ``v``.

    Iterated sparse mat-vec on the composed adjacency (which is symmetric,
    so ``A x`` equals ``A.T x``).  Raises OverflowError instead of wrapping.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    a = composed_adjacency(g, attack)
    total = g.n + attack.rho
    x = np.zeros(total, dtype=np.int64)
    x[g.n:] = 1
    max_deg = int(np.diff(a.indptr).max(initial=0))
    out = np.zeros((k, g.n), dtype=np.int64)
    for i in range(k):
        peak = int(x.max(initial=0))
        if peak and max_deg and peak > _COUNT_LIMIT // max_deg:
            raise OverflowError(f"walk counts overflow int64 at length {i + 1}")
        x = a @ x
        out[i] = x[:g.n]
    return out


def path_counts_to_target(g: Graph, attack: AttackVariables, v: int, k: int) -> np.ndarray:
    if not 0 <= v < g.n:
        raise GraphError(f"target node {v} out of range 0..{g.n - 1}")
    return walk_counts_from_injected(g, attack, k)[:, v]


def second_order_counts_block(g: Graph, attack: AttackVariables) -> np.ndarray:
    """Column sums of the injected rows of the squared composed adjacency.

    Uses the block identity ``(A1 A0 + A2 A1)^T 1 = A0 (A1^T 1) + A1^T (A2 1)``
    without forming the composed matrix.
    """
    _check_attack(g, attack)
    reach1 = attack.a1.sum(axis=0)
    internal = attack.a2.sum(axis=1)
    return g.adjacency @ reach1 + attack.a1.T @ internal


# --------------------------------------------------------------------------
# file ingestion

def _data_lines(path: Path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line


def _declared_size(path: Path) -> int | None:
    """Node count from a leading ``# n=<count>`` comment, if present."""
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if not line.startswith("#"):
                return None
            body = line[1:].strip()
            if body.startswith("n="):
                try:
                    return int(body[2:])
                except ValueError:
                    raise InputFormatError(f"{path}: bad node count comment {line!r}") from None
    return None


def read_edge_list(path, n: int | None = None) -> Graph:
    """Read ``u,v`` lines (0-indexed, ``#`` comments).  Mirrored pairs collapse.

    A leading ``# n=<count>`` comment fixes the node count so isolated
    trailing nodes survive a round trip.
    """
    path = Path(path)
    if n is None:
        n = _declared_size(path)
    pairs = []
    for lineno, line in _data_lines(path):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise InputFormatError(f"{path}:{lineno}: expected 'u,v', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            col = 1 if not parts[0].lstrip("-").isdigit() else 2
            raise InputFormatError(f"{path}:{lineno}:{col}: non-integer node id in {line!r}") from None
        if u < 0 or v < 0:
            raise InputFormatError(f"{path}:{lineno}: negative node id")
        if u == v:
            raise InputFormatError(f"{path}:{lineno}: self-loop {u},{v}")
        pairs.append((min(u, v), max(u, v)))
    uniq = sorted(set(pairs))
    top = max((p[1] for p in uniq), default=-1) + 1
    if n is None:
        n = top
    elif top > n:
        raise InputFormatError(f"{path}: node id {top - 1} exceeds node count {n}")
    return Graph.from_edges(n, uniq)


def read_matrix(path) -> np.ndarray:
    """Header ``rows cols`` then whitespace-separated row-major values."""
    path = Path(path)
    lines = _data_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise InputFormatError(f"{path}: empty matrix file") from None
    head = header.split()
    if len(head) != 2 or not all(h.isdigit() for h in head):
        raise InputFormatError(f"{path}:{lineno}: expected header 'rows cols', got {header!r}")
    rows, cols = int(head[0]), int(head[1])
    return _read_values(path, lines, rows, cols)


def _read_values(path, lines, rows, cols) -> np.ndarray:
    values = []
    for lineno, line in lines:
        for col, tok in enumerate(line.split(), start=1):
            try:
                values.append(float(tok))
            except ValueError:
                raise InputFormatError(f"{path}:{lineno}:{col}: bad number {tok!r}") from None
            if len(values) == rows * cols:
                break
        if len(values) == rows * cols:
            break
    if len(values) != rows * cols:
        raise InputFormatError(f"{path}: expected {rows * cols} values, found {len(values)}")
    return np.asarray(values, dtype=np.float64).reshape(rows, cols)


def read_weight_blocks(path) -> list[np.ndarray]:
    """Consecutive ``rows cols`` blocks, input layer first."""
    path = Path(path)
    lines = _data_lines(path)
    blocks = []
    for lineno, header in lines:
        head = header.split()
        if len(head) != 2 or not all(h.isdigit() for h in head):
            raise InputFormatError(f"{path}:{lineno}: expected block header 'rows cols', got {header!r}")
        blocks.append(_read_values(path, lines, int(head[0]), int(head[1])))
    if not blocks:
        raise InputFormatError(f"{path}: no weight blocks")
    return blocks


def write_matrix(path, x: np.ndarray) -> None:
    x = np.atleast_2d(np.asarray(x))
    with open(path, "w") as fh:
        fh.write(f"{x.shape[0]} {x.shape[1]}\n")
        for row in x:
            fh.write(" ".join(repr(float(v)) if x.dtype.kind == "f" else str(v) for v in row) + "\n")


def write_edge_list(path, g: Graph) -> None:
    with open(path, "w") as fh:
        fh.write(f"# n={g.n}\n")
        for u, v in g.edges:
            fh.write(f"{u},{v}\n")
