"""Node-aware bi-smoothing: independent edge deletion and node deletion."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .graph import Graph

GENERATOR_ID = "numpy.Philox4x32/SeedSequence[run_seed:sample_index]"
_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class SmoothingParams:
    p_e: float
    p_n: float

    def __post_init__(self):
        for name in ("p_e", "p_n"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")

    @property
    def keep_e(self) -> float:
        return 1.0 - self.p_e

    @property
    def keep_n(self) -> float:
        return 1.0 - self.p_n

    def require_positive(self) -> None:
        """Certificates need both deletion rates strictly positive."""
        if not (self.p_e > 0 and self.p_n > 0):
            raise ValueError(f"certification requires p_e > 0 and p_n > 0, got ({self.p_e}, {self.p_n})")


@dataclass(frozen=True, eq=False)
class SampledGraph:
    graph: Graph
    kept_nodes: np.ndarray
    kept_edges: np.ndarray

    def __post_init__(self):
        if self.kept_nodes.shape != (self.graph.n,):
            raise ValueError("node mask has wrong length")
        if self.kept_edges.shape != (self.graph.num_edges,):
            raise ValueError("edge mask has wrong length")

    @cached_property
    def live_edges(self) -> np.ndarray:
        e = self.graph.edges
        return self.kept_edges & self.kept_nodes[e[:, 0]] & self.kept_nodes[e[:, 1]]

    @cached_property
    def live_adjacency(self) -> sp.csr_matrix:
        e = self.graph.edges[self.live_edges]
        n = self.graph.n
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return sp.csr_matrix((np.ones(rows.shape[0]), (rows, cols)), shape=(n, n))

    def view(self) -> Graph:
        """Induced graph: deleted nodes stay (with features) but lose every edge."""
        g = self.graph
        return Graph(g.n, g.edges[self.live_edges], g.features, g.labels, g.num_classes)


def sample_seed(run_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(run_seed) & _SEED_MASK, int(index)])


def _rng(seed) -> np.random.Generator:
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed) & _SEED_MASK)
    return np.random.Generator(np.random.Philox(seed))


def sample(g: Graph, params: SmoothingParams, seed) -> SampledGraph:
    rng = _rng(seed)
    kept_nodes = rng.random(g.n) >= params.p_n
    kept_edges = rng.random(g.num_edges) >= params.p_e
    return SampledGraph(g, kept_nodes, kept_edges)


def sample_masks(g: Graph, params: SmoothingParams, seed, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Batch of ``count`` independent (node_mask, edge_mask) draws from one stream.

    Used for bulk Monte Carlo where the per-sample seeding of :func:`sample`
    is not needed.
    """
    rng = _rng(seed)
    nodes = rng.random((count, g.n)) >= params.p_n
    edges = rng.random((count, g.num_edges)) >= params.p_e
    return nodes, edges


def survival_probability(params: SmoothingParams, path_len: int) -> float:
    """Chance that a length-``path_len`` path keeps all its edges and nodes."""
    if path_len < 1:
        raise ValueError("path length must be at least 1")
    return (params.keep_e * params.keep_n) ** path_len
