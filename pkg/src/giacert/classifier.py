"""Base classifiers evaluated on smoothed graph samples."""
from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np
import scipy.sparse as sp

from .graph import read_weight_blocks
from .smoothing import SampledGraph


class DimensionError(ValueError):
    pass


class BaseClassifier(ABC):
    """Node classifier whose output at ``v`` depends only on the ``depth``-hop ball of ``v``."""

    num_classes: int
    depth: int

    @abstractmethod
    def predict_all(self, sg: SampledGraph) -> np.ndarray:
        ...


def _normalized_adjacency(adj: sp.csr_matrix) -> sp.csr_matrix:
    a = adj + sp.identity(adj.shape[0], format="csr")
    d = np.asarray(a.sum(axis=1)).ravel()
    inv = sp.diags(1.0 / np.sqrt(d))
    return (inv @ a @ inv).tocsr()


class ForwardPassModel(BaseClassifier):
    """Graph convolution stack ``relu(Â H W)`` with a linear output layer.

    ``Â`` is the symmetric-normalized live adjacency with self-loops, so a
    node cut off by smoothing still gets logits from its own features.
    """

    def __init__(self, weights):
        weights = [np.asarray(w, dtype=np.float64) for w in weights]
        if not weights:
            raise DimensionError("at least one weight matrix is required")
        for a, b in zip(weights, weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise DimensionError(f"weight chain broken: {a.shape} then {b.shape}")
        self.weights = weights
        self.depth = len(weights)
        self.num_classes = weights[-1].shape[1]
        self.in_dim = weights[0].shape[0]

    @classmethod
    def from_file(cls, path) -> "ForwardPassModel":
        return cls(read_weight_blocks(path))

    def logits(self, sg: SampledGraph) -> np.ndarray:
        x = sg.graph.features
        if x is None:
            raise DimensionError("ForwardPassModel needs node features")
        if x.shape[1] != self.in_dim:
            raise DimensionError(f"features have {x.shape[1]} columns, model expects {self.in_dim}")
        a = _normalized_adjacency(sg.live_adjacency)
        h = x
        for i, w in enumerate(self.weights):
            h = a @ (h @ w)
            if i < self.depth - 1:
                h = np.maximum(h, 0.0)
        return h

    def predict_all(self, sg: SampledGraph) -> np.ndarray:
        # np.argmax picks the lowest index among ties
        return np.argmax(self.logits(sg), axis=1)


class SyntheticClassifier(BaseClassifier):
    """Deterministic test double: hashes the live ``depth``-hop ball of each node.

    ``label(v) = (sum of (u + 1)**2 over the ball, v included) mod K``.
    """

    def __init__(self, num_classes: int, depth: int = 2):
        if num_classes < 1 or depth < 0:
            raise ValueError("need num_classes >= 1 and depth >= 0")
        self.num_classes = num_classes
        self.depth = depth

    def balls(self, sg: SampledGraph) -> sp.csr_matrix:
        n = sg.graph.n
        adj = (sg.live_adjacency > 0).astype(np.int64)
        reach = sp.identity(n, dtype=np.int64, format="csr")
        for _ in range(self.depth):
            reach = ((reach + reach @ adj) > 0).astype(np.int64)
        return reach.tocsr()

    def predict_all(self, sg: SampledGraph) -> np.ndarray:
        w = (np.arange(sg.graph.n, dtype=np.int64) + 1) ** 2
        return np.asarray(self.balls(sg) @ w).ravel() % self.num_classes


def predict_all(model: BaseClassifier, sg: SampledGraph) -> np.ndarray:
    return model.predict_all(sg)
