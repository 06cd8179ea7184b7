"""Quantile regression forest with leaf co-membership weights.

Each tree is a CART regression tree grown on a bootstrap sample. For a
query ``x`` the forest assigns training point ``i`` the weight

    w_i(x) = mean over trees of  count_t(i) * 1{i in leaf_t(x)} / |leaf_t(x)|

where ``count_t(i)`` is the bootstrap multiplicity of ``i`` in tree ``t``
(zero for out-of-bag points) and ``|leaf_t(x)|`` counts in-bag samples
with multiplicity. Conditional quantiles are weighted empirical quantiles
of the stored targets under these weights.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels as _default_kernels
from .core import RngSpec
from .errors import DimensionMismatch, TooFewPairs

__all__ = ["ForestParams", "QuantileForest", "fit_qrf", "qrf_weights", "qrf_quantile"]

_CHUNK = 1024


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 200
    min_leaf: int = 5
    mtry: int | None = None  # None -> ceil(n_features / 3)
    bootstrap: bool = True
    rng: RngSpec = field(default_factory=lambda: RngSpec(0))

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")

    def resolve_mtry(self, n_features: int) -> int:
        mtry = math.ceil(n_features / 3) if self.mtry is None else self.mtry
        if not 1 <= mtry <= n_features:
            raise ValueError(f"mtry={mtry} outside [1, {n_features}]")
        return mtry


@dataclass(frozen=True, eq=False)
class _Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_ptr: np.ndarray  # CSR over node ids
    leaf_members: np.ndarray
    leaf_vals: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int((self.left == -1).sum())


def _leaf_table(left, start, end, samples, n_train):
    n_nodes = len(left)
    leaves = np.flatnonzero(left == -1)
    leaves = leaves[np.argsort(start[leaves], kind="stable")]
    sizes = end[leaves] - start[leaves]
    pos_node = np.repeat(leaves, sizes)
    keys, counts = np.unique(pos_node * n_train + samples, return_counts=True)
    node_of, members = np.divmod(keys, n_train)
    size_of = np.zeros(n_nodes, dtype=np.intp)
    size_of[leaves] = sizes
    vals = counts / size_of[node_of]
    ptr = np.searchsorted(node_of, np.arange(n_nodes + 1)).astype(np.intp)
    return ptr, members.astype(np.intp), vals.astype(np.float64)


class QuantileForest:
    """A fitted forest; immutable after :func:`fit_qrf`."""

    def __init__(self, trees, targets, n_features, params, kernels):
        self.trees = tuple(trees)
        self.targets = np.asarray(targets, dtype=float)
        self.targets.setflags(write=False)
        self.n_features = n_features
        self.params = params
        self._kernels = kernels
        self._order = np.argsort(self.targets, kind="stable")
        self._sorted_targets = np.ascontiguousarray(self.targets[self._order])

    def __repr__(self):
        return (f"QuantileForest(n_trees={len(self.trees)}, n_train={len(self.targets)}, "
                f"n_features={self.n_features})")

    def _check(self, Xq):
        Xq = np.ascontiguousarray(np.array(Xq, dtype=np.float64, ndmin=2))
        if Xq.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {Xq.shape[1]}")
        return Xq

    def apply(self, Xq) -> np.ndarray:
        """Leaf node ids, shape (m, n_trees)."""
        Xq = self._check(Xq)
        k = self._kernels
        return np.column_stack(
            [k.apply_tree(Xq, t.feature, t.threshold, t.left, t.right) for t in self.trees]
        )

    def _raw_weights(self, Xq):
        k = self._kernels
        W = np.zeros((len(Xq), len(self.targets)))
        scale = 1.0 / len(self.trees)
        for t in self.trees:
            leaves = k.apply_tree(Xq, t.feature, t.threshold, t.left, t.right)
            k.accumulate_weights(W, leaves, t.leaf_ptr, t.leaf_members, t.leaf_vals, scale)
        W /= W.sum(axis=1, keepdims=True)
        return W

    def weights(self, Xq) -> np.ndarray:
        """Normalised training-point weights, shape (m, n_train)."""
        Xq = self._check(Xq)
        return np.vstack([self._raw_weights(Xq[i:i + _CHUNK]) for i in range(0, len(Xq), _CHUNK)]
                         or [np.zeros((0, len(self.targets)))])

    def quantiles(self, Xq, ps) -> np.ndarray:
        """Conditional quantiles, shape (m, len(ps))."""
        Xq = self._check(Xq)
        ps = np.asarray(ps, dtype=np.float64).ravel()
        if np.any((ps < 0) | (ps > 1)):
            raise ValueError("probabilities must lie in [0, 1]")
        out = np.empty((len(Xq), len(ps)))
        for i in range(0, len(Xq), _CHUNK):
            W = self._raw_weights(Xq[i:i + _CHUNK])
            Ws = np.ascontiguousarray(W[:, self._order])
            out[i:i + _CHUNK] = self._kernels.row_quantiles(Ws, self._sorted_targets, ps)
        return out


def fit_qrf(X, y, params: ForestParams = ForestParams(), kernels=None) -> QuantileForest:
    """Fit a quantile regression forest on pairs ``(X[i], y[i])``.

    Parameters
    ----------
    X : array of shape (n, p)
    y : array of shape (n,)
    params : ForestParams
    kernels : module, optional
        Kernel implementation; defaults to the backend chosen at import.
    """
    X = np.ascontiguousarray(np.array(X, dtype=np.float64, ndmin=2))
    y = np.ascontiguousarray(np.asarray(y, dtype=np.float64).ravel())
    n = len(y)
    if n < 2:
        raise TooFewPairs(f"need at least 2 training pairs, got {n}")
    if X.shape[0] != n:
        raise DimensionMismatch(f"{X.shape[0]} feature rows for {n} targets")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("training pairs must be finite")
    k = kernels or _default_kernels
    mtry = params.resolve_mtry(X.shape[1])
    trees = []
    for t in range(params.n_trees):
        stream = params.rng.child("tree", t)
        if params.bootstrap:
            samples = np.sort(stream.child("bootstrap").generator().integers(0, n, size=n)).astype(np.intp)
        else:
            samples = np.arange(n, dtype=np.intp)
        feature, threshold, left, right, start, end, perm = k.fit_tree(
            X, y, samples, params.min_leaf, mtry, stream.child("split").uint64()
        )
        ptr, members, vals = _leaf_table(left, start, end, perm, n)
        trees.append(_Tree(feature, threshold, left, right, ptr, members, vals))
    return QuantileForest(trees, y, X.shape[1], params, k)


def qrf_weights(forest: QuantileForest, x) -> np.ndarray:
    """Weight vector over the forest's training pairs for one query."""
    return forest.weights(np.asarray(x, dtype=float)[None, :])[0]


def qrf_quantile(forest: QuantileForest, x, p: float) -> float:
    """Conditional ``p``-quantile of the target at one query ``x``."""
    return float(forest.quantiles(np.asarray(x, dtype=float)[None, :], [p])[0, 0])
