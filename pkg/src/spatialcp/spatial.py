"""Exact k-nearest-neighbour search and rectangular grid binning."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import Site
from .errors import DegenerateExtent, EmptyInput

__all__ = ["SpatialIndex", "NeighborSet", "GridBinning", "build_index", "knn", "knn_batch", "grid_bin"]

# extra candidates fetched beyond k so most rows never need the radius fallback
_PAD = 4


@dataclass(frozen=True, eq=False)
class SpatialIndex:
    points: np.ndarray
    tree: cKDTree

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True, eq=False)
class NeighborSet:
    query: Site
    indices: np.ndarray
    distances: np.ndarray


def build_index(sites) -> SpatialIndex:
    """Build an exact Euclidean k-NN index over ``sites`` (array (n, d) or Site list)."""
    pts = np.array([np.asarray(s, dtype=float) for s in sites] if isinstance(sites, list) else sites,
                   dtype=float, ndmin=2)
    if pts.size == 0 or len(pts) == 0:
        raise EmptyInput("cannot index an empty site set")
    if not np.isfinite(pts).all():
        raise ValueError("site coordinates must be finite")
    pts.setflags(write=False)
    return SpatialIndex(pts, cKDTree(pts))


def _exact_dist(points, idx, queries):
    diff = points[idx] - queries[:, None, :]
    return np.sqrt(np.einsum("mkd,mkd->mk", diff, diff))


def knn_batch(index: SpatialIndex, queries, k: int, exclude=None) -> tuple[np.ndarray, np.ndarray]:
    """k nearest indexed points for each query row.

    Parameters
    ----------
    index : SpatialIndex
    queries : array of shape (m, d)
    k : int
        Requested neighbour count; clipped to the number of available points.
    exclude : array of shape (m,), optional
        One index per query that must never be returned (e.g. the query's
        own position in the index). Use -1 for "no exclusion".

    Returns
    -------
    indices, distances : arrays of shape (m, k_eff)
        Sorted by ascending distance, ties broken by ascending index.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    q = np.array(queries, dtype=float, ndmin=2)
    m, n = len(q), len(index)
    if q.shape[1] != index.dim:
        raise ValueError(f"query dimension {q.shape[1]} != index dimension {index.dim}")
    excl = None
    if exclude is not None:
        excl = np.broadcast_to(np.asarray(exclude, dtype=np.intp), (m,))
    avail = n - 1 if excl is not None and (excl >= 0).any() else n
    k_eff = min(k, avail)
    if m == 0 or k_eff <= 0:
        return np.empty((m, max(k_eff, 0)), np.intp), np.empty((m, max(k_eff, 0)))

    n_fetch = min(n, k_eff + 1 + _PAD)
    _, cand = index.tree.query(q, k=n_fetch)
    cand = np.asarray(cand, dtype=np.intp).reshape(m, n_fetch)
    dist = _exact_dist(index.points, cand, q)
    if excl is not None:
        dist[cand == excl[:, None]] = np.inf
    order = np.lexsort((cand, dist), axis=1)
    cand = np.take_along_axis(cand, order, 1)
    dist = np.take_along_axis(dist, order, 1)
    out_i, out_d = cand[:, :k_eff].copy(), dist[:, :k_eff].copy()

    if n_fetch < n:
        # a point outside the fetched set could tie with the k-th neighbour
        finite = np.where(np.isfinite(dist), dist, -np.inf)
        far = finite.max(axis=1)
        kth = out_d[:, -1]
        unsafe = np.flatnonzero(kth >= far - 1e-12 * (1.0 + far))
        for r in unsafe:
            ball = np.asarray(index.tree.query_ball_point(q[r], kth[r] * (1 + 1e-9) + 1e-12), dtype=np.intp)
            d = np.sqrt(((index.points[ball] - q[r]) ** 2).sum(axis=1))
            if excl is not None:
                d[ball == excl[r]] = np.inf
            o = np.lexsort((ball, d))[:k_eff]
            out_i[r], out_d[r] = ball[o], d[o]
    return out_i, out_d


def knn(index: SpatialIndex, query, k: int, exclude: int | None = None) -> NeighborSet:
    """The ``k`` nearest indexed sites to ``query``, excluding ``exclude``."""
    qv = np.asarray(query, dtype=float).ravel()
    idx, dist = knn_batch(index, qv[None, :], k, None if exclude is None else [exclude])
    return NeighborSet(Site(tuple(qv)), idx[0], dist[0])


@dataclass(frozen=True, eq=False)
class GridBinning:
    lower: np.ndarray
    upper: np.ndarray
    cells_per_axis: int
    cells: np.ndarray  # (n, d) per-axis cell index

    @property
    def flat(self) -> np.ndarray:
        """Row-major flattened cell id per site."""
        g, d = self.cells_per_axis, self.cells.shape[1]
        return np.ravel_multi_index(tuple(self.cells.T), (g,) * d)

    def counts(self) -> np.ndarray:
        g, d = self.cells_per_axis, self.cells.shape[1]
        return np.bincount(self.flat, minlength=g**d).reshape((g,) * d)


def grid_bin(sites, G: int, box=None) -> GridBinning:
    """Assign each site to one of ``G**d`` equal cells of a bounding box.

    Cell index per axis is ``floor(G * (x - min) / (max - min))`` clamped to
    ``[0, G - 1]``. ``box`` is an optional ``(lower, upper)`` pair; the
    sites' own bounding box is used otherwise.
    """
    if G < 1:
        raise ValueError(f"G must be >= 1, got {G}")
    pts = np.array(sites, dtype=float, ndmin=2)
    if box is None:
        if len(pts) == 0:
            raise EmptyInput("no sites to bin")
        lo, hi = pts.min(axis=0), pts.max(axis=0)
    else:
        lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (pts.shape[1],)) for b in box)
    if np.any(hi <= lo):
        raise DegenerateExtent(f"zero extent on axis {int(np.argmax(hi <= lo))}")
    cells = np.floor(G * (pts - lo) / (hi - lo)).astype(np.intp)
    np.clip(cells, 0, G - 1, out=cells)
    return GridBinning(np.array(lo), np.array(hi), G, cells)
