"""Kd-tree over a point cloud for nearest-neighbour and radius queries.

Splitting is the median along the widest-extent axis (``cKDTree`` with
``balanced_tree=True``). Distances returned here are recomputed with
:func:`multipose.core.geometry.point_distances` and ties are broken by the
lowest source index, so results equal a brute-force linear scan exactly.
"""

from __future__ import annotations

import itertools
from typing import Iterable

import numpy as np
from scipy.spatial import cKDTree

from multipose.core.exceptions import EmptyCloudError, GeometryError
from multipose.core.geometry import PointCloud, as_point, point_distances

# candidates fetched per nearest query before tie resolution
_NEAREST_CANDIDATES = 4
# relative slack on cKDTree's own distance arithmetic
_SLACK = 1e-9


class KdTree:
    """Immutable spatial index over the points of a cloud."""

    def __init__(self, points: np.ndarray, leafsize: int = 16):
        points = np.array(points, dtype=np.float64, copy=True)
        if points.ndim != 2 or points.shape[1] != 3:
            raise GeometryError(f"Kd-tree input must be (N, 3), got {points.shape}")
        if points.shape[0] == 0:
            raise EmptyCloudError("Cannot build a kd-tree over an empty cloud")
        points.setflags(write=False)
        self._points = points
        self._tree = cKDTree(points, leafsize=leafsize, balanced_tree=True, compact_nodes=True)

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def size(self) -> int:
        return self._points.shape[0]

    def __len__(self) -> int:
        return self.size

    def indices(self) -> np.ndarray:
        """Source indices held by the tree, ascending."""
        return np.sort(self._tree.indices)

    # -- nearest ----------------------------------------------------------

    def nearest(self, query: Iterable[float]) -> tuple[int, float]:
        """Index and distance of the closest indexed point."""
        indices, distances = self.nearest_many(as_point(query)[None, :])
        return int(indices[0]), float(distances[0])

    def nearest_many(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized :meth:`nearest` over an (M, 3) array."""
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        m = queries.shape[0]
        if m == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        k = min(_NEAREST_CANDIDATES, self.size)
        _, cand = self._tree.query(queries, k=k)
        cand = np.asarray(cand, dtype=np.int64).reshape(m, k)

        diff = self._points[cand] - queries[:, None, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        # lexicographic (distance, index) minimum per row
        best_dist = dist.min(axis=1)
        tied = dist == best_dist[:, None]
        best_idx = np.where(tied, cand, np.iinfo(np.int64).max).min(axis=1)

        # rows whose candidate list may be truncated mid-tie
        if k < self.size:
            suspect = dist.max(axis=1) <= best_dist * (1.0 + _SLACK) + 1e-15
            for row in np.flatnonzero(suspect):
                idx, d = self._ball(queries[row], best_dist[row])
                best_idx[row] = idx[0]
                best_dist[row] = d[0]
        return best_idx, best_dist

    # -- radius -----------------------------------------------------------

    def radius_search(self, query: Iterable[float], r: float) -> list[tuple[int, float]]:
        """All indexed points within ``r`` (inclusive), ascending by distance then index."""
        if not r > 0:
            raise GeometryError(f"Search radius must be positive, got {r}")
        idx, dist = self._ball(as_point(query), r)
        return [(int(i), float(d)) for i, d in zip(idx, dist)]

    def radius_many(self, queries: np.ndarray, r: float) -> list[tuple[np.ndarray, np.ndarray]]:
        """Vectorized :meth:`radius_search`; one (indices, distances) pair per query."""
        offsets, idx, dist = self.radius_table(queries, r)
        return [(idx[a:b], dist[a:b]) for a, b in zip(offsets[:-1], offsets[1:])]

    def radius_table(self, queries: np.ndarray, r: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All radius neighbourhoods as one flat table.

        Returns ``(offsets, indices, distances)``: the hits of query ``i`` are
        ``indices[offsets[i]:offsets[i + 1]]``, ascending by distance then index.
        """
        if not r > 0:
            raise GeometryError(f"Search radius must be positive, got {r}")
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        m = queries.shape[0]
        hits = self._tree.query_ball_point(queries, r * (1.0 + _SLACK) + 1e-15, return_sorted=False) if m else []
        lengths = np.fromiter((len(h) for h in hits), dtype=np.int64, count=m)
        idx = np.fromiter(itertools.chain.from_iterable(hits), dtype=np.int64, count=int(lengths.sum()))
        rows = np.repeat(np.arange(m, dtype=np.int64), lengths)
        dist = point_distances(self._points[idx], queries[rows])
        keep = dist <= r
        idx, dist, rows = idx[keep], dist[keep], rows[keep]
        order = np.lexsort((idx, dist, rows))
        offsets = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=m), out=offsets[1:])
        return offsets, idx[order], dist[order]

    def _ball(self, query: np.ndarray, r: float) -> tuple[np.ndarray, np.ndarray]:
        hits = self._tree.query_ball_point(query, r * (1.0 + _SLACK) + 1e-15)
        return self._finish_ball(query, hits, r)

    def _finish_ball(self, query: np.ndarray, hits: list, r: float) -> tuple[np.ndarray, np.ndarray]:
        idx = np.asarray(hits, dtype=np.int64)
        if idx.size == 0:
            return idx, np.zeros(0)
        dist = point_distances(self._points[idx], query)
        keep = dist <= r
        idx, dist = idx[keep], dist[keep]
        order = np.lexsort((idx, dist))
        return idx[order], dist[order]


def build(cloud: PointCloud, leafsize: int = 16) -> KdTree:
    """Index every point of a non-empty cloud."""
    if cloud.is_empty:
        raise EmptyCloudError("Cannot build a kd-tree over an empty cloud")
    return KdTree(cloud.points, leafsize=leafsize)


def nearest(tree: KdTree, query: Iterable[float]) -> tuple[int, float]:
    return tree.nearest(query)


def radius_search(tree: KdTree, query: Iterable[float], r: float) -> list[tuple[int, float]]:
    return tree.radius_search(query, r)
