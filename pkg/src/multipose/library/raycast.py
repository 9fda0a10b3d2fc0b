"""Ray casting against triangle soups from a single eye point.

All rays share one origin, so triangles are binned once on the eye's image
plane and each ray is tested only against the triangles of its bin.
Intersection is Moller-Trumbore, two-sided.
"""

from __future__ import annotations

import numpy as np

from multipose.core.exceptions import GeometryError

# rays x triangles tested per vectorized block
_BLOCK = 1 << 20
_DET_EPS = 1e-14


def look_at(eye: np.ndarray, target: np.ndarray, up: np.ndarray = (0.0, 0.0, 1.0)) -> np.ndarray:
    """World-to-camera rotation for an optical frame (x right, y down, z forward).

    ``up`` is the world direction that should appear upward in the image; when
    it is parallel to the viewing direction the world y axis is used instead.
    """
    forward = np.asarray(target, dtype=np.float64) - np.asarray(eye, dtype=np.float64)
    norm = np.linalg.norm(forward)
    if norm == 0:
        raise GeometryError("Eye and target coincide")
    z = forward / norm
    up = np.asarray(up, dtype=np.float64)
    if abs(float(np.dot(up, z))) > 0.99 * np.linalg.norm(up):
        up = np.array([0.0, 1.0, 0.0]) if abs(z[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    y = -(up - np.dot(up, z) * z)
    y /= np.linalg.norm(y)
    x = np.cross(y, z)
    return np.stack([x, y, z])


def intersect(directions: np.ndarray, corners: np.ndarray, t_min: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Closest hit of rays from the origin against triangles.

    Args:
        directions: (R, 3) ray directions (any length; ``t`` is in their units).
        corners: (T, 3, 3) triangle corners relative to the ray origin.
        t_min: Hits at or below this parameter are ignored.

    Returns:
        (t, triangle) per ray; ``inf`` and -1 where nothing is hit.
    """
    r = directions.shape[0]
    best_t = np.full(r, np.inf)
    best_tri = np.full(r, -1, dtype=np.int64)
    if r == 0 or corners.shape[0] == 0:
        return best_t, best_tri

    v0 = corners[:, 0]
    e1 = corners[:, 1] - v0
    e2 = corners[:, 2] - v0
    s = -v0
    q = np.cross(s, e1)
    t_num = np.einsum("ij,ij->i", e2, q)
    u_num_base = s

    step = max(1, _BLOCK // corners.shape[0])
    for start in range(0, r, step):
        d = directions[start:start + step]
        p = np.cross(d[:, None, :], e2[None, :, :])
        det = np.einsum("rtk,tk->rt", p, e1)
        ok = np.abs(det) > _DET_EPS
        inv = np.divide(1.0, det, out=np.zeros_like(det), where=ok)
        u = np.einsum("rtk,tk->rt", p, u_num_base) * inv
        v = np.einsum("rk,tk->rt", d, q) * inv
        t = t_num[None, :] * inv
        hit = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > t_min)
        t = np.where(hit, t, np.inf)
        tri = np.argmin(t, axis=1)
        rows = np.arange(d.shape[0])
        best_t[start:start + step] = t[rows, tri]
        best_tri[start:start + step] = np.where(np.isfinite(t[rows, tri]), tri, -1)
    return best_t, best_tri


class RayCaster:
    """Triangle set prepared for repeated casts from one eye point.

    Every triangle must lie strictly in front of the eye along the optical
    axis given by ``rotation`` (world-to-camera).
    """

    def __init__(self, corners: np.ndarray, eye: np.ndarray, rotation: np.ndarray, grid: int = 48):
        corners = np.asarray(corners, dtype=np.float64).reshape(-1, 3, 3)
        self._eye = np.asarray(eye, dtype=np.float64).reshape(3)
        self._rotation = np.asarray(rotation, dtype=np.float64).reshape(3, 3)
        self._grid = grid
        local = (corners - self._eye) @ self._rotation.T
        if local.shape[0] and np.any(local[..., 2] <= 0.0):
            raise GeometryError("Ray caster needs every triangle in front of the eye")
        self._local = local
        if local.shape[0] == 0:
            self._lo = np.zeros(2)
            self._cell = np.ones(2)
            self._cell_start = np.zeros(grid * grid + 1, dtype=np.int64)
            self._cell_tris = np.zeros(0, dtype=np.int64)
            return

        uv = local[..., :2] / local[..., 2:3]
        tri_lo = uv.min(axis=1)
        tri_hi = uv.max(axis=1)
        self._lo = tri_lo.min(axis=0)
        span = np.maximum(tri_hi.max(axis=0) - self._lo, 1e-12)
        self._cell = span / grid

        i0 = self._bin(tri_lo)
        i1 = self._bin(tri_hi)
        nx = i1[:, 0] - i0[:, 0] + 1
        ny = i1[:, 1] - i0[:, 1] + 1
        counts = nx * ny
        tri_ids = np.repeat(np.arange(local.shape[0]), counts)
        offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        cx = i0[tri_ids, 0] + offsets % nx[tri_ids]
        cy = i0[tri_ids, 1] + offsets // nx[tri_ids]
        cells = cy * grid + cx
        order = np.argsort(cells, kind="stable")
        self._cell_tris = tri_ids[order]
        self._cell_start = np.searchsorted(cells[order], np.arange(grid * grid + 1))

    def _bin(self, uv: np.ndarray) -> np.ndarray:
        return np.clip(np.floor((uv - self._lo) / self._cell).astype(np.int64), 0, self._grid - 1)

    @property
    def eye(self) -> np.ndarray:
        return self._eye

    def cast(self, directions: np.ndarray, t_min: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """Closest hit per world-frame ray direction from the eye.

        Returns:
            (t, triangle) per ray; ``inf`` and -1 where nothing is hit.
        """
        directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
        d_local = directions @ self._rotation.T
        best_t = np.full(d_local.shape[0], np.inf)
        best_tri = np.full(d_local.shape[0], -1, dtype=np.int64)
        if self._local.shape[0] == 0:
            return best_t, best_tri

        forward = d_local[:, 2] > 0.0
        uv = np.zeros((d_local.shape[0], 2))
        uv[forward] = d_local[forward, :2] / d_local[forward, 2:3]
        span = self._cell * self._grid
        inside = forward & np.all(uv >= self._lo, axis=1) & np.all(uv <= self._lo + span, axis=1)
        rays = np.flatnonzero(inside)
        if rays.size == 0:
            return best_t, best_tri
        bins = self._bin(uv[rays])
        cells = bins[:, 1] * self._grid + bins[:, 0]
        order = np.argsort(cells, kind="stable")
        rays, cells = rays[order], cells[order]
        bounds = np.flatnonzero(np.diff(cells)) + 1
        for group in np.split(np.arange(rays.size), bounds):
            cell = cells[group[0]]
            tris = self._cell_tris[self._cell_start[cell]:self._cell_start[cell + 1]]
            if tris.size == 0:
                continue
            members = rays[group]
            t, local_tri = intersect(d_local[members], self._local[tris], t_min)
            best_t[members] = t
            best_tri[members] = np.where(local_tri >= 0, tris[np.maximum(local_tri, 0)], -1)
        return best_t, best_tri
