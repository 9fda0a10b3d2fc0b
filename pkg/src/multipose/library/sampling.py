"""Surface sampling and voxel-grid downsampling."""

from dataclasses import dataclass

import numpy as np

from multipose.core.exceptions import EmptyMeshError, GeometryError
from multipose.core.geometry import PointCloud
from multipose.library.mesh import MeshModel


@dataclass(frozen=True, eq=False)
class SurfaceSamples:
    """Dense surface samples that remember the triangle they were drawn from."""

    points: np.ndarray
    """(N, 3) sample positions."""

    triangle_ids: np.ndarray
    """(N,) index of each sample's source triangle."""


def sample_surface_with_faces(mesh: MeshModel, point_count: int, seed: int) -> SurfaceSamples:
    """Area-weighted uniform samples, deterministic per seed."""
    if point_count <= 0:
        raise GeometryError(f"point_count must be positive, got {point_count}")
    if mesh.triangle_count == 0:
        raise EmptyMeshError(f"Cannot sample mesh '{mesh.name}' without triangles")

    areas = mesh.areas()
    rng = np.random.default_rng(seed)
    faces = rng.choice(mesh.triangle_count, size=point_count, p=areas / areas.sum())
    r1 = np.sqrt(rng.random(point_count))
    r2 = rng.random(point_count)

    corners = mesh.corners()[faces]
    points = (
        (1.0 - r1)[:, None] * corners[:, 0]
        + (r1 * (1.0 - r2))[:, None] * corners[:, 1]
        + (r1 * r2)[:, None] * corners[:, 2]
    )
    return SurfaceSamples(points=points, triangle_ids=faces.astype(np.int64))


def sample_surface(mesh: MeshModel, point_count: int, seed: int) -> PointCloud:
    return PointCloud(sample_surface_with_faces(mesh, point_count, seed).points)


def voxel_grid(points: np.ndarray, leaf: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-voxel centroids in ascending (kx, ky, kz) key order, and each input point's voxel."""
    if not leaf > 0:
        raise GeometryError(f"Voxel leaf must be positive, got {leaf}")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if points.shape[0] == 0:
        return np.zeros((0, 3)), np.zeros(0, dtype=np.int64)
    keys = np.floor(points / leaf).astype(np.int64)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    count = int(inverse.max()) + 1
    sums = np.zeros((count, 3))
    np.add.at(sums, inverse, points)
    occupancy = np.bincount(inverse, minlength=count)
    return sums / occupancy[:, None], inverse


def voxel_downsample(cloud: PointCloud, leaf: float) -> PointCloud:
    """Replace the points of every occupied voxel with their centroid."""
    centroids, _ = voxel_grid(cloud.points, leaf)
    return PointCloud(centroids)
