"""Indexed triangle meshes."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from multipose.core.exceptions import EmptyMeshError, MeshFormatError, UnitSanityError
from multipose.core.geometry import RigidTransform
from multipose.utils.log import get_logger

logger = get_logger(__name__)

MAX_EXTENT = 10.0
"""Largest bounding-box edge (m) accepted for a mesh in meter units."""

_MIN_AREA = 1e-15


@dataclass(frozen=True, eq=False)
class MeshModel:
    """Triangle mesh of a known object, in meters."""

    vertices: np.ndarray
    """(V, 3) float64 vertex positions."""

    triangles: np.ndarray
    """(T, 3) int64 vertex indices; degenerate triangles are dropped on construction."""

    class_id: int = 0
    """Semantic label of the object."""

    name: str = ""
    """Human-readable object name."""

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=np.float64, copy=True).reshape(-1, 3)
        triangles = np.array(self.triangles, dtype=np.int64, copy=True).reshape(-1, 3)
        if not np.all(np.isfinite(vertices)):
            raise MeshFormatError("Mesh has non-finite vertex coordinates")
        if triangles.size and (triangles.min() < 0 or triangles.max() >= vertices.shape[0]):
            raise MeshFormatError(
                f"Triangle index out of range [0, {vertices.shape[0]})"
            )
        if vertices.shape[0]:
            extent = vertices.max(axis=0) - vertices.min(axis=0)
            if float(extent.max()) > MAX_EXTENT:
                raise UnitSanityError(
                    f"Mesh bounding box edge {float(extent.max()):.3f} exceeds {MAX_EXTENT} m; "
                    f"is the file in millimeters?"
                )
        if triangles.size:
            corners = vertices[triangles]
            areas = 0.5 * np.linalg.norm(
                np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]), axis=1
            )
            keep = areas > _MIN_AREA
            if not np.all(keep):
                logger.info(f"Dropped {int(np.count_nonzero(~keep))} degenerate triangles")
                triangles = triangles[keep]
        vertices.setflags(write=False)
        triangles.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)

    @property
    def triangle_count(self) -> int:
        return self.triangles.shape[0]

    def require_triangles(self) -> "MeshModel":
        if self.triangle_count == 0:
            raise EmptyMeshError(f"Mesh '{self.name}' has no triangles")
        return self

    def corners(self) -> np.ndarray:
        """(T, 3, 3) triangle corner positions."""
        return self.vertices[self.triangles]

    def areas(self) -> np.ndarray:
        c = self.corners()
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    def normals(self) -> np.ndarray:
        """Unit face normals following the right-hand winding rule."""
        c = self.corners()
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def bounding_sphere(self) -> tuple[np.ndarray, float]:
        """Bounding-box centre and the radius enclosing every vertex."""
        if self.vertices.shape[0] == 0:
            raise EmptyMeshError(f"Mesh '{self.name}' has no vertices")
        center = 0.5 * (self.vertices.min(axis=0) + self.vertices.max(axis=0))
        radius = float(np.max(np.linalg.norm(self.vertices - center, axis=1)))
        return center, radius

    def transformed(self, transform: RigidTransform) -> "MeshModel":
        return MeshModel(transform.apply(self.vertices), self.triangles, self.class_id, self.name)

    def with_label(self, class_id: int, name: Optional[str] = None) -> "MeshModel":
        return MeshModel(self.vertices, self.triangles, class_id, self.name if name is None else name)

    def content_hash(self) -> str:
        """SHA-256 over vertex and triangle bytes."""
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.vertices, dtype="<f8").tobytes())
        digest.update(np.ascontiguousarray(self.triangles, dtype="<i8").tobytes())
        return digest.hexdigest()
