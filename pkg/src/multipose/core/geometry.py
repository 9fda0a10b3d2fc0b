"""Rigid-body transforms, point clouds and pose-error metrics.

Distances are meters, angles reported to callers are degrees. Quaternions are
stored scalar-first ``(w, x, y, z)`` with ``w >= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from multipose.core.exceptions import GeometryError

Point3 = np.ndarray
"""A length-3 float array (x, y, z) in meters."""

_QUATERNION_TOLERANCE = 1e-6


def as_point(value: Iterable[float]) -> Point3:
    """Convert any 3-sequence into a finite float64 point."""
    point = np.asarray(value, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(point)):
        raise GeometryError(f"Point has non-finite components: {point}")
    return point


def point_distances(points: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Euclidean distances from each row of ``points`` to ``query``.

    Every distance in the package (kd-tree, ICP, alignment metric) goes through
    this one expression so brute-force checks agree bit-for-bit.
    """
    diff = points - query
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Unordered set of 3D points in meters."""

    points: np.ndarray
    """(N, 3) float64 array, read-only."""

    valid: Optional[np.ndarray] = None
    """Optional (N,) boolean per-point validity."""

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64, copy=True)
        if points.size == 0:
            points = points.reshape(0, 3)
        if points.ndim != 2 or points.shape[1] != 3:
            raise GeometryError(f"Point cloud must be (N, 3), got {points.shape}")
        if not np.all(np.isfinite(points)):
            raise GeometryError("Point cloud contains NaN or infinite points")
        object.__setattr__(self, "points", _frozen(points))
        if self.valid is not None:
            valid = np.array(self.valid, dtype=bool, copy=True).reshape(-1)
            if valid.shape[0] != points.shape[0]:
                raise GeometryError("Validity mask length differs from point count")
            object.__setattr__(self, "valid", _frozen(valid))

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)))

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def is_empty(self) -> bool:
        return self.points.shape[0] == 0

    def centroid(self) -> Point3:
        """Mean of all points."""
        if self.is_empty:
            raise GeometryError("Centroid of an empty cloud is undefined")
        return self.points.mean(axis=0)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned (min, max) corners."""
        if self.is_empty:
            raise GeometryError("Bounds of an empty cloud are undefined")
        return self.points.min(axis=0), self.points.max(axis=0)

    def select(self, selector: np.ndarray) -> "PointCloud":
        """Subset by boolean mask or index array, preserving order."""
        valid = None if self.valid is None else self.valid[selector]
        return PointCloud(self.points[selector], valid)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Element of SE(3): unit quaternion rotation plus translation."""

    rotation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    """Unit quaternion (w, x, y, z), canonicalized to w >= 0."""

    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    """Translation in meters."""

    _matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(t))):
            raise GeometryError("Transform has non-finite components")
        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > _QUATERNION_TOLERANCE:
            raise GeometryError(f"Rotation quaternion is not unit length (norm {norm})")
        q = q / norm
        if q[0] < 0.0:
            q = -q
        object.__setattr__(self, "rotation", tuple(float(v) for v in q))
        object.__setattr__(self, "translation", tuple(float(v) for v in t))
        object.__setattr__(self, "_matrix", _frozen(_quaternion_matrix(q)))

    # -- construction -----------------------------------------------------

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_rotation(cls, rotation: Rotation, translation: Sequence[float] = (0.0, 0.0, 0.0)) -> "RigidTransform":
        x, y, z, w = rotation.as_quat()
        return cls((w, x, y, z), tuple(translation))

    @classmethod
    def from_rotvec(cls, rotvec: Sequence[float], translation: Sequence[float] = (0.0, 0.0, 0.0)) -> "RigidTransform":
        """Rotation vector in radians."""
        return cls.from_rotation(Rotation.from_rotvec(np.asarray(rotvec, dtype=np.float64)), translation)

    @classmethod
    def from_axis_angle(
        cls, axis: Sequence[float], degrees: float, translation: Sequence[float] = (0.0, 0.0, 0.0)
    ) -> "RigidTransform":
        axis = np.asarray(axis, dtype=np.float64)
        axis = axis / np.linalg.norm(axis)
        return cls.from_rotvec(axis * math.radians(degrees), translation)

    @classmethod
    def from_translation(cls, translation: Sequence[float]) -> "RigidTransform":
        return cls((1.0, 0.0, 0.0, 0.0), tuple(translation))

    @classmethod
    def from_rotation_matrix(cls, matrix: np.ndarray, translation: Sequence[float] = (0.0, 0.0, 0.0)) -> "RigidTransform":
        matrix = np.asarray(matrix, dtype=np.float64).reshape(3, 3)
        if not np.allclose(matrix @ matrix.T, np.eye(3), atol=1e-6) or np.linalg.det(matrix) <= 0:
            raise GeometryError("Matrix is not a proper rotation")
        return cls.from_rotation(Rotation.from_matrix(matrix), translation)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray | Sequence[float]) -> "RigidTransform":
        """Build from a 4x4 homogeneous matrix (or its 16 row-major numbers)."""
        m = np.asarray(matrix, dtype=np.float64)
        if m.size != 16:
            raise GeometryError(f"Expected 16 matrix entries, got {m.size}")
        m = m.reshape(4, 4)
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-9):
            raise GeometryError("Bottom row of a rigid transform must be 0 0 0 1")
        return cls.from_rotation_matrix(m[:3, :3], m[:3, 3])

    @classmethod
    def from_tuple(cls, values: Sequence[float]) -> "RigidTransform":
        """Parse the 7-number form (qw, qx, qy, qz, tx, ty, tz)."""
        if len(values) != 7:
            raise GeometryError(f"Expected 7 numbers, got {len(values)}")
        return cls(tuple(values[:4]), tuple(values[4:]))

    # -- accessors --------------------------------------------------------

    @property
    def rotation_matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def translation_vector(self) -> np.ndarray:
        return np.array(self.translation)

    def as_rotation(self) -> Rotation:
        w, x, y, z = self.rotation
        return Rotation.from_quat([x, y, z, w])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self._matrix
        m[:3, 3] = self.translation
        return m

    def rotvec(self) -> np.ndarray:
        """Rotation vector in radians."""
        return self.as_rotation().as_rotvec()

    def to_tuple(self) -> tuple[float, ...]:
        return self.rotation + self.translation

    def format(self) -> str:
        """Seven space-separated numbers for text reports."""
        return " ".join(repr(v) for v in self.to_tuple())

    # -- arithmetic -------------------------------------------------------

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self ∘ other: apply ``other`` first, then ``self``."""
        rotation = self.as_rotation() * other.as_rotation()
        translation = self._matrix @ np.asarray(other.translation) + np.asarray(self.translation)
        return RigidTransform.from_rotation(rotation, translation)

    def inverse(self) -> "RigidTransform":
        w, x, y, z = self.rotation
        translation = -(self._matrix.T @ np.asarray(self.translation))
        return RigidTransform((w, -x, -y, -z), translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) array or a single point."""
        points = np.asarray(points, dtype=np.float64)
        return points @ self._matrix.T + np.asarray(self.translation)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def __repr__(self) -> str:
        return f"RigidTransform(rotation={self.rotation}, translation={self.translation})"


def _quaternion_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Return a ∘ b, i.e. the transform applying ``b`` then ``a``."""
    return a.compose(b)


def invert(t: RigidTransform) -> RigidTransform:
    """Return the inverse transform."""
    return t.inverse()


def apply_transform(t: RigidTransform, cloud: PointCloud) -> PointCloud:
    """Rigidly move every point of ``cloud``."""
    if cloud.is_empty:
        return cloud
    return PointCloud(t.apply(cloud.points), cloud.valid)


@dataclass(frozen=True)
class PoseError:
    """Difference between an estimated pose and the ground truth."""

    position_error: float
    """Euclidean distance between translations (m)."""

    geodesic_angle: float
    """Angle of the relative rotation (deg), in [0, 180]."""

    axis_error: float
    """Angle between the two orientations' axis-angle axes (deg)."""

    angle_error: float
    """Absolute difference of the two axis-angle magnitudes (deg)."""

    def is_success(self, max_position: float = 0.05, max_angle: float = 15.0) -> bool:
        """Failure means more than ``max_position`` m or ``max_angle`` deg off."""
        return self.position_error <= max_position and self.geodesic_angle <= max_angle


def geodesic_angle(a: RigidTransform, b: RigidTransform) -> float:
    """Rotation angle (deg) of the relative rotation between a and b."""
    qa = np.asarray(a.rotation)
    qb = np.asarray(b.rotation)
    # w component and vector part of conj(qa) ⊗ qb
    w = float(np.dot(qa, qb))
    v = qa[0] * qb[1:] - qb[0] * qa[1:] - np.cross(qa[1:], qb[1:])
    return math.degrees(2.0 * math.atan2(float(np.linalg.norm(v)), abs(w)))


def pose_error(estimate: RigidTransform, truth: RigidTransform) -> PoseError:
    """Position, geodesic and axis-angle errors of ``estimate`` against ``truth``."""
    position = float(np.linalg.norm(np.subtract(estimate.translation, truth.translation)))
    geodesic = min(geodesic_angle(estimate, truth), 180.0)

    rv_est = estimate.rotvec()
    rv_truth = truth.rotvec()
    angle_est = float(np.linalg.norm(rv_est))
    angle_truth = float(np.linalg.norm(rv_truth))
    if angle_est < 1e-12 or angle_truth < 1e-12:
        axis = 0.0
    else:
        cos_axis = float(np.dot(rv_est, rv_truth) / (angle_est * angle_truth))
        axis = math.degrees(math.acos(max(-1.0, min(1.0, cos_axis))))
    angle = abs(math.degrees(angle_est) - math.degrees(angle_truth))
    return PoseError(
        position_error=position,
        geodesic_angle=geodesic,
        axis_error=axis,
        angle_error=angle,
    )
