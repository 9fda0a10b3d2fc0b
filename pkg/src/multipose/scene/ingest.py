"""Depth images and label masks to per-object camera-frame clouds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from multipose.core.exceptions import DimensionMismatchError, EmptyCloudError, EmptySegmentError
from multipose.core.geometry import Point3, PointCloud
from multipose.core.models import CameraIntrinsics


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Per-pixel depth in meters; 0 or NaN marks an invalid pixel."""

    depth: np.ndarray

    def __post_init__(self):
        depth = np.array(self.depth, dtype=np.float64, copy=True)
        if depth.ndim != 2:
            raise DimensionMismatchError(f"Depth image must be 2-D, got shape {depth.shape}")
        depth.setflags(write=False)
        object.__setattr__(self, "depth", depth)

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape

    def valid_mask(self) -> np.ndarray:
        d = self.depth
        return np.isfinite(d) & (d > 0.0)


@dataclass(frozen=True, eq=False)
class LabelImage:
    """Per-pixel semantic class; 0 is background."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int32, copy=True)
        if labels.ndim != 2:
            raise DimensionMismatchError(f"Label image must be 2-D, got shape {labels.shape}")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def classes(self) -> list[int]:
        """Non-background classes present, ascending."""
        present = np.unique(self.labels)
        return [int(c) for c in present if c != 0]


@dataclass(frozen=True, eq=False)
class ProvenanceCloud:
    """Back-projected valid pixels with the flat index of each source pixel."""

    cloud: PointCloud
    pixel_indices: np.ndarray
    """(N,) row-major pixel index ``v * width + u``."""

    shape: tuple[int, int]
    """(height, width) of the source image."""

    def __len__(self) -> int:
        return len(self.cloud)


@dataclass(frozen=True, eq=False)
class SegmentedObjectCloud:
    """Camera-frame points of one object class."""

    class_id: int
    points: PointCloud
    pixel_indices: np.ndarray

    def __len__(self) -> int:
        return len(self.points)


def depth_to_cloud(depth: DepthImage, k: CameraIntrinsics) -> ProvenanceCloud:
    """Pinhole back-projection of every valid pixel, in row-major pixel order.

    Raises:
        DimensionMismatchError: If the image size differs from the intrinsics.
    """
    if depth.shape != k.shape:
        raise DimensionMismatchError(
            f"Depth image is {depth.shape[1]}x{depth.shape[0]}, intrinsics expect {k.width}x{k.height}"
        )
    valid = depth.valid_mask()
    flat = np.flatnonzero(valid)
    v, u = np.divmod(flat, k.width)
    d = depth.depth.reshape(-1)[flat]
    points = np.column_stack([(u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d])
    return ProvenanceCloud(PointCloud(points), flat.astype(np.int64), k.shape)


def extract_object_cloud(source: ProvenanceCloud, labels: LabelImage, class_id: int) -> SegmentedObjectCloud:
    """Points whose source pixel carries ``class_id``.

    Raises:
        DimensionMismatchError: If the label image does not match the cloud's source image.
        EmptySegmentError: If no valid pixel carries ``class_id``.
    """
    if labels.shape != source.shape:
        raise DimensionMismatchError(f"Label image {labels.shape} does not match depth image {source.shape}")
    keep = labels.labels.reshape(-1)[source.pixel_indices] == class_id
    if not np.any(keep):
        raise EmptySegmentError(class_id)
    return SegmentedObjectCloud(class_id, source.cloud.select(keep), source.pixel_indices[keep])


def segment_all(source: ProvenanceCloud, labels: LabelImage,
                class_ids: Iterable[int]) -> dict[int, SegmentedObjectCloud]:
    """Segments for every requested class that has at least one valid pixel."""
    out = {}
    for class_id in class_ids:
        try:
            out[class_id] = extract_object_cloud(source, labels, class_id)
        except EmptySegmentError:
            continue
    return out


def median_position(cloud: PointCloud) -> Point3:
    """Component-wise median; an even count takes the mean of the two middle values.

    Raises:
        EmptyCloudError: If the cloud is empty.
    """
    if cloud.is_empty:
        raise EmptyCloudError("Median of an empty cloud is undefined")
    return np.median(cloud.points, axis=0)


def project_points(points: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    """(N, 2) sub-pixel (u, v) coordinates of camera-frame points with z > 0."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    z = points[:, 2]
    return np.column_stack([k.fx * points[:, 0] / z + k.cx, k.fy * points[:, 1] / z + k.cy])


def pixel_of(points: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    """(N, 2) integer (u, v) pixel of each point.

    Pixel centres sit on integer coordinates; a coordinate is floored after
    a half-pixel shift, so halfway points go to the higher pixel.
    """
    return np.floor(project_points(points, k) + 0.5).astype(np.int64)
