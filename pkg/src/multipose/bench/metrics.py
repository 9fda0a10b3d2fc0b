"""Evaluation against ground truth and the registration-metric comparison."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence, TextIO

import numpy as np
from scipy import ndimage

from multipose.core.geometry import PointCloud, PoseError, RigidTransform, apply_transform, pose_error
from multipose.core.interfaces import IWorkerPool
from multipose.core.models import CameraIntrinsics, PipelineConfig, TrackingMode
from multipose.formats.reports import write_csv
from multipose.library.crops import ModelCrop, ObjectModel
from multipose.registration.alignment import alignment_score
from multipose.registration.icp import fitness_score
from multipose.scene.ingest import LabelImage, pixel_of
from multipose.services.acquisition import acquire
from multipose.spatial.kdtree import KdTree

SUCCESS_POSITION = 0.05
"""Largest position error (m) of a successful estimate."""

SUCCESS_ANGLE = 15.0
"""Largest geodesic angle error (deg) of a successful estimate."""

FITNESS_GATE = 0.005
"""Correspondence gate (m) of the comparison table's fitness column."""


@dataclass(frozen=True)
class EvaluationRecord:
    """One object instance in one frame, scored against its true pose."""

    scene: str
    frame: int
    class_id: int
    status: str
    mode: TrackingMode
    truth: RigidTransform
    estimate: Optional[RigidTransform] = None
    error: Optional[PoseError] = None
    score: float = 0.0
    visibility: float = 1.0
    timings: dict[str, float] = field(default_factory=dict)
    failure: Optional[str] = None

    @property
    def success(self) -> bool:
        """Within 5 cm and 15 degrees of the truth."""
        return self.error is not None and self.error.is_success(SUCCESS_POSITION, SUCCESS_ANGLE)

    @property
    def milliseconds(self) -> float:
        return sum(self.timings.values())

    @classmethod
    def evaluate(cls, scene: str, frame: int, class_id: int, status: str, mode: TrackingMode,
                 truth: RigidTransform, estimate: Optional[RigidTransform], **kwargs: Any) -> "EvaluationRecord":
        error = pose_error(estimate, truth) if estimate is not None else None
        return cls(scene, frame, class_id, status, mode, truth, estimate, error, **kwargs)

    def as_row(self) -> dict[str, Any]:
        e = self.error
        return {
            "scene": self.scene,
            "frame": self.frame,
            "class_id": self.class_id,
            "status": self.status,
            "mode": self.mode.value,
            "success": int(self.success),
            "position_error": None if e is None else round(e.position_error, 9),
            "angle_error": None if e is None else round(e.geodesic_angle, 6),
            "score": round(self.score, 9),
            "visibility": round(self.visibility, 6),
            "milliseconds": round(self.milliseconds, 3),
            "failure": self.failure,
        }


RECORD_COLUMNS = (
    "scene", "frame", "class_id", "status", "mode", "success", "position_error", "angle_error",
    "score", "visibility", "milliseconds", "failure",
)


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two boolean masks; 0 when both are empty."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return float(np.count_nonzero(a & b)) / float(union)


def projection_footprint(points: np.ndarray, k: CameraIntrinsics, splat: int = 1) -> np.ndarray:
    """Pixels hit by camera-frame points in front of the camera, grown by ``splat`` pixels."""
    mask = np.zeros(k.shape, dtype=bool)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    points = points[points[:, 2] > 0.0]
    if points.shape[0] == 0:
        return mask
    uv = pixel_of(points, k)
    inside = (uv[:, 0] >= 0) & (uv[:, 0] < k.width) & (uv[:, 1] >= 0) & (uv[:, 1] < k.height)
    mask[uv[inside, 1], uv[inside, 0]] = True
    if splat > 0:
        mask = ndimage.binary_dilation(mask, iterations=splat)
    return mask


def iou_of_projection(pose: RigidTransform, model_cloud: PointCloud, k: CameraIntrinsics,
                      labels: LabelImage, class_id: int, splat: int = 1) -> float:
    """IoU between the posed model's pixel footprint and the mask of ``class_id``."""
    footprint = projection_footprint(pose.apply(model_cloud.points), k, splat)
    return mask_iou(footprint, labels.labels == class_id)


@dataclass(frozen=True)
class ComparisonRow:
    """All three registration metrics of one hypothesis, with its true error."""

    crop_id: int
    pose: RigidTransform
    score: float
    fitness: float
    iou: float
    error: PoseError
    oracle: bool = False
    """True for the hypothesis placed at the true pose."""

    def as_row(self) -> dict[str, Any]:
        return {
            "crop_id": self.crop_id,
            "oracle": int(self.oracle),
            "score": round(self.score, 9),
            "fitness": self.fitness,
            "iou": round(self.iou, 9),
            "position_error": round(self.error.position_error, 9),
            "angle_error": round(self.error.geodesic_angle, 6),
        }


COMPARISON_COLUMNS = ("crop_id", "oracle", "score", "fitness", "iou", "position_error", "angle_error")


@dataclass(frozen=True, eq=False)
class ComparisonContext:
    """The scene side of a metric comparison."""

    scene: PointCloud
    scene_tree: KdTree
    truth: RigidTransform
    model_cloud: PointCloud
    intrinsics: CameraIntrinsics
    labels: LabelImage
    class_id: int

    @classmethod
    def build(cls, scene: PointCloud, truth: RigidTransform, model_cloud: PointCloud,
              intrinsics: CameraIntrinsics, labels: LabelImage, class_id: int) -> "ComparisonContext":
        return cls(scene, KdTree(scene.points), truth, model_cloud, intrinsics, labels, class_id)


def comparison_row(crop: ModelCrop, pose: RigidTransform, ctx: ComparisonContext, tau: float,
                   gate: float = FITNESS_GATE, oracle: bool = False) -> ComparisonRow:
    """Score ``crop`` placed at ``pose`` by alignment, fitness and projection IoU."""
    score = alignment_score(apply_transform(pose, crop.points), ctx.scene_tree, tau)
    return ComparisonRow(
        crop_id=crop.crop_id,
        pose=pose,
        score=score.value,
        fitness=fitness_score(crop.points, ctx.scene_tree, pose, gate),
        iou=iou_of_projection(pose, ctx.model_cloud, ctx.intrinsics, ctx.labels, ctx.class_id),
        error=pose_error(pose, ctx.truth),
        oracle=oracle,
    )


def oracle_row(model: ObjectModel, ctx: ComparisonContext, tau: float, gate: float = FITNESS_GATE) -> ComparisonRow:
    """The true pose, scored with whichever crop aligns best there."""
    rows = [comparison_row(crop, ctx.truth, ctx, tau, gate, oracle=True) for crop in model.crops]
    return min(rows, key=lambda r: (-r.score, r.crop_id))


def metric_comparison(model: ObjectModel, ctx: ComparisonContext, cfg: PipelineConfig,
                      gate: float = FITNESS_GATE, include_oracle: bool = True,
                      pool: Optional[IWorkerPool] = None) -> list[ComparisonRow]:
    """Acquisition hypotheses in ranking order, then the oracle row.

    Every hypothesis gets its alignment score, its ICP fitness within
    ``gate``, the IoU of the posed model against the object mask and its
    true pose error.
    """
    result = acquire(ctx.scene, model.crops, cfg, pool, ctx.scene_tree)
    rows = [
        comparison_row(model.crop(h.crop_id), h.refined_transform, ctx, cfg.tau, gate)
        for h in result.hypotheses
    ]
    if include_oracle:
        rows.append(oracle_row(model, ctx, cfg.tau, gate))
    return rows


ORACLE_GAP_LIMIT = 0.05
"""Largest score by which the true pose may trail the selected hypothesis."""


def oracle_gap(rows: Sequence[ComparisonRow]) -> float:
    """How far the oracle scores below the top-ranked hypothesis (negative when above)."""
    ranked = [r for r in rows if not r.oracle]
    oracle = [r for r in rows if r.oracle]
    if not ranked or not oracle:
        return 0.0
    return ranked[0].score - oracle[0].score


@dataclass(frozen=True, eq=False)
class ComparisonTable:
    """Metric comparison of one object in one rendered frame."""

    scene: str
    frame: int
    class_id: int
    visibility: float
    rows: tuple[ComparisonRow, ...]

    @property
    def oracle_gap(self) -> float:
        return oracle_gap(self.rows)

    @property
    def selected(self) -> ComparisonRow:
        """The hypothesis acquisition would pick."""
        return next(r for r in self.rows if not r.oracle)

    def as_rows(self) -> Iterable[dict[str, Any]]:
        for r in self.rows:
            yield {"scene": self.scene, "frame": self.frame, "class_id": self.class_id, **r.as_row()}


COMPARISON_TABLE_COLUMNS = ("scene", "frame", "class_id") + COMPARISON_COLUMNS


def write_comparison_csv(stream: TextIO, tables: Iterable[ComparisonTable]) -> None:
    write_csv(stream, COMPARISON_TABLE_COLUMNS, (row for t in tables for row in t.as_rows()))


def write_records_csv(stream: TextIO, records: Iterable[EvaluationRecord]) -> None:
    write_csv(stream, RECORD_COLUMNS, (r.as_row() for r in records))


def write_records_jsonl(stream: TextIO, records: Iterable[EvaluationRecord]) -> None:
    for r in records:
        stream.write(json.dumps(r.as_row(), sort_keys=True) + "\n")
