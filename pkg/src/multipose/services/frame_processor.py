"""Per-frame orchestration: segment, then acquire or track every object."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

from multipose.core.exceptions import PoseEngineError
from multipose.core.geometry import PointCloud, RigidTransform
from multipose.core.interfaces import IWorkerPool
from multipose.core.models import CameraIntrinsics, CameraOdometry, PipelineConfig, TrackingMode
from multipose.core.registry import ObjectEntry, ObjectRegistry
from multipose.library.sampling import voxel_downsample
from multipose.scene.ingest import DepthImage, LabelImage, depth_to_cloud, segment_all
from multipose.services.acquisition import AcquisitionResult, acquire
from multipose.services.tracking import TrackState, coast, start_tracking, track_step
from multipose.spatial.kdtree import KdTree
from multipose.utils.log import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class Frame:
    """One sensor frame."""

    index: int
    depth: DepthImage
    labels: LabelImage
    odometry: Optional[CameraOdometry] = None
    """Camera motion since the previous frame; None means a stationary camera."""


@dataclass(frozen=True)
class ObjectReport:
    """Outcome for one object in one frame.

    ``status`` is one of ``acquired``, ``searching``, ``tracking``,
    ``coasting``, ``lost``, ``occluded`` or ``failed``.
    """

    frame: int
    class_id: int
    name: str
    status: str
    mode: TrackingMode
    """Mode after this frame."""

    pose: Optional[RigidTransform] = None
    score: float = 0.0
    position_variance: Optional[float] = None
    crop_id: Optional[int] = None
    points: int = 0
    """Points in the segmented (and possibly downsampled) object cloud."""

    timings: dict[str, float] = field(default_factory=dict)
    """Per-stage milliseconds."""

    error: Optional[str] = None


@dataclass(frozen=True)
class FrameReport:
    """All object reports of one frame, ordered by class id."""

    frame: int
    objects: tuple[ObjectReport, ...]
    timings: dict[str, float] = field(default_factory=dict)

    def for_class(self, class_id: int) -> Optional[ObjectReport]:
        return next((o for o in self.objects if o.class_id == class_id), None)


@dataclass
class _Outcome:
    report: ObjectReport
    state: Optional[TrackState]
    last_crop_id: Optional[int] = None


def _ms(start: float) -> float:
    return (time.perf_counter() - start) * 1000.0


class FrameProcessor:
    """
    Runs the per-object state machine over a stream of frames.

    Objects are independent: each is processed on its own (possibly on a
    worker thread) from a snapshot of its state, and the registry is updated
    once every object of the frame has finished.
    """

    def __init__(
        self,
        registry: ObjectRegistry,
        intrinsics: CameraIntrinsics,
        cfg: PipelineConfig,
        pool: Optional[IWorkerPool] = None,
    ):
        self._registry = registry
        self._intrinsics = intrinsics.validate()
        self._cfg = cfg.validate()
        self._pool = pool

    @property
    def registry(self) -> ObjectRegistry:
        return self._registry

    def process(self, frame: Frame) -> FrameReport:
        """Process one frame; per-object failures end up in the report."""
        start = time.perf_counter()
        source = depth_to_cloud(frame.depth, self._intrinsics)
        known = self._registry.class_ids()
        present = set(frame.labels.classes()) & set(known)
        segments = segment_all(source, frame.labels, sorted(present))
        ingest_ms = _ms(start)

        odom = frame.odometry or CameraOdometry.stationary(self._cfg.frame_period)
        jobs = []
        for class_id in known:
            entry = self._registry.get(class_id)
            segment = segments.get(class_id)
            if segment is None and entry.mode is not TrackingMode.TRACKING:
                continue
            jobs.append((entry, None if segment is None else segment.points))

        def run(job: tuple[ObjectEntry, Optional[PointCloud]]) -> _Outcome:
            return self._process_object(frame.index, job[0], job[1], odom)

        outcomes = self._pool.map(run, jobs) if self._pool is not None else [run(j) for j in jobs]
        for (entry, _), outcome in zip(jobs, outcomes):
            self._registry.set_state(entry.model.class_id, outcome.state, outcome.last_crop_id)

        return FrameReport(
            frame=frame.index,
            objects=tuple(o.report for o in outcomes),
            timings={"ingest_ms": ingest_ms, "total_ms": _ms(start)},
        )

    def _process_object(
        self,
        frame: int,
        entry: ObjectEntry,
        cloud: Optional[PointCloud],
        odom: CameraOdometry,
    ) -> _Outcome:
        model = entry.model
        previous = entry.mode
        base = dict(frame=frame, class_id=model.class_id, name=model.name)
        try:
            if cloud is None:
                state = coast(entry.state, odom, self._cfg)
                self._log_transition(model.class_id, previous, state.mode)
                return _Outcome(
                    ObjectReport(**base, status="occluded", mode=state.mode, pose=state.pose,
                                 position_variance=state.position_variance(),
                                 crop_id=state.active_crop_id),
                    state,
                )

            if self._cfg.scene_leaf > 0:
                cloud = voxel_downsample(cloud, self._cfg.scene_leaf)

            if previous is TrackingMode.TRACKING:
                return self._track(base, entry, cloud, odom)
            return self._acquire(base, entry, cloud)
        except PoseEngineError as e:
            logger.warning(f"Frame {frame}, class {model.class_id}: {e}")
            return _Outcome(
                ObjectReport(**base, status="failed", mode=previous, error=str(e),
                             points=0 if cloud is None else len(cloud)),
                entry.state,
            )

    def _acquire(self, base: dict, entry: ObjectEntry, cloud: PointCloud) -> _Outcome:
        start = time.perf_counter()
        model = entry.model
        tree = KdTree(cloud.points)
        result: Optional[AcquisitionResult] = None
        if self._cfg.warm_start and entry.last_crop_id is not None:
            warm = acquire(cloud, [model.crop(entry.last_crop_id)], self._cfg, self._pool, tree)
            if warm.accepted:
                result = warm
        if result is None:
            result = acquire(cloud, model.crops, self._cfg, self._pool, tree)
        timings = {"acquisition_ms": _ms(start)}

        best = result.best
        if not result.accepted:
            return _Outcome(
                ObjectReport(**base, status="searching", mode=TrackingMode.ACQUISITION,
                             pose=best.refined_transform, score=best.score.value,
                             crop_id=best.crop_id, points=len(cloud), timings=timings),
                None,
            )

        state = start_tracking(best.refined_transform, best.crop_id, best.score.value, self._cfg)
        self._log_transition(model.class_id, TrackingMode.ACQUISITION, TrackingMode.TRACKING)
        return _Outcome(
            ObjectReport(**base, status="acquired", mode=TrackingMode.TRACKING, pose=state.pose,
                         score=best.score.value, position_variance=state.position_variance(),
                         crop_id=best.crop_id, points=len(cloud), timings=timings),
            state,
            best.crop_id,
        )

    def _track(self, base: dict, entry: ObjectEntry, cloud: PointCloud, odom: CameraOdometry) -> _Outcome:
        start = time.perf_counter()
        model = entry.model
        state = entry.state
        crop = model.crop(state.active_crop_id)
        new_state = track_step(state, cloud, odom, crop, model.cloud, self._cfg)
        timings = {"tracking_ms": _ms(start)}

        if new_state.mode is TrackingMode.ACQUISITION:
            status = "lost"
        else:
            status = "tracking" if new_state.updated else "coasting"
        self._log_transition(model.class_id, TrackingMode.TRACKING, new_state.mode)
        return _Outcome(
            ObjectReport(**base, status=status, mode=new_state.mode, pose=new_state.pose,
                         score=new_state.last_score, position_variance=new_state.position_variance(),
                         crop_id=new_state.active_crop_id, points=len(cloud), timings=timings),
            new_state,
        )

    @staticmethod
    def _log_transition(class_id: int, before: TrackingMode, after: TrackingMode) -> None:
        if before is not after:
            logger.info(f"Class {class_id}: {before.value} -> {after.value}")


def process_frame(frame: Frame, registry: ObjectRegistry, intrinsics: CameraIntrinsics,
                  cfg: PipelineConfig, pool: Optional[IWorkerPool] = None) -> FrameReport:
    """One-shot form of :meth:`FrameProcessor.process`."""
    return FrameProcessor(registry, intrinsics, cfg, pool).process(frame)
