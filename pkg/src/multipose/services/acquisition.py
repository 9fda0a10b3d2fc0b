"""Multi-hypothesis acquisition.

Every model crop is placed at the median of the segmented scene cloud,
refined with a short ICP run and ranked by the alignment score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from multipose.core.exceptions import EmptyCloudError, EmptyCropError, PoseEngineError
from multipose.core.geometry import PointCloud, RigidTransform, apply_transform
from multipose.core.interfaces import IWorkerPool
from multipose.core.models import PipelineConfig
from multipose.library.crops import ModelCrop
from multipose.registration.alignment import AlignmentScore, alignment_score
from multipose.registration.icp import IcpResult, icp
from multipose.scene.ingest import median_position
from multipose.spatial.kdtree import KdTree
from multipose.utils.log import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class Hypothesis:
    """One crop's refined pose and its score."""

    crop_id: int
    initial_transform: RigidTransform
    refined_transform: RigidTransform
    score: AlignmentScore
    """Alignment of the crop moved by ``refined_transform``."""

    icp_result: Optional[IcpResult] = None
    error: Optional[str] = None
    """Why ICP failed for this hypothesis, if it did."""

    @property
    def sort_key(self) -> tuple[float, int]:
        return (-self.score.value, self.crop_id)


@dataclass(frozen=True)
class AcquisitionResult:
    """All hypotheses of one acquisition, best first."""

    hypotheses: tuple[Hypothesis, ...]
    median: np.ndarray
    epsilon: float

    @property
    def best(self) -> Hypothesis:
        return self.hypotheses[0]

    @property
    def accepted(self) -> bool:
        """True when the best score reaches epsilon."""
        return self.best.score.value >= self.epsilon

    def scores(self) -> dict[int, float]:
        return {h.crop_id: h.score.value for h in self.hypotheses}


def _rotation_onto(direction: np.ndarray) -> RigidTransform:
    """Smallest rotation taking the optical axis +z onto ``direction``."""
    norm = float(np.linalg.norm(direction))
    if norm == 0.0:
        return RigidTransform.identity()
    s = direction / norm
    axis = np.cross([0.0, 0.0, 1.0], s)
    sin = float(np.linalg.norm(axis))
    cos = float(s[2])
    if sin < 1e-12:
        return RigidTransform.identity() if cos > 0 else RigidTransform.from_rotvec((math.pi, 0.0, 0.0))
    return RigidTransform.from_rotvec(axis / sin * math.atan2(sin, cos))


def initial_pose(crop: ModelCrop, median: np.ndarray) -> RigidTransform:
    """Crop orientation as seen along the median's line of sight, centroid on the median."""
    rotation = _rotation_onto(np.asarray(median)).compose(crop.view_rotation)
    translation = np.asarray(median) - rotation.apply(crop.points.centroid()[None, :])[0]
    return RigidTransform(rotation=rotation.rotation, translation=tuple(translation))


def evaluate_hypothesis(
    crop: ModelCrop,
    init: RigidTransform,
    scene: PointCloud,
    scene_tree: KdTree,
    cfg: PipelineConfig,
) -> Hypothesis:
    """Refine ``init`` with ICP and score the result; ICP failure scores 0."""
    try:
        result = icp(crop.points, scene, init, cfg.acquisition_icp(), target_tree=scene_tree)
    except PoseEngineError as e:
        logger.debug(f"Hypothesis {crop.crop_id} failed: {e}")
        return Hypothesis(crop.crop_id, init, init, AlignmentScore.zero(len(crop)), None, str(e))
    moved = apply_transform(result.transform, crop.points)
    score = alignment_score(moved, scene_tree, cfg.tau)
    return Hypothesis(crop.crop_id, init, result.transform, score, result)


def acquire(
    object_cloud: PointCloud,
    crops: Sequence[ModelCrop],
    cfg: PipelineConfig,
    pool: Optional[IWorkerPool] = None,
    scene_tree: Optional[KdTree] = None,
) -> AcquisitionResult:
    """Evaluate every crop against ``object_cloud``; hypotheses sorted by score, then crop_id.

    Raises:
        EmptyCloudError: If the object cloud is empty.
        EmptyCropError: If no crop is given.
    """
    if object_cloud.is_empty:
        raise EmptyCloudError("Acquisition needs a non-empty object cloud")
    if not crops:
        raise EmptyCropError("Acquisition needs at least one crop")

    tree = scene_tree if scene_tree is not None else KdTree(object_cloud.points)
    median = median_position(object_cloud)

    def run(crop: ModelCrop) -> Hypothesis:
        return evaluate_hypothesis(crop, initial_pose(crop, median), object_cloud, tree, cfg)

    hypotheses = pool.map(run, crops) if pool is not None else [run(c) for c in crops]
    hypotheses.sort(key=lambda h: h.sort_key)
    best = hypotheses[0]
    logger.debug(f"Acquisition best crop {best.crop_id} score {best.score.value:.3f} of {len(hypotheses)}")
    return AcquisitionResult(tuple(hypotheses), median, cfg.epsilon)
