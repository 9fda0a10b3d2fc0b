"""Point-to-point ICP with a closed-form rigid fit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from multipose.core.exceptions import (
    DegenerateConfigurationError,
    EmptyCloudError,
    NoCorrespondencesError,
)
from multipose.core.geometry import PointCloud, RigidTransform
from multipose.core.models import IcpParams
from multipose.spatial.kdtree import KdTree
from multipose.utils.log import get_logger

logger = get_logger(__name__)

# singular-value ratio below which the centred source spans at most a line
_COLLINEAR_RATIO = 1e-9


@dataclass(frozen=True)
class IcpResult:
    """Outcome of one ICP run."""

    transform: RigidTransform
    """Source-to-target transform."""

    fitness: float
    """Mean squared correspondence distance over the final inliers (m^2)."""

    iterations: int
    """Iterations performed."""

    converged: bool
    """True when the last increment fell below both epsilons."""

    inlier_count: int
    """Correspondences within the gate at the final transform."""

    fitness_history: tuple[float, ...] = field(default=(), repr=False)
    """Mean squared correspondence distance at each iteration's matching step."""


def best_rigid_transform(source_pts: np.ndarray, target_pts: np.ndarray) -> RigidTransform:
    """Least-squares rigid transform taking ``source_pts`` onto ``target_pts``.

    Centroid subtraction followed by an SVD of the cross-covariance; the last
    singular direction is flipped when needed so the rotation is proper.
    """
    src = np.asarray(source_pts, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(target_pts, dtype=np.float64).reshape(-1, 3)
    if src.shape != dst.shape:
        raise DegenerateConfigurationError(
            f"Point lists differ in length: {src.shape[0]} vs {dst.shape[0]}"
        )
    if src.shape[0] < 3:
        raise DegenerateConfigurationError(f"Need at least 3 point pairs, got {src.shape[0]}")

    src_mean = src.mean(axis=0)
    dst_mean = dst.mean(axis=0)
    src_c = src - src_mean
    dst_c = dst - dst_mean

    spread = np.linalg.svd(src_c, compute_uv=False)
    if spread[0] <= 0 or spread[1] <= _COLLINEAR_RATIO * spread[0]:
        raise DegenerateConfigurationError("Source points are collinear or coincident")

    u, _, vt = np.linalg.svd(src_c.T @ dst_c)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    correction = np.diag([1.0, 1.0, d if d != 0 else 1.0])
    rotation = vt.T @ correction @ u.T
    translation = dst_mean - rotation @ src_mean
    return RigidTransform.from_rotation_matrix(rotation, translation)


def fitness_score(
    source: PointCloud,
    target_tree: KdTree,
    transform: RigidTransform,
    max_dist: float,
) -> float:
    """Mean squared nearest-neighbour distance over pairs within ``max_dist``.

    Returns ``inf`` when no source point has a neighbour within the gate.
    """
    if source.is_empty:
        return math.inf
    _, dist = target_tree.nearest_many(transform.apply(source.points))
    inliers = dist <= max_dist
    if not np.any(inliers):
        return math.inf
    return float(np.mean(dist[inliers] ** 2))


def _increment_size(delta: RigidTransform) -> tuple[float, float]:
    translation = float(np.linalg.norm(delta.translation))
    w = min(1.0, abs(delta.rotation[0]))
    return translation, math.degrees(2.0 * math.acos(w))


def icp(
    source: PointCloud,
    target: PointCloud,
    init: RigidTransform,
    params: IcpParams,
    target_tree: Optional[KdTree] = None,
) -> IcpResult:
    """Register ``source`` onto ``target`` starting from ``init``.

    Raises:
        EmptyCloudError: If the source has fewer than 3 points or the target is empty.
        NoCorrespondencesError: If an iteration finds no inlier at all.
    """
    if len(source) < 3:
        raise EmptyCloudError(f"ICP source needs at least 3 points, got {len(source)}")
    if target.is_empty:
        raise EmptyCloudError("ICP target is empty")
    tree = target_tree if target_tree is not None else KdTree(target.points)
    target_pts = tree.points

    transform = init
    history: list[float] = []
    converged = False
    iterations = 0

    for iteration in range(1, params.max_iterations + 1):
        iterations = iteration
        moved = transform.apply(source.points)
        idx, dist = tree.nearest_many(moved)
        inliers = dist <= params.max_correspondence_distance
        count = int(np.count_nonzero(inliers))
        if count == 0:
            raise NoCorrespondencesError("No correspondences within the gate", iteration)

        error = float(np.mean(dist[inliers] ** 2))
        if history and error > history[-1]:
            logger.debug(
                f"ICP fitness rose at iteration {iteration} ({len(source)} source points, "
                f"{count} inliers, {len(target_pts)} target points): {history[-1]:.3e} -> {error:.3e}"
            )
        history.append(error)

        src_in = moved[inliers]
        dst_in = target_pts[idx[inliers]]
        try:
            delta = best_rigid_transform(src_in, dst_in)
        except DegenerateConfigurationError:
            delta = RigidTransform.from_translation(dst_in.mean(axis=0) - src_in.mean(axis=0))
        transform = delta.compose(transform)

        step_t, step_r = _increment_size(delta)
        if step_t < params.translation_epsilon and step_r < params.rotation_epsilon:
            converged = True
            break

    _, final_dist = tree.nearest_many(transform.apply(source.points))
    final_inliers = final_dist <= params.max_correspondence_distance
    inlier_count = int(np.count_nonzero(final_inliers))
    fitness = float(np.mean(final_dist[final_inliers] ** 2)) if inlier_count else math.inf

    return IcpResult(
        transform=transform,
        fitness=fitness,
        iterations=iterations,
        converged=converged,
        inlier_count=inlier_count,
        fitness_history=tuple(history),
    )
