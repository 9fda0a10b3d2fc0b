"""Kalman-filtered tracking of one object's pose.

The filter is error-state with a 12-dimensional error
``[dp, dtheta, dv, domega]``: position and orientation errors (orientation as
a left perturbation ``R = Exp(dtheta) R_nominal``) followed by the linear and
angular velocity errors. Everything is expressed in the current camera frame.
The process model is constant velocity driven by white acceleration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation

from multipose.core.exceptions import PoseEngineError
from multipose.core.geometry import PointCloud, RigidTransform, apply_transform
from multipose.core.models import CameraOdometry, PipelineConfig, TrackingMode
from multipose.library.crops import ModelCrop
from multipose.registration.alignment import AlignmentScore, alignment_score
from multipose.registration.icp import icp
from multipose.spatial.kdtree import KdTree
from multipose.utils.log import get_logger

logger = get_logger(__name__)

STATE_DIM = 12
_P, _TH, _V, _W = slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12)
_I3 = np.eye(3)


@dataclass(frozen=True, eq=False)
class TrackState:
    """Filter state of one object."""

    pose: RigidTransform
    """Object-to-camera pose."""

    linear_velocity: np.ndarray
    """(3,) m/s in the camera frame."""

    angular_velocity: np.ndarray
    """(3,) rad/s in the camera frame."""

    covariance: np.ndarray
    """(12, 12) error-state covariance."""

    mode: TrackingMode = TrackingMode.TRACKING
    active_crop_id: int = -1
    last_score: float = 0.0
    updated: bool = False
    """Whether the most recent step applied a measurement update."""

    def position_variance(self) -> float:
        """Trace of the position covariance block (m^2)."""
        return float(np.trace(self.covariance[_P, _P]))


def start_tracking(pose: RigidTransform, crop_id: int, score: float, cfg: PipelineConfig) -> TrackState:
    """Fresh tracking state at an accepted acquisition pose, at rest."""
    sigmas = np.concatenate([
        np.full(3, cfg.initial_position_sigma),
        np.full(3, math.radians(cfg.initial_rotation_sigma)),
        np.full(3, cfg.initial_linear_velocity_sigma),
        np.full(3, cfg.initial_angular_velocity_sigma),
    ])
    return TrackState(
        pose=pose,
        linear_velocity=np.zeros(3),
        angular_velocity=np.zeros(3),
        covariance=np.diag(sigmas ** 2),
        mode=TrackingMode.TRACKING,
        active_crop_id=crop_id,
        last_score=score,
        updated=True,
    )


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


def process_noise(dt: float, cfg: PipelineConfig) -> np.ndarray:
    """Discrete white-acceleration noise for one step of length ``dt``, plus odometry noise."""
    q = np.zeros((STATE_DIM, STATE_DIM))
    for pos, vel, density in ((_P, _V, cfg.process_noise_linear), (_TH, _W, cfg.process_noise_angular)):
        q[pos, pos] = density * dt ** 3 / 3.0 * _I3
        q[pos, vel] = density * dt ** 2 / 2.0 * _I3
        q[vel, pos] = density * dt ** 2 / 2.0 * _I3
        q[vel, vel] = density * dt * _I3
    q[_P, _P] += cfg.odometry_position_sigma ** 2 * _I3
    q[_TH, _TH] += math.radians(cfg.odometry_rotation_sigma) ** 2 * _I3
    return q


def kalman_predict(state: TrackState, odom: CameraOdometry, cfg: PipelineConfig) -> TrackState:
    """Move the state into the new camera frame, then advance it by one constant-velocity step."""
    dt = odom.dt
    a = odom.motion.rotation_matrix.T
    in_new_frame = odom.motion.inverse().compose(state.pose)
    v = a @ state.linear_velocity
    w = a @ state.angular_velocity

    spin = Rotation.from_rotvec(w * dt)
    rotation = spin * in_new_frame.as_rotation()
    translation = in_new_frame.translation_vector + v * dt
    pose = RigidTransform.from_rotation(rotation, translation)

    frame = np.kron(np.eye(4), a)
    motion = np.eye(STATE_DIM)
    motion[_P, _V] = dt * _I3
    motion[_TH, _TH] = spin.as_matrix()
    motion[_TH, _W] = dt * _I3
    f = motion @ frame
    covariance = _symmetrize(f @ state.covariance @ f.T + process_noise(dt, cfg))
    return replace(state, pose=pose, linear_velocity=v, angular_velocity=w, covariance=covariance, updated=False)


def measurement_noise(score: float, cfg: PipelineConfig) -> np.ndarray:
    """Base noise inflated by the inverse square of the floored score."""
    scale = 1.0 / max(score, cfg.score_floor) ** 2
    sigmas = np.concatenate([
        np.full(3, cfg.measurement_position_sigma),
        np.full(3, cfg.measurement_rotation_sigma_rad),
    ])
    return np.diag(sigmas ** 2) * scale


def kalman_update(
    state: TrackState,
    measured_pose: RigidTransform,
    score: AlignmentScore | float,
    cfg: PipelineConfig,
    noise: Optional[np.ndarray] = None,
) -> TrackState:
    """Fuse a registered pose as a 6-D measurement of position and orientation.

    ``noise`` overrides the score-derived measurement covariance.
    """
    value = score.value if isinstance(score, AlignmentScore) else float(score)
    r = measurement_noise(value, cfg) if noise is None else np.asarray(noise, dtype=np.float64)

    residual = np.concatenate([
        measured_pose.translation_vector - state.pose.translation_vector,
        (measured_pose.as_rotation() * state.pose.as_rotation().inv()).as_rotvec(),
    ])
    h = np.zeros((6, STATE_DIM))
    h[:, :6] = np.eye(6)
    p = state.covariance
    s = h @ p @ h.T + r
    gain = np.linalg.solve(s, h @ p).T
    dx = gain @ residual
    joseph = np.eye(STATE_DIM) - gain @ h
    covariance = _symmetrize(joseph @ p @ joseph.T + gain @ r @ gain.T)

    rotation = Rotation.from_rotvec(dx[_TH]) * state.pose.as_rotation()
    pose = RigidTransform.from_rotation(rotation, state.pose.translation_vector + dx[_P])
    return replace(
        state,
        pose=pose,
        linear_velocity=state.linear_velocity + dx[_V],
        angular_velocity=state.angular_velocity + dx[_W],
        covariance=covariance,
        last_score=value,
        updated=True,
    )


def position_variance_after(state: TrackState, steps: int, dt: float, cfg: PipelineConfig) -> float:
    """Closed-form position-variance trace after ``steps`` predictions without updates.

    Holds for any exact camera rotation because the frame change rotates every
    block alike and the noise is isotropic; assumes zero angular velocity.
    """
    t = steps * dt
    p = state.covariance
    return float(
        np.trace(p[_P, _P])
        + 2.0 * t * np.trace(p[_P, _V])
        + t * t * np.trace(p[_V, _V])
        + 3.0 * cfg.process_noise_linear * t ** 3 / 3.0
        + 3.0 * steps * cfg.odometry_position_sigma ** 2
    )


def steps_until_lost(state: TrackState, dt: float, cfg: PipelineConfig, limit: int = 1_000_000) -> int:
    """Fewest update-free predictions after which the position variance exceeds the limit."""
    for steps in range(1, limit + 1):
        if position_variance_after(state, steps, dt, cfg) > cfg.max_position_variance:
            return steps
    raise PoseEngineError(f"Position variance stays below the limit for {limit} steps")


def _check_lost(state: TrackState, cfg: PipelineConfig) -> TrackState:
    if state.position_variance() > cfg.max_position_variance:
        logger.info(
            f"Track lost (position variance {state.position_variance():.2e} m^2 > "
            f"{cfg.max_position_variance:.2e}); switching to acquisition"
        )
        return replace(state, mode=TrackingMode.ACQUISITION)
    return state


def coast(state: TrackState, odom: CameraOdometry, cfg: PipelineConfig) -> TrackState:
    """Prediction only, for a frame in which the object is not observed."""
    return _check_lost(replace(kalman_predict(state, odom, cfg), last_score=0.0), cfg)


def prune_to_model_box(scene: PointCloud, model_cloud: PointCloud, pose: RigidTransform, margin: float) -> PointCloud:
    """Scene points inside the camera-frame bounding box of the posed model, inflated by ``margin``."""
    if scene.is_empty:
        return scene
    placed = pose.apply(model_cloud.points)
    lo = placed.min(axis=0) - margin
    hi = placed.max(axis=0) + margin
    inside = np.all((scene.points >= lo) & (scene.points <= hi), axis=1)
    return scene.select(inside)


def track_step(
    state: TrackState,
    object_cloud: PointCloud,
    odom: CameraOdometry,
    crop: ModelCrop,
    model_cloud: PointCloud,
    cfg: PipelineConfig,
) -> TrackState:
    """Predict, prune, register from the prediction, and update when the score reaches theta.

    An empty pruned cloud or a failed registration counts as score 0.
    """
    predicted = kalman_predict(state, odom, cfg)
    pruned = prune_to_model_box(object_cloud, model_cloud, predicted.pose, cfg.bbox_margin)

    score = AlignmentScore.zero(len(crop))
    measured = predicted.pose
    if len(pruned) > 0:
        try:
            tree = KdTree(pruned.points)
            result = icp(crop.points, pruned, predicted.pose, cfg.tracking_icp(), target_tree=tree)
            measured = result.transform
            score = alignment_score(apply_transform(measured, crop.points), tree, cfg.tau)
        except PoseEngineError as e:
            logger.debug(f"Tracking registration failed: {e}")

    if score.value >= cfg.theta:
        return kalman_update(predicted, measured, score, cfg)
    return _check_lost(replace(predicted, last_score=score.value), cfg)
