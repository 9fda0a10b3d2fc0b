"""Tests for the error-state Kalman filter and the tracking step."""

from dataclasses import replace

import numpy as np
import pytest

from multipose.core.geometry import PointCloud, RigidTransform, geodesic_angle
from multipose.core.models import CameraOdometry, PipelineConfig, TrackingMode
from multipose.library.crops import CropRenderer
from multipose.library.primitives import lblock
from multipose.registration.alignment import AlignmentScore
from multipose.services.tracking import (
    coast,
    kalman_predict,
    kalman_update,
    measurement_noise,
    position_variance_after,
    prune_to_model_box,
    start_tracking,
    steps_until_lost,
    track_step,
)

CFG = PipelineConfig()
DT = 1.0 / 30.0
STILL = CameraOdometry.stationary(DT)
TRUTH = RigidTransform.from_axis_angle((0.2, 1.0, 0.3), 40.0, (0.05, -0.02, 0.7))


def is_psd(p: np.ndarray) -> bool:
    return np.allclose(p, p.T, atol=1e-15) and np.linalg.eigvalsh(p).min() >= -1e-9


@pytest.fixture(scope="module")
def lblock_view():
    """A front crop of the L-block and the full model cloud."""
    renderer = CropRenderer(lblock(class_id=1), 8000, 0.005, seed=0)
    crop = renderer.render(0, np.array([0.3, -0.8, 0.5]))
    return crop, renderer.cloud


def test_start_tracking_state():
    """Test the initial covariance and mode."""
    state = start_tracking(TRUTH, 4, 0.9, CFG)
    assert state.mode is TrackingMode.TRACKING
    assert state.active_crop_id == 4
    assert state.covariance.shape == (12, 12)
    assert state.position_variance() == pytest.approx(3 * CFG.initial_position_sigma ** 2)
    assert is_psd(state.covariance)


def test_predict_static_keeps_pose_and_grows_covariance():
    """Test zero odometry and zero velocity."""
    state = start_tracking(TRUTH, 0, 1.0, CFG)
    predicted = kalman_predict(state, STILL, CFG)
    assert np.allclose(predicted.pose.translation, TRUTH.translation, atol=1e-12)
    assert geodesic_angle(predicted.pose, TRUTH) < 1e-6
    assert np.trace(predicted.covariance) > np.trace(state.covariance)
    assert predicted.position_variance() > state.position_variance()
    assert not predicted.updated


def test_predict_camera_backs_away():
    """Test that a camera moving back 10 cm pushes a static object 10 cm deeper."""
    state = start_tracking(TRUTH, 0, 1.0, CFG)
    odom = CameraOdometry(RigidTransform.from_translation((0.0, 0.0, -0.1)), DT)
    predicted = kalman_predict(state, odom, CFG)
    assert np.allclose(np.subtract(predicted.pose.translation, TRUTH.translation), [0.0, 0.0, 0.1], atol=1e-12)


def test_predict_camera_rotation_rotates_velocity():
    """Test that velocities are re-expressed in the new camera frame."""
    state = replace(start_tracking(TRUTH, 0, 1.0, CFG), linear_velocity=np.array([1.0, 0.0, 0.0]))
    turn = RigidTransform.from_axis_angle((0.0, 0.0, 1.0), 90.0)
    predicted = kalman_predict(state, CameraOdometry(turn, DT), CFG)
    assert np.allclose(predicted.linear_velocity, [0.0, -1.0, 0.0], atol=1e-12)


def test_predict_advances_by_velocity():
    """Test the constant-velocity step."""
    state = replace(start_tracking(TRUTH, 0, 1.0, CFG), linear_velocity=np.array([0.3, 0.0, 0.0]))
    predicted = kalman_predict(state, CameraOdometry.stationary(0.1), CFG)
    assert predicted.pose.translation[0] == pytest.approx(TRUTH.translation[0] + 0.03)


def test_position_variance_closed_form():
    """Test the closed-form variance growth against repeated predictions."""
    state = start_tracking(TRUTH, 0, 1.0, CFG)
    simulated = state
    turn = CameraOdometry(RigidTransform.from_axis_angle((1.0, 1.0, 0.0), 3.0, (0.01, 0.0, 0.0)), DT)
    for steps in range(1, 40):
        simulated = kalman_predict(simulated, turn, CFG)
        assert simulated.position_variance() == pytest.approx(position_variance_after(state, steps, DT, CFG), rel=1e-9)


def test_variance_exceeds_limit_after_finite_steps():
    """Test that coasting eventually loses the track at the predicted step."""
    state = start_tracking(TRUTH, 0, 1.0, CFG)
    limit = steps_until_lost(state, DT, CFG)
    for _ in range(limit - 1):
        state = coast(state, STILL, CFG)
        assert state.mode is TrackingMode.TRACKING
    state = coast(state, STILL, CFG)
    assert state.mode is TrackingMode.ACQUISITION
    assert state.position_variance() > CFG.max_position_variance


def test_update_with_predicted_pose_is_a_no_op():
    """Test that a measurement equal to the prediction leaves the state unchanged."""
    state = kalman_predict(start_tracking(TRUTH, 0, 1.0, CFG), STILL, CFG)
    updated = kalman_update(state, state.pose, 1.0, CFG, noise=np.eye(6) * 1e-12)
    assert np.allclose(updated.pose.translation, state.pose.translation, atol=1e-9)
    assert geodesic_angle(updated.pose, state.pose) < 1e-6
    assert np.allclose(updated.linear_velocity, 0.0, atol=1e-9)
    assert updated.updated


def test_repeated_measurements_converge():
    """Test the fixed point of repeated identical measurements."""
    state = start_tracking(TRUTH, 0, 1.0, CFG)
    target = RigidTransform.from_axis_angle((0.0, 0.0, 1.0), 2.0).compose(
        RigidTransform.from_translation((0.01, 0.0, 0.0))).compose(TRUTH)
    traces = [np.trace(state.covariance)]
    for _ in range(50):
        state = kalman_update(state, target, AlignmentScore(1.0, 10, 10), CFG)
        traces.append(np.trace(state.covariance))
        assert is_psd(state.covariance)
    assert np.all(np.diff(traces) < 0.0)
    assert np.linalg.norm(np.subtract(state.pose.translation, target.translation)) < 1e-3
    assert geodesic_angle(state.pose, target) < 0.1


def test_update_matches_scalar_recursion():
    """Test the x-position channel against a hand-run scalar Kalman filter."""
    state = start_tracking(RigidTransform.identity(), 0, 1.0, CFG)
    r = 4e-4
    noise = np.diag([r, 1.0, 1.0, 1.0, 1.0, 1.0])
    x, p = 0.0, CFG.initial_position_sigma ** 2
    for z in (0.02, -0.01, 0.015, 0.0, 0.03):
        state = kalman_update(state, RigidTransform.from_translation((z, 0.0, 0.0)), 1.0, CFG, noise=noise)
        k = p / (p + r)
        x += k * (z - x)
        p *= 1.0 - k
        assert state.pose.translation[0] == pytest.approx(x, abs=1e-9)
        assert state.covariance[0, 0] == pytest.approx(p, abs=1e-9)


def test_measurement_noise_scales_with_score():
    """Test the inverse-square law and the score floor."""
    base = measurement_noise(1.0, CFG)
    assert np.allclose(measurement_noise(0.5, CFG), 4.0 * base)
    assert np.allclose(measurement_noise(0.01, CFG), measurement_noise(CFG.score_floor, CFG))
    assert base[0, 0] == pytest.approx(CFG.measurement_position_sigma ** 2)


def test_covariance_stays_psd():
    """Test symmetry and positive semi-definiteness through mixed steps."""
    rng = np.random.default_rng(0)
    state = start_tracking(TRUTH, 0, 1.0, CFG)
    for i in range(100):
        motion = RigidTransform.from_rotvec(rng.normal(scale=0.05, size=3), rng.normal(scale=0.01, size=3))
        state = kalman_predict(state, CameraOdometry(motion, DT), CFG)
        if i % 3:
            measured = RigidTransform.from_rotvec(rng.normal(scale=0.01, size=3), rng.normal(scale=0.005, size=3))
            state = kalman_update(state, measured.compose(state.pose), rng.uniform(0.0, 1.0), CFG)
        assert is_psd(state.covariance)


def test_prune_to_model_box():
    """Test that scene points outside the inflated model box are dropped."""
    model = PointCloud(np.array([[0.0, 0.0, 0.0], [0.1, 0.1, 0.1]]))
    scene = PointCloud(np.array([[0.05, 0.05, 1.05], [0.11, 0.0, 1.0], [0.2, 0.0, 1.0], [0.0, 0.0, 0.5]]))
    pruned = prune_to_model_box(scene, model, RigidTransform.from_translation((0.0, 0.0, 1.0)), 0.02)
    assert np.array_equal(pruned.points, scene.points[:2])


def test_track_step_converges_on_static_scene(lblock_view):
    """Test that repeated frames of a static object pull the track onto the truth."""
    crop, model_cloud = lblock_view
    scene = PointCloud(TRUTH.apply(crop.points.points))
    start = RigidTransform.from_axis_angle((1.0, 0.0, 0.0), 3.0, (0.008, 0.0, 0.0)).compose(TRUTH)
    state = start_tracking(start, crop.crop_id, 1.0, CFG)
    errors = []
    for _ in range(10):
        state = track_step(state, scene, STILL, crop, model_cloud, CFG)
        assert state.updated
        assert state.last_score >= CFG.theta
        errors.append(np.linalg.norm(np.subtract(state.pose.translation, TRUTH.translation)))
    assert errors[-1] < 0.01
    assert errors[-1] <= errors[0]
    assert geodesic_angle(state.pose, TRUTH) < 5.0


def test_track_step_without_points_coasts(lblock_view):
    """Test that an empty cloud skips the update."""
    crop, model_cloud = lblock_view
    state = start_tracking(TRUTH, crop.crop_id, 1.0, CFG)
    after = track_step(state, PointCloud.empty(), STILL, crop, model_cloud, CFG)
    assert not after.updated
    assert after.last_score == 0.0
    assert after.mode is TrackingMode.TRACKING


# error bound at reappearance, in standard deviations of the accumulated position uncertainty
OCCLUSION_K = 1.0


def test_occlusion_then_reappearance(lblock_view):
    """Test a 10-frame occlusion under camera motion: the coasted error stays within the process-noise bound."""
    crop, model_cloud = lblock_view
    motion = CameraOdometry(RigidTransform.from_axis_angle((0.0, 1.0, 0.0), 1.0, (0.004, 0.0, 0.0)), DT)
    velocity = np.array([0.03, 0.0, -0.02])
    sigma_v = CFG.initial_linear_velocity_sigma

    def truth_at(frame: int, camera: RigidTransform) -> RigidTransform:
        world = RigidTransform.from_translation(velocity * frame * DT).compose(TRUTH)
        return camera.inverse().compose(world)

    # the filter's velocity is off by 1.5 sigma, so the coasted pose drifts
    start = replace(start_tracking(TRUTH, crop.crop_id, 1.0, CFG),
                    linear_velocity=velocity + sigma_v * np.array([1.0, -1.0, 0.5]))
    state = start
    camera = RigidTransform.identity()
    for _ in range(10):
        camera = camera.compose(motion.motion)
        state = track_step(state, PointCloud.empty(), motion, crop, model_cloud, CFG)
    assert state.mode is TrackingMode.TRACKING
    assert not state.updated

    truth = truth_at(10, camera)
    bound = position_variance_after(start, 10, DT, CFG)
    assert state.position_variance() == pytest.approx(bound, rel=1e-9)
    drift = np.linalg.norm(np.subtract(state.pose.translation, truth.translation))
    assert 0.005 < drift <= OCCLUSION_K * np.sqrt(bound)
    assert geodesic_angle(state.pose, truth) < 1e-5

    camera = camera.compose(motion.motion)
    truth = truth_at(11, camera)
    state = track_step(state, PointCloud(truth.apply(crop.points.points)), motion, crop, model_cloud, CFG)
    assert state.updated
    assert np.linalg.norm(np.subtract(state.pose.translation, truth.translation)) < 0.005


def test_persistent_occlusion_returns_to_acquisition(lblock_view):
    """Test the variance rule during a long occlusion."""
    crop, model_cloud = lblock_view
    state = start_tracking(TRUTH, crop.crop_id, 1.0, CFG)
    limit = steps_until_lost(state, DT, CFG)
    for _ in range(limit):
        state = track_step(state, PointCloud.empty(), STILL, crop, model_cloud, CFG)
    assert state.mode is TrackingMode.ACQUISITION
