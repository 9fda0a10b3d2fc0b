"""Tests for multi-hypothesis acquisition."""

from dataclasses import replace

import numpy as np
import pytest

from multipose.concurrency.worker import WorkerPool
from multipose.core.exceptions import EmptyCloudError, EmptyCropError
from multipose.core.geometry import PointCloud, RigidTransform, pose_error
from multipose.core.models import PipelineConfig
from multipose.library.crops import ModelCrop, build_object_model
from multipose.library.primitives import lblock
from multipose.services.acquisition import acquire, initial_pose

CFG = replace(PipelineConfig(), model_sample_count=8000)


@pytest.fixture(scope="module")
def lblock_model():
    return build_object_model(lblock(class_id=1), CFG)


def crop_of(points: np.ndarray, crop_id: int = 0) -> ModelCrop:
    return ModelCrop(crop_id, PointCloud(points), 0.0, 0.0, RigidTransform.identity(), 1)


def seen_as(crop: ModelCrop, centre=(0.02, -0.01, 0.7)) -> RigidTransform:
    """Pose at which the camera sees ``crop`` from its own viewpoint, centroid at ``centre``."""
    rotation = crop.view_rotation
    offset = np.asarray(centre) - rotation.apply(crop.points.centroid()[None, :])[0]
    return RigidTransform(rotation=rotation.rotation, translation=tuple(offset))


def test_recovers_noisy_crop(lblock_model):
    """Test that a noisy view of a known crop is acquired within 1 cm and 5 degrees."""
    rng = np.random.default_rng(0)
    crop = lblock_model.crop(7)
    truth = seen_as(crop)
    scene = PointCloud(truth.apply(crop.points.points) + rng.normal(scale=0.002, size=(len(crop), 3)))
    result = acquire(scene, lblock_model.crops, CFG)
    assert result.accepted
    assert result.best.score.value >= CFG.epsilon
    error = pose_error(result.best.refined_transform, truth)
    assert error.position_error < 0.01
    assert error.geodesic_angle < 5.0


def test_unrelated_cloud_is_not_accepted(lblock_model):
    """Test that a random blob never reaches epsilon."""
    rng = np.random.default_rng(1)
    scene = PointCloud(rng.uniform(-0.05, 0.05, size=(100, 3)) + [0.0, 0.0, 0.7])
    result = acquire(scene, lblock_model.crops, CFG)
    assert not result.accepted
    assert all(score < CFG.epsilon for score in result.scores().values())
    assert len(result.hypotheses) == CFG.n_crops


def test_identical_single_crop_scores_one():
    """Test a crop matched against itself."""
    points = np.random.default_rng(2).uniform(-0.5, 0.5, size=(500, 3)) * [0.1, 0.06, 0.03] + [0.0, 0.0, 0.7]
    result = acquire(PointCloud(points), [crop_of(points)], CFG)
    assert result.best.score.value == 1.0
    assert np.allclose(result.best.refined_transform.apply(points), points, atol=1e-6)


def test_initial_pose_centres_crop_on_median():
    """Test that the initial hypothesis puts the crop centroid on the scene median."""
    crop = crop_of(np.random.default_rng(3).normal(size=(50, 3)) * 0.02)
    median = np.array([0.1, -0.05, 0.8])
    init = initial_pose(crop, median)
    assert np.allclose(init.apply(crop.points.centroid()[None, :])[0], median)


def test_ranking_ties_go_to_lowest_crop_id():
    """Test the (score desc, crop_id asc) order."""
    points = np.random.default_rng(4).uniform(-0.05, 0.05, size=(300, 3)) + [0.0, 0.0, 0.6]
    result = acquire(PointCloud(points), [crop_of(points, 3), crop_of(points, 1)], CFG)
    assert [h.crop_id for h in result.hypotheses] == [1, 3]
    assert result.hypotheses[0].score == result.hypotheses[1].score


def test_failed_hypothesis_scores_zero():
    """Test that an ICP failure on one crop becomes a zero-score hypothesis."""
    points = np.random.default_rng(5).uniform(-0.05, 0.05, size=(300, 3)) + [0.0, 0.0, 0.6]
    tiny = crop_of(points[:2], 1)
    result = acquire(PointCloud(points), [crop_of(points, 0), tiny], CFG)
    failed = result.hypotheses[-1]
    assert failed.crop_id == 1
    assert failed.score.value == 0.0
    assert failed.error is not None
    assert failed.icp_result is None


def test_acquire_errors():
    """Test empty scene and empty crop list."""
    points = np.zeros((5, 3)) + [0.0, 0.0, 1.0]
    with pytest.raises(EmptyCloudError):
        acquire(PointCloud.empty(), [crop_of(points)], CFG)
    with pytest.raises(EmptyCropError):
        acquire(PointCloud(points), [], CFG)


def test_schedule_independence(lblock_model):
    """Test that one and four workers select identical hypotheses."""
    rng = np.random.default_rng(6)
    crop = lblock_model.crop(12)
    scene = PointCloud(seen_as(crop).apply(crop.points.points) + rng.normal(scale=0.002, size=(len(crop), 3)))
    serial = acquire(scene, lblock_model.crops, CFG)
    with WorkerPool(4) as pool:
        parallel = acquire(scene, lblock_model.crops, CFG, pool)
    assert [h.crop_id for h in serial.hypotheses] == [h.crop_id for h in parallel.hypotheses]
    for a, b in zip(serial.hypotheses, parallel.hypotheses):
        assert a.refined_transform.to_tuple() == b.refined_transform.to_tuple()
        assert a.score == b.score
