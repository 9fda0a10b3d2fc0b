"""Tests for the per-frame acquisition / tracking state machine."""

from dataclasses import replace

import numpy as np
import pytest

from multipose.bench.scene import desk_scene, render_scene
from multipose.concurrency.worker import WorkerPool
from multipose.core.exceptions import NoCorrespondencesError
from multipose.core.models import NoiseModel, PipelineConfig, TrackingMode
from multipose.core.registry import ObjectRegistry
from multipose.library.crops import build_object_model
from multipose.library.primitives import desk_objects
from multipose.scene.ingest import LabelImage
from multipose.services import frame_processor
from multipose.services.frame_processor import Frame, FrameProcessor, process_frame

# a loose epsilon so every desk object is acquired on the first frame
CFG = replace(PipelineConfig(), model_sample_count=8000, epsilon=0.3, theta=0.2)


@pytest.fixture(scope="module")
def models():
    return {cid: build_object_model(mesh, CFG) for cid, mesh in desk_objects().items()}


@pytest.fixture(scope="module")
def scene():
    return desk_scene("pipeline", desk_objects(), np.random.default_rng(3), frames=3, noise=NoiseModel.noiseless())


@pytest.fixture(scope="module")
def frames(scene):
    return [render_scene(scene, i).to_frame() for i in range(scene.frames)]


def fresh_registry(models) -> ObjectRegistry:
    registry = ObjectRegistry()
    for model in models.values():
        registry.register(model)
    return registry


def summary(report) -> list[tuple]:
    """Everything in a frame report except timings."""
    return [
        (o.class_id, o.status, o.mode, None if o.pose is None else o.pose.to_tuple(), o.score, o.crop_id, o.points)
        for o in report.objects
    ]


def test_three_objects_three_reports(models, scene, frames):
    """Test that every visible object gets its own report on the first frame."""
    report = process_frame(frames[0], fresh_registry(models), scene.intrinsics, CFG)
    assert [o.class_id for o in report.objects] == [1, 2, 3]
    for o in report.objects:
        assert o.status == "acquired"
        assert o.mode is TrackingMode.TRACKING
        assert o.points > 0
        assert "acquisition_ms" in o.timings
        assert o.error is None
    assert "total_ms" in report.timings


def test_unknown_classes_give_empty_report(models, scene, frames):
    """Test a frame whose labels match no registered object."""
    labels = LabelImage(np.where(frames[0].labels.labels > 0, 9, 0))
    report = process_frame(Frame(0, frames[0].depth, labels), fresh_registry(models), scene.intrinsics, CFG)
    assert report.objects == ()


def test_same_frame_same_state_same_report(models, scene, frames):
    """Test determinism of a frame processed twice from the same state."""
    a = process_frame(frames[0], fresh_registry(models), scene.intrinsics, CFG)
    b = process_frame(frames[0], fresh_registry(models), scene.intrinsics, CFG)
    assert summary(a) == summary(b)


def test_worker_count_does_not_change_reports(models, scene, frames):
    """Test that one and four workers give identical reports over a sequence."""
    serial = FrameProcessor(fresh_registry(models), scene.intrinsics, CFG)
    with WorkerPool(4) as pool:
        parallel = FrameProcessor(fresh_registry(models), scene.intrinsics, CFG, pool)
        for frame in frames:
            assert summary(serial.process(frame)) == summary(parallel.process(frame))


def test_acquired_objects_are_tracked(models, scene, frames):
    """Test the acquisition to tracking hand-over on later frames."""
    processor = FrameProcessor(fresh_registry(models), scene.intrinsics, CFG)
    processor.process(frames[0])
    for frame in frames[1:]:
        report = processor.process(frame)
        for o in report.objects:
            assert o.status == "tracking"
            assert o.mode is TrackingMode.TRACKING
            assert "tracking_ms" in o.timings
            assert o.position_variance is not None


def test_hidden_object_is_reported_occluded(models, scene, frames):
    """Test that a tracked object missing from the labels coasts on prediction."""
    processor = FrameProcessor(fresh_registry(models), scene.intrinsics, CFG)
    first = processor.process(frames[0])
    labels = LabelImage(np.where(frames[1].labels.labels == 2, 0, frames[1].labels.labels))
    report = processor.process(Frame(1, frames[1].depth, labels))
    occluded = report.for_class(2)
    assert occluded.status == "occluded"
    assert occluded.mode is TrackingMode.TRACKING
    assert np.allclose(occluded.pose.translation, first.for_class(2).pose.translation, atol=1e-9)
    assert report.for_class(1).status == "tracking"


def test_object_failure_does_not_abort_others(models, scene, frames, monkeypatch):
    """Test that a per-object error lands in that object's report only."""
    real_acquire = frame_processor.acquire

    def flaky(cloud, crops, cfg, pool=None, tree=None):
        if crops[0].source_class == 2:
            raise NoCorrespondencesError("forced", 1)
        return real_acquire(cloud, crops, cfg, pool, tree)

    monkeypatch.setattr(frame_processor, "acquire", flaky)
    registry = fresh_registry(models)
    report = process_frame(frames[0], registry, scene.intrinsics, CFG)
    failed = report.for_class(2)
    assert failed.status == "failed"
    assert "forced" in failed.error
    assert failed.mode is TrackingMode.ACQUISITION
    assert registry.get(2).state is None
    assert report.for_class(1).status == "acquired"
    assert report.for_class(3).status == "acquired"


def test_strict_epsilon_keeps_searching(models, scene, frames):
    """Test that an unreachable epsilon leaves every object in acquisition."""
    strict = replace(CFG, epsilon=1.0, theta=0.5)
    registry = fresh_registry(models)
    report = process_frame(frames[0], registry, scene.intrinsics, strict)
    for o in report.objects:
        assert o.status == "searching"
        assert o.mode is TrackingMode.ACQUISITION
        assert o.score < 1.0
    assert all(registry.get(cid).state is None for cid in registry.class_ids())


def test_registry_rules(models):
    """Test registration constraints and reset."""
    registry = fresh_registry(models)
    assert registry.class_ids() == [1, 2, 3]
    with pytest.raises(ValueError):
        registry.register(models[1])
    background = build_object_model(desk_objects()[1].with_label(0), replace(CFG, n_crops=1))
    with pytest.raises(ValueError):
        registry.register(background)
    registry.set_state(1, None, last_crop_id=4)
    assert registry.get(1).last_crop_id == 4
    registry.reset()
    assert registry.get(1).last_crop_id is None
    assert registry.count() == 3
