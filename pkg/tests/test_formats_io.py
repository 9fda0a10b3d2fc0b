"""Tests for image, config, frame-sequence and report files."""

import io
import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from multipose.core.exceptions import ConfigError, DimensionMismatchError
from multipose.core.geometry import RigidTransform
from multipose.core.models import CameraIntrinsics, CameraOdometry, NoiseModel, PipelineConfig, TrackingMode
from multipose.formats.configfile import (
    coerce_value,
    load_noise_model,
    load_pipeline_config,
    parse_key_values,
    read_intrinsics,
    write_intrinsics,
    write_pipeline_config,
)
from multipose.formats.frames import FrameSequence, FrameSequenceWriter, ObjectListing
from multipose.formats.images import read_depth, read_labels, write_depth, write_labels
from multipose.formats.reports import (
    FRAME_CSV_COLUMNS,
    format_summary,
    frame_rows,
    read_jsonl,
    strip_timings,
    write_csv,
    write_jsonl,
)
from multipose.scene.ingest import DepthImage, LabelImage
from multipose.services.frame_processor import FrameReport, ObjectReport

K = CameraIntrinsics(fx=100.0, fy=100.0, cx=4.0, cy=3.0, width=8, height=6)


def depth_ramp() -> np.ndarray:
    depth = (500 + np.arange(48).reshape(6, 8) * 7) / 1000.0
    depth[0, 0] = 0.0
    return depth


def sample_report(frame: int = 0) -> FrameReport:
    pose = RigidTransform.from_axis_angle((0.0, 0.0, 1.0), 30.0, (0.1, -0.2, 0.9))
    objects = (
        ObjectReport(frame, 1, "box", "acquired", TrackingMode.TRACKING, pose, 0.9, 1e-4, 3, 250,
                     {"acquisition_ms": 12.3456}),
        ObjectReport(frame, 2, "mug", "failed", TrackingMode.ACQUISITION, error="no correspondences"),
    )
    return FrameReport(frame, objects, {"ingest_ms": 1.0, "total_ms": 14.0})


def test_depth_png_round_trip_in_millimeters(tmp_path):
    """Test that PNG depth is stored in whole millimeters."""
    path = tmp_path / "depth.png"
    write_depth(path, DepthImage(depth_ramp() + 0.0004))
    loaded = read_depth(path)
    assert loaded.shape == (6, 8)
    assert np.allclose(loaded.depth, depth_ramp(), atol=1e-12)
    assert loaded.depth[0, 0] == 0.0


def test_depth_png_invalid_pixels_become_zero(tmp_path):
    """Test that NaN depth is written as the invalid value."""
    depth = depth_ramp()
    depth[2, 3] = np.nan
    path = tmp_path / "depth.png"
    write_depth(path, DepthImage(depth))
    assert read_depth(path).depth[2, 3] == 0.0


def test_depth_tiff_keeps_meters(tmp_path):
    """Test float TIFF depth."""
    depth = depth_ramp() + 0.00037
    path = tmp_path / "depth.tiff"
    write_depth(path, DepthImage(depth))
    assert np.allclose(read_depth(path).depth, depth, atol=1e-6)


def test_labels_round_trip(tmp_path):
    """Test 8-bit label images."""
    labels = np.zeros((6, 8), dtype=np.int32)
    labels[1:3, 2:5] = 2
    labels[4, :] = 255
    path = tmp_path / "labels.png"
    write_labels(path, LabelImage(labels))
    assert np.array_equal(read_labels(path).labels, labels)


def test_labels_out_of_range(tmp_path):
    """Test that class ids above 255 cannot be written."""
    labels = np.zeros((6, 8), dtype=np.int32)
    labels[0, 0] = 300
    with pytest.raises(DimensionMismatchError):
        write_labels(tmp_path / "labels.png", LabelImage(labels))


def test_missing_images(tmp_path):
    """Test missing image files."""
    with pytest.raises(FileNotFoundError):
        read_depth(tmp_path / "nope.png")
    with pytest.raises(FileNotFoundError):
        read_labels(tmp_path / "nope.png")


def test_parse_key_values():
    """Test key=value parsing with comments and blank lines."""
    text = "# camera\nfx = 525.0\n\nfy=525\n"
    assert parse_key_values(text, "cam.txt") == {"fx": "525.0", "fy": "525"}


def test_parse_key_values_errors():
    """Test malformed and duplicate lines."""
    with pytest.raises(ConfigError, match="expected key=value"):
        parse_key_values("fx 525", "cam.txt")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_key_values("fx=1\nfx=2", "cam.txt")


def test_coerce_value():
    """Test typed conversion of config strings."""
    assert coerce_value("n_crops", "12", int) == 12
    assert coerce_value("tau", "0.02", float) == 0.02
    assert coerce_value("warm_start", "false", bool) is False
    with pytest.raises(ConfigError):
        coerce_value("n_crops", "twelve", int)


def test_intrinsics_round_trip(tmp_path):
    """Test writing and reading intrinsics."""
    path = tmp_path / "intrinsics.txt"
    write_intrinsics(path, K)
    assert read_intrinsics(path) == K


def test_intrinsics_incomplete(tmp_path):
    """Test that a missing key is a config error."""
    path = tmp_path / "intrinsics.txt"
    path.write_text("fx=1\nfy=1\ncx=0\ncy=0\nwidth=4\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        read_intrinsics(path)
    with pytest.raises(FileNotFoundError):
        read_intrinsics(tmp_path / "missing.txt")


def test_pipeline_config_defaults_for_missing_keys(tmp_path):
    """Test that only listed keys override the defaults."""
    path = tmp_path / "pipeline.ini"
    path.write_text("[pipeline]\nepsilon = 0.6\nn_crops = 12\n\n[noise]\ndepth_sigma = 0.004\n", encoding="utf-8")
    cfg = load_pipeline_config(path)
    assert cfg == replace(PipelineConfig(), epsilon=0.6, n_crops=12)
    assert load_noise_model(path) == replace(NoiseModel(), depth_sigma=0.004)


def test_pipeline_config_round_trip(tmp_path):
    """Test that a written config reads back unchanged."""
    cfg = replace(PipelineConfig(), tau=0.015, warm_start=False, seed=7)
    path = tmp_path / "pipeline.ini"
    write_pipeline_config(path, cfg)
    assert load_pipeline_config(path) == cfg


@pytest.mark.parametrize("text", [
    "[pipeline]\nepsilonn = 0.6\n",
    "[pipeline]\nepsilon = high\n",
    "[pipeline]\nepsilon = 1.5\n",
    "[tracking]\ntheta = 0.5\n",
    "not an ini file\n",
])
def test_pipeline_config_errors(tmp_path, text):
    """Test unknown keys, bad values, out-of-range values, unknown sections and bad syntax."""
    path = tmp_path / "pipeline.ini"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ConfigError):
        load_pipeline_config(path)


def test_frame_sequence_round_trip(tmp_path):
    """Test writing a two-frame sequence and reading it back."""
    labels = np.zeros((6, 8), dtype=np.int32)
    labels[2:4, 2:6] = 1
    motion = CameraOdometry(RigidTransform.from_axis_angle((0.0, 1.0, 0.0), 2.0, (0.01, 0.0, 0.0)), 0.05)
    truth = RigidTransform.from_translation((0.0, 0.0, 0.6))

    writer = FrameSequenceWriter(tmp_path, K)
    writer.write_objects([ObjectListing(1, "box", Path("box.ply"))])
    writer.add_frame(0, DepthImage(depth_ramp()), LabelImage(labels), None, {1: truth})
    writer.add_frame(1, DepthImage(depth_ramp()), LabelImage(labels), motion, {1: truth})
    writer.close()

    sequence = FrameSequence(tmp_path)
    assert len(sequence) == 2
    assert sequence.intrinsics == K
    assert sequence.objects() == [ObjectListing(1, "box", tmp_path / "box.ply")]
    frames = list(sequence)
    assert [f.index for f in frames] == [0, 1]
    assert frames[0].odometry is None
    assert frames[1].odometry.dt == 0.05
    assert np.allclose(frames[1].odometry.motion.to_tuple(), motion.motion.to_tuple())
    assert np.array_equal(frames[1].labels.labels, labels)
    assert np.allclose(frames[1].depth.depth, depth_ramp())
    recorded = sequence.truth()
    assert sorted(recorded) == [(0, 1), (1, 1)]
    assert np.allclose(recorded[(1, 1)].to_tuple(), truth.to_tuple())


def test_frame_sequence_bad_odometry(tmp_path):
    """Test a malformed odometry line."""
    writer = FrameSequenceWriter(tmp_path, K)
    writer.close()
    (tmp_path / "odometry.txt").write_text("1 0 0 0 0 0 0\n1 0 0\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="expected 7 or 8"):
        FrameSequence(tmp_path)


def test_frame_sequence_missing_directory(tmp_path):
    """Test opening a directory that does not exist."""
    with pytest.raises(FileNotFoundError):
        FrameSequence(tmp_path / "absent")


def test_write_jsonl():
    """Test one sorted-key JSON line per frame."""
    stream = io.StringIO()
    assert write_jsonl(stream, [sample_report(0), sample_report(1)]) == 2
    lines = stream.getvalue().splitlines()
    assert len(lines) == 2
    record = json.loads(lines[0])
    assert record["frame"] == 0
    first, second = record["objects"]
    assert first["mode"] == "tracking"
    assert first["crop_id"] == 3
    assert len(first["pose"]) == 7
    assert first["timings"] == {"acquisition_ms": 12.346}
    assert second["pose"] is None
    assert second["error"] == "no correspondences"
    assert "error" not in first


def test_write_jsonl_without_timing(tmp_path):
    """Test that timing fields can be left out and stripped."""
    path = tmp_path / "out.jsonl"
    with open(path, "w", encoding="utf-8") as f:
        write_jsonl(f, [sample_report()], include_timing=False)
    plain = read_jsonl(path)
    assert "timings" not in plain[0]
    assert all("timings" not in o for o in plain[0]["objects"])

    stream = io.StringIO()
    write_jsonl(stream, [sample_report()])
    assert strip_timings(json.loads(stream.getvalue())) == plain[0]


def test_write_csv():
    """Test CSV rows, one per object, empty cells for missing values."""
    stream = io.StringIO()
    write_csv(stream, FRAME_CSV_COLUMNS, frame_rows(sample_report(4)))
    lines = stream.getvalue().splitlines()
    assert lines[0] == ",".join(FRAME_CSV_COLUMNS)
    assert len(lines) == 3
    box = dict(zip(FRAME_CSV_COLUMNS, lines[1].split(",")))
    assert box["frame"] == "4"
    assert box["status"] == "acquired"
    assert box["tracking_ms"] == ""
    mug = dict(zip(FRAME_CSV_COLUMNS, lines[2].split(",")))
    assert mug["qw"] == ""
    assert mug["error"] == "no correspondences"


def test_format_summary():
    """Test key=value summary lines."""
    text = format_summary({"scenes": 3, "success_rate": 2.0 / 3.0, "method": "multi"})
    assert text == "scenes=3\nsuccess_rate=0.666667\nmethod=multi\n"
