"""Report serialization: JSON lines per frame, CSV rows, key=value summaries."""

import csv
import io
import json
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence, TextIO

from multipose.services.frame_processor import FrameReport, ObjectReport

TIMING_KEYS = ("timings",)
"""Record keys holding the only nondeterministic values."""


def _round(value: float | None, digits: int = 9) -> float | None:
    return None if value is None else round(float(value), digits)


def object_record(report: ObjectReport, include_timing: bool = True) -> dict[str, Any]:
    record: dict[str, Any] = {
        "class_id": report.class_id,
        "name": report.name,
        "status": report.status,
        "mode": report.mode.value,
        "pose": None if report.pose is None else [_round(v) for v in report.pose.to_tuple()],
        "score": _round(report.score),
        "position_variance": _round(report.position_variance, 12),
        "crop_id": report.crop_id,
        "points": report.points,
    }
    if report.error is not None:
        record["error"] = report.error
    if include_timing:
        record["timings"] = {k: round(v, 3) for k, v in sorted(report.timings.items())}
    return record


def frame_record(report: FrameReport, include_timing: bool = True) -> dict[str, Any]:
    record: dict[str, Any] = {
        "frame": report.frame,
        "objects": [object_record(o, include_timing) for o in report.objects],
    }
    if include_timing:
        record["timings"] = {k: round(v, 3) for k, v in sorted(report.timings.items())}
    return record


def write_jsonl(stream: TextIO, reports: Iterable[FrameReport], include_timing: bool = True) -> int:
    """Write one JSON object per frame; returns the number of lines."""
    count = 0
    for report in reports:
        stream.write(json.dumps(frame_record(report, include_timing), sort_keys=True) + "\n")
        count += 1
    return count


def strip_timings(record: Any) -> Any:
    """Copy of a parsed record without timing fields, for determinism checks."""
    if isinstance(record, dict):
        return {k: strip_timings(v) for k, v in record.items() if k not in TIMING_KEYS}
    if isinstance(record, list):
        return [strip_timings(v) for v in record]
    return record


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


FRAME_CSV_COLUMNS = (
    "frame", "class_id", "name", "status", "mode",
    "qw", "qx", "qy", "qz", "tx", "ty", "tz",
    "score", "position_variance", "crop_id", "points", "acquisition_ms", "tracking_ms", "error",
)


def frame_rows(report: FrameReport) -> list[dict[str, Any]]:
    rows = []
    for o in report.objects:
        pose = o.pose.to_tuple() if o.pose is not None else (None,) * 7
        rows.append({
            "frame": report.frame, "class_id": o.class_id, "name": o.name, "status": o.status,
            "mode": o.mode.value,
            **dict(zip(("qw", "qx", "qy", "qz", "tx", "ty", "tz"), pose)),
            "score": o.score, "position_variance": o.position_variance, "crop_id": o.crop_id,
            "points": o.points,
            "acquisition_ms": o.timings.get("acquisition_ms"), "tracking_ms": o.timings.get("tracking_ms"),
            "error": o.error,
        })
    return rows


def write_csv(stream: TextIO, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> None:
    writer = csv.DictWriter(stream, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: "" if row.get(k) is None else row.get(k) for k in columns})


def format_summary(values: Mapping[str, Any]) -> str:
    """``key=value`` lines in insertion order."""
    out = io.StringIO()
    for key, value in values.items():
        if isinstance(value, float):
            value = f"{value:.6g}"
        out.write(f"{key}={value}\n")
    return out.getvalue()
