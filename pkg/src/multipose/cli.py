"""Command-line entry point.

Exit codes: 0 success, 1 acceptance failure (``bench``), 2 usage, I/O or
configuration error. The last lines on stdout are a ``key=value`` summary.
"""

import argparse
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from multipose import __version__
from multipose.api.estimator import PoseEstimator
from multipose.bench.metrics import write_comparison_csv, write_records_csv, write_records_jsonl
from multipose.bench.runner import SUITES, run_benchmark, run_comparison, suite
from multipose.bench.scene import SceneSpec, desk_scene, load_scene_spec, render_scene, write_scene_spec
from multipose.concurrency.worker import WorkerPool
from multipose.core.exceptions import ConfigError, PoseEngineError
from multipose.core.geometry import pose_error
from multipose.core.models import PipelineConfig
from multipose.formats import load_mesh, save_mesh
from multipose.formats.configfile import load_pipeline_config
from multipose.formats.frames import FrameSequence, FrameSequenceWriter, ObjectListing
from multipose.formats.reports import FRAME_CSV_COLUMNS, format_summary, frame_rows, write_csv, write_jsonl
from multipose.library.crops import CropCache
from multipose.library.primitives import desk_objects
from multipose.utils.log import configure_logging, get_logger

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_ERROR = 2


@dataclass(frozen=True)
class RunManifest:
    """Resolved inputs of one ``run`` invocation."""

    config_path: Optional[Path]
    input_dir: Path
    output_dir: Path
    seed: Optional[int]
    workers: int

    def validate(self) -> "RunManifest":
        if self.config_path is not None and not self.config_path.is_file():
            raise FileNotFoundError(f"Config file not found: {self.config_path}")
        if not self.input_dir.is_dir():
            raise FileNotFoundError(f"Input directory not found: {self.input_dir}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        return self


def _config(path: Optional[Path], seed: Optional[int], n_crops: Optional[int] = None) -> PipelineConfig:
    cfg = load_pipeline_config(path) if path is not None else PipelineConfig()
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if n_crops is not None:
        cfg = replace(cfg, n_crops=n_crops)
    return cfg.validate()


def cmd_crops(args: argparse.Namespace) -> int:
    cfg = _config(args.config, args.seed, args.n_crops)
    cache = CropCache(args.output)
    total = 0
    with WorkerPool(args.workers) as pool:
        for class_id, path in enumerate(args.meshes, start=1):
            mesh = load_mesh(str(path), class_id)
            model = cache.get_or_create(mesh, cfg, pool)
            total += len(model.crops)
            print(f"{path}: {len(model.crops)} crops in {cache.entry_dir(mesh, cfg)}")
    sys.stdout.write(format_summary({"meshes": len(args.meshes), "crops": total, "output": args.output}))
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    manifest = RunManifest(args.config, args.input, args.output, args.seed, args.workers).validate()
    cfg = _config(manifest.config_path, manifest.seed)
    sequence = FrameSequence(manifest.input_dir, cfg.frame_period)
    manifest.output_dir.mkdir(parents=True, exist_ok=True)

    reports = []
    with PoseEstimator(sequence.intrinsics, cfg, manifest.workers, args.cache) as estimator:
        for listing in sequence.objects():
            estimator.add_object(listing.mesh_path, listing.class_id, listing.name)
        for frame in sequence:
            reports.append(estimator.process(frame))

    if args.format == "csv":
        out_path = manifest.output_dir / "reports.csv"
        with open(out_path, "w", encoding="utf-8", newline="") as f:
            write_csv(f, FRAME_CSV_COLUMNS, (row for r in reports for row in frame_rows(r)))
    else:
        out_path = manifest.output_dir / "reports.jsonl"
        with open(out_path, "w", encoding="utf-8") as f:
            write_jsonl(f, reports, include_timing=not args.no_timing)

    objects = [o for r in reports for o in r.objects]
    acquisition = [o.timings["acquisition_ms"] for o in objects if "acquisition_ms" in o.timings]
    tracking = [o.timings["tracking_ms"] for o in objects if "tracking_ms" in o.timings]
    summary = {
        "frames": len(reports),
        "object_reports": len(objects),
        "failed": sum(1 for o in objects if o.status == "failed"),
        "acquired": sum(1 for o in objects if o.status == "acquired"),
        "lost": sum(1 for o in objects if o.status == "lost"),
        "mean_acquisition_ms": float(np.mean(acquisition)) if acquisition else 0.0,
        "mean_tracking_ms": float(np.mean(tracking)) if tracking else 0.0,
    }
    truth = sequence.truth()
    if truth:
        scored = [(o, truth[(o.frame, o.class_id)]) for o in objects
                  if o.pose is not None and (o.frame, o.class_id) in truth]
        hits = sum(1 for o, t in scored if pose_error(o.pose, t).is_success())
        summary["success_rate"] = hits / len(scored) if scored else 0.0
    summary["reports"] = out_path
    sys.stdout.write(format_summary(summary))
    return EXIT_OK


def cmd_compare(args: argparse.Namespace, cfg: PipelineConfig, specs: list[SceneSpec]) -> int:
    with WorkerPool(args.workers) as pool:
        report = run_comparison(specs, cfg, pool)
    summary = report.as_dict()
    if args.output is not None:
        args.output.mkdir(parents=True, exist_ok=True)
        out_path = args.output / "comparison.csv"
        with open(out_path, "w", encoding="utf-8", newline="") as f:
            write_comparison_csv(f, report.tables)
        summary["comparison"] = out_path
    summary["passed"] = int(report.passed)
    sys.stdout.write(format_summary(summary))
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _config(args.config, None)
    specs: list[SceneSpec] = [load_scene_spec(p) for p in args.specs]
    if args.suite:
        specs += suite(args.suite, args.scenes, args.frames, args.seed if args.seed is not None else 0)
    if not specs:
        raise ConfigError("No scenes: give scene files or --suite")
    if args.compare:
        return cmd_compare(args, cfg, specs)

    with WorkerPool(args.workers) as pool:
        report = run_benchmark(specs, cfg, pool)

    if args.output is not None:
        args.output.mkdir(parents=True, exist_ok=True)
        if args.format == "csv":
            with open(args.output / "records.csv", "w", encoding="utf-8", newline="") as f:
                write_records_csv(f, report.records)
        else:
            with open(args.output / "records.jsonl", "w", encoding="utf-8") as f:
                write_records_jsonl(f, report.records)
        (args.output / "summary.txt").write_text(
            format_summary(report.summary.as_dict(include_timing=not args.no_timing)), encoding="utf-8"
        )
    summary = report.summary.as_dict(include_timing=not args.no_timing)
    summary["passed"] = int(report.passed)
    sys.stdout.write(format_summary(summary))
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_synth(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else 0
    if args.scene is not None:
        spec = load_scene_spec(args.scene)
    else:
        spec = desk_scene("synth", desk_objects(), np.random.default_rng(seed), args.frames, seed=seed)

    out: Path = args.output
    (out / "meshes").mkdir(parents=True, exist_ok=True)
    writer = FrameSequenceWriter(out, spec.intrinsics)
    listings = []
    for o in spec.objects:
        name = o.shape or o.mesh.name or f"object{o.class_id}"
        relative = Path("meshes") / f"{name}.ply"
        save_mesh(o.mesh, str(out / relative))
        listings.append(ObjectListing(o.class_id, name, relative))
    writer.write_objects(listings)
    for index in range(spec.frames):
        rendered = render_scene(spec, index)
        writer.add_frame(index, rendered.depth, rendered.labels,
                         rendered.odometry if index > 0 else None, rendered.truth)
    writer.close()
    if args.scene is None:
        write_scene_spec(out / "scene.ini", spec)
    sys.stdout.write(format_summary({"frames": spec.frames, "objects": len(spec.objects), "output": out}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multipose",
        description="Multi-hypothesis object pose estimation and tracking from segmented depth.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--config", type=Path, help="INI file with a [pipeline] section")
        sub.add_argument("--seed", type=int, help="override the sampling / scene seed")
        sub.add_argument("--workers", type=int, default=1, help="worker threads (default: 1)")

    crops = commands.add_parser("crops", help="precompute model crops into a cache directory")
    crops.add_argument("meshes", nargs="+", type=Path, help="PLY or OBJ meshes (class ids 1, 2, ... in order)")
    crops.add_argument("--output", type=Path, required=True, help="cache directory")
    crops.add_argument("--n-crops", type=int, help="override n_crops")
    common(crops)
    crops.set_defaults(handler=cmd_crops)

    run = commands.add_parser("run", help="estimate poses over a frame-sequence directory")
    run.add_argument("--input", type=Path, required=True, help="frame-sequence directory")
    run.add_argument("--output", type=Path, required=True, help="report directory")
    run.add_argument("--cache", type=Path, help="crop cache directory")
    run.add_argument("--format", choices=("text", "csv"), default="text",
                     help="text: JSON lines per frame; csv: one row per object and frame")
    run.add_argument("--no-timing", action="store_true", help="omit timing fields from reports")
    common(run)
    run.set_defaults(handler=cmd_run)

    bench = commands.add_parser("bench", help="benchmark on synthetic scenes")
    bench.add_argument("specs", nargs="*", type=Path, help="scene files")
    bench.add_argument("--suite", choices=sorted(SUITES), help="add a generated suite")
    bench.add_argument("--scenes", type=int, default=70, help="scenes in the generated suite")
    bench.add_argument("--frames", type=int, default=3, help="frames per generated scene")
    bench.add_argument("--output", type=Path, help="directory for records.csv and summary.txt")
    bench.add_argument("--format", choices=("text", "csv"), default="csv", help="record format (csv)")
    bench.add_argument("--no-timing", action="store_true", help="omit timing from the summary")
    bench.add_argument("--compare", action="store_true",
                       help="compare alignment score, fitness and IoU per hypothesis on frame 0; "
                            "writes comparison.csv")
    common(bench)
    bench.set_defaults(handler=cmd_bench)

    synth = commands.add_parser("synth", help="write a synthetic frame-sequence directory")
    synth.add_argument("--output", type=Path, required=True, help="sequence directory")
    synth.add_argument("--scene", type=Path, help="scene file (default: a generated desk scene)")
    synth.add_argument("--frames", type=int, default=10, help="frames of the generated scene")
    synth.add_argument("--seed", type=int, help="scene seed")
    synth.set_defaults(handler=cmd_synth)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_ERROR
    configure_logging(logging.DEBUG if args.verbose >= 2 else logging.INFO if args.verbose == 1 else logging.WARNING)
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.handler(args)
    except (PoseEngineError, FileNotFoundError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
