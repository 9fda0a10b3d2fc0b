"""Frame-sequence directories.

Layout::

    intrinsics.txt          key = value camera intrinsics
    objects.txt             "class_id name mesh_path" per line (path relative to the directory)
    odometry.txt            "qw qx qy qz tx ty tz [dt]" per frame; the frame-0 line is ignored
    depth_000000.png        16-bit millimeters (or depth_000000.tiff, float meters)
    labels_000000.png       8-bit class ids
    truth.txt               optional "frame class_id qw qx qy qz tx ty tz" lines
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

from multipose.core.exceptions import ConfigError, GeometryError
from multipose.core.geometry import RigidTransform
from multipose.core.models import CameraIntrinsics, CameraOdometry
from multipose.formats.configfile import read_intrinsics, write_intrinsics
from multipose.formats.images import read_depth, read_labels, write_depth, write_labels
from multipose.scene.ingest import DepthImage, LabelImage
from multipose.services.frame_processor import Frame

INTRINSICS = "intrinsics.txt"
OBJECTS = "objects.txt"
ODOMETRY = "odometry.txt"
TRUTH = "truth.txt"


@dataclass(frozen=True)
class ObjectListing:
    """One line of ``objects.txt``."""

    class_id: int
    name: str
    mesh_path: Path


def _data_lines(path: Path) -> list[tuple[int, list[str]]]:
    rows = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        tokens = line.split("#", 1)[0].split()
        if tokens:
            rows.append((number, tokens))
    return rows


def parse_odometry_line(tokens: list[str], default_dt: float, where: str) -> CameraOdometry:
    if len(tokens) not in (7, 8):
        raise ConfigError(f"{where}: expected 7 or 8 numbers, got {len(tokens)}")
    try:
        numbers = [float(t) for t in tokens]
        motion = RigidTransform.from_tuple(numbers[:7])
    except (ValueError, GeometryError) as e:
        raise ConfigError(f"{where}: {e}") from None
    return CameraOdometry(motion, numbers[7] if len(numbers) == 8 else default_dt)


def format_odometry_line(odom: CameraOdometry) -> str:
    return f"{odom.motion.format()} {odom.dt!r}"


class FrameSequence:
    """Read access to a frame-sequence directory."""

    def __init__(self, directory: str | Path, default_dt: float = 1.0 / 30.0):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise FileNotFoundError(f"Frame directory not found: {self.directory}")
        self.intrinsics: CameraIntrinsics = read_intrinsics(self.directory / INTRINSICS)
        self._default_dt = default_dt
        self._odometry = self._read_odometry()
        self._count = len(sorted(self.directory.glob("labels_*.png")))

    def _read_odometry(self) -> list[Optional[CameraOdometry]]:
        path = self.directory / ODOMETRY
        if not path.exists():
            return []
        out: list[Optional[CameraOdometry]] = []
        for index, (number, tokens) in enumerate(_data_lines(path)):
            out.append(None if index == 0 else parse_odometry_line(tokens, self._default_dt, f"{path}:{number}"))
        return out

    def objects(self) -> list[ObjectListing]:
        path = self.directory / OBJECTS
        if not path.exists():
            raise FileNotFoundError(f"Object list not found: {path}")
        listings = []
        for number, tokens in _data_lines(path):
            if len(tokens) != 3:
                raise ConfigError(f"{path}:{number}: expected 'class_id name mesh_path'")
            try:
                class_id = int(tokens[0])
            except ValueError:
                raise ConfigError(f"{path}:{number}: bad class id {tokens[0]!r}") from None
            listings.append(ObjectListing(class_id, tokens[1], self.directory / tokens[2]))
        return listings

    def __len__(self) -> int:
        return self._count

    def frame(self, index: int) -> Frame:
        depth_path = self.directory / f"depth_{index:06d}.png"
        if not depth_path.exists():
            depth_path = self.directory / f"depth_{index:06d}.tiff"
        odometry = self._odometry[index] if index < len(self._odometry) else None
        return Frame(
            index=index,
            depth=read_depth(depth_path),
            labels=read_labels(self.directory / f"labels_{index:06d}.png"),
            odometry=odometry,
        )

    def __iter__(self) -> Iterator[Frame]:
        for index in range(self._count):
            yield self.frame(index)

    def truth(self) -> dict[tuple[int, int], RigidTransform]:
        """Ground-truth poses keyed by (frame, class_id), if recorded."""
        path = self.directory / TRUTH
        if not path.exists():
            return {}
        out = {}
        for number, tokens in _data_lines(path):
            if len(tokens) != 9:
                raise ConfigError(f"{path}:{number}: expected 9 fields")
            out[(int(tokens[0]), int(tokens[1]))] = RigidTransform.from_tuple([float(t) for t in tokens[2:]])
        return out


class FrameSequenceWriter:
    """Builds a frame-sequence directory one frame at a time."""

    def __init__(self, directory: str | Path, intrinsics: CameraIntrinsics):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        write_intrinsics(self.directory / INTRINSICS, intrinsics)
        self._odometry: list[str] = []
        self._truth: list[str] = []

    def write_objects(self, listings: list[ObjectListing]) -> None:
        lines = [f"{o.class_id} {o.name} {o.mesh_path.as_posix()}" for o in listings]
        (self.directory / OBJECTS).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def add_frame(self, index: int, depth: DepthImage, labels: LabelImage, odometry: Optional[CameraOdometry],
                  truth: Optional[dict[int, RigidTransform]] = None) -> None:
        write_depth(self.directory / f"depth_{index:06d}.png", depth)
        write_labels(self.directory / f"labels_{index:06d}.png", labels)
        self._odometry.append(
            format_odometry_line(odometry) if odometry is not None else RigidTransform.identity().format()
        )
        for class_id, pose in sorted((truth or {}).items()):
            self._truth.append(f"{index} {class_id} {pose.format()}")

    def close(self) -> None:
        (self.directory / ODOMETRY).write_text("\n".join(self._odometry) + "\n", encoding="utf-8")
        (self.directory / TRUTH).write_text("\n".join(self._truth) + ("\n" if self._truth else ""), encoding="utf-8")
