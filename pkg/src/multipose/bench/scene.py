"""Synthetic desk scenes with ground truth.

A scene places meshes at known poses in the frame-0 camera frame and moves
the camera by a constant per-frame motion. Frames are rendered by casting one
ray per pixel from the camera centre, so a hit's ray parameter is its depth.

Scene files are INI::

    [scene]
    name = desk01
    seed = 7
    frames = 12
    dt = 0.0333
    background_depth = 1.2
    camera_motion = 1 0 0 0 0.001 0 0

    [camera]
    fx = 285.0
    ...

    [noise]
    depth_sigma = 0.002

    [object.2]
    shape = mug                  # or: mesh = meshes/mug.ply (relative to the file)
    pose = 0.5 -0.5 0.5 0.5 0.0 0.05 0.7
    hidden_frames = 3-12
    reflective = false
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from multipose.bench.noise import apply_depth_noise, corrupt_mask, noisy_odometry
from multipose.core.exceptions import BenchmarkError, ConfigError, GeometryError
from multipose.core.geometry import RigidTransform
from multipose.core.models import CameraIntrinsics, CameraOdometry, NoiseModel
from multipose.formats import load_mesh
from multipose.formats.configfile import coerce_value, dataclass_from_mapping, read_ini
from multipose.library.mesh import MeshModel
from multipose.library.primitives import make_shape
from multipose.library.raycast import RayCaster
from multipose.scene.ingest import DepthImage, LabelImage, pixel_of
from multipose.services.frame_processor import Frame
from multipose.utils.log import get_logger

logger = get_logger(__name__)

DEFAULT_INTRINSICS = CameraIntrinsics(fx=285.0, fy=285.0, cx=160.0, cy=120.0, width=320, height=240)
"""Quarter-VGA pinhole camera used by generated scenes."""

# optical frame (x right, y down, z forward) from a model frame with +z up
_UPRIGHT = RigidTransform.from_rotation_matrix(np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]))


@dataclass(frozen=True, eq=False)
class ObjectPlacement:
    """One object of a scene."""

    class_id: int
    mesh: MeshModel
    pose: RigidTransform
    """Model-to-camera transform at frame 0."""

    hidden_frames: frozenset[int] = frozenset()
    """Frames in which the object is not rendered at all."""

    reflective: bool = False
    """Whether the depth deformation applies to this object's pixels."""

    shape: str = ""
    """Name in the primitive shape table, when the mesh came from one."""

    mesh_path: Optional[Path] = None


@dataclass(frozen=True, eq=False)
class SceneSpec:
    """A scripted synthetic sequence."""

    name: str
    objects: tuple[ObjectPlacement, ...]
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS
    frames: int = 1
    camera_motion: RigidTransform = field(default_factory=RigidTransform.identity)
    """Pose of each new camera frame in the previous one."""

    dt: float = 1.0 / 30.0
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0
    background_depth: float = 1.5
    """Depth of a fronto-parallel wall behind the objects; 0 disables it."""

    def validate(self) -> "SceneSpec":
        self.intrinsics.validate()
        self.noise.validate()
        if self.frames < 1:
            raise ConfigError(f"Scene {self.name}: frames must be >= 1, got {self.frames}")
        if not self.dt > 0:
            raise ConfigError(f"Scene {self.name}: dt must be positive")
        if self.background_depth < 0:
            raise ConfigError(f"Scene {self.name}: background_depth must be >= 0")
        ids = [o.class_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"Scene {self.name}: duplicate class ids {ids}")
        for o in self.objects:
            if not 1 <= o.class_id <= 255:
                raise ConfigError(f"Scene {self.name}: class id {o.class_id} outside 1..255")
            if np.any(o.pose.apply(o.mesh.vertices)[:, 2] <= 0.0):
                raise ConfigError(f"Scene {self.name}: object {o.class_id} is not in front of the camera")
        return self

    def camera_pose(self, frame_index: int) -> RigidTransform:
        """Camera frame ``frame_index`` expressed in the frame-0 camera frame."""
        pose = RigidTransform.identity()
        for _ in range(frame_index):
            pose = pose.compose(self.camera_motion)
        return pose

    def truth(self, frame_index: int) -> dict[int, RigidTransform]:
        """Model-to-camera pose of every object at ``frame_index``."""
        camera = self.camera_pose(frame_index).inverse()
        return {o.class_id: camera.compose(o.pose) for o in self.objects}


@dataclass(frozen=True, eq=False)
class RenderedFrame:
    """One rendered frame with its ground truth."""

    index: int
    depth: DepthImage
    labels: LabelImage
    odometry: CameraOdometry
    """Reported camera motion since the previous frame (noisy when the noise model says so)."""

    truth: dict[int, RigidTransform]
    visibility: dict[int, float]
    """Visible fraction of each object's unoccluded footprint."""

    clean_labels: LabelImage

    def to_frame(self) -> Frame:
        return Frame(self.index, self.depth, self.labels, None if self.index == 0 else self.odometry)


def pixel_rays(k: CameraIntrinsics, rows: slice = slice(None), cols: slice = slice(None)) -> np.ndarray:
    """Row-major (N, 3) rays with unit z through the pixel centres of a window."""
    v, u = np.mgrid[0:k.height, 0:k.width]
    v, u = v[rows, cols].astype(np.float64), u[rows, cols].astype(np.float64)
    return np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u)], axis=-1).reshape(-1, 3)


def _background(k: CameraIntrinsics, depth: float) -> np.ndarray:
    x0, x1 = (-0.5 - k.cx) / k.fx * depth * 1.1, (k.width - 0.5 - k.cx) / k.fx * depth * 1.1
    y0, y1 = (-0.5 - k.cy) / k.fy * depth * 1.1, (k.height - 0.5 - k.cy) / k.fy * depth * 1.1
    a, b, c, d = [x0, y0, depth], [x1, y0, depth], [x1, y1, depth], [x0, y1, depth]
    return np.array([[a, b, c], [a, c, d]], dtype=np.float64)


def _caster(corners: np.ndarray, what: str) -> RayCaster:
    try:
        return RayCaster(corners, np.zeros(3), np.eye(3))
    except GeometryError as e:
        raise BenchmarkError(f"{what}: {e}") from None


def _solo_footprint(k: CameraIntrinsics, mesh: MeshModel) -> int:
    """Pixels the mesh would cover with nothing in front of it."""
    pixels = pixel_of(mesh.vertices, k)
    u0, v0 = np.maximum(pixels.min(axis=0) - 1, 0)
    u1, v1 = np.minimum(pixels.max(axis=0) + 2, [k.width, k.height])
    if u0 >= u1 or v0 >= v1:
        return 0
    rays = pixel_rays(k, slice(v0, v1), slice(u0, u1))
    _, tri = _caster(mesh.corners(), mesh.name).cast(rays)
    return int(np.count_nonzero(tri >= 0))


def render_clean(spec: SceneSpec, frame_index: int) -> tuple[np.ndarray, np.ndarray, dict[int, MeshModel]]:
    """Noise-free depth and labels plus the posed meshes drawn in this frame."""
    k = spec.intrinsics
    truth = spec.truth(frame_index)
    posed = {
        o.class_id: o.mesh.transformed(truth[o.class_id])
        for o in spec.objects
        if frame_index not in o.hidden_frames
    }
    corners = [m.corners() for m in posed.values()]
    owners = [np.full(m.triangle_count, class_id, dtype=np.int32) for class_id, m in posed.items()]
    if spec.background_depth > 0:
        corners.append(_background(k, spec.background_depth))
        owners.append(np.zeros(2, dtype=np.int32))
    all_corners = np.concatenate(corners) if corners else np.zeros((0, 3, 3))
    owner = np.concatenate(owners) if owners else np.zeros(0, dtype=np.int32)

    t, tri = _caster(all_corners, f"scene {spec.name} frame {frame_index}").cast(pixel_rays(k))
    hit = tri >= 0
    depth = np.where(hit, t, 0.0).reshape(k.shape)
    labels = np.where(hit, owner[np.maximum(tri, 0)], 0).reshape(k.shape)
    return depth, labels, posed


def render_scene(spec: SceneSpec, frame_index: int) -> RenderedFrame:
    """Render one frame, then apply the scene's noise model.

    Deterministic in (seed, frame_index).

    Raises:
        BenchmarkError: If the frame index is out of range or an object
            moves behind the camera.
    """
    if not 0 <= frame_index < spec.frames:
        raise BenchmarkError(f"Scene {spec.name} has {spec.frames} frames, asked for {frame_index}")
    depth, labels, posed = render_clean(spec, frame_index)
    clean = LabelImage(labels)

    visibility = {}
    for o in spec.objects:
        footprint = _solo_footprint(spec.intrinsics, posed[o.class_id]) if o.class_id in posed else 0
        shown = int(np.count_nonzero(labels == o.class_id))
        visibility[o.class_id] = min(1.0, shown / footprint) if footprint else 0.0
    if not any(visibility.values()) and spec.objects:
        logger.warning(f"Scene {spec.name} frame {frame_index}: no object is visible")

    rng = np.random.default_rng([spec.seed, frame_index])
    reflective_ids = [o.class_id for o in spec.objects if o.reflective]
    reflective = np.isin(labels, reflective_ids) if reflective_ids else None
    noisy_depth = apply_depth_noise(DepthImage(depth), spec.noise, rng, reflective)
    mask = corrupt_mask(clean, spec.noise, int(rng.integers(0, 2**32)), [o.class_id for o in spec.objects])

    odometry = CameraOdometry(spec.camera_motion if frame_index > 0 else RigidTransform.identity(), spec.dt)
    if frame_index > 0:
        odometry = noisy_odometry(odometry, spec.noise, rng)
    return RenderedFrame(frame_index, noisy_depth, mask.labels, odometry, spec.truth(frame_index), visibility, clean)


def upright_pose(position: tuple[float, float, float], yaw: float = 0.0, tilt: float = 0.0) -> RigidTransform:
    """Pose of a model standing on its base (+z up), yawed about its own axis,
    seen by a camera pitched down by ``tilt`` degrees."""
    pitch = RigidTransform.from_axis_angle((1.0, 0.0, 0.0), tilt)
    spin = RigidTransform.from_axis_angle((0.0, 0.0, 1.0), yaw)
    rotation = pitch.compose(_UPRIGHT).compose(spin)
    return RigidTransform(rotation=rotation.rotation, translation=tuple(float(x) for x in position))


def desk_scene(name: str, meshes: dict[int, MeshModel], rng: np.random.Generator, frames: int = 1,
               noise: Optional[NoiseModel] = None, reflective: tuple[int, ...] = (), seed: int = 0) -> SceneSpec:
    """Objects side by side on a desk, with random yaw, camera tilt and distance.

    Distances are drawn in [0.55, 0.85] m; lateral slots are 0.2 m apart.
    """
    ids = sorted(meshes)
    tilt = float(rng.uniform(10.0, 30.0))
    slots = (np.arange(len(ids)) - (len(ids) - 1) / 2.0) * 0.2
    order = rng.permutation(len(ids))
    placements = []
    for slot, class_id in zip(slots[order], ids):
        mesh = meshes[class_id]
        lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
        base = RigidTransform.from_translation(-(lo + hi) / 2.0)
        distance = float(rng.uniform(0.55, 0.85))
        yaw = float(rng.uniform(0.0, 360.0))
        pose = upright_pose((float(slot), 0.02, distance), yaw, tilt).compose(base)
        placements.append(ObjectPlacement(class_id, mesh, pose, reflective=class_id in reflective, shape=mesh.name))
    return SceneSpec(
        name=name,
        objects=tuple(sorted(placements, key=lambda p: p.class_id)),
        frames=frames,
        noise=noise if noise is not None else NoiseModel(),
        seed=seed,
        background_depth=1.2,
    ).validate()


def _parse_frames(text: str, where: str) -> frozenset[int]:
    out: set[int] = set()
    for token in text.replace(",", " ").split():
        try:
            if "-" in token:
                a, b = (int(x) for x in token.split("-", 1))
                out.update(range(a, b + 1))
            else:
                out.add(int(token))
        except ValueError:
            raise ConfigError(f"{where}: bad frame range {token!r}") from None
    return frozenset(out)


def _format_frames(frames: frozenset[int]) -> str:
    return " ".join(str(f) for f in sorted(frames))


def _parse_pose(text: str, where: str) -> RigidTransform:
    try:
        return RigidTransform.from_tuple([float(x) for x in text.split()])
    except (ValueError, GeometryError) as e:
        raise ConfigError(f"{where}: bad pose {text!r}: {e}") from None


_SCENE_KEYS = {"name", "seed", "frames", "dt", "background_depth", "camera_motion"}
_OBJECT_KEYS = {"shape", "mesh", "pose", "hidden_frames", "reflective"}


def load_scene_spec(path: str | Path) -> SceneSpec:
    """Read a scene file.

    Raises:
        FileNotFoundError: If the file or a referenced mesh is absent.
        ConfigError: On unknown sections or keys, or bad values.
    """
    path = Path(path)
    parser = read_ini(path)
    for section in parser.sections():
        if section not in ("scene", "camera", "noise") and not section.startswith("object."):
            raise ConfigError(f"{path}: unknown section [{section}]")

    scene = dict(parser["scene"]) if parser.has_section("scene") else {}
    unknown = sorted(set(scene) - _SCENE_KEYS)
    if unknown:
        raise ConfigError(f"{path} [scene]: unknown key(s) {', '.join(unknown)}")
    intrinsics = (
        dataclass_from_mapping(CameraIntrinsics, dict(parser["camera"]), f"{path} [camera]")
        if parser.has_section("camera") else DEFAULT_INTRINSICS
    )
    noise = dataclass_from_mapping(NoiseModel, dict(parser["noise"]) if parser.has_section("noise") else {},
                                   f"{path} [noise]")

    objects = []
    for section in parser.sections():
        if not section.startswith("object."):
            continue
        where = f"{path} [{section}]"
        values = dict(parser[section])
        unknown = sorted(set(values) - _OBJECT_KEYS)
        if unknown:
            raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
        class_id = coerce_value(section, section.split(".", 1)[1], int)
        if ("shape" in values) == ("mesh" in values):
            raise ConfigError(f"{where}: give exactly one of shape or mesh")
        if "pose" not in values:
            raise ConfigError(f"{where}: missing pose")
        mesh_path = None
        if "shape" in values:
            try:
                mesh = make_shape(values["shape"], class_id)
            except KeyError as e:
                raise ConfigError(f"{where}: {e.args[0]}") from None
        else:
            mesh_path = (path.parent / values["mesh"]).resolve()
            mesh = load_mesh(str(mesh_path), class_id)
        objects.append(ObjectPlacement(
            class_id=class_id,
            mesh=mesh,
            pose=_parse_pose(values["pose"], where),
            hidden_frames=_parse_frames(values.get("hidden_frames", ""), where),
            reflective=coerce_value("reflective", values.get("reflective", "false"), bool),
            shape=values.get("shape", ""),
            mesh_path=mesh_path,
        ))

    where = f"{path} [scene]"
    spec = SceneSpec(
        name=scene.get("name", path.stem),
        objects=tuple(sorted(objects, key=lambda o: o.class_id)),
        intrinsics=intrinsics,
        frames=coerce_value("frames", scene.get("frames", "1"), int),
        camera_motion=_parse_pose(scene["camera_motion"], where) if "camera_motion" in scene
        else RigidTransform.identity(),
        dt=coerce_value("dt", scene.get("dt", repr(1.0 / 30.0)), float),
        noise=noise,
        seed=coerce_value("seed", scene.get("seed", "0"), int),
        background_depth=coerce_value("background_depth", scene.get("background_depth", "1.5"), float),
    )
    return spec.validate()


def write_scene_spec(path: str | Path, spec: SceneSpec) -> None:
    """Write ``spec`` as a scene file; objects without a shape name need a mesh path."""
    lines = [
        "[scene]",
        f"name = {spec.name}",
        f"seed = {spec.seed}",
        f"frames = {spec.frames}",
        f"dt = {spec.dt!r}",
        f"background_depth = {spec.background_depth!r}",
        f"camera_motion = {spec.camera_motion.format()}",
        "",
        "[camera]",
        *(f"{k} = {v!r}" for k, v in asdict(spec.intrinsics).items()),
        "",
        "[noise]",
        *(f"{k} = {v!r}" for k, v in asdict(spec.noise).items()),
    ]
    for o in spec.objects:
        lines += ["", f"[object.{o.class_id}]"]
        if o.shape:
            lines.append(f"shape = {o.shape}")
        elif o.mesh_path is not None:
            lines.append(f"mesh = {o.mesh_path.as_posix()}")
        else:
            raise ConfigError(f"Object {o.class_id} has neither a shape name nor a mesh path")
        lines.append(f"pose = {o.pose.format()}")
        if o.hidden_frames:
            lines.append(f"hidden_frames = {_format_frames(o.hidden_frames)}")
        lines.append(f"reflective = {str(o.reflective).lower()}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
