"""Front-face model crops and their on-disk cache.

A crop is the part of an object's downsampled model cloud that a camera sees
from one viewpoint. Viewpoints are spread over the sphere on a Fibonacci
lattice, looking at the mesh centre from ``camera_distance_factor`` bounding
radii away with the model +z axis kept upright in the image.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from multipose.core.exceptions import EmptyCropError, GeometryError, MeshFormatError
from multipose.core.geometry import PointCloud, RigidTransform
from multipose.core.interfaces import IWorkerPool
from multipose.core.models import PipelineConfig
from multipose.formats.ply import read_ply, write_ply
from multipose.library.mesh import MeshModel
from multipose.library.raycast import RayCaster, look_at
from multipose.library.sampling import sample_surface_with_faces, voxel_grid
from multipose.utils.log import get_logger

logger = get_logger(__name__)

_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))
_SHADOW_OFFSET = 1e-6
# a voxel is visible when at least this share of its dense samples is
_VISIBLE_SHARE = 0.5


@dataclass(frozen=True, eq=False)
class ModelCrop:
    """Model-frame points visible from one viewpoint."""

    crop_id: int
    points: PointCloud
    azimuth: float
    """Viewpoint azimuth about model +z (deg, [0, 360))."""

    elevation: float
    """Viewpoint elevation above the model xy-plane (deg)."""

    view_rotation: RigidTransform
    """Model-to-camera rotation of the rendering camera (translation zero)."""

    source_class: int = 0

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True, eq=False)
class ObjectModel:
    """Everything acquisition and tracking need to know about one object."""

    mesh: MeshModel
    cloud: PointCloud
    """Full downsampled model cloud."""

    crops: tuple[ModelCrop, ...] = field(default=())

    @property
    def class_id(self) -> int:
        return self.mesh.class_id

    @property
    def name(self) -> str:
        return self.mesh.name

    def crop(self, crop_id: int) -> ModelCrop:
        return self.crops[crop_id]


def fibonacci_directions(n: int) -> np.ndarray:
    """(n, 3) unit vectors spread near-uniformly over the sphere."""
    if n < 1:
        raise GeometryError(f"Need at least one view, got {n}")
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = i * _GOLDEN_ANGLE
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def azimuth_elevation(direction: np.ndarray) -> tuple[float, float]:
    x, y, z = (float(v) for v in direction)
    azimuth = math.degrees(math.atan2(y, x)) % 360.0
    elevation = math.degrees(math.asin(max(-1.0, min(1.0, z))))
    return azimuth, elevation


class CropRenderer:
    """Dense samples and voxel grid of one mesh, reused for every viewpoint."""

    def __init__(self, mesh: MeshModel, sample_count: int, leaf: float, seed: int,
                 camera_distance_factor: float = 4.0):
        mesh.require_triangles()
        if camera_distance_factor <= 1.0:
            raise GeometryError("Camera must stay outside the bounding sphere")
        self.mesh = mesh
        self._samples = sample_surface_with_faces(mesh, sample_count, seed)
        centroids, self._voxel_of = voxel_grid(self._samples.points, leaf)
        self.cloud = PointCloud(centroids)
        self._voxel_size = np.bincount(self._voxel_of, minlength=centroids.shape[0])
        self._corners = mesh.corners()
        self._normals = mesh.normals()
        self._center, radius = mesh.bounding_sphere()
        self._distance = camera_distance_factor * max(radius, 1e-9)

    def visible_voxels(self, direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Voxel visibility mask from ``direction`` and the model-to-camera rotation."""
        direction = np.asarray(direction, dtype=np.float64)
        direction = direction / np.linalg.norm(direction)
        eye = self._center + self._distance * direction
        rotation = look_at(eye, self._center)
        caster = RayCaster(self._corners, eye, rotation)

        rays = self._samples.points - eye
        length = np.linalg.norm(rays, axis=1)
        t, _ = caster.cast(rays)
        unoccluded = t >= 1.0 - _SHADOW_OFFSET / length
        facing = np.einsum("ij,ij->i", self._normals[self._samples.triangle_ids], -rays) > 0.0
        seen = np.bincount(self._voxel_of, weights=(unoccluded & facing).astype(np.float64),
                           minlength=self._voxel_size.shape[0])
        return seen >= _VISIBLE_SHARE * self._voxel_size, rotation

    def render(self, crop_id: int, direction: np.ndarray) -> ModelCrop:
        """Crop seen from ``direction`` (model frame, pointing from centre to camera).

        Raises:
            EmptyCropError: If no model point is visible.
        """
        mask, rotation = self.visible_voxels(direction)
        if not np.any(mask):
            raise EmptyCropError(f"Viewpoint {crop_id} of '{self.mesh.name}' sees no surface", crop_id)
        azimuth, elevation = azimuth_elevation(np.asarray(direction) / np.linalg.norm(direction))
        return ModelCrop(
            crop_id=crop_id,
            points=self.cloud.select(mask),
            azimuth=azimuth,
            elevation=elevation,
            view_rotation=RigidTransform.from_rotation_matrix(rotation),
            source_class=self.mesh.class_id,
        )


def generate_crops(
    mesh: MeshModel,
    n_views: int,
    sample_count: int,
    leaf: float,
    seed: int,
    camera_distance_factor: float = 4.0,
    pool: Optional[IWorkerPool] = None,
) -> list[ModelCrop]:
    """Render ``n_views`` crops of ``mesh``, ordered by crop_id.

    Raises:
        EmptyCropError: If some viewpoint sees nothing.
        EmptyMeshError: If the mesh has no triangles.
    """
    renderer = CropRenderer(mesh, sample_count, leaf, seed, camera_distance_factor)
    return _render_views(renderer, n_views, pool)


def _render_views(renderer: CropRenderer, n_views: int, pool: Optional[IWorkerPool]) -> list[ModelCrop]:
    jobs = list(enumerate(fibonacci_directions(n_views)))
    if pool is None:
        return [renderer.render(i, d) for i, d in jobs]
    return pool.map(lambda job: renderer.render(*job), jobs)


def build_object_model(
    mesh: MeshModel,
    cfg: PipelineConfig,
    pool: Optional[IWorkerPool] = None,
    cache: Optional["CropCache"] = None,
) -> ObjectModel:
    """Sample, downsample and crop ``mesh`` with the pipeline's model settings."""
    if cache is not None:
        return cache.get_or_create(mesh, cfg, pool)
    renderer = CropRenderer(mesh, cfg.model_sample_count, cfg.model_leaf, cfg.seed, cfg.camera_distance_factor)
    crops = _render_views(renderer, cfg.n_crops, pool)
    return ObjectModel(mesh=mesh, cloud=renderer.cloud, crops=tuple(crops))


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class CropCache:
    """Directory of precomputed crops keyed by mesh content and crop parameters.

    Layout per entry::

        <root>/<name>-<key>/model.ply
        <root>/<name>-<key>/crop_000.ply ...
        <root>/<name>-<key>/manifest.txt
    """

    MANIFEST = "manifest.txt"

    def __init__(self, root: str | Path):
        self.root = Path(root)

    @staticmethod
    def key(mesh: MeshModel, n_views: int, sample_count: int, leaf: float, seed: int,
            camera_distance_factor: float) -> str:
        digest = hashlib.sha256(mesh.content_hash().encode("ascii"))
        digest.update(f"{n_views}|{sample_count}|{leaf!r}|{seed}|{camera_distance_factor!r}".encode("ascii"))
        return digest.hexdigest()

    def entry_dir(self, mesh: MeshModel, cfg: PipelineConfig) -> Path:
        key = self.key(mesh, cfg.n_crops, cfg.model_sample_count, cfg.model_leaf, cfg.seed,
                       cfg.camera_distance_factor)
        name = mesh.name or "mesh"
        return self.root / f"{name}-{key[:16]}"

    def get_or_create(self, mesh: MeshModel, cfg: PipelineConfig,
                      pool: Optional[IWorkerPool] = None) -> ObjectModel:
        directory = self.entry_dir(mesh, cfg)
        try:
            model = self.load(directory, mesh)
            logger.info(f"Crop cache hit for '{mesh.name}' in {directory}")
            return model
        except (OSError, ValueError, MeshFormatError, GeometryError) as e:
            logger.info(f"Crop cache miss for '{mesh.name}': {e}")
        model = build_object_model(mesh, cfg, pool)
        self.write(directory, model)
        return model

    def write(self, directory: Path, model: ObjectModel) -> list[Path]:
        """Write model cloud, crops and manifest; returns the crop files."""
        directory.mkdir(parents=True, exist_ok=True)
        write_ply(str(directory / "model.ply"), model.cloud.points, binary=True,
                  comments=(f"class_id {model.class_id}",))
        files = []
        rows = []
        for crop in model.crops:
            path = directory / f"crop_{crop.crop_id:03d}.ply"
            write_ply(str(path), crop.points.points, binary=True,
                      comments=(f"crop_id {crop.crop_id}", f"class_id {crop.source_class}"))
            files.append(path)
            q = crop.view_rotation.rotation
            rows.append(
                f"{crop.crop_id} {crop.azimuth!r} {crop.elevation!r} "
                f"{q[0]!r} {q[1]!r} {q[2]!r} {q[3]!r} {len(crop)} {_file_digest(path)}"
            )
        header = [
            "# crop cache manifest",
            f"# model {_file_digest(directory / 'model.ply')}",
            "# crop_id azimuth elevation qw qx qy qz points sha256",
        ]
        (directory / self.MANIFEST).write_text("\n".join(header + rows) + "\n", encoding="ascii")
        logger.info(f"Wrote {len(files)} crops to {directory}")
        return files

    def load(self, directory: Path, mesh: MeshModel) -> ObjectModel:
        """Read a cache entry, verifying every file hash.

        Raises:
            FileNotFoundError: If the entry is absent.
            MeshFormatError: If the entry is incomplete or does not match its manifest.
        """
        manifest = directory / self.MANIFEST
        lines = manifest.read_text(encoding="ascii").splitlines()
        model_path = directory / "model.ply"
        model_line = next((ln for ln in lines if ln.startswith("# model ")), None)
        if model_line is None or model_line.split()[2] != _file_digest(model_path):
            raise MeshFormatError(f"Model cloud in {directory} does not match its manifest")
        cloud, _, _ = read_ply(str(model_path))

        crops = []
        for line in lines:
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 9:
                raise MeshFormatError(f"Malformed manifest line: {line!r}")
            crop_id = int(parts[0])
            path = directory / f"crop_{crop_id:03d}.ply"
            if _file_digest(path) != parts[8]:
                raise MeshFormatError(f"{path} does not match its manifest hash")
            points, _, _ = read_ply(str(path))
            crops.append(ModelCrop(
                crop_id=crop_id,
                points=PointCloud(points),
                azimuth=float(parts[1]),
                elevation=float(parts[2]),
                view_rotation=RigidTransform(rotation=tuple(float(v) for v in parts[3:7])),
                source_class=mesh.class_id,
            ))
        crops.sort(key=lambda c: c.crop_id)
        if [c.crop_id for c in crops] != list(range(len(crops))):
            raise MeshFormatError(f"Crop ids in {directory} are not contiguous")
        return ObjectModel(mesh=mesh, cloud=PointCloud(cloud), crops=tuple(crops))
