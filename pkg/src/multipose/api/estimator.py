"""PoseEstimator - main public API facade."""

from pathlib import Path
from typing import Optional, Union

from multipose.concurrency.worker import WorkerPool
from multipose.core.exceptions import EstimatorNotStartedError
from multipose.core.models import CameraIntrinsics, PipelineConfig
from multipose.core.registry import ObjectRegistry
from multipose.formats import load_mesh
from multipose.library.crops import CropCache, ObjectModel, build_object_model
from multipose.library.mesh import MeshModel
from multipose.services.frame_processor import Frame, FrameProcessor, FrameReport
from multipose.utils.log import get_logger

logger = get_logger(__name__)


class PoseEstimator:
    """
    Main pose-estimation facade.

    Delegates to specialized components:
    - WorkerPool: runs crop rendering, objects and hypotheses in parallel
    - ObjectRegistry: holds object models and their tracking state
    - FrameProcessor: the per-frame acquisition / tracking state machine

    Typical use::

        with PoseEstimator(intrinsics, workers=4) as estimator:
            estimator.add_object("mug.ply", class_id=2)
            report = estimator.process(frame)
    """

    def __init__(
        self,
        intrinsics: CameraIntrinsics,
        config: PipelineConfig = PipelineConfig(),
        workers: int = 1,
        cache_dir: Optional[Union[str, Path]] = None,
    ):
        """
        Initialize PoseEstimator.

        Args:
            intrinsics: Camera intrinsics of the depth/label images.
            config: Pipeline configuration.
            workers: Worker threads for parallel stages.
            cache_dir: Optional crop cache directory.
        """
        self._intrinsics = intrinsics.validate()
        self._config = config.validate()
        self._pool = WorkerPool(workers)
        self._registry = ObjectRegistry()
        self._cache = CropCache(cache_dir) if cache_dir is not None else None
        self._processor: Optional[FrameProcessor] = None

    @property
    def config(self) -> PipelineConfig:
        return self._config

    @property
    def registry(self) -> ObjectRegistry:
        return self._registry

    @property
    def is_started(self) -> bool:
        return self._processor is not None

    def start(self) -> None:
        """Start the worker pool. Idempotent."""
        if self._processor is not None:
            logger.warning("Estimator already started")
            return
        self._pool.start()
        self._processor = FrameProcessor(self._registry, self._intrinsics, self._config, self._pool)
        logger.info("PoseEstimator started")

    def shutdown(self) -> None:
        """
        Stop the worker pool.

        This method is idempotent and safe to call multiple times.
        """
        if self._processor is None:
            return
        self._processor = None
        self._pool.stop()
        logger.info("PoseEstimator shut down")

    def add_object(self, mesh: Union[MeshModel, str, Path], class_id: Optional[int] = None,
                   name: Optional[str] = None) -> ObjectModel:
        """
        Register an object, building (or loading cached) crops.

        Args:
            mesh: Mesh, or path to a PLY/OBJ file.
            class_id: Semantic label; defaults to the mesh's own.
            name: Object name; defaults to the mesh's own.

        Returns:
            The registered object model.

        Raises:
            EstimatorNotStartedError: If the estimator is not started.
            MeshFormatError: If a mesh file cannot be parsed.
        """
        self._require_started()
        if not isinstance(mesh, MeshModel):
            mesh = load_mesh(str(mesh))
        mesh = mesh.with_label(mesh.class_id if class_id is None else class_id, name)
        model = build_object_model(mesh, self._config, self._pool, self._cache)
        self._registry.register(model)
        logger.info(f"Registered '{model.name}' as class {model.class_id} with {len(model.crops)} crops")
        return model

    def add_model(self, model: ObjectModel) -> None:
        """Register an already-built object model."""
        self._registry.register(model)

    def process(self, frame: Frame) -> FrameReport:
        """
        Estimate the pose of every known object in a frame.

        Raises:
            EstimatorNotStartedError: If the estimator is not started.
        """
        return self._require_started().process(frame)

    def reset(self) -> None:
        """Forget all tracking state (e.g., between sequences)."""
        self._registry.reset()

    def _require_started(self) -> FrameProcessor:
        if self._processor is None:
            raise EstimatorNotStartedError("Estimator must be started first")
        return self._processor

    def __enter__(self) -> "PoseEstimator":
        self.start()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.shutdown()
