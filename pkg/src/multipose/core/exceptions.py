"""Exception classes for multipose."""


class PoseEngineError(Exception):
    """Base exception for pose estimation errors."""
    pass


class GeometryError(PoseEngineError):
    """Raised when a geometric computation receives unusable input."""
    pass


class DegenerateConfigurationError(GeometryError):
    """Raised when points are collinear or coincident for a rigid fit."""
    pass


class EmptyCloudError(PoseEngineError):
    """Raised when an operation requires a non-empty point cloud."""
    pass


class NoCorrespondencesError(PoseEngineError):
    """Raised when ICP finds no correspondence within the distance gate."""

    def __init__(self, message: str, iteration: int = 0):
        self.iteration = iteration
        super().__init__(f"{message} (iteration {iteration})")


class MeshFormatError(PoseEngineError):
    """Raised when a mesh file cannot be parsed."""
    pass


class UnitSanityError(MeshFormatError):
    """Raised when a mesh is implausibly large for meter units."""
    pass


class EmptyMeshError(PoseEngineError):
    """Raised when a mesh has no usable triangles."""
    pass


class EmptyCropError(PoseEngineError):
    """Raised when a viewpoint sees nothing of the model."""

    def __init__(self, message: str, crop_id: int = -1):
        self.crop_id = crop_id
        super().__init__(message)


class DimensionMismatchError(PoseEngineError):
    """Raised when image dimensions disagree with each other or the intrinsics."""
    pass


class EmptySegmentError(PoseEngineError):
    """Raised when no valid pixel carries the requested class."""

    def __init__(self, class_id: int):
        self.class_id = class_id
        super().__init__(f"No valid pixels carry class {class_id}")


class ConfigError(PoseEngineError):
    """Raised when a configuration value or file is invalid."""
    pass


class EstimatorNotStartedError(PoseEngineError):
    """Raised when estimator operations are attempted before start()."""
    pass


class BenchmarkError(PoseEngineError):
    """Raised when a benchmark run cannot proceed."""
    pass
