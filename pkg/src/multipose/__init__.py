"""
multipose - object pose estimation from segmented depth images.

Each known object is registered to its segmented depth cloud by running ICP
from many model crops and ranking the fits by the alignment score, then
tracked frame to frame with a Kalman filter that fuses camera odometry.
"""

from multipose.api.estimator import PoseEstimator
from multipose.core.exceptions import (
    ConfigError,
    EmptyCloudError,
    EstimatorNotStartedError,
    GeometryError,
    MeshFormatError,
    PoseEngineError,
)
from multipose.core.geometry import PointCloud, RigidTransform
from multipose.core.models import CameraIntrinsics, CameraOdometry, PipelineConfig, TrackingMode
from multipose.services.frame_processor import Frame, FrameReport, ObjectReport

__version__ = "0.1.0"

__all__ = [
    "PoseEstimator",
    "PipelineConfig",
    "CameraIntrinsics",
    "CameraOdometry",
    "TrackingMode",
    "Frame",
    "FrameReport",
    "ObjectReport",
    "PointCloud",
    "RigidTransform",
    "PoseEngineError",
    "GeometryError",
    "EmptyCloudError",
    "MeshFormatError",
    "ConfigError",
    "EstimatorNotStartedError",
]
