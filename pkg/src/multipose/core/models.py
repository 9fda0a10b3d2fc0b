"""Data models and configuration classes."""

import math
from dataclasses import dataclass, fields
from enum import Enum

from multipose.core.exceptions import ConfigError
from multipose.core.geometry import RigidTransform
from multipose.utils.validate import (
    require_nonnegative,
    require_positive,
    require_probability,
)


class TrackingMode(Enum):
    """Per-object registration phase."""

    ACQUISITION = "acquisition"
    TRACKING = "tracking"


@dataclass(frozen=True)
class IcpParams:
    """Parameters of point-to-point ICP."""

    max_iterations: int = 50
    """Iteration cap. Default: 50."""

    max_correspondence_distance: float = 0.05
    """Nearest neighbours farther than this (m) are not inliers. Default: 5 cm."""

    translation_epsilon: float = 1e-4
    """Convergence bound on the incremental translation (m)."""

    rotation_epsilon: float = 0.05
    """Convergence bound on the incremental rotation (deg)."""

    def validate(self) -> "IcpParams":
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")
        require_positive("max_correspondence_distance", self.max_correspondence_distance)
        require_positive("translation_epsilon", self.translation_epsilon)
        require_positive("rotation_epsilon", self.rotation_epsilon)
        return self


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def validate(self) -> "CameraIntrinsics":
        require_positive("fx", self.fx)
        require_positive("fy", self.fy)
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"Image size must be positive, got {self.width}x{self.height}")
        if not 0 <= self.cx < self.width:
            raise ConfigError(f"cx must lie in [0, width), got {self.cx}")
        if not 0 <= self.cy < self.height:
            raise ConfigError(f"cy must lie in [0, height), got {self.cy}")
        return self

    @property
    def shape(self) -> tuple[int, int]:
        """(height, width), the numpy image shape."""
        return (self.height, self.width)


@dataclass(frozen=True)
class CameraOdometry:
    """Camera motion between two consecutive frames."""

    motion: RigidTransform
    """Pose of the new camera frame expressed in the previous camera frame."""

    dt: float
    """Timestamp delta (s)."""

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"Odometry timestamp delta must be positive, got {self.dt}")

    @classmethod
    def stationary(cls, dt: float) -> "CameraOdometry":
        return cls(RigidTransform.identity(), dt)


@dataclass(frozen=True)
class PipelineConfig:
    """Configuration for the acquisition / tracking pipeline."""

    tau: float = 0.01
    """Alignment-metric match radius (m). Default: 1 cm."""

    epsilon: float = 0.75
    """Best-hypothesis score needed to enter tracking. Default: 0.75."""

    theta: float = 0.55
    """Minimum tracking score for a Kalman measurement update. Default: 0.55."""

    n_crops: int = 30
    """Number of model crops (pose hypotheses) per object. Default: 30."""

    acquisition_icp_iterations: int = 10
    """ICP iterations per hypothesis during acquisition."""

    tracking_icp_iterations: int = 50
    """ICP iteration cap during tracking."""

    max_correspondence_distance: float = 0.05
    """ICP inlier gate (m)."""

    translation_epsilon: float = 1e-4
    """ICP convergence bound on incremental translation (m)."""

    rotation_epsilon: float = 0.05
    """ICP convergence bound on incremental rotation (deg)."""

    bbox_margin: float = 0.02
    """Inflation of the model bounding box used to prune tracked clouds (m)."""

    max_position_variance: float = 0.0025
    """Position covariance trace (m^2) beyond which tracking gives up. Default: (5 cm)^2."""

    process_noise_linear: float = 1e-3
    """White-acceleration spectral density (m^2/s^3)."""

    process_noise_angular: float = 1e-2
    """White angular-acceleration spectral density (rad^2/s^3)."""

    odometry_position_sigma: float = 0.0
    """Per-frame odometry translation noise (m) folded into the process noise."""

    odometry_rotation_sigma: float = 0.0
    """Per-frame odometry rotation noise (deg) folded into the process noise."""

    measurement_position_sigma: float = 0.005
    """Base position measurement noise (m) for a perfect score."""

    measurement_rotation_sigma: float = 2.0
    """Base orientation measurement noise (deg) for a perfect score."""

    score_floor: float = 0.05
    """Lower bound on the score used when scaling measurement noise."""

    initial_position_sigma: float = 0.01
    """Position standard deviation when tracking starts (m)."""

    initial_rotation_sigma: float = 5.0
    """Orientation standard deviation when tracking starts (deg)."""

    initial_linear_velocity_sigma: float = 0.02
    """Linear velocity standard deviation when tracking starts (m/s)."""

    initial_angular_velocity_sigma: float = 0.1
    """Angular velocity standard deviation when tracking starts (rad/s)."""

    frame_period: float = 1.0 / 30.0
    """Timestamp delta assumed when odometry carries none (s)."""

    model_sample_count: int = 20000
    """Surface samples drawn from each mesh before downsampling."""

    model_leaf: float = 0.005
    """Voxel size for model downsampling (m). Default: tau / 2."""

    scene_leaf: float = 0.0
    """Voxel size for segmented scene clouds (m); 0 disables downsampling."""

    camera_distance_factor: float = 4.0
    """Crop viewpoint distance in bounding-sphere radii."""

    warm_start: bool = True
    """Try the last winning crop alone before a full re-acquisition."""

    seed: int = 0
    """Seed for model surface sampling."""

    def validate(self) -> "PipelineConfig":
        for name in (
            "tau",
            "max_correspondence_distance",
            "translation_epsilon",
            "rotation_epsilon",
            "bbox_margin",
            "max_position_variance",
            "process_noise_linear",
            "process_noise_angular",
            "measurement_position_sigma",
            "measurement_rotation_sigma",
            "score_floor",
            "initial_position_sigma",
            "initial_rotation_sigma",
            "initial_linear_velocity_sigma",
            "initial_angular_velocity_sigma",
            "frame_period",
            "model_leaf",
            "camera_distance_factor",
        ):
            require_positive(name, getattr(self, name))
        require_nonnegative("scene_leaf", self.scene_leaf)
        require_nonnegative("odometry_position_sigma", self.odometry_position_sigma)
        require_nonnegative("odometry_rotation_sigma", self.odometry_rotation_sigma)
        require_probability("epsilon", self.epsilon)
        require_probability("score_floor", self.score_floor)
        if not 0.0 < self.theta < self.epsilon <= 1.0:
            raise ConfigError(
                f"Thresholds must satisfy 0 < theta < epsilon <= 1, got theta={self.theta}, epsilon={self.epsilon}"
            )
        for name in ("n_crops", "acquisition_icp_iterations", "tracking_icp_iterations", "model_sample_count"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.camera_distance_factor <= 1.0:
            raise ConfigError("camera_distance_factor must exceed 1 to keep the camera outside the model")
        return self

    def acquisition_icp(self) -> IcpParams:
        return IcpParams(
            max_iterations=self.acquisition_icp_iterations,
            max_correspondence_distance=self.max_correspondence_distance,
            translation_epsilon=self.translation_epsilon,
            rotation_epsilon=self.rotation_epsilon,
        )

    def tracking_icp(self) -> IcpParams:
        return IcpParams(
            max_iterations=self.tracking_icp_iterations,
            max_correspondence_distance=self.max_correspondence_distance,
            translation_epsilon=self.translation_epsilon,
            rotation_epsilon=self.rotation_epsilon,
        )

    @property
    def measurement_rotation_sigma_rad(self) -> float:
        return math.radians(self.measurement_rotation_sigma)


@dataclass(frozen=True)
class NoiseModel:
    """Synthetic sensor and segmentation corruption."""

    depth_sigma: float = 0.002
    """Per-pixel Gaussian depth noise (m). Default: 2 mm."""

    mask_dilate: int = 0
    """Dilation iterations applied to every object mask (pixels)."""

    mask_erode: int = 0
    """Erosion iterations applied to every object mask (pixels)."""

    mask_flip_rate: float = 0.0
    """Probability that a pixel's label is replaced by a random label."""

    mask_shift: int = 0
    """Columns the label image is shifted towards +u against the depth image (uncalibrated RGB/depth pair)."""

    deformation_amplitude: float = 0.0
    """Low-frequency depth bias on reflective objects (m)."""

    deformation_period: float = 24.0
    """Spatial period of the deformation pattern (pixels)."""

    odometry_translation_sigma: float = 0.0
    """Noise added to reported camera translation per frame (m)."""

    odometry_rotation_sigma: float = 0.0
    """Noise added to reported camera rotation per frame (deg)."""

    def validate(self) -> "NoiseModel":
        for f in fields(self):
            require_nonnegative(f.name, float(getattr(self, f.name)))
        require_probability("mask_flip_rate", self.mask_flip_rate)
        if self.deformation_period <= 0:
            raise ConfigError("deformation_period must be positive")
        return self

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        return cls(depth_sigma=0.0)
