"""Public API."""

from multipose.api.estimator import PoseEstimator

__all__ = ["PoseEstimator"]
