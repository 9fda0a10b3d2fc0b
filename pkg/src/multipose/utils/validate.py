"""Validation utilities."""

import math

from multipose.core.exceptions import ConfigError


def require_positive(name: str, value: float) -> float:
    """Return value if it is finite and > 0, else raise ConfigError."""
    if not math.isfinite(value) or value <= 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


def require_nonnegative(name: str, value: float) -> float:
    """Return value if it is finite and >= 0, else raise ConfigError."""
    if not math.isfinite(value) or value < 0:
        raise ConfigError(f"{name} must be nonnegative, got {value}")
    return value


def require_probability(name: str, value: float) -> float:
    """Return value if it lies in [0, 1], else raise ConfigError."""
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must lie in [0, 1], got {value}")
    return value
