"""Sensor and segmentation corruption for synthetic frames."""

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy import ndimage

from multipose.core.geometry import RigidTransform
from multipose.core.models import CameraOdometry, NoiseModel
from multipose.scene.ingest import DepthImage, LabelImage


@dataclass(frozen=True)
class MaskQuality:
    """Pixel precision and recall of a corrupted mask against the clean one."""

    precision: float
    recall: float


@dataclass(frozen=True, eq=False)
class CorruptedMask:
    labels: LabelImage
    quality: dict[int, MaskQuality]


def add_depth_noise(depth: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian noise on valid pixels; invalid pixels stay invalid."""
    out = np.array(depth, dtype=np.float64, copy=True)
    if sigma <= 0:
        return out
    valid = np.isfinite(out) & (out > 0)
    out[valid] += rng.normal(0.0, sigma, size=int(np.count_nonzero(valid)))
    out[valid & (out <= 0)] = 0.0
    return out


def deformation_field(shape: tuple[int, int], amplitude: float, period: float, phase: float = 0.0) -> np.ndarray:
    """Smooth depth bias ``amplitude * sin(u) * sin(v)`` with the given pixel period."""
    v, u = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
    k = 2.0 * np.pi / period
    return amplitude * np.sin(k * u + phase) * np.sin(k * v + phase)


def mask_quality(reference: LabelImage, corrupted: LabelImage, class_ids: Iterable[int]) -> dict[int, MaskQuality]:
    """Per-class precision and recall; an empty prediction has precision 1."""
    out = {}
    for class_id in class_ids:
        truth = reference.labels == class_id
        predicted = corrupted.labels == class_id
        hits = float(np.count_nonzero(truth & predicted))
        n_pred = float(np.count_nonzero(predicted))
        n_true = float(np.count_nonzero(truth))
        out[class_id] = MaskQuality(
            precision=hits / n_pred if n_pred else 1.0,
            recall=hits / n_true if n_true else 1.0,
        )
    return out


def shift_columns(labels: np.ndarray, shift: int) -> np.ndarray:
    """Labels moved ``shift`` columns towards +u; vacated columns become background."""
    out = np.zeros_like(labels)
    if shift == 0:
        out[...] = labels
    elif shift < labels.shape[1]:
        out[:, shift:] = labels[:, :-shift]
    return out


def corrupt_mask(labels: LabelImage, model: NoiseModel, seed: int,
                 extra_classes: Optional[Iterable[int]] = None) -> CorruptedMask:
    """Shift, dilate, then erode, then randomly flip labels.

    The shift misregisters the whole label image against the depth image.
    Dilation grows each class (ascending id) into background pixels only, so
    it never steals another object's pixels. Flips draw uniformly from
    background and the classes present. Quality is measured against the
    unshifted input.
    """
    classes = labels.classes()
    base = shift_columns(labels.labels, model.mask_shift)
    out = np.array(base, copy=True)
    structure = ndimage.generate_binary_structure(2, 1)

    if model.mask_dilate > 0:
        background = base == 0
        for class_id in classes:
            grown = ndimage.binary_dilation(base == class_id, structure, iterations=model.mask_dilate)
            claim = grown & background & (out == 0)
            out[claim] = class_id

    if model.mask_erode > 0:
        eroded = np.array(out, copy=True)
        for class_id in np.unique(out):
            if class_id == 0:
                continue
            region = out == class_id
            kept = ndimage.binary_erosion(region, structure, iterations=model.mask_erode, border_value=1)
            eroded[region & ~kept] = 0
        out = eroded

    if model.mask_flip_rate > 0:
        rng = np.random.default_rng(seed)
        flip = rng.random(out.shape) < model.mask_flip_rate
        choices = np.array([0] + classes + sorted(set(extra_classes or ()) - set(classes)), dtype=out.dtype)
        out[flip] = rng.choice(choices, size=int(np.count_nonzero(flip)))

    corrupted = LabelImage(out)
    return CorruptedMask(corrupted, mask_quality(labels, corrupted, classes))


def noisy_odometry(truth: CameraOdometry, model: NoiseModel, rng: np.random.Generator) -> CameraOdometry:
    """Reported odometry: the true motion followed by a small random motion."""
    if model.odometry_translation_sigma <= 0 and model.odometry_rotation_sigma <= 0:
        return truth
    rotvec = rng.normal(0.0, np.radians(model.odometry_rotation_sigma), size=3)
    shift = rng.normal(0.0, model.odometry_translation_sigma, size=3)
    error = RigidTransform.from_rotvec(rotvec, shift)
    return CameraOdometry(truth.motion.compose(error), truth.dt)


def apply_depth_noise(depth: DepthImage, model: NoiseModel, rng: np.random.Generator,
                      reflective: Optional[np.ndarray] = None) -> DepthImage:
    """Deformation on ``reflective`` pixels, then per-pixel Gaussian noise."""
    d = np.array(depth.depth, copy=True)
    if model.deformation_amplitude > 0 and reflective is not None and np.any(reflective):
        phase = float(rng.uniform(0.0, 2.0 * np.pi))
        field = deformation_field(d.shape, model.deformation_amplitude, model.deformation_period, phase)
        d[reflective] += field[reflective]
    return DepthImage(add_depth_noise(d, model.depth_sigma, rng))
