"""Depth and label image files.

Depth: 16-bit PNG in millimeters (0 = invalid) or 32-bit float TIFF in meters.
Labels: 8-bit PNG whose pixel value is the class id.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from multipose.core.exceptions import DimensionMismatchError
from multipose.scene.ingest import DepthImage, LabelImage

_MM = 1000.0
_TIFF = (".tif", ".tiff")


def read_depth(path: str | Path) -> DepthImage:
    """Load a depth image in meters."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Depth image not found: {path}")
    with Image.open(path) as img:
        data = np.array(img)
    if path.suffix.lower() in _TIFF or data.dtype.kind == "f":
        return DepthImage(data.astype(np.float64))
    return DepthImage(data.astype(np.float64) / _MM)


def write_depth(path: str | Path, depth: DepthImage) -> None:
    """Write PNG (millimeters, rounded) or TIFF (float meters) by extension."""
    path = Path(path)
    d = depth.depth
    if path.suffix.lower() in _TIFF:
        Image.fromarray(d.astype(np.float32)).save(path)
        return
    mm = np.where(depth.valid_mask(), np.rint(np.nan_to_num(d) * _MM), 0.0)
    Image.fromarray(np.clip(mm, 0, 65535).astype(np.uint16)).save(path)


def read_labels(path: str | Path) -> LabelImage:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Label image not found: {path}")
    with Image.open(path) as img:
        if img.mode not in ("L", "P", "I", "I;16"):
            img = img.convert("L")
        return LabelImage(np.array(img))


def write_labels(path: str | Path, labels: LabelImage) -> None:
    data = labels.labels
    if data.size and (data.min() < 0 or data.max() > 255):
        raise DimensionMismatchError("Label values must fit in 8 bits")
    Image.fromarray(data.astype(np.uint8)).save(Path(path))
