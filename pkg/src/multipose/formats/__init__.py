"""File formats: mesh parsers with automatic registration, plus image, config, frame and report I/O."""

import importlib
import pkgutil
from pathlib import Path
from typing import Dict, Optional

from multipose.core.exceptions import MeshFormatError
from multipose.core.interfaces import IMeshFormat
from multipose.library.mesh import MeshModel
from multipose.utils.log import get_logger

logger = get_logger(__name__)

# Registry of mesh formats by lowercase extension
_format_registry: Dict[str, IMeshFormat] = {}


def _register_format(format: IMeshFormat) -> None:
    """
    Register a mesh format.

    Args:
        format: Format instance implementing IMeshFormat.
    """
    for ext in format.extensions:
        ext_lower = ext.lower()
        if ext_lower in _format_registry and _format_registry[ext_lower] is not format:
            logger.warning(
                f"Format with extension {ext_lower} already registered, "
                f"overwriting with {type(format).__name__}"
            )
        _format_registry[ext_lower] = format
    logger.debug(f"Registered format {type(format).__name__} for extensions: {format.extensions}")


def _auto_discover_formats() -> None:
    """Register every module-level ``*_format`` object of this package that implements IMeshFormat."""
    package_path = Path(__file__).parent
    for module_info in pkgutil.iter_modules([str(package_path)]):
        module_name = module_info.name
        try:
            module = importlib.import_module(f"multipose.formats.{module_name}")
        except ImportError as e:
            logger.debug(f"Could not load format module {module_name}: {e}")
            continue
        for attr_name in dir(module):
            if attr_name.endswith("_format") and not attr_name.startswith("_"):
                attr = getattr(module, attr_name)
                if isinstance(attr, IMeshFormat):
                    _register_format(attr)


def get_format_for_file(path: str) -> Optional[IMeshFormat]:
    """
    Get the appropriate format handler for a mesh file.

    Args:
        path: Path to mesh file.

    Returns:
        IMeshFormat instance if a suitable format is found, None otherwise.
    """
    if not _format_registry:
        _auto_discover_formats()

    ext = Path(path).suffix.lower()
    if ext in _format_registry:
        format = _format_registry[ext]
        if format.can_load(path):
            return format

    for format in _format_registry.values():
        if format.can_load(path):
            return format
    return None


def supported_extensions() -> list[str]:
    if not _format_registry:
        _auto_discover_formats()
    return sorted(_format_registry)


def load_mesh(path: str, class_id: int = 0, name: Optional[str] = None) -> MeshModel:
    """
    Detect the format of a mesh file and load it.

    Args:
        path: Path to mesh file.
        class_id: Semantic label given to the loaded mesh.
        name: Object name; defaults to the file stem.

    Returns:
        Indexed triangle mesh in meters.

    Raises:
        FileNotFoundError: If file does not exist.
        MeshFormatError: If no format handles the file or parsing fails.
        UnitSanityError: If the bounding box exceeds 10 m.
    """
    if not Path(path).exists():
        raise FileNotFoundError(f"Mesh file not found: {path}")
    format = get_format_for_file(path)
    if format is None:
        raise MeshFormatError(
            f"No suitable format handler found for file: {path}. "
            f"Supported extensions: {', '.join(supported_extensions())}"
        )
    mesh = format.load(path)
    return mesh.with_label(class_id, name if name is not None else mesh.name)


def save_mesh(mesh: MeshModel, path: str) -> None:
    """Write ``mesh`` with the format registered for the file extension."""
    if not _format_registry:
        _auto_discover_formats()
    format = _format_registry.get(Path(path).suffix.lower())
    if format is None:
        raise MeshFormatError(f"No mesh format registered for extension '{Path(path).suffix}'")
    format.save(mesh, path)


__all__ = ["load_mesh", "save_mesh", "get_format_for_file", "supported_extensions", "IMeshFormat"]
