"""Wavefront OBJ mesh reader/writer (geometry only)."""

from pathlib import Path

import numpy as np

from multipose.core.exceptions import MeshFormatError
from multipose.library.mesh import MeshModel
from multipose.utils.log import get_logger

logger = get_logger(__name__)


def _vertex_index(token: str, vertex_count: int, line_number: int) -> int:
    # "i", "i/t", "i//n" and "i/t/n" all start with the position index
    try:
        index = int(token.split("/")[0])
    except ValueError:
        raise MeshFormatError(f"Line {line_number}: bad face index '{token}'") from None
    if index < 0:
        index += vertex_count
    else:
        index -= 1
    if not 0 <= index < vertex_count:
        raise MeshFormatError(f"Line {line_number}: face index {token} out of range")
    return index


def read_obj(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Parse ``v`` and ``f`` records; everything else is ignored."""
    vertices: list[list[float]] = []
    triangles: list[list[int]] = []
    with open(path, "r", encoding="utf-8", errors="replace") as f:
        for line_number, line in enumerate(f, start=1):
            tokens = line.split("#", 1)[0].split()
            if not tokens:
                continue
            if tokens[0] == "v":
                if len(tokens) < 4:
                    raise MeshFormatError(f"Line {line_number}: vertex needs 3 coordinates")
                try:
                    vertices.append([float(v) for v in tokens[1:4]])
                except ValueError:
                    raise MeshFormatError(f"Line {line_number}: bad vertex coordinate") from None
            elif tokens[0] == "f":
                if len(tokens) != 4:
                    raise MeshFormatError(
                        f"Line {line_number}: face has {len(tokens) - 1} vertices; only triangles are supported"
                    )
                triangles.append([_vertex_index(t, len(vertices), line_number) for t in tokens[1:]])
    return (
        np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
        np.asarray(triangles, dtype=np.int64).reshape(-1, 3),
    )


def write_obj(path: str, vertices: np.ndarray, triangles: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for v in np.asarray(vertices, dtype=np.float64).reshape(-1, 3):
            f.write(f"v {v[0]!r} {v[1]!r} {v[2]!r}\n")
        for tri in np.asarray(triangles, dtype=np.int64).reshape(-1, 3):
            f.write(f"f {tri[0] + 1} {tri[1] + 1} {tri[2] + 1}\n")


class ObjFormat:
    """OBJ mesh format handler."""

    @property
    def extensions(self) -> tuple[str, ...]:
        return (".obj",)

    def can_load(self, path: str) -> bool:
        return Path(path).suffix.lower() == ".obj" and Path(path).is_file()

    def load(self, path: str) -> MeshModel:
        if not Path(path).exists():
            raise FileNotFoundError(f"Mesh file not found: {path}")
        vertices, triangles = read_obj(path)
        logger.debug(f"Read OBJ {path}: {vertices.shape[0]} vertices, {triangles.shape[0]} triangles")
        return MeshModel(vertices, triangles, name=Path(path).stem)

    def save(self, mesh: MeshModel, path: str) -> None:
        write_obj(path, mesh.vertices, mesh.triangles)


obj_format = ObjFormat()
