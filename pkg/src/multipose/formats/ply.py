"""PLY mesh and point-cloud reader/writer.

Handles ``ascii``, ``binary_little_endian`` and ``binary_big_endian`` bodies.
Only the ``vertex`` x/y/z properties and the ``face`` vertex-index list are
interpreted; other elements and properties are read and discarded.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Optional

import numpy as np

from multipose.core.exceptions import MeshFormatError
from multipose.library.mesh import MeshModel
from multipose.utils.log import get_logger

logger = get_logger(__name__)

_SCALAR_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

_BYTE_ORDER = {"binary_little_endian": "<", "binary_big_endian": ">", "ascii": "="}


@dataclass
class _Property:
    name: str
    dtype: str
    count_dtype: Optional[str] = None
    """Set for list properties: type of the leading element count."""


@dataclass
class _Element:
    name: str
    count: int
    properties: list[_Property] = field(default_factory=list)

    @property
    def has_list(self) -> bool:
        return any(p.count_dtype is not None for p in self.properties)


@dataclass
class PlyHeader:
    """Parsed PLY header."""

    encoding: str
    elements: list[_Element]
    comments: list[str]
    body_offset: int


def _scalar(type_name: str) -> str:
    try:
        return _SCALAR_TYPES[type_name]
    except KeyError:
        raise MeshFormatError(f"Unknown PLY property type: {type_name}") from None


def read_header(f: BinaryIO) -> PlyHeader:
    """Parse the header of an open PLY file, leaving ``f`` at the body."""
    if f.readline().strip() != b"ply":
        raise MeshFormatError("Not a PLY file (missing 'ply' magic)")
    encoding = None
    elements: list[_Element] = []
    comments: list[str] = []
    while True:
        raw = f.readline()
        if not raw:
            raise MeshFormatError("PLY header is not terminated by end_header")
        tokens = raw.decode("ascii", errors="replace").split()
        if not tokens:
            continue
        keyword = tokens[0]
        if keyword == "end_header":
            break
        if keyword == "format":
            if len(tokens) < 2 or tokens[1] not in _BYTE_ORDER:
                raise MeshFormatError(f"Unsupported PLY format line: {raw!r}")
            encoding = tokens[1]
        elif keyword == "comment" or keyword == "obj_info":
            comments.append(" ".join(tokens[1:]))
        elif keyword == "element":
            if len(tokens) != 3:
                raise MeshFormatError(f"Malformed element line: {raw!r}")
            try:
                count = int(tokens[2])
            except ValueError:
                raise MeshFormatError(f"Malformed element count: {raw!r}") from None
            elements.append(_Element(tokens[1], count))
        elif keyword == "property":
            if not elements:
                raise MeshFormatError("PLY property declared before any element")
            if len(tokens) == 5 and tokens[1] == "list":
                elements[-1].properties.append(
                    _Property(tokens[4], _scalar(tokens[3]), count_dtype=_scalar(tokens[2]))
                )
            elif len(tokens) == 3:
                elements[-1].properties.append(_Property(tokens[2], _scalar(tokens[1])))
            else:
                raise MeshFormatError(f"Malformed property line: {raw!r}")
        else:
            raise MeshFormatError(f"Unknown PLY header keyword: {keyword}")
    if encoding is None:
        raise MeshFormatError("PLY header has no format line")
    return PlyHeader(encoding, elements, comments, f.tell())


def _read_ascii(f: BinaryIO, header: PlyHeader) -> dict[str, list]:
    text = f.read().decode("ascii", errors="replace").split()
    pos = 0
    out: dict[str, list] = {}
    try:
        for element in header.elements:
            rows = []
            for _ in range(element.count):
                row = []
                for prop in element.properties:
                    if prop.count_dtype is None:
                        row.append(float(text[pos]))
                        pos += 1
                    else:
                        n = int(text[pos])
                        row.append([float(v) for v in text[pos + 1:pos + 1 + n]])
                        if len(row[-1]) != n:
                            raise IndexError
                        pos += 1 + n
                rows.append(row)
            out[element.name] = rows
    except (IndexError, ValueError):
        raise MeshFormatError("PLY body is truncated or malformed") from None
    return out


def _read_binary(f: BinaryIO, header: PlyHeader) -> dict[str, list]:
    order = _BYTE_ORDER[header.encoding]
    data = f.read()
    pos = 0
    out: dict[str, list] = {}
    try:
        for element in header.elements:
            if element.count == 0:
                out[element.name] = []
                continue
            if not element.has_list:
                dtype = np.dtype([(p.name, order + p.dtype) for p in element.properties])
                block = np.frombuffer(data, dtype=dtype, count=element.count, offset=pos)
                pos += dtype.itemsize * element.count
                out[element.name] = [list(r) for r in block.tolist()]
                continue
            rows = []
            for _ in range(element.count):
                row = []
                for prop in element.properties:
                    if prop.count_dtype is None:
                        value = np.frombuffer(data, dtype=order + prop.dtype, count=1, offset=pos)
                        pos += value.itemsize
                        row.append(value[0].item())
                    else:
                        n_arr = np.frombuffer(data, dtype=order + prop.count_dtype, count=1, offset=pos)
                        pos += n_arr.itemsize
                        n = int(n_arr[0])
                        values = np.frombuffer(data, dtype=order + prop.dtype, count=n, offset=pos)
                        pos += values.itemsize * n
                        row.append(values.tolist())
                rows.append(row)
            out[element.name] = rows
    except ValueError:
        raise MeshFormatError("PLY body is truncated") from None
    return out


def _vertex_positions(header: PlyHeader, body: dict[str, list]) -> np.ndarray:
    vertex = next((e for e in header.elements if e.name == "vertex"), None)
    if vertex is None:
        raise MeshFormatError("PLY file has no vertex element")
    names = [p.name for p in vertex.properties]
    try:
        columns = [names.index(axis) for axis in ("x", "y", "z")]
    except ValueError:
        raise MeshFormatError("PLY vertex element lacks x/y/z properties") from None
    rows = body.get("vertex", [])
    if not rows:
        return np.zeros((0, 3))
    return np.asarray([[row[c] for c in columns] for row in rows], dtype=np.float64)


def _face_indices(header: PlyHeader, body: dict[str, list]) -> np.ndarray:
    face = next((e for e in header.elements if e.name == "face"), None)
    if face is None:
        return np.zeros((0, 3), dtype=np.int64)
    column = next(
        (i for i, p in enumerate(face.properties)
         if p.count_dtype is not None and p.name in ("vertex_indices", "vertex_index")),
        None,
    )
    if column is None:
        raise MeshFormatError("PLY face element lacks a vertex_indices list")
    triangles = []
    for number, row in enumerate(body.get("face", [])):
        indices = row[column]
        if len(indices) != 3:
            raise MeshFormatError(f"Face {number} has {len(indices)} vertices; only triangles are supported")
        triangles.append([int(i) for i in indices])
    return np.asarray(triangles, dtype=np.int64).reshape(-1, 3)


def read_ply(path: str) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Read vertex positions, triangle indices and header comments."""
    with open(path, "rb") as f:
        header = read_header(f)
        body = _read_ascii(f, header) if header.encoding == "ascii" else _read_binary(f, header)
    return _vertex_positions(header, body), _face_indices(header, body), header.comments


def write_ply(
    path: str,
    vertices: np.ndarray,
    triangles: Optional[np.ndarray] = None,
    binary: bool = False,
    comments: tuple[str, ...] = (),
) -> None:
    """Write a mesh (or a bare point cloud when ``triangles`` is None).

    Binary output is little-endian with double coordinates and int32 indices,
    so identical inputs always produce identical bytes.
    """
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    faces = None if triangles is None else np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    lines = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0"]
    lines += [f"comment {c}" for c in comments]
    lines += [f"element vertex {vertices.shape[0]}",
              "property double x", "property double y", "property double z"]
    if faces is not None:
        lines += [f"element face {faces.shape[0]}", "property list uchar int vertex_indices"]
    lines.append("end_header")
    header = ("\n".join(lines) + "\n").encode("ascii")

    with open(path, "wb") as f:
        f.write(header)
        if binary:
            f.write(vertices.astype("<f8").tobytes())
            if faces is not None:
                record = np.zeros(faces.shape[0], dtype=[("n", "u1"), ("v", "<i4", (3,))])
                record["n"] = 3
                record["v"] = faces
                f.write(record.tobytes())
        else:
            body = [" ".join(repr(float(c)) for c in v) for v in vertices]
            if faces is not None:
                body += ["3 " + " ".join(str(int(i)) for i in tri) for tri in faces]
            f.write(("\n".join(body) + ("\n" if body else "")).encode("ascii"))


class PlyFormat:
    """PLY mesh format handler."""

    @property
    def extensions(self) -> tuple[str, ...]:
        return (".ply",)

    def can_load(self, path: str) -> bool:
        try:
            with open(path, "rb") as f:
                return f.read(4) in (b"ply\n", b"ply\r")
        except OSError:
            return False

    def load(self, path: str) -> MeshModel:
        if not Path(path).exists():
            raise FileNotFoundError(f"Mesh file not found: {path}")
        vertices, triangles, _ = read_ply(path)
        logger.debug(f"Read PLY {path}: {vertices.shape[0]} vertices, {triangles.shape[0]} triangles")
        return MeshModel(vertices, triangles, name=Path(path).stem)

    def save(self, mesh: MeshModel, path: str, binary: bool = False) -> None:
        write_ply(path, mesh.vertices, mesh.triangles, binary=binary)


ply_format = PlyFormat()
