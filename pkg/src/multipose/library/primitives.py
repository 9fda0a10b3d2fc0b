"""Procedural meshes for synthetic scenes and tests.

All closed primitives wind their triangles counter-clockwise seen from
outside, so face normals point outward. Sizes are meters.
"""

from typing import Callable

import numpy as np

from multipose.core.geometry import RigidTransform
from multipose.library.mesh import MeshModel

# corner index = x_bit + 2 * y_bit + 4 * z_bit; quads wound from outside
_BOX_QUADS = (
    (0, 2, 3, 1),  # -z
    (4, 5, 7, 6),  # +z
    (0, 1, 5, 4),  # -y
    (2, 6, 7, 3),  # +y
    (0, 4, 6, 2),  # -x
    (1, 3, 7, 5),  # +x
)


def box(sx: float = 1.0, sy: float = 1.0, sz: float = 1.0, class_id: int = 0, name: str = "box") -> MeshModel:
    """Axis-aligned box centred on the origin: 8 vertices, 12 triangles."""
    bits = np.array([[i & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)], dtype=np.float64)
    vertices = (bits - 0.5) * np.array([sx, sy, sz])
    triangles = []
    for a, b, c, d in _BOX_QUADS:
        triangles += [(a, b, c), (a, c, d)]
    return MeshModel(vertices, np.array(triangles), class_id, name)


def cylinder(radius: float, height: float, segments: int = 32, class_id: int = 0,
             name: str = "cylinder") -> MeshModel:
    """Closed cylinder along z, base at z=0."""
    angles = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)
    bottom = np.column_stack([ring, np.zeros(segments)])
    top = np.column_stack([ring, np.full(segments, height)])
    vertices = np.vstack([bottom, top, [[0.0, 0.0, 0.0], [0.0, 0.0, height]]])
    bottom_center, top_center = 2 * segments, 2 * segments + 1

    triangles = []
    for i in range(segments):
        j = (i + 1) % segments
        b_i, b_j, t_i, t_j = i, j, segments + i, segments + j
        triangles += [(b_i, b_j, t_j), (b_i, t_j, t_i)]
        triangles.append((top_center, t_i, t_j))
        triangles.append((bottom_center, b_j, b_i))
    return MeshModel(vertices, np.array(triangles), class_id, name)


def sphere(radius: float, subdivisions: int = 3, class_id: int = 0, name: str = "sphere") -> MeshModel:
    """Icosphere centred on the origin."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    vertices = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    points = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in vertices]
    for _ in range(subdivisions):
        midpoints: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in midpoints:
                m = points[a] + points[b]
                points.append(m / np.linalg.norm(m))
                midpoints[key] = len(points) - 1
            return midpoints[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = refined

    vertices_arr = np.array(points) * radius
    triangles = np.array(faces, dtype=np.int64)
    corners = vertices_arr[triangles]
    normals = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    inward = np.einsum("ij,ij->i", normals, corners.mean(axis=1)) < 0.0
    triangles[inward] = triangles[inward][:, ::-1]
    return MeshModel(vertices_arr, triangles, class_id, name)


def plate(width: float, depth: float, class_id: int = 0, name: str = "plate") -> MeshModel:
    """One-sided rectangle in the xy-plane facing +z."""
    w, d = width / 2.0, depth / 2.0
    vertices = np.array([[-w, -d, 0.0], [w, -d, 0.0], [w, d, 0.0], [-w, d, 0.0]])
    return MeshModel(vertices, np.array([(0, 1, 2), (0, 2, 3)]), class_id, name)


def union(parts: list[tuple[MeshModel, RigidTransform]], class_id: int = 0, name: str = "") -> MeshModel:
    """Concatenate placed meshes into one (interiors are not removed)."""
    vertices = []
    triangles = []
    offset = 0
    for mesh, placement in parts:
        vertices.append(placement.apply(mesh.vertices))
        triangles.append(mesh.triangles + offset)
        offset += mesh.vertices.shape[0]
    return MeshModel(np.vstack(vertices), np.vstack(triangles), class_id, name)


def mug(class_id: int = 0, name: str = "mug") -> MeshModel:
    """Cylindrical body with a block handle on +x.

    The handle rises 3 cm above the rim so part of it shows from every view
    above the desk, which pins the yaw of an otherwise round body.
    """
    body = cylinder(0.04, 0.10, segments=32)
    handle = box(0.03, 0.02, 0.11)
    return union(
        [
            (body, RigidTransform.identity()),
            (handle, RigidTransform.from_translation((0.055, 0.0, 0.075))),
        ],
        class_id,
        name,
    )


def bottle(class_id: int = 0, name: str = "bottle") -> MeshModel:
    """Wide body with an off-centre neck and a side label block.

    The neck sits 2 cm towards +x; seen from above it fixes the yaw even when
    the label faces away.
    """
    body = cylinder(0.035, 0.14, segments=32)
    neck = cylinder(0.013, 0.06, segments=16)
    label = box(0.012, 0.04, 0.05)
    return union(
        [
            (body, RigidTransform.identity()),
            (neck, RigidTransform.from_translation((0.02, 0.0, 0.14))),
            (label, RigidTransform.from_translation((0.038, 0.0, 0.07))),
        ],
        class_id,
        name,
    )


def lblock(class_id: int = 0, name: str = "lblock") -> MeshModel:
    """L-shaped block: a long base with an upright at one end."""
    base = box(0.14, 0.06, 0.04)
    upright = box(0.04, 0.06, 0.08)
    return union(
        [
            (base, RigidTransform.from_translation((0.0, 0.0, 0.02))),
            (upright, RigidTransform.from_translation((0.05, 0.0, 0.08))),
        ],
        class_id,
        name,
    )


def desk_objects() -> dict[int, MeshModel]:
    """The three asymmetric objects of the default benchmark suite, by class id."""
    return {
        1: lblock(class_id=1),
        2: mug(class_id=2),
        3: bottle(class_id=3),
    }


SHAPES: dict[str, Callable[[int], MeshModel]] = {
    "box": lambda class_id: box(0.08, 0.08, 0.08, class_id),
    "cylinder": lambda class_id: cylinder(0.04, 0.12, class_id=class_id),
    "sphere": lambda class_id: sphere(0.05, class_id=class_id),
    "plate": lambda class_id: plate(0.12, 0.08, class_id=class_id),
    "mug": lambda class_id: mug(class_id),
    "bottle": lambda class_id: bottle(class_id),
    "lblock": lambda class_id: lblock(class_id),
}
"""Named desk-sized shapes usable from scene files."""


def make_shape(name: str, class_id: int = 0) -> MeshModel:
    """Build a named shape from :data:`SHAPES`.

    Raises:
        KeyError: If the name is unknown.
    """
    try:
        factory = SHAPES[name]
    except KeyError:
        raise KeyError(f"Unknown shape {name!r}; expected one of {', '.join(sorted(SHAPES))}") from None
    return factory(class_id)
