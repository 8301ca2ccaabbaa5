"""Shared mesh builders and fixtures."""

from __future__ import annotations

import numpy as np
import pytest

from edgetex.mesh import TriMesh, compute_vertex_normals, normalize_mesh
from edgetex.primitives import cube, merge, translated, uv_sphere


def triangle_soup(n_faces: int, rng: np.random.Generator, extent: float = 0.8) -> TriMesh:
    """Random disconnected triangles inside a cube, for rasterizer conformance."""
    pts = rng.uniform(-extent, extent, size=(n_faces * 3, 3))
    faces = np.arange(n_faces * 3, dtype=np.int32).reshape(n_faces, 3)
    face_arr = np.stack([faces, np.full_like(faces, -1), np.full_like(faces, -1)], axis=2)
    mesh = TriMesh(
        positions=pts,
        normals=np.zeros((0, 3)),
        uvs=np.zeros((0, 2)),
        faces=face_arr,
        needs_uv=True,
    )
    return compute_vertex_normals(mesh)


def cube_pile(k: int, rng: np.random.Generator) -> TriMesh:
    """k disjoint translated cubes (k connected components)."""
    parts = []
    for i in range(k):
        offset = np.array([3.0 * i, 0.0, 0.0]) + rng.uniform(-0.5, 0.5, 3)
        parts.append(translated(cube(size=rng.uniform(0.5, 1.5)), offset))
    return merge(parts)


def icosphere(subdivisions: int = 2) -> TriMesh:
    """Subdivided icosahedron projected to the unit sphere (no uvs)."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    tris = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    vlist = [tuple(v) for v in verts]
    index = {v: i for i, v in enumerate(vlist)}

    def midpoint(a: int, b: int) -> int:
        m = np.array(vlist[a]) + np.array(vlist[b])
        m /= np.linalg.norm(m)
        key = tuple(np.round(m, 12))
        if key not in index:
            index[key] = len(vlist)
            vlist.append(key)
        return index[key]

    for _ in range(subdivisions):
        new_tris = []
        for a, b, c in tris:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_tris += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        tris = new_tris

    faces = np.array(tris, dtype=np.int32)
    face_arr = np.stack([faces, np.full_like(faces, -1), np.full_like(faces, -1)], axis=2)
    mesh = TriMesh(
        positions=np.array(vlist),
        normals=np.zeros((0, 3)),
        uvs=np.zeros((0, 2)),
        faces=face_arr,
        needs_uv=True,
    )
    return compute_vertex_normals(mesh)


@pytest.fixture
def unit_cube() -> TriMesh:
    return normalize_mesh(cube())


@pytest.fixture
def sphere_mesh() -> TriMesh:
    return normalize_mesh(uv_sphere(16, 32))


def checkerboard(size: int, check: int, c0=(220, 40, 40), c1=(40, 40, 220)) -> np.ndarray:
    """RGB checkerboard image."""
    yy, xx = np.mgrid[0:size, 0:size]
    mask = ((yy // check) + (xx // check)) % 2 == 0
    out = np.empty((size, size, 3), dtype=np.uint8)
    out[mask] = c0
    out[~mask] = c1
    return out
