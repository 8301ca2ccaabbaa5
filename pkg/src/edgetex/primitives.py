"""Procedural meshes for tests, demos, and round-trip experiments."""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh, compute_vertex_normals


def cube(center=(0.0, 0.0, 0.0), size: float = 1.0, with_uvs: bool = True) -> TriMesh:
    """Axis-aligned cube of edge length ``size``.

    With UVs, the six faces chart a 3x2 grid that tiles [0,1]^2 completely,
    so every atlas texel belongs to exactly one face.
    """
    c = np.asarray(center, dtype=np.float64)
    h = size / 2.0
    corners = np.array(
        [[sx, sy, sz] for sx in (-h, h) for sy in (-h, h) for sz in (-h, h)]
    ) + c
    # Faces as corner-index quads (+x, -x, +y, -y, +z, -z), outward CCW.
    quads = [
        (4, 6, 7, 5),
        (0, 1, 3, 2),
        (2, 3, 7, 6),
        (0, 4, 5, 1),
        (1, 5, 7, 3),
        (0, 2, 6, 4),
    ]
    uvs = []
    faces = []
    for qi, quad in enumerate(quads):
        gx, gy = qi % 3, qi // 3
        u0, v0 = gx / 3.0, gy / 2.0
        cell_uv = [
            (u0, v0),
            (u0 + 1 / 3.0, v0),
            (u0 + 1 / 3.0, v0 + 0.5),
            (u0, v0 + 0.5),
        ]
        base = len(uvs)
        uvs.extend(cell_uv)
        a, b, cc_, d = quad
        ua, ub, uc, ud = base, base + 1, base + 2, base + 3
        faces.append([(a, ua, -1), (b, ub, -1), (cc_, uc, -1)])
        faces.append([(a, ua, -1), (cc_, uc, -1), (d, ud, -1)])
    mesh = TriMesh(
        positions=corners,
        normals=np.zeros((0, 3)),
        uvs=np.asarray(uvs) if with_uvs else np.zeros((0, 2)),
        faces=np.asarray(
            [[(p, (t if with_uvs else -1), n) for p, t, n in f] for f in faces], dtype=np.int32
        ),
        needs_uv=not with_uvs,
    )
    return compute_vertex_normals(mesh)


def uv_sphere(n_lat: int = 24, n_lon: int = 48, radius: float = 1.0) -> TriMesh:
    """Latitude-longitude sphere whose UV chart tiles [0,1]^2.

    u is the azimuth fraction; v = (1 + y)/2 is an equal-area vertical
    mapping, so atlas rows carry surface area uniformly instead of
    oversampling the poles."""
    if n_lat < 2 or n_lon < 3:
        raise ValueError("need n_lat >= 2 and n_lon >= 3")
    positions = []
    uvs = []
    # Grid of (n_lat+1) x (n_lon+1) vertices; the u = 0 and u = 1 columns
    # coincide in 3-d but keep distinct uv entries for a clean chart.
    for i in range(n_lat + 1):
        theta = np.pi * i / n_lat  # 0 at north (+y) pole
        for j in range(n_lon + 1):
            phi = 2.0 * np.pi * j / n_lon
            positions.append(
                [
                    radius * np.sin(theta) * np.sin(phi),
                    radius * np.cos(theta),
                    radius * np.sin(theta) * np.cos(phi),
                ]
            )
            uvs.append([j / n_lon, (1.0 + np.cos(theta)) / 2.0])

    def vid(i: int, j: int) -> int:
        return i * (n_lon + 1) + j

    faces = []
    for i in range(n_lat):
        for j in range(n_lon):
            a, b = vid(i, j), vid(i, j + 1)
            c, d = vid(i + 1, j + 1), vid(i + 1, j)
            # Wound so cross products point outward.
            if i > 0:
                faces.append([(a, a, -1), (c, c, -1), (b, b, -1)])
            if i < n_lat - 1:
                faces.append([(a, a, -1), (d, d, -1), (c, c, -1)])

    positions = np.asarray(positions)
    # Collapse duplicate pole/seam positions for connectivity while keeping
    # per-corner uvs: map each position to a canonical index.
    canon: dict[tuple, int] = {}
    remap = np.zeros(len(positions), dtype=np.int64)
    canon_pos = []
    for idx, p in enumerate(np.round(positions, 12)):
        key = tuple(p)
        if key not in canon:
            canon[key] = len(canon_pos)
            canon_pos.append(positions[idx])
        remap[idx] = canon[key]

    face_arr = np.asarray(
        [[(remap[p], t, -1) for p, t, _ in f] for f in faces], dtype=np.int32
    )
    mesh = TriMesh(
        positions=np.asarray(canon_pos),
        normals=np.zeros((0, 3)),
        uvs=np.asarray(uvs),
        faces=face_arr,
    )
    return compute_vertex_normals(mesh)


def merge(meshes: list[TriMesh]) -> TriMesh:
    """Concatenate meshes into one (components stay disconnected unless
    they share positions exactly)."""
    positions = []
    uvs = []
    normals = []
    faces = []
    p_off = t_off = n_off = 0
    any_missing_uv = False
    for m in meshes:
        positions.append(m.positions)
        uvs.append(m.uvs)
        normals.append(m.normals)
        f = m.faces.copy()
        f[:, :, 0] += p_off
        has_uv = f[:, :, 1] >= 0
        f[:, :, 1][has_uv] += t_off
        has_n = f[:, :, 2] >= 0
        f[:, :, 2][has_n] += n_off
        any_missing_uv |= not m.has_uvs
        faces.append(f)
        p_off += len(m.positions)
        t_off += len(m.uvs)
        n_off += len(m.normals)
    return TriMesh(
        positions=np.vstack(positions),
        normals=np.vstack(normals) if normals else np.zeros((0, 3)),
        uvs=np.vstack(uvs) if uvs else np.zeros((0, 2)),
        faces=np.vstack(faces),
        needs_uv=any_missing_uv,
    )


def translated(mesh: TriMesh, offset) -> TriMesh:
    from dataclasses import replace

    return replace(mesh, positions=mesh.positions + np.asarray(offset, dtype=np.float64))


def rotated(mesh: TriMesh, axis, degrees: float) -> TriMesh:
    """Rotate positions (and normals) about an axis through the origin."""
    from dataclasses import replace

    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    a = np.radians(degrees)
    k = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    rot = np.eye(3) + np.sin(a) * k + (1 - np.cos(a)) * (k @ k)
    normals = mesh.normals @ rot.T if len(mesh.normals) else mesh.normals
    return replace(mesh, positions=mesh.positions @ rot.T, normals=normals)
