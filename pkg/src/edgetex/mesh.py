"""Triangle-mesh ingestion, normalization, normals, and connectivity.

The mesh is an indexed triangle soup in the Wavefront style: positions,
uv coordinates, and normals live in separate arrays, and each face corner
carries an (position, uv, normal) index triple.  A missing uv or normal
index is stored as -1.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


class MeshParseError(ValueError):
    """Raised for malformed OBJ content; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateMeshError(ValueError):
    """Raised when a mesh has no spatial extent and cannot be normalized."""


def _read_only(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TriMesh:
    """Indexed triangle mesh.

    positions: (N, 3) float64
    normals:   (M, 3) float64 unit vectors (may be empty)
    uvs:       (K, 2) float64 in [0, 1]^2 (may be empty)
    faces:     (F, 3, 3) int32; faces[f, corner] = (pos_idx, uv_idx, nrm_idx),
               with -1 for an absent uv/normal index.
    needs_uv:  True when the mesh was loaded without texture coordinates.
    """

    positions: np.ndarray
    normals: np.ndarray
    uvs: np.ndarray
    faces: np.ndarray
    needs_uv: bool = field(default=False)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        nrm = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        uv = np.asarray(self.uvs, dtype=np.float64).reshape(-1, 2)
        faces = np.asarray(self.faces, dtype=np.int32).reshape(-1, 3, 3)
        if faces.shape[0] == 0:
            raise ValueError("mesh has no faces")
        pi = faces[:, :, 0]
        if pi.min() < 0 or pi.max() >= len(pos):
            raise ValueError("face position index out of range")
        ui = faces[:, :, 1]
        if ui.max(initial=-1) >= len(uv) or ui.min(initial=0) < -1:
            raise ValueError("face uv index out of range")
        ni = faces[:, :, 2]
        if ni.max(initial=-1) >= len(nrm) or ni.min(initial=0) < -1:
            raise ValueError("face normal index out of range")
        degen = (pi[:, 0] == pi[:, 1]) | (pi[:, 1] == pi[:, 2]) | (pi[:, 0] == pi[:, 2])
        if degen.any():
            raise ValueError(f"face {int(np.nonzero(degen)[0][0])} repeats a position index")
        if len(nrm):
            lens = np.linalg.norm(nrm, axis=1)
            if np.any(np.abs(lens - 1.0) > 1e-4):
                raise ValueError("stored normals must be unit length within 1e-4")
        object.__setattr__(self, "positions", _read_only(pos))
        object.__setattr__(self, "normals", _read_only(nrm))
        object.__setattr__(self, "uvs", _read_only(uv))
        object.__setattr__(self, "faces", _read_only(faces))

    @property
    def n_faces(self) -> int:
        return int(self.faces.shape[0])

    @property
    def has_uvs(self) -> bool:
        return len(self.uvs) > 0 and bool((self.faces[:, :, 1] >= 0).all())

    @property
    def has_normals(self) -> bool:
        return len(self.normals) > 0 and bool((self.faces[:, :, 2] >= 0).all())


@dataclass(frozen=True)
class ComponentLabeling:
    """Partition of faces into vertex-connected components.

    Labels are contiguous 0..count-1, assigned in order of the first face
    that carries each label.
    """

    face_labels: np.ndarray
    count: int

    def __post_init__(self):
        labels = np.asarray(self.face_labels, dtype=np.int64)
        if labels.ndim != 1 or len(labels) == 0:
            raise ValueError("face_labels must be a non-empty 1-d array")
        present = np.unique(labels)
        if present[0] != 0 or present[-1] != self.count - 1 or len(present) != self.count:
            raise ValueError("labels must be exactly {0..count-1}")
        object.__setattr__(self, "face_labels", _read_only(labels))


def _parse_corner(token: str, n_pos: int, n_uv: int, n_nrm: int, line_no: int) -> tuple[int, int, int]:
    parts = token.split("/")
    if len(parts) > 3 or not parts[0]:
        raise MeshParseError(f"bad face corner {token!r}", line_no)

    def resolve(raw: str, count: int, what: str) -> int:
        if raw == "":
            return -1
        try:
            idx = int(raw)
        except ValueError:
            raise MeshParseError(f"bad {what} index {raw!r}", line_no) from None
        if idx == 0:
            raise MeshParseError(f"{what} index 0 is invalid (OBJ is 1-based)", line_no)
        idx = idx - 1 if idx > 0 else count + idx
        if not 0 <= idx < count:
            raise MeshParseError(f"{what} index {raw} out of range (have {count})", line_no)
        return idx

    p = resolve(parts[0], n_pos, "position")
    t = resolve(parts[1], n_uv, "uv") if len(parts) > 1 else -1
    n = resolve(parts[2], n_nrm, "normal") if len(parts) > 2 else -1
    return p, t, n


def load_mesh(path: str | Path) -> TriMesh:
    """Parse an OBJ file (v/vt/vn/f subset; o and g accepted, materials ignored).

    Quads and larger polygons are fan-triangulated.  If texture coordinates
    are missing the mesh is flagged ``needs_uv``; if normals are missing
    they are computed as area-weighted vertex normals.
    """
    positions: list[list[float]] = []
    uvs: list[list[float]] = []
    normals: list[list[float]] = []
    faces: list[list[tuple[int, int, int]]] = []

    text = Path(path).read_text()
    for line_no, line in enumerate(text.splitlines(), start=1):
        if "#" in line:
            line = line.split("#", 1)[0]
        toks = line.split()
        if not toks:
            continue
        kw, args = toks[0], toks[1:]
        try:
            if kw == "v":
                if len(args) < 3:
                    raise MeshParseError("v needs 3 coordinates", line_no)
                positions.append([float(x) for x in args[:3]])
            elif kw == "vt":
                if len(args) < 2:
                    raise MeshParseError("vt needs 2 coordinates", line_no)
                uvs.append([float(x) for x in args[:2]])
            elif kw == "vn":
                if len(args) < 3:
                    raise MeshParseError("vn needs 3 coordinates", line_no)
                normals.append([float(x) for x in args[:3]])
            elif kw == "f":
                if len(args) < 3:
                    raise MeshParseError("face needs at least 3 corners", line_no)
                corners = [
                    _parse_corner(t, len(positions), len(uvs), len(normals), line_no)
                    for t in args
                ]
                for i in range(2, len(corners)):
                    faces.append([corners[0], corners[i - 1], corners[i]])
            # o, g, s, mtllib, usemtl and anything else: ignored.
        except ValueError as exc:
            if isinstance(exc, MeshParseError):
                raise
            raise MeshParseError(str(exc), line_no) from None

    if not faces:
        raise MeshParseError("mesh has no faces")

    nrm = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    if len(nrm):
        lens = np.linalg.norm(nrm, axis=1)
        lens[lens == 0] = 1.0
        nrm = nrm / lens[:, None]

    face_arr = np.asarray(faces, dtype=np.int32)
    has_all_uvs = len(uvs) > 0 and (face_arr[:, :, 1] >= 0).all()
    has_all_normals = len(nrm) > 0 and (face_arr[:, :, 2] >= 0).all()
    if not has_all_uvs:
        face_arr[:, :, 1] = -1
        uvs = []
    if not has_all_normals:
        face_arr[:, :, 2] = -1
        nrm = np.zeros((0, 3))

    mesh = TriMesh(
        positions=np.asarray(positions, dtype=np.float64).reshape(-1, 3),
        normals=nrm,
        uvs=np.asarray(uvs, dtype=np.float64).reshape(-1, 2),
        faces=face_arr,
        needs_uv=not has_all_uvs,
    )
    if not has_all_normals:
        mesh = compute_vertex_normals(mesh)
    return mesh


def save_mesh(mesh: TriMesh, path: str | Path, mtl_name: str | None = None) -> None:
    """Write the mesh as OBJ.  Floats use repr formatting so a reload
    reproduces them exactly."""
    def fmt(*vals: float) -> str:
        return " ".join(repr(float(v)) for v in vals)

    lines: list[str] = []
    if mtl_name:
        lines.append(f"mtllib {mtl_name}")
        lines.append("usemtl material0")
    for p in mesh.positions:
        lines.append("v " + fmt(*p))
    for t in mesh.uvs:
        lines.append("vt " + fmt(*t))
    for n in mesh.normals:
        lines.append("vn " + fmt(*n))
    for face in mesh.faces:
        corners = []
        for p, t, n in face:
            if t >= 0 and n >= 0:
                corners.append(f"{p + 1}/{t + 1}/{n + 1}")
            elif t >= 0:
                corners.append(f"{p + 1}/{t + 1}")
            elif n >= 0:
                corners.append(f"{p + 1}//{n + 1}")
            else:
                corners.append(f"{p + 1}")
        lines.append("f " + " ".join(corners))
    Path(path).write_text("\n".join(lines) + "\n")


def normalize_mesh(mesh: TriMesh) -> TriMesh:
    """Center the bounding box at the origin and scale the bounding sphere
    (around that center) to radius 1."""
    pos = mesh.positions
    center = (pos.max(axis=0) + pos.min(axis=0)) / 2.0
    shifted = pos - center
    radius = float(np.linalg.norm(shifted, axis=1).max())
    if radius <= 0.0:
        raise DegenerateMeshError("mesh has zero spatial extent")
    return replace(mesh, positions=shifted / radius)


def _face_cross(mesh: TriMesh) -> np.ndarray:
    """Per-face cross product; its length is twice the face area."""
    tri = mesh.positions[mesh.faces[:, :, 0]]
    return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])


def compute_vertex_normals(mesh: TriMesh) -> TriMesh:
    """Area-weighted vertex normals.

    Each face adds its (area-scaled) normal to its three position indices;
    zero-area faces contribute nothing.  The result is stored per position,
    and every corner's normal index is set to its position index.
    """
    cross = _face_cross(mesh)
    accum = np.zeros_like(mesh.positions)
    for c in range(3):
        np.add.at(accum, mesh.faces[:, c, 0], cross)
    lens = np.linalg.norm(accum, axis=1)
    # Isolated or fully-degenerate vertices get an arbitrary up vector.
    safe = lens > 1e-20
    normals = np.where(safe[:, None], accum / np.where(safe, lens, 1.0)[:, None], [0.0, 0.0, 1.0])
    faces = mesh.faces.copy()
    faces[:, :, 2] = faces[:, :, 0]
    return replace(mesh, normals=normals, faces=faces)


def connected_components(mesh: TriMesh) -> ComponentLabeling:
    """Label faces by vertex-sharing connectivity.

    Two faces are connected when they share a position index; components
    are the transitive closure.  Uses union-find over position indices.
    Labels follow first-face order.
    """
    parent = np.arange(len(mesh.positions), dtype=np.int64)

    def find(i: int) -> int:
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    def union(i: int, j: int) -> None:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[rj] = ri

    for face in mesh.faces[:, :, 0]:
        union(int(face[0]), int(face[1]))
        union(int(face[0]), int(face[2]))

    roots = np.array([find(int(f)) for f in mesh.faces[:, 0, 0]], dtype=np.int64)
    label_of: dict[int, int] = {}
    labels = np.empty(mesh.n_faces, dtype=np.int64)
    for i, r in enumerate(roots):
        if r not in label_of:
            label_of[r] = len(label_of)
        labels[i] = label_of[r]
    return ComponentLabeling(face_labels=labels, count=len(label_of))


def generate_triangle_charts(mesh: TriMesh, padding: float = 0.1) -> TriMesh:
    """Give a UV-less mesh a trivial per-triangle chart packing.

    Triangles are packed two per square cell on a uniform grid; each cell's
    lower-left triangle maps to corners (0,0)/(1,0)/(0,1) and the upper-right
    one to (1,0)/(1,1)/(0,1), inset by ``padding`` of the cell size to avoid
    cross-chart bleeding.  Texturing quality is not the goal; coverage is.
    """
    f = mesh.n_faces
    cells = (f + 1) // 2
    grid = int(np.ceil(np.sqrt(cells)))
    cell = 1.0 / grid
    pad = padding * cell

    uvs = np.zeros((3 * f, 2), dtype=np.float64)
    faces = mesh.faces.copy()
    lower = np.array([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)])
    upper = np.array([(1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
    for i in range(f):
        cidx = i // 2
        cx, cy = cidx % grid, cidx // grid
        local = lower if i % 2 == 0 else upper
        origin = np.array([cx * cell + pad, cy * cell + pad])
        span = cell - 2 * pad
        tri_uv = origin + local * span
        uvs[3 * i : 3 * i + 3] = tri_uv
        faces[i, :, 1] = np.arange(3 * i, 3 * i + 3)
    return replace(mesh, uvs=uvs, faces=faces, needs_uv=False)
