"""Triangle meshes: PLY/OBJ loading, surface sampling, and diameter.

Vertices are meters in the object frame. Quads (and larger polygons) are
fan-triangulated on load with the deterministic split 0-1-2 / 0-2-3 / ...
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist

from .errors import (
    DegenerateMesh,
    MalformedRecord,
    MissingFile,
    TooFewPoints,
    UnsupportedMeshFormat,
)
from .pose import Sim3Pose

_EXHAUSTIVE_DIAMETER_LIMIT = 2000


@dataclass(frozen=True)
class TriMesh:
    """Vertex positions (V, 3) and triangle indices (F, 3)."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if faces.size and (faces.min() < 0 or faces.max() >= verts.shape[0]):
            raise MalformedRecord(
                f"face index out of range: max {faces.max()} for {verts.shape[0]} vertices")
        verts.flags.writeable = False
        faces.flags.writeable = False
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    def triangle_areas(self) -> np.ndarray:
        tri = self.vertices[self.faces]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def transformed(self, pose: Sim3Pose) -> "TriMesh":
        """Mesh with every vertex mapped through the pose (topology unchanged)."""
        return TriMesh(pose.apply(self.vertices), self.faces)


@dataclass(frozen=True)
class SampledSurface:
    """Points drawn on a mesh surface, tagged with their provenance."""

    points: np.ndarray
    mesh_id: str | None
    count: int
    seed: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)


def sample_surface(m: TriMesh, n: int, seed: int, mesh_id: str | None = None) -> SampledSurface:
    """Draw ``n`` points uniformly over the surface of ``m``.

    Triangles are chosen with probability proportional to area, then a point
    is placed uniformly inside each chosen triangle (reflected barycentric
    coordinates, so density is uniform rather than corner-biased).
    Deterministic for a fixed seed.
    """
    if m.num_faces == 0:
        raise DegenerateMesh("mesh has no triangles")
    areas = m.triangle_areas()
    total = areas.sum()
    if total <= 0.0:
        raise DegenerateMesh("mesh has zero surface area")
    rng = np.random.default_rng(seed)
    cum = np.cumsum(areas)
    face_idx = np.searchsorted(cum, rng.random(n) * total)
    face_idx = np.minimum(face_idx, m.num_faces - 1)
    tri = m.vertices[m.faces[face_idx]]
    r = rng.random((n, 2))
    flip = r.sum(axis=1) > 1.0
    r[flip] = 1.0 - r[flip]
    pts = tri[:, 0] + r[:, :1] * (tri[:, 1] - tri[:, 0]) + r[:, 1:] * (tri[:, 2] - tri[:, 0])
    return SampledSurface(pts, mesh_id, n, seed)


def diameter(pts) -> float:
    """Maximum pairwise distance of a point set.

    Exhaustive for small sets; larger sets are reduced to their convex hull
    first (the farthest pair lies on the hull), which keeps the result exact.
    """
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    if pts.shape[0] < 2:
        raise TooFewPoints("diameter needs at least two points")
    if pts.shape[0] <= _EXHAUSTIVE_DIAMETER_LIMIT:
        return float(pdist(pts).max())
    try:
        hull_pts = pts[ConvexHull(pts).vertices]
    except QhullError:
        # degenerate (flat/collinear) cloud: fall back to blocked brute force
        return _max_pairwise_blocked(pts)
    if hull_pts.shape[0] <= _EXHAUSTIVE_DIAMETER_LIMIT:
        return float(pdist(hull_pts).max())
    return _max_pairwise_blocked(hull_pts)


def _max_pairwise_blocked(pts: np.ndarray, block: int = 1024) -> float:
    best = 0.0
    for i in range(0, pts.shape[0], block):
        a = pts[i:i + block]
        for j in range(i, pts.shape[0], block):
            b = pts[j:j + block]
            d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
            best = max(best, float(d2.max()))
    return float(np.sqrt(best))


# ---------------------------------------------------------------------------
# Mesh file IO
# ---------------------------------------------------------------------------

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def load_mesh(path) -> TriMesh:
    """Load a triangle mesh, dispatching on file extension (.ply / .obj)."""
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"mesh file not found: {path}")
    ext = path.suffix.lower()
    if ext == ".ply":
        return load_ply(path)
    if ext == ".obj":
        return load_obj(path)
    raise UnsupportedMeshFormat(f"unsupported mesh extension {ext!r} ({path})")


def _fan_triangulate(polys: list[list[int]]) -> np.ndarray:
    tris = []
    for poly in polys:
        if len(poly) < 3:
            raise MalformedRecord(f"face with {len(poly)} vertices")
        for k in range(1, len(poly) - 1):
            tris.append((poly[0], poly[k], poly[k + 1]))
    return np.asarray(tris, dtype=np.int64).reshape(-1, 3)


def load_obj(path) -> TriMesh:
    verts: list[tuple[float, float, float]] = []
    polys: list[list[int]] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if tokens[0] == "v":
            if len(tokens) < 4:
                raise MalformedRecord(f"{path}:{lineno}: vertex needs 3 coordinates")
            verts.append((float(tokens[1]), float(tokens[2]), float(tokens[3])))
        elif tokens[0] == "f":
            idx = []
            for tok in tokens[1:]:
                i = int(tok.split("/")[0])
                idx.append(i - 1 if i > 0 else len(verts) + i)
            polys.append(idx)
    if not verts:
        raise MalformedRecord(f"{path}: no vertices found")
    return TriMesh(np.asarray(verts, dtype=float), _fan_triangulate(polys))


def _parse_ply_header(data: bytes, path) -> tuple[str, list[dict], int]:
    end = data.find(b"end_header")
    if end < 0:
        raise MalformedRecord(f"{path}: missing end_header")
    body_start = data.find(b"\n", end) + 1
    try:
        header = data[:body_start].decode("ascii")
    except UnicodeDecodeError as e:
        raise MalformedRecord(f"{path}: non-ascii header") from e
    lines = [ln.strip() for ln in header.splitlines() if ln.strip()]
    if not lines or lines[0] != "ply":
        raise MalformedRecord(f"{path}: not a PLY file")
    fmt = None
    elements: list[dict] = []
    for line in lines[1:]:
        tokens = line.split()
        if tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            elements.append({"name": tokens[1], "count": int(tokens[2]), "props": []})
        elif tokens[0] == "property":
            if not elements:
                raise MalformedRecord(f"{path}: property before any element")
            if tokens[1] == "list":
                elements[-1]["props"].append(("list", tokens[2], tokens[3], tokens[4]))
            else:
                elements[-1]["props"].append(("scalar", tokens[1], tokens[2]))
        elif tokens[0] == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
        raise UnsupportedMeshFormat(f"{path}: PLY format {fmt!r} not supported")
    return fmt, elements, body_start


def load_ply(path) -> TriMesh:
    path = Path(path)
    data = path.read_bytes()
    fmt, elements, offset = _parse_ply_header(data, path)
    try:
        return _decode_ply_body(data, fmt, elements, offset, path)
    except (ValueError, IndexError, struct.error) as e:
        raise MalformedRecord(f"{path}: truncated or corrupt PLY body ({e})") from e


def _decode_ply_body(data: bytes, fmt: str, elements: list[dict], offset: int,
                     path) -> TriMesh:
    verts = None
    polys: list[list[int]] | None = None
    if fmt == "ascii":
        tokens = data[offset:].decode("ascii").split()
        pos = 0
        for elem in elements:
            values: list = []
            for _ in range(elem["count"]):
                row: dict = {}
                for prop in elem["props"]:
                    if prop[0] == "scalar":
                        row[prop[2]] = float(tokens[pos]); pos += 1
                    else:
                        cnt = int(tokens[pos]); pos += 1
                        row[prop[3]] = [int(float(tokens[pos + i])) for i in range(cnt)]
                        pos += cnt
                values.append(row)
            if elem["name"] == "vertex":
                verts = np.array([[r["x"], r["y"], r["z"]] for r in values])
            elif elem["name"] == "face":
                polys = [r.get("vertex_indices", r.get("vertex_index")) for r in values]
    else:
        endian = "<" if fmt == "binary_little_endian" else ">"
        for elem in elements:
            if all(p[0] == "scalar" for p in elem["props"]):
                dtype = np.dtype([(p[2], endian + _PLY_TYPES[p[1]]) for p in elem["props"]])
                arr = np.frombuffer(data, dtype=dtype, count=elem["count"], offset=offset)
                offset += dtype.itemsize * elem["count"]
                if elem["name"] == "vertex":
                    verts = np.stack([arr["x"], arr["y"], arr["z"]], axis=1).astype(float)
            else:
                rows, offset = _walk_binary_element(data, offset, elem, endian, path)
                if elem["name"] == "face":
                    polys = rows
    if verts is None:
        raise MalformedRecord(f"{path}: PLY has no vertex element")
    if polys is None:
        polys = []
    faces = _fan_triangulate(polys) if polys else np.zeros((0, 3), dtype=np.int64)
    return TriMesh(verts, faces)


def _walk_binary_element(data: bytes, offset: int, elem: dict, endian: str, path):
    """Row-by-row read of a binary element containing list properties.

    Only the first list named vertex_indices/vertex_index is kept.
    """
    rows: list[list[int]] = []
    for _ in range(elem["count"]):
        kept = None
        for prop in elem["props"]:
            if prop[0] == "scalar":
                offset += np.dtype(_PLY_TYPES[prop[1]]).itemsize
            else:
                _, cnt_t, val_t, name = prop
                cnt_size = np.dtype(_PLY_TYPES[cnt_t]).itemsize
                cnt = int(np.frombuffer(data, endian + _PLY_TYPES[cnt_t], 1, offset)[0])
                offset += cnt_size
                vals = np.frombuffer(data, endian + _PLY_TYPES[val_t], cnt, offset)
                offset += cnt * np.dtype(_PLY_TYPES[val_t]).itemsize
                if name in ("vertex_indices", "vertex_index") and kept is None:
                    kept = [int(v) for v in vals]
        if elem["name"] == "face":
            if kept is None:
                raise MalformedRecord(f"{path}: face element without vertex_indices")
            rows.append(kept)
    return rows, offset


def save_ply(mesh: TriMesh, path, binary: bool = True) -> None:
    """Write a mesh as PLY with double-precision vertex coordinates."""
    path = Path(path)
    header = [
        "ply",
        f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
        f"element vertex {mesh.vertices.shape[0]}",
        "property double x",
        "property double y",
        "property double z",
        f"element face {mesh.num_faces}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    if binary:
        out = bytearray("\n".join(header).encode("ascii") + b"\n")
        out += mesh.vertices.astype("<f8").tobytes()
        for tri in mesh.faces:
            out += struct.pack("<B3i", 3, *[int(i) for i in tri])
        path.write_bytes(bytes(out))
    else:
        lines = header[:]
        lines += [f"{float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in mesh.vertices]
        lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
        path.write_text("\n".join(lines) + "\n")
