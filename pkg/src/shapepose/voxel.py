"""Occupancy grids, sparse voxel structures, and 2^3 neighborhood packing.

Voxel coordinates are integer ``(x, y, z)`` triples in ``[0, N)``. Dense
grids are indexed ``occupancy[x, y, z]``. Raster order sorts by ``z``, then
``y``, then ``x`` (linear key ``z*N^2 + y*N + x``); sparse coordinate lists
are always kept in strictly increasing raster order, which makes every
serialization deterministic.

Binary record layout (little-endian, documented byte-exactly):

====== ===== ==========================================
offset size  field
====== ===== ==========================================
0      4     magic ``b"SVX1"``
4      2     resolution N (uint16)
6      4     voxel count L (uint32)
10     6*L   L coordinate triples, 3 x uint16 (x, y, z)
====== ===== ==========================================

The text form used by fixtures is one header line ``svox <N> <L>`` followed
by L lines ``x y z`` in raster order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import MalformedLayout, MalformedRecord, OutOfBounds

_MAGIC = b"SVX1"


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _raster_keys(coords: np.ndarray, n: int) -> np.ndarray:
    c = coords.astype(np.int64)
    return (c[:, 2] * n + c[:, 1]) * n + c[:, 0]


@dataclass(frozen=True)
class OccupancyGrid:
    """Dense binary occupancy at power-of-two resolution (default 64^3)."""

    occupancy: np.ndarray

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=bool)
        if occ.ndim != 3 or len(set(occ.shape)) != 1:
            raise OutOfBounds("occupancy grid must be cubic NxNxN")
        if not _is_pow2(occ.shape[0]):
            raise OutOfBounds(f"resolution {occ.shape[0]} is not a power of two")
        occ.flags.writeable = False
        object.__setattr__(self, "occupancy", occ)

    @classmethod
    def empty(cls, resolution: int = 64) -> "OccupancyGrid":
        return cls(np.zeros((resolution,) * 3, dtype=bool))

    @property
    def resolution(self) -> int:
        return self.occupancy.shape[0]


@dataclass(frozen=True)
class SparseStructure:
    """Active voxel coordinates, unique and in raster order."""

    coords: np.ndarray
    resolution: int

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, 3)
        if not _is_pow2(self.resolution):
            raise OutOfBounds(f"resolution {self.resolution} is not a power of two")
        if coords.size and (coords.min() < 0 or coords.max() >= self.resolution):
            raise OutOfBounds(
                f"coordinates must lie in [0, {self.resolution}); "
                f"got range [{coords.min()}, {coords.max()}]")
        keys = _raster_keys(coords, self.resolution)
        if coords.shape[0] > 1 and not np.all(np.diff(keys) > 0):
            raise MalformedLayout("coordinates must be unique and in raster order")
        coords.flags.writeable = False
        object.__setattr__(self, "coords", coords)

    @classmethod
    def from_coords(cls, coords, resolution: int) -> "SparseStructure":
        """Sort into raster order and drop duplicates."""
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
        if coords.size:
            if coords.min() < 0 or coords.max() >= resolution:
                raise OutOfBounds(f"coordinates must lie in [0, {resolution})")
            keys = _raster_keys(coords, resolution)
            _, idx = np.unique(keys, return_index=True)
            coords = coords[idx]
        return cls(coords, resolution)

    def __len__(self) -> int:
        return self.coords.shape[0]

    # -- serialization ------------------------------------------------------

    def to_bytes(self) -> bytes:
        head = _MAGIC + struct.pack("<HI", self.resolution, len(self))
        return head + self.coords.astype("<u2").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "SparseStructure":
        if blob[:4] != _MAGIC:
            raise MalformedRecord("bad magic, not a sparse-voxel record")
        if len(blob) < 10:
            raise MalformedRecord("truncated sparse-voxel header")
        resolution, count = struct.unpack("<HI", blob[4:10])
        body = blob[10:]
        if len(body) != 6 * count:
            raise MalformedRecord(
                f"expected {6 * count} coordinate bytes, got {len(body)}")
        coords = np.frombuffer(body, dtype="<u2").reshape(count, 3).astype(np.int64)
        return cls(coords, resolution)

    def to_text(self) -> str:
        lines = [f"svox {self.resolution} {len(self)}"]
        lines += [f"{x} {y} {z}" for x, y, z in self.coords]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SparseStructure":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("svox "):
            raise MalformedRecord("missing 'svox' header line")
        _, res, count = lines[0].split()
        coords = np.array([[int(t) for t in ln.split()] for ln in lines[1:]],
                          dtype=np.int64).reshape(-1, 3)
        if coords.shape[0] != int(count):
            raise MalformedRecord(
                f"header says {count} voxels, found {coords.shape[0]}")
        return cls(coords, int(res))


@dataclass(frozen=True)
class SparseFeatures:
    """A sparse structure with one fixed-width feature vector per voxel."""

    structure: SparseStructure
    features: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim != 2 or feats.shape[0] != len(self.structure):
            raise MalformedLayout(
                f"need one feature row per voxel: {feats.shape} vs L={len(self.structure)}")
        feats.flags.writeable = False
        object.__setattr__(self, "features", feats)

    @property
    def channels(self) -> int:
        return self.features.shape[1]


def grid_to_sparse(g: OccupancyGrid) -> SparseStructure:
    """Active voxel coordinates of a dense grid, in raster order."""
    zyx = np.argwhere(g.occupancy.transpose(2, 1, 0))
    return SparseStructure(zyx[:, ::-1], g.resolution)


def sparse_to_grid(s: SparseStructure, resolution: int | None = None) -> OccupancyGrid:
    """Dense binary grid with exactly the listed voxels set."""
    n = s.resolution if resolution is None else resolution
    if not _is_pow2(n):
        raise OutOfBounds(f"resolution {n} is not a power of two")
    if len(s) and s.coords.max() >= n:
        raise OutOfBounds(f"coordinate {s.coords.max()} exceeds resolution {n}")
    occ = np.zeros((n, n, n), dtype=bool)
    if len(s):
        occ[s.coords[:, 0], s.coords[:, 1], s.coords[:, 2]] = True
    return OccupancyGrid(occ)


# ---------------------------------------------------------------------------
# 2^3 neighborhood packing
#
# Child slot inside a 2x2x2 cell: index = 4*(z%2) + 2*(y%2) + (x%2).
# Packed channel layout, for input channel width C:
#   [0,        8C)  child features, slot-major (slot 0 first, C wide each)
#   [8C,   8C + 8)  presence flags, one per slot, 1.0 = child present
# Absent children contribute zero feature blocks.
# ---------------------------------------------------------------------------

def pack_neighborhoods(f: SparseFeatures) -> SparseFeatures:
    """Merge 2x2x2 voxel neighborhoods into single coarse voxels.

    The result lives at half resolution with ``8*C + 8`` channels per voxel
    (child features concatenated in slot order, then presence flags).
    Lossless: :func:`unpack_neighborhoods` restores the input exactly.
    """
    n = f.structure.resolution
    if n % 2 != 0:
        raise OutOfBounds(f"resolution {n} is not even, cannot pack")
    c = f.channels
    coords = f.structure.coords
    coarse = coords // 2
    slots = 4 * (coords[:, 2] % 2) + 2 * (coords[:, 1] % 2) + (coords[:, 0] % 2)

    nc = n // 2
    keys = _raster_keys(coarse, nc)
    uniq, rows = np.unique(keys, return_inverse=True)
    out = np.zeros((uniq.size, 8 * c + 8), dtype=float)
    col0 = slots * c
    for j in range(c):
        out[rows, col0 + j] = f.features[:, j]
    out[rows, 8 * c + slots] = 1.0

    coarse_coords = np.stack([uniq % nc, (uniq // nc) % nc, uniq // (nc * nc)], axis=1)
    return SparseFeatures(SparseStructure(coarse_coords, nc), out)


def unpack_neighborhoods(f: SparseFeatures) -> SparseFeatures:
    """Exact inverse of :func:`pack_neighborhoods`.

    Raises :class:`MalformedLayout` when the channel width does not decode as
    ``8*C + 8``, presence flags are not 0/1, a voxel has no children, or an
    absent child slot carries nonzero features.
    """
    w = f.channels
    if w < 16 or (w - 8) % 8 != 0:
        raise MalformedLayout(f"packed width {w} does not decode as 8*C + 8")
    c = (w - 8) // 8
    presence = f.features[:, 8 * c:]
    if not np.all((presence == 0.0) | (presence == 1.0)):
        raise MalformedLayout("presence flags must be exactly 0 or 1")
    if len(f.structure) and np.any(presence.sum(axis=1) == 0):
        raise MalformedLayout("packed voxel with no present children")
    child_blocks = f.features[:, :8 * c].reshape(-1, 8, c)
    if np.any(child_blocks[presence == 0.0] != 0.0):
        raise MalformedLayout("absent child slot carries nonzero features")

    rows, slots = np.nonzero(presence)
    offsets = np.stack([slots % 2, (slots // 2) % 2, slots // 4], axis=1)
    coords = 2 * f.structure.coords[rows] + offsets
    feats = child_blocks[rows, slots]

    n = 2 * f.structure.resolution
    order = np.argsort(_raster_keys(coords, n), kind="stable")
    return SparseFeatures(SparseStructure(coords[order], n), feats[order])
