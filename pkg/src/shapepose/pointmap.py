"""Depth backprojection, object masking, robust normalization, crop boxes.

Pixel coordinates follow image convention: ``u`` is the column index,
``v`` the row index, and arrays are indexed ``[v, u]``. All depths and
points are in meters, camera frame (+z forward).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyMask, TooFewPoints, ZeroScale


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise DimensionMismatch("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise DimensionMismatch("principal point must lie inside the image")

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class DepthImage:
    """Per-pixel depth in meters plus validity (invalid = missing raw depth)."""

    depth: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        depth = np.asarray(self.depth, dtype=float)
        valid = np.asarray(self.valid, dtype=bool)
        if depth.ndim != 2 or valid.shape != depth.shape:
            raise DimensionMismatch("depth and validity grids must be HxW and match")
        if np.any(depth[valid] <= 0.0):
            raise DimensionMismatch("valid depths must be positive")
        object.__setattr__(self, "depth", _frozen(depth))
        object.__setattr__(self, "valid", _frozen(valid))

    @classmethod
    def from_raw(cls, raw, depth_scale: float) -> "DepthImage":
        """Raw sensor units to meters: ``meters = raw * depth_scale``.

        Zero raw depth marks a missing measurement and becomes invalid.
        """
        raw = np.asarray(raw)
        valid = raw > 0
        return cls(raw.astype(float) * float(depth_scale), valid)

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape


@dataclass(frozen=True)
class BinaryMask:
    """HxW boolean grid."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=bool)
        if data.ndim != 2:
            raise DimensionMismatch("mask must be HxW")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def count(self) -> int:
        return int(self.data.sum())


@dataclass(frozen=True)
class Pointmap:
    """HxW grid of camera-frame 3D points with per-pixel validity."""

    points: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        valid = np.asarray(self.valid, dtype=bool)
        if points.ndim != 3 or points.shape[2] != 3 or valid.shape != points.shape[:2]:
            raise DimensionMismatch("pointmap must be HxWx3 with an HxW validity grid")
        object.__setattr__(self, "points", _frozen(points))
        object.__setattr__(self, "valid", _frozen(valid))

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape

    def valid_points(self) -> np.ndarray:
        """(K, 3) array of the valid pixels' points, row-major pixel order."""
        return self.points[self.valid]


@dataclass(frozen=True)
class ObjectNormalization:
    """Robust object center and scale used to normalize a pointmap."""

    center: np.ndarray
    scale: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(3)
        object.__setattr__(self, "center", _frozen(center))
        object.__setattr__(self, "scale", float(self.scale))
        if not self.scale > 0.0:
            raise ZeroScale(f"object scale must be positive, got {self.scale}")


def backproject(depth: DepthImage, k: CameraIntrinsics) -> Pointmap:
    """Lift a depth image into a pointmap through the pinhole model.

    Pixel ``(u, v)`` with depth ``z`` maps to
    ``((u - cx) z / fx, (v - cy) z / fy, z)``. Invalid pixels stay invalid
    (their point entries are zero).
    """
    h, w = depth.shape
    if (w, h) != (k.width, k.height):
        raise DimensionMismatch(
            f"depth is {w}x{h}, intrinsics expect {k.width}x{k.height}")
    u = np.arange(w, dtype=float)[None, :]
    v = np.arange(h, dtype=float)[:, None]
    z = np.where(depth.valid, depth.depth, 0.0)
    pts = np.stack([(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z], axis=-1)
    return Pointmap(pts, depth.valid)


def project(pts, k: CameraIntrinsics) -> np.ndarray:
    """Perspective projection of (N, 3) camera-frame points to (N, 2) pixels."""
    pts = np.asarray(pts, dtype=float)
    z = pts[..., 2]
    return np.stack([k.fx * pts[..., 0] / z + k.cx,
                     k.fy * pts[..., 1] / z + k.cy], axis=-1)


def mask_pointmap(p: Pointmap, m: BinaryMask) -> Pointmap:
    """Invalidate every pixel outside the mask."""
    if m.shape != p.shape:
        raise DimensionMismatch(f"mask {m.shape} does not match pointmap {p.shape}")
    return Pointmap(p.points, p.valid & m.data)


def robust_normalization(p_obj: Pointmap, min_points: int = 20) -> ObjectNormalization:
    """Robust center and scale of the valid points of an object pointmap.

    Center is the componentwise median. Scale is the spread of point norms
    around that center: the 95th minus the 5th percentile, with percentiles
    linearly interpolated between order statistics (numpy's default).
    """
    pts = p_obj.valid_points()
    if pts.shape[0] < min_points:
        raise TooFewPoints(
            f"robust normalization needs >= {min_points} valid points, got {pts.shape[0]}")
    center = np.median(pts, axis=0)
    norms = np.linalg.norm(pts - center, axis=1)
    q05, q95 = np.percentile(norms, [5.0, 95.0])
    scale = float(q95 - q05)
    if scale <= 0.0:
        raise ZeroScale("point norms have zero 5th-95th percentile spread")
    return ObjectNormalization(center, scale)


def normalize_pointmap(p_obj: Pointmap, n: ObjectNormalization) -> Pointmap:
    """Map valid points through ``(x - center) / scale``; validity unchanged."""
    pts = np.where(p_obj.valid[..., None],
                   (p_obj.points - n.center) / n.scale, 0.0)
    return Pointmap(pts, p_obj.valid)


def denormalization_transform(n: ObjectNormalization):
    """The Sim(3) inverse of pointmap normalization: ``x = scale * x_norm + center``."""
    from .pose import Rotation, Sim3Pose

    return Sim3Pose(Rotation.identity(), n.center, n.scale)


def normalization_transform(n: ObjectNormalization):
    """The Sim(3) form of pointmap normalization: ``x_norm = (x - center) / scale``."""
    from .pose import Rotation, Sim3Pose

    return Sim3Pose(Rotation.identity(), -n.center / n.scale, 1.0 / n.scale)


def dynamic_crop_box(m: BinaryMask, padding_fraction: float) -> tuple[int, int, int, int]:
    """Padded bounding box of a mask, clamped to the image.

    The tight box is expanded on every side by ``padding_fraction`` times the
    box's own extent along that axis (per-side padding), then clamped.
    Returns ``(u0, v0, u1, v1)`` with exclusive upper bounds.
    """
    if padding_fraction < 0:
        raise ValueError("padding_fraction must be non-negative")
    rows = np.flatnonzero(m.data.any(axis=1))
    cols = np.flatnonzero(m.data.any(axis=0))
    if rows.size == 0:
        raise EmptyMask("cannot crop around an empty mask")
    v0, v1 = int(rows[0]), int(rows[-1]) + 1
    u0, u1 = int(cols[0]), int(cols[-1]) + 1
    pad_u = int(np.ceil(padding_fraction * (u1 - u0)))
    pad_v = int(np.ceil(padding_fraction * (v1 - v0)))
    h, w = m.shape
    return (max(0, u0 - pad_u), max(0, v0 - pad_v),
            min(w, u1 + pad_u), min(h, v1 + pad_v))
