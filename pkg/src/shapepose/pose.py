"""Rotation representations, Sim(3) transforms, and pose z-score normalization.

Conventions used throughout the package:

* Rotations are stored as unit quaternions ``(w, x, y, z)`` with ``w >= 0``
  so that ``q`` and ``-q`` collapse to a single representative.
* A :class:`Sim3Pose` maps object-frame points into a target frame via
  ``x' = scale * (R @ x) + t``.
* Flat pose-parameter vectors are laid out as ``(rho..., tx, ty, tz, s)``
  where ``rho`` is either the 6D rotation encoding (first two matrix columns,
  column-major) or the 9D encoding (full matrix, row-major).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateInput, DegenerateStats, LayoutMismatch

_EPS_RANK = 1e-12


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    a.flags.writeable = False
    return a


class Rotation:
    """Unit quaternion with canonical sign, the package's only rotation store.

    6D and 9D encodings exist purely as conversion endpoints
    (:func:`rot_from_6d`, :func:`rot_to_6d`, :func:`rot_from_9d`,
    :func:`rot_to_9d`); equality, composition, and point transport all go
    through this class.
    """

    __slots__ = ("_q",)

    def __init__(self, w: float, x: float, y: float, z: float):
        q = np.array([w, x, y, z], dtype=float)
        n = np.linalg.norm(q)
        if n < _EPS_RANK:
            raise DegenerateInput("quaternion norm is zero")
        q /= n
        # canonical sign: w >= 0, ties broken on the first nonzero component
        if q[0] < 0.0 or (q[0] == 0.0 and _first_nonzero_negative(q[1:])):
            q = -q
        q.flags.writeable = False
        self._q = q

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Rotation":
        a = np.asarray(axis, dtype=float).reshape(3)
        n = np.linalg.norm(a)
        if n < _EPS_RANK:
            raise DegenerateInput("rotation axis has zero norm")
        half = 0.5 * angle
        s = math.sin(half) / n
        return cls(math.cos(half), a[0] * s, a[1] * s, a[2] * s)

    @classmethod
    def from_matrix(cls, m) -> "Rotation":
        """Quaternion extraction (Shepperd), assumes ``m`` is orthonormal."""
        m = np.asarray(m, dtype=float).reshape(3, 3)
        t = np.trace(m)
        if t > 0.0:
            r = math.sqrt(1.0 + t)
            s = 0.5 / r
            return cls(0.5 * r, (m[2, 1] - m[1, 2]) * s,
                       (m[0, 2] - m[2, 0]) * s, (m[1, 0] - m[0, 1]) * s)
        i = int(np.argmax(np.diag(m)))
        j, k = (i + 1) % 3, (i + 2) % 3
        r = math.sqrt(1.0 + m[i, i] - m[j, j] - m[k, k])
        s = 0.5 / r
        xyz = [0.0, 0.0, 0.0]
        xyz[i] = 0.5 * r
        xyz[j] = (m[j, i] + m[i, j]) * s
        xyz[k] = (m[k, i] + m[i, k]) * s
        return cls((m[k, j] - m[j, k]) * s, *xyz)

    @property
    def quat(self) -> np.ndarray:
        """Quaternion as ``(w, x, y, z)``, unit norm, ``w >= 0``."""
        return self._q

    def as_matrix(self) -> np.ndarray:
        w, x, y, z = self._q
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])

    def apply(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.as_matrix().T

    def compose(self, other: "Rotation") -> "Rotation":
        """Hamilton product ``self * other`` (apply ``other`` first)."""
        w1, x1, y1, z1 = self._q
        w2, x2, y2, z2 = other._q
        return Rotation(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def inverse(self) -> "Rotation":
        w, x, y, z = self._q
        return Rotation(w, -x, -y, -z)

    def angle_to(self, other: "Rotation") -> float:
        """Geodesic distance in radians, precise down to ~1e-15."""
        d = self.inverse().compose(other)._q
        return 2.0 * math.atan2(np.linalg.norm(d[1:]), abs(d[0]))

    def __repr__(self) -> str:
        w, x, y, z = self._q
        return f"Rotation(w={w:.9g}, x={x:.9g}, y={y:.9g}, z={z:.9g})"


def _first_nonzero_negative(v: np.ndarray) -> bool:
    for c in v:
        if c != 0.0:
            return c < 0.0
    return False


# ---------------------------------------------------------------------------
# 6D / 9D conversion endpoints
# ---------------------------------------------------------------------------

def rot_from_6d(r6) -> Rotation:
    """Recover a rotation from its first two matrix columns by Gram-Schmidt.

    ``r6`` holds six reals: column 1 then column 2 of a rotation matrix.
    Column 1 is normalized, column 2 is orthogonalized against it, column 3
    is their cross product.

    Raises :class:`DegenerateInput` when column 1 is (near) zero or the two
    columns are (near) parallel.
    """
    r6 = np.asarray(r6, dtype=float).reshape(6)
    c1, c2 = r6[:3], r6[3:]
    n1 = np.linalg.norm(c1)
    if n1 <= _EPS_RANK:
        raise DegenerateInput("6D input: first column has zero norm")
    b1 = c1 / n1
    u2 = c2 - np.dot(b1, c2) * b1
    n2 = np.linalg.norm(u2)
    if n2 <= _EPS_RANK:
        raise DegenerateInput("6D input: columns are parallel")
    b2 = u2 / n2
    b3 = np.cross(b1, b2)
    return Rotation.from_matrix(np.column_stack([b1, b2, b3]))


def rot_to_6d(r: Rotation) -> np.ndarray:
    """First two columns of the rotation matrix, column-major (6 reals)."""
    m = r.as_matrix()
    return np.concatenate([m[:, 0], m[:, 1]])


def rot_from_9d(r9) -> Rotation:
    """Project nine reals (row-major 3x3) onto SO(3).

    Uses the orthogonal-Procrustes solution: with ``M = U S Vt``, the nearest
    rotation in Frobenius norm is ``U @ diag(1, 1, det(U @ Vt)) @ Vt``.

    Raises :class:`DegenerateInput` when the matrix is rank deficient.
    """
    m = np.asarray(r9, dtype=float).reshape(3, 3)
    u, s, vt = np.linalg.svd(m)
    if s[-1] <= _EPS_RANK:
        raise DegenerateInput("9D input: matrix is rank deficient")
    d = np.sign(np.linalg.det(u @ vt))
    return Rotation.from_matrix(u @ np.diag([1.0, 1.0, d]) @ vt)


def rot_to_9d(r: Rotation) -> np.ndarray:
    """Full rotation matrix flattened row-major (9 reals)."""
    return r.as_matrix().reshape(9).copy()


# ---------------------------------------------------------------------------
# Sim(3)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Sim3Pose:
    """Similarity transform: ``x' = scale * (R @ x) + translation``."""

    rotation: Rotation
    translation: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "translation", _as_vec3(self.translation))
        object.__setattr__(self, "scale", float(self.scale))
        if not self.scale > 0.0:
            raise DegenerateInput(f"Sim(3) scale must be positive, got {self.scale}")

    @classmethod
    def identity(cls) -> "Sim3Pose":
        return cls(Rotation.identity(), np.zeros(3), 1.0)

    def apply(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return self.scale * self.rotation.apply(pts) + self.translation

    def compose(self, other: "Sim3Pose") -> "Sim3Pose":
        """``self o other``: apply ``other`` first, then ``self``."""
        return Sim3Pose(
            self.rotation.compose(other.rotation),
            self.scale * self.rotation.apply(other.translation) + self.translation,
            self.scale * other.scale,
        )

    def inverse(self) -> "Sim3Pose":
        rinv = self.rotation.inverse()
        return Sim3Pose(rinv, -rinv.apply(self.translation) / self.scale, 1.0 / self.scale)


def sim3_apply(p: Sim3Pose, pts) -> np.ndarray:
    return p.apply(pts)


def sim3_compose(a: Sim3Pose, b: Sim3Pose) -> Sim3Pose:
    return a.compose(b)


def sim3_inverse(p: Sim3Pose) -> Sim3Pose:
    return p.inverse()


# ---------------------------------------------------------------------------
# Flat pose vectors and z-score statistics
# ---------------------------------------------------------------------------

def pose_to_vector(p: Sim3Pose, rho_width: int = 6) -> np.ndarray:
    """Flatten to ``(rho..., tx, ty, tz, s)`` with ``rho`` of width 6 or 9."""
    if rho_width == 6:
        rho = rot_to_6d(p.rotation)
    elif rho_width == 9:
        rho = rot_to_9d(p.rotation)
    else:
        raise LayoutMismatch(f"rho width must be 6 or 9, got {rho_width}")
    return np.concatenate([rho, p.translation, [p.scale]])


def vector_to_pose(v) -> Sim3Pose:
    """Inverse of :func:`pose_to_vector`; layout inferred from length."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size == 10:
        rot = rot_from_6d(v[:6])
    elif v.size == 13:
        rot = rot_from_9d(v[:9])
    else:
        raise LayoutMismatch(f"pose vector must have 10 or 13 entries, got {v.size}")
    return Sim3Pose(rot, v[-4:-1], v[-1])


_STATS_HEADER = "# shapepose pose-stats v1: name mean std"


@dataclass(frozen=True)
class PoseStats:
    """Component-wise mean/std for pose vectors of a fixed layout.

    ``mean`` and ``std`` cover the full ``(rho..., t, s)`` vector;
    ``rho_width`` records how many leading entries belong to the rotation
    encoding (6 or 9). Every std entry must be strictly positive.
    """

    mean: np.ndarray
    std: np.ndarray
    rho_width: int = 6

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        std = np.asarray(self.std, dtype=float).reshape(-1)
        if self.rho_width not in (6, 9):
            raise LayoutMismatch(f"rho width must be 6 or 9, got {self.rho_width}")
        width = self.rho_width + 4
        if mean.size != width or std.size != width:
            raise LayoutMismatch(
                f"stats need {width} components for rho width {self.rho_width}, "
                f"got mean {mean.size} / std {std.size}")
        if not np.all(std > 0.0):
            raise DegenerateStats("every std component must be positive")
        mean.flags.writeable = False
        std.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @classmethod
    def unit(cls, rho_width: int = 6) -> "PoseStats":
        """Zero mean, unit std (normalization becomes the identity)."""
        w = rho_width + 4
        return cls(np.zeros(w), np.ones(w), rho_width)

    @property
    def component_names(self) -> list[str]:
        return ([f"rho{i}" for i in range(self.rho_width)]
                + ["tx", "ty", "tz", "scale"])

    def save(self, path) -> None:
        lines = [_STATS_HEADER]
        for name, m, s in zip(self.component_names, self.mean, self.std):
            lines.append(f"{name} {float(m)!r} {float(s)!r}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "PoseStats":
        names, means, stds = [], [], []
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            name, m, s = line.split()
            names.append(name)
            means.append(float(m))
            stds.append(float(s))
        rho_width = sum(1 for n in names if n.startswith("rho"))
        return cls(np.array(means), np.array(stds), rho_width)


def pose_normalize(v, stats: PoseStats) -> np.ndarray:
    """Z-score: ``(v - mean) / std`` componentwise."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != stats.mean.size:
        raise LayoutMismatch(f"vector has {v.size} entries, stats expect {stats.mean.size}")
    return (v - stats.mean) / stats.std


def pose_denormalize(v, stats: PoseStats) -> np.ndarray:
    """Inverse z-score: ``v * std + mean`` componentwise."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != stats.mean.size:
        raise LayoutMismatch(f"vector has {v.size} entries, stats expect {stats.mean.size}")
    return v * stats.std + stats.mean


def pose_stats_fit(samples: Iterable[Sequence[float]], rho_width: int = 6) -> PoseStats:
    """Fit per-component mean and population (1/N) standard deviation.

    Raises :class:`DegenerateStats` when fewer than two samples are given or
    any component is constant.
    """
    arr = np.asarray(list(samples), dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise DegenerateStats("need at least two pose samples")
    if arr.shape[1] != rho_width + 4:
        raise LayoutMismatch(
            f"samples have {arr.shape[1]} components, expected {rho_width + 4}")
    mean = arr.mean(axis=0)
    std = arr.std(axis=0, ddof=0)
    if np.any(std <= 0.0):
        bad = [i for i, s in enumerate(std) if s <= 0.0]
        raise DegenerateStats(f"constant components at indices {bad}")
    return PoseStats(mean, std, rho_width)
