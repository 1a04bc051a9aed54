"""Shape/pose evaluation metrics and rigid ICP alignment.

All distances are meters unless explicitly normalized. Nearest-neighbor
queries go through a KD-tree and are exact, so brute-force oracles must
agree to floating-point precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DegenerateGeometry,
    EmptyAmodal,
    EmptyCloud,
    MaskInconsistency,
    NonPositiveDiameter,
)
from .mesh import TriMesh, sample_surface
from .pointmap import BinaryMask
from .pose import Rotation, Sim3Pose


@dataclass(frozen=True)
class RigidTransform:
    """Rotation plus translation (no scale): ``x' = R x + t``."""

    rotation: Rotation
    translation: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3)
        t.flags.writeable = False
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(Rotation.identity(), np.zeros(3))

    def apply(self, pts) -> np.ndarray:
        return self.rotation.apply(pts) + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(
            self.rotation.compose(other.rotation),
            self.rotation.apply(other.translation) + self.translation)

    def inverse(self) -> "RigidTransform":
        rinv = self.rotation.inverse()
        return RigidTransform(rinv, -rinv.apply(self.translation))


@dataclass(frozen=True)
class IcpResult:
    transform: RigidTransform
    iterations: int
    converged: bool
    rms_history: tuple[float, ...]


def add_s_directional(a, b) -> float:
    """Mean distance from each point of ``a`` to its nearest neighbor in ``b``."""
    a = np.asarray(a, dtype=float).reshape(-1, 3)
    b = np.asarray(b, dtype=float).reshape(-1, 3)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise EmptyCloud("both clouds must be non-empty")
    dists, _ = cKDTree(b).query(a)
    return float(np.mean(dists))


def add_sb(
    pred_mesh: TriMesh,
    pred_pose: Sim3Pose,
    gt_mesh: TriMesh,
    gt_pose: Sim3Pose,
    n: int = 10_000,
    seed: int = 0,
    seeds: tuple[int, int] | None = None,
) -> float:
    """Bidirectional ADD-S between two posed meshes.

    Both surfaces are sampled with ``n`` points and posed, and the two
    directional means are averaged. Like classic ADD-S, the same point draw
    (``seed``) is used on both sides, so identical meshes under identical
    poses score exactly zero rather than sampling noise; pass ``seeds`` to
    decouple the draws.
    """
    s_pred, s_gt = seeds if seeds is not None else (seed, seed)
    p = pred_pose.apply(sample_surface(pred_mesh, n, s_pred).points)
    g = gt_pose.apply(sample_surface(gt_mesh, n, s_gt).points)
    return 0.5 * (add_s_directional(p, g) + add_s_directional(g, p))


def add_sb_recall(values: Iterable[tuple[float, float]], threshold_fraction: float) -> float:
    """Fraction of instances whose ADD-SB is below a diameter fraction."""
    pairs = list(values)
    if not pairs:
        raise ValueError("recall of an empty instance set is undefined")
    hits = 0
    for err, diam in pairs:
        if diam <= 0.0:
            raise NonPositiveDiameter(f"GT diameter must be positive, got {diam}")
        hits += err < threshold_fraction * diam
    return hits / len(pairs)


def dre(d_pred: float, d_gt: float) -> float:
    """Diameter relative error ``|d_pred - d_gt| / d_gt``."""
    if d_gt <= 0.0:
        raise NonPositiveDiameter(f"GT diameter must be positive, got {d_gt}")
    return abs(d_pred - d_gt) / d_gt


def dre_recall(errors: Iterable[float], tau: float = 0.05) -> float:
    """Fraction of diameter relative errors below ``tau``."""
    errs = list(errors)
    if not errs:
        raise ValueError("recall of an empty instance set is undefined")
    return sum(e < tau for e in errs) / len(errs)


# ---------------------------------------------------------------------------
# Rigid ICP
# ---------------------------------------------------------------------------

def procrustes_rigid(src, dst) -> RigidTransform:
    """Least-squares rigid transform for known correspondences.

    Minimizes ``sum_i || R src_i + t - dst_i ||^2`` via SVD of the
    cross-covariance, with the determinant corrected to keep a proper
    rotation (no reflection).
    """
    src = np.asarray(src, dtype=float).reshape(-1, 3)
    dst = np.asarray(dst, dtype=float).reshape(-1, 3)
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    rot = Rotation.from_matrix(r)
    return RigidTransform(rot, cd - rot.apply(cs))


def _check_not_collinear(pts: np.ndarray, name: str) -> None:
    if pts.shape[0] < 3:
        raise DegenerateGeometry(f"{name} cloud needs at least 3 points")
    s = np.linalg.svd(pts - pts.mean(axis=0), compute_uv=False)
    if s[1] <= 1e-12 * max(s[0], 1.0):
        raise DegenerateGeometry(f"{name} cloud is collinear")


def icp_align(src, dst, max_iters: int = 60, tol: float = 1e-6) -> IcpResult:
    """Point-to-point ICP aligning ``src`` onto ``dst``.

    Each iteration matches every source point to its nearest destination
    point, solves the closed-form rigid fit, and applies it. Stops when the
    RMS correspondence error changes by less than ``tol`` between iterations.
    Not converging within ``max_iters`` is not an error; the best-effort
    cumulative transform is returned with the iteration count.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 3)
    dst = np.asarray(dst, dtype=float).reshape(-1, 3)
    _check_not_collinear(src, "source")
    _check_not_collinear(dst, "destination")

    tree = cKDTree(dst)
    current = src
    cumulative = RigidTransform.identity()
    history: list[float] = []
    converged = False
    iterations = 0
    prev_rms = None
    for _ in range(max_iters):
        _, nn = tree.query(current)
        step = procrustes_rigid(current, dst[nn])
        current = step.apply(current)
        cumulative = step.compose(cumulative)
        iterations += 1
        rms = float(np.sqrt(np.mean(np.sum((current - dst[nn]) ** 2, axis=1))))
        history.append(rms)
        if prev_rms is not None and abs(prev_rms - rms) < tol:
            converged = True
            break
        prev_rms = rms
    return IcpResult(cumulative, iterations, converged, tuple(history))


def chamfer_normalized(
    pred: TriMesh,
    gt: TriMesh,
    gt_diameter: float,
    n: int = 10_000,
    seed: int = 0,
    icp_iters: int = 60,
    icp_tol: float = 1e-6,
    use_icp: bool = True,
) -> float:
    """Symmetric Chamfer distance over the GT diameter, after ICP alignment.

    The prediction's samples are rigidly aligned to the GT samples first so
    residual pose error does not contaminate the shape score; pass
    ``use_icp=False`` to score the clouds as they stand. Both meshes use the
    same sample draw, so identical inputs score exactly zero.
    """
    if gt_diameter <= 0.0:
        raise NonPositiveDiameter(f"GT diameter must be positive, got {gt_diameter}")
    p = sample_surface(pred, n, seed).points
    g = sample_surface(gt, n, seed).points
    if use_icp:
        p = icp_align(p, g, max_iters=icp_iters, tol=icp_tol).transform.apply(p)
    chamfer = 0.5 * (add_s_directional(p, g) + add_s_directional(g, p))
    return chamfer / gt_diameter


# ---------------------------------------------------------------------------
# Occlusion analytics
# ---------------------------------------------------------------------------

OCCLUSION_BIN_EDGES = (0.03, 0.20, 0.40, 0.70)
OCCLUSION_BIN_LABELS = ("0-3%", "3-20%", "20-40%", "40-70%")
OCCLUSION_BIN_OUT_OF_RANGE = -1


def occlusion_fraction(visible: BinaryMask, amodal: BinaryMask) -> float:
    """Fraction of the full object extent that is hidden: ``1 - |vis| / |amodal|``.

    Computed as ``(|amodal| - |vis|) / |amodal|`` so integer pixel ratios land
    on their canonical doubles and bin edges classify exact percentages
    consistently.
    """
    total = amodal.count()
    if total == 0:
        raise EmptyAmodal("amodal mask is empty")
    if bool(np.any(visible.data & ~amodal.data)):
        raise MaskInconsistency("visible mask has pixels outside the amodal mask")
    return (total - visible.count()) / total


def occlusion_bin(f: float) -> int:
    """Bin an occlusion fraction: [0,3%), [3,20%), [20,40%), [40,70%].

    Fractions above 70% return ``OCCLUSION_BIN_OUT_OF_RANGE`` and are kept
    out of binned reports (raw records still carry them).
    """
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"occlusion fraction must be in [0, 1], got {f}")
    if f < 0.03:
        return 0
    if f < 0.20:
        return 1
    if f < 0.40:
        return 2
    if f <= 0.70:
        return 3
    return OCCLUSION_BIN_OUT_OF_RANGE


def occlusion_bin_label(bin_id: int) -> str:
    if bin_id == OCCLUSION_BIN_OUT_OF_RANGE:
        return ">70%"
    return OCCLUSION_BIN_LABELS[bin_id]
