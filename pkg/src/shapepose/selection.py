"""Alignment-score-based selection among candidate poses and generations.

A candidate pose maps the object frame into a view's *normalized* frame;
scoring happens in the view's metric camera frame, reached by composing the
candidate pose with the inverse of that view's pointmap normalization. The
score is a one-directional statistic (pointmap -> mesh surface) because the
generated mesh also covers geometry the sensor never observed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import MissingCameraPose, TooFewPoints
from .mesh import TriMesh, sample_surface
from .metrics import RigidTransform
from .pointmap import ObjectNormalization, Pointmap, denormalization_transform
from .pose import Sim3Pose


@dataclass(frozen=True)
class AlignmentScore:
    """Trimmed-mean pointmap-to-surface distance in meters."""

    score: float
    trim: float
    point_count: int

    def __post_init__(self):
        if not 0.0 <= self.trim < 0.5:
            raise ValueError(f"trim must be in [0, 0.5), got {self.trim}")
        if self.score < 0.0:
            raise ValueError("alignment score cannot be negative")


@dataclass(frozen=True)
class PoseCandidate:
    """A pose hypothesis tied to the view it was predicted for."""

    pose: Sim3Pose                    # object frame -> view's normalized frame
    view_index: int
    normalization: ObjectNormalization

    def metric_pose(self) -> Sim3Pose:
        """Object frame -> the view's metric camera frame."""
        return denormalization_transform(self.normalization).compose(self.pose)


def trimmed_mean(distances, trim: float) -> float:
    """Mean after dropping the ceil(trim * K) largest values."""
    d = np.sort(np.asarray(distances, dtype=float))
    drop = math.ceil(trim * d.size)
    kept = d[:d.size - drop] if drop else d
    return float(kept.mean())


def alignment_score(
    mesh: TriMesh,
    cand: PoseCandidate,
    pointmap_obj: Pointmap,
    trim: float = 0.10,
    n: int = 10_000,
    seed: int = 0,
    frame_change: RigidTransform | None = None,
) -> AlignmentScore:
    """Score a candidate pose against one view's object pointmap.

    The mesh surface is sampled, moved into the candidate's metric camera
    frame, optionally carried into another camera's frame by
    ``frame_change``, and each valid pointmap point is measured to its
    nearest surface sample. The top ``trim`` fraction of distances is
    discarded (robustness to partial visibility) and the rest averaged.
    """
    if not 0.0 <= trim < 0.5:
        raise ValueError(f"trim must be in [0, 0.5), got {trim}")
    pts = pointmap_obj.valid_points()
    if pts.shape[0] < 10:
        raise TooFewPoints(
            f"alignment needs >= 10 valid pointmap points, got {pts.shape[0]}")
    surface = cand.metric_pose().apply(sample_surface(mesh, n, seed).points)
    if frame_change is not None:
        surface = frame_change.apply(surface)
    dists, _ = cKDTree(surface).query(pts)
    return AlignmentScore(trimmed_mean(dists, trim), trim, pts.shape[0])


def argmin_candidate(scored: Sequence[tuple[float, int]]) -> int:
    """Index of the lowest score; ties go to the lowest tagged key."""
    best = min(range(len(scored)), key=lambda i: (scored[i][0], scored[i][1]))
    return best


def score_candidates_single_view(
    mesh: TriMesh,
    candidates: Sequence[PoseCandidate],
    pointmaps: Mapping[int, Pointmap],
    trim: float = 0.10,
    n: int = 10_000,
    seed: int = 0,
) -> list[float]:
    """Each candidate's alignment against its own view's pointmap."""
    scores = []
    for cand in candidates:
        if cand.view_index not in pointmaps:
            raise MissingCameraPose(f"no pointmap for view {cand.view_index}")
        s = alignment_score(mesh, cand, pointmaps[cand.view_index], trim, n, seed)
        scores.append(s.score)
    return scores


def select_pose_single_view(
    mesh: TriMesh,
    candidates: Sequence[PoseCandidate],
    pointmaps: Mapping[int, Pointmap],
    trim: float = 0.10,
    n: int = 10_000,
    seed: int = 0,
) -> PoseCandidate:
    """Pick the candidate that best aligns with its own view's pointmap."""
    if not candidates:
        raise ValueError("need at least one candidate")
    scores = score_candidates_single_view(mesh, candidates, pointmaps, trim, n, seed)
    scored = [(s, c.view_index) for s, c in zip(scores, candidates)]
    return candidates[argmin_candidate(scored)]


def relative_camera_transform(
    camera_poses: Mapping[int, RigidTransform], src_view: int, dst_view: int,
) -> RigidTransform:
    """Rigid map from ``src_view``'s camera frame into ``dst_view``'s.

    Camera poses are world-from-camera, so the change of frame is
    ``inv(T_dst) o T_src``.
    """
    for v in (src_view, dst_view):
        if v not in camera_poses:
            raise MissingCameraPose(f"no camera pose for view {v}")
    return camera_poses[dst_view].inverse().compose(camera_poses[src_view])


def score_candidates_cross_view(
    mesh: TriMesh,
    candidates: Sequence[PoseCandidate],
    pointmaps: Mapping[int, Pointmap],
    camera_poses: Mapping[int, RigidTransform],
    trim: float = 0.10,
    n: int = 10_000,
    seed: int = 0,
) -> list[float]:
    """Each candidate's mean alignment over every view's pointmap.

    The candidate's posed mesh is carried from its own camera frame into the
    other views through the known relative camera transforms.
    """
    views = sorted(pointmaps.keys())
    scores = []
    for cand in candidates:
        per_view = []
        for view in views:
            change = None
            if view != cand.view_index:
                change = relative_camera_transform(camera_poses, cand.view_index, view)
            s = alignment_score(mesh, cand, pointmaps[view], trim, n, seed,
                                frame_change=change)
            per_view.append(s.score)
        scores.append(float(np.mean(per_view)))
    return scores


def select_pose_cross_view(
    mesh: TriMesh,
    candidates: Sequence[PoseCandidate],
    pointmaps: Mapping[int, Pointmap],
    camera_poses: Mapping[int, RigidTransform],
    trim: float = 0.10,
    n: int = 10_000,
    seed: int = 0,
) -> PoseCandidate:
    """Pick the candidate with the best mean alignment across all views."""
    if not candidates:
        raise ValueError("need at least one candidate")
    scores = score_candidates_cross_view(mesh, candidates, pointmaps, camera_poses,
                                         trim, n, seed)
    scored = [(s, c.view_index) for s, c in zip(scores, candidates)]
    return candidates[argmin_candidate(scored)]


def score_samples(
    mesh_pose_pairs: Sequence[tuple[TriMesh, PoseCandidate]],
    pointmap_obj: Pointmap,
    trim: float = 0.10,
    n: int = 10_000,
    seed: int = 0,
) -> list[float]:
    """Alignment of each generated (mesh, pose) sample to one pointmap."""
    return [alignment_score(mesh, cand, pointmap_obj, trim, n, seed).score
            for mesh, cand in mesh_pose_pairs]


def select_sample(
    mesh_pose_pairs: Sequence[tuple[TriMesh, PoseCandidate]],
    pointmap_obj: Pointmap,
    trim: float = 0.10,
    n: int = 10_000,
    seed: int = 0,
) -> int:
    """Index of the generated sample best aligned with the view's pointmap."""
    if not mesh_pose_pairs:
        raise ValueError("need at least one sample")
    scores = score_samples(mesh_pose_pairs, pointmap_obj, trim, n, seed)
    return argmin_candidate(list(zip(scores, range(len(scores)))))


def oracle_select(records: Sequence[Mapping[str, float]], criterion: str) -> int:
    """Index of the candidate with the lowest GT metric (``add_sb``/``chamfer``).

    Harness-only headroom analysis; ties resolve to the lowest index.
    """
    if not records:
        raise ValueError("need at least one record")
    values = [float(r[criterion]) for r in records]
    return min(range(len(values)), key=lambda i: (values[i], i))
