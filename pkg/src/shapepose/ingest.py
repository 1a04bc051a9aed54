"""BOP-format scene reading, prediction bundles, and mask preprocessing.

Unit policy: BOP stores GT translations in millimeters; everything leaving
this module is meters, so downstream code never converts. Raw depth becomes
meters via ``raw * depth_scale`` with the scale taken from scene_camera.json.

Expected dataset layout per scene (ids zero-padded to six digits)::

    <root>/<scene>/scene_camera.json     {"<frame>": {"cam_K": [9], "depth_scale": s,
                                          optional "cam_R_w2c": [9], "cam_t_w2c": [3] (mm)}}
    <root>/<scene>/scene_gt.json         {"<frame>": [{"cam_R_m2c": [9],
                                          "cam_t_m2c": [3] (mm), "obj_id": int}, ...]}
    <root>/<scene>/depth/<frame>.png     16-bit depth, 0 = missing
    <root>/<scene>/mask_visib/<frame>_<inst>.png
    <root>/<scene>/mask/<frame>_<inst>.png        (amodal; whole dir optional)
    <root>/models/obj_<obj_id>.ply                (optional mesh references)

Prediction bundles are directories holding ``mesh.ply`` (or ``.obj``) plus a
``poses.json``::

    {"instance": "<scene>_<frame>_<gt_index>",      six-digit ids, underscore-joined
     "seed": 3,                                      optional generation seed id
     "poses": [{"view_id": 0,
                "frame_id": 12,                      optional dataset frame for this view
                "rotation_wxyz": [w, x, y, z],       OR "rotation_matrix": 9 row-major
                "translation_m": [x, y, z],
                "scale": 1.0}, ...]}

Rotation encoding is auto-detected by field name; matrices with negative
determinant (reflections) are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import MalformedRecord, MissingFile, UnitMismatch
from .mesh import TriMesh, load_mesh
from .metrics import RigidTransform
from .pointmap import BinaryMask, CameraIntrinsics, DepthImage
from .pose import Rotation, Sim3Pose

MM_TO_M = 1e-3


def instance_key(scene_id: int, frame_id: int, gt_index: int) -> str:
    """Canonical instance id: ``<scene>_<frame>_<gt_index>``, six digits each."""
    return f"{scene_id:06d}_{frame_id:06d}_{gt_index:06d}"


# ---------------------------------------------------------------------------
# Image IO
# ---------------------------------------------------------------------------

def load_depth_png(path, depth_scale: float) -> DepthImage:
    """16-bit grayscale PNG to meters (``raw * depth_scale``); 0 = invalid."""
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"depth image not found: {path}")
    raw = np.asarray(Image.open(path))
    if raw.ndim != 2:
        raise MalformedRecord(f"{path}: depth PNG must be single-channel")
    return DepthImage.from_raw(raw, depth_scale)


def load_mask_png(path) -> BinaryMask:
    """8-bit PNG to a boolean mask (nonzero = true)."""
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"mask image not found: {path}")
    raw = np.asarray(Image.open(path))
    if raw.ndim == 3:
        raw = raw[..., 0]
    return BinaryMask(raw != 0)


def erode_mask(m: BinaryMask) -> BinaryMask:
    """3x3 full-neighborhood erosion; out-of-image neighbors count as false.

    Applied to visible masks before depth masking so border pixels, where
    depth and segmentation tend to disagree, drop out.
    """
    eroded = ndimage.binary_erosion(
        m.data, structure=np.ones((3, 3), dtype=bool), border_value=0)
    return BinaryMask(eroded)


# ---------------------------------------------------------------------------
# BOP scene loading
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InstanceGT:
    """Ground truth for a single object instance within a frame."""

    gt_index: int
    obj_id: int
    pose: Sim3Pose                     # object -> camera, meters, scale 1
    visible_mask: BinaryMask
    amodal_mask: BinaryMask | None
    mesh_path: Path | None


@dataclass(frozen=True)
class SceneFrame:
    scene_id: int
    frame_id: int
    intrinsics: CameraIntrinsics
    depth_scale: float
    depth: DepthImage
    instances: tuple[InstanceGT, ...]
    camera_pose: RigidTransform | None  # world-from-camera, when annotated


@dataclass(frozen=True)
class PredictionBundle:
    """One predicted mesh with one pose per view (metric camera frames)."""

    instance_id: str
    mesh: TriMesh
    poses: tuple[Sim3Pose, ...]
    view_frames: tuple[int | None, ...]
    seed_id: int | None
    path: Path | None = None

    def __post_init__(self):
        if len(self.poses) < 1:
            raise MalformedRecord(f"bundle {self.instance_id}: needs at least one pose")
        if self.mesh.vertices.shape[0] == 0:
            raise MalformedRecord(f"bundle {self.instance_id}: mesh is empty")
        if len(self.view_frames) != len(self.poses):
            raise MalformedRecord(
                f"bundle {self.instance_id}: {len(self.poses)} poses but "
                f"{len(self.view_frames)} view frames")


@dataclass(frozen=True)
class EvalRecord:
    """The unit of metric computation: one GT instance plus its prediction."""

    instance_id: str
    frame: SceneFrame
    instance: InstanceGT
    prediction: PredictionBundle

    def __post_init__(self):
        if self.prediction.instance_id != self.instance_id:
            raise MalformedRecord(
                f"instance id mismatch: record {self.instance_id} vs "
                f"prediction {self.prediction.instance_id}")


def _scene_dir(root: Path, scene_id: int) -> Path:
    padded = root / f"{scene_id:06d}"
    if padded.is_dir():
        return padded
    plain = root / str(scene_id)
    if plain.is_dir():
        return plain
    raise MissingFile(f"scene directory not found: {padded}")


def _read_json(path: Path) -> dict:
    if not path.exists():
        raise MissingFile(f"required file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise MalformedRecord(f"{path}: invalid JSON ({e})") from e


def _rotation_from_flat(values, context: str) -> Rotation:
    m = np.asarray(values, dtype=float).reshape(3, 3)
    if np.linalg.det(m) < 0:
        raise MalformedRecord(f"{context}: rotation has negative determinant")
    from .pose import rot_from_9d

    return rot_from_9d(m)


def _parse_camera_pose(rec: dict, context: str) -> RigidTransform | None:
    if "cam_R_w2c" not in rec or "cam_t_w2c" not in rec:
        return None
    r = _rotation_from_flat(rec["cam_R_w2c"], context)
    t = np.asarray(rec["cam_t_w2c"], dtype=float) * MM_TO_M
    # stored world->camera; we hand out world-from-camera
    return RigidTransform(r, t).inverse()


def load_bop_scene(root, scene_id: int, models_dir=None) -> list[SceneFrame]:
    """Load every frame of a BOP-style scene, sorted by frame id.

    ``models_dir`` defaults to ``<root>/models`` (then ``<root>/../models``);
    instances whose mesh file is absent keep ``mesh_path=None``.
    """
    root = Path(root)
    scene = _scene_dir(root, scene_id)
    cameras = _read_json(scene / "scene_camera.json")
    gts = _read_json(scene / "scene_gt.json")

    if models_dir is None:
        for cand in (root / "models", root.parent / "models"):
            if cand.is_dir():
                models_dir = cand
                break
    models_dir = Path(models_dir) if models_dir is not None else None

    frames: list[SceneFrame] = []
    for frame_key in sorted(cameras, key=int):
        frame_id = int(frame_key)
        cam = cameras[frame_key]
        ctx = f"{scene / 'scene_camera.json'}: frame {frame_key}"
        if "depth_scale" not in cam:
            raise UnitMismatch(f"{ctx}: depth_scale missing")
        if "cam_K" not in cam:
            raise MalformedRecord(f"{ctx}: cam_K missing")
        k = np.asarray(cam["cam_K"], dtype=float).reshape(3, 3)
        depth_scale = float(cam["depth_scale"])

        depth_path = scene / "depth" / f"{frame_id:06d}.png"
        depth = load_depth_png(depth_path, depth_scale)
        h, w = depth.shape
        intrinsics = CameraIntrinsics(k[0, 0], k[1, 1], k[0, 2], k[1, 2], w, h)

        instances = []
        for gt_index, gt in enumerate(gts.get(frame_key, [])):
            gctx = f"{scene / 'scene_gt.json'}: frame {frame_key} gt {gt_index}"
            for key in ("cam_R_m2c", "cam_t_m2c", "obj_id"):
                if key not in gt:
                    raise MalformedRecord(f"{gctx}: {key} missing")
            rot = _rotation_from_flat(gt["cam_R_m2c"], gctx)
            t = np.asarray(gt["cam_t_m2c"], dtype=float) * MM_TO_M
            pose = Sim3Pose(rot, t, 1.0)

            visible = load_mask_png(
                scene / "mask_visib" / f"{frame_id:06d}_{gt_index:06d}.png")
            amodal_path = scene / "mask" / f"{frame_id:06d}_{gt_index:06d}.png"
            amodal = load_mask_png(amodal_path) if amodal_path.exists() else None

            mesh_path = None
            if models_dir is not None:
                cand = models_dir / f"obj_{int(gt['obj_id']):06d}.ply"
                if cand.exists():
                    mesh_path = cand
            instances.append(InstanceGT(gt_index, int(gt["obj_id"]), pose,
                                        visible, amodal, mesh_path))

        frames.append(SceneFrame(scene_id, frame_id, intrinsics, depth_scale,
                                 depth, tuple(instances),
                                 _parse_camera_pose(cam, ctx)))
    return frames


# ---------------------------------------------------------------------------
# Prediction bundles
# ---------------------------------------------------------------------------

def _parse_pose_record(rec: dict, context: str) -> tuple[int, int | None, Sim3Pose]:
    if "view_id" not in rec:
        raise MalformedRecord(f"{context}: view_id missing")
    has_quat = "rotation_wxyz" in rec
    has_mat = "rotation_matrix" in rec
    if has_quat == has_mat:
        raise MalformedRecord(
            f"{context}: need exactly one of rotation_wxyz / rotation_matrix")
    try:
        if has_quat:
            w, x, y, z = (float(v) for v in rec["rotation_wxyz"])
            rot = Rotation(w, x, y, z)
        else:
            rot = _rotation_from_flat(rec["rotation_matrix"], context)
        t = np.asarray(rec["translation_m"], dtype=float).reshape(3)
        scale = float(rec.get("scale", 1.0))
        if scale <= 0:
            raise MalformedRecord(f"{context}: scale must be positive")
        pose = Sim3Pose(rot, t, scale)
    except MalformedRecord:
        raise
    except Exception as e:
        raise MalformedRecord(f"{context}: {e}") from e
    frame = rec.get("frame_id")
    return int(rec["view_id"]), (None if frame is None else int(frame)), pose


def load_prediction_bundle(bundle_dir) -> PredictionBundle:
    bundle_dir = Path(bundle_dir)
    meta_path = bundle_dir / "poses.json"
    meta = _read_json(meta_path)
    if "poses" not in meta or not meta["poses"]:
        raise MalformedRecord(f"{meta_path}: no poses listed")

    records = [_parse_pose_record(rec, f"{meta_path}: pose {i}")
               for i, rec in enumerate(meta["poses"])]
    view_ids = [r[0] for r in records]
    if len(set(view_ids)) != len(view_ids):
        raise MalformedRecord(f"{meta_path}: duplicate view_id")
    records.sort(key=lambda r: r[0])

    mesh_path = None
    for name in ("mesh.ply", "mesh.obj"):
        if (bundle_dir / name).exists():
            mesh_path = bundle_dir / name
            break
    if mesh_path is None:
        raise MissingFile(f"no mesh.ply/mesh.obj in bundle {bundle_dir}")

    seed = meta.get("seed")
    return PredictionBundle(
        instance_id=str(meta.get("instance", bundle_dir.name)),
        mesh=load_mesh(mesh_path),
        poses=tuple(r[2] for r in records),
        view_frames=tuple(r[1] for r in records),
        seed_id=None if seed is None else int(seed),
        path=bundle_dir,
    )


def load_predictions(root) -> list[PredictionBundle]:
    """All bundles under ``root`` (any directory holding a poses.json).

    Sorted by (instance id, seed id, path) so downstream iteration order
    never depends on filesystem enumeration.
    """
    root = Path(root)
    if not root.is_dir():
        raise MissingFile(f"prediction root not found: {root}")
    bundles = [load_prediction_bundle(p.parent)
               for p in sorted(root.rglob("poses.json"))]
    bundles.sort(key=lambda b: (b.instance_id,
                                -1 if b.seed_id is None else b.seed_id,
                                str(b.path)))
    return bundles
