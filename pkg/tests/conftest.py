"""Shared fixture builders: synthetic meshes, BOP scenes, prediction bundles."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from shapepose.mesh import TriMesh, sample_surface, save_ply
from shapepose.pointmap import CameraIntrinsics, Pointmap, project
from shapepose.pose import Rotation, Sim3Pose

_BOX_FACES = np.array([
    [0, 2, 1], [0, 3, 2],      # bottom (z = z0)
    [4, 5, 6], [4, 6, 7],      # top (z = z1)
    [0, 1, 5], [0, 5, 4],
    [1, 2, 6], [1, 6, 5],
    [2, 3, 7], [2, 7, 6],
    [3, 0, 4], [3, 4, 7],
], dtype=np.int64)


def box_mesh(size=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)) -> TriMesh:
    sx, sy, sz = np.asarray(size, float) / 2.0
    cx, cy, cz = center
    verts = np.array([
        [cx - sx, cy - sy, cz - sz],
        [cx + sx, cy - sy, cz - sz],
        [cx + sx, cy + sy, cz - sz],
        [cx - sx, cy + sy, cz - sz],
        [cx - sx, cy - sy, cz + sz],
        [cx + sx, cy - sy, cz + sz],
        [cx + sx, cy + sy, cz + sz],
        [cx - sx, cy + sy, cz + sz],
    ])
    return TriMesh(verts, _BOX_FACES)


def plate_mesh(side: float = 0.12, thickness_ratio: float = 0.01) -> TriMesh:
    """Thin square plate; translating along z moves every surface point ~t."""
    return box_mesh((side, side, side * thickness_ratio))


def icosphere(radius: float = 1.0, subdivisions: int = 3,
              center=(0.0, 0.0, 0.0)) -> TriMesh:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [(-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
             (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
             (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1)]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        faces = [t for (a, b, c) in faces
                 for t in ((a, midpoint(a, b), midpoint(a, c)),
                           (b, midpoint(b, c), midpoint(a, b)),
                           (c, midpoint(a, c), midpoint(b, c)),
                           (midpoint(a, b), midpoint(b, c), midpoint(a, c)))]
    pts = radius * np.stack(verts) + np.asarray(center, float)
    return TriMesh(pts, np.asarray(faces, dtype=np.int64))


def random_rotation(rng: np.random.Generator, max_angle: float = np.pi) -> Rotation:
    axis = rng.standard_normal(3)
    return Rotation.from_axis_angle(axis, rng.uniform(0.0, max_angle))


def random_pose(rng: np.random.Generator, t_scale: float = 1.0,
                with_scale: bool = True) -> Sim3Pose:
    scale = float(np.exp(rng.uniform(-0.5, 0.5))) if with_scale else 1.0
    return Sim3Pose(random_rotation(rng), t_scale * rng.standard_normal(3), scale)


def grid_pointmap(points: np.ndarray, height: int = 20) -> Pointmap:
    """Arrange a point list into a synthetic pointmap grid (all pixels valid)."""
    pts = np.asarray(points, float).reshape(-1, 3)
    width = int(np.ceil(pts.shape[0] / height))
    grid = np.zeros((height, width, 3))
    valid = np.zeros((height, width), dtype=bool)
    flat_rows = np.arange(pts.shape[0]) // width
    flat_cols = np.arange(pts.shape[0]) % width
    grid[flat_rows, flat_cols] = pts
    valid[flat_rows, flat_cols] = True
    return Pointmap(grid, valid)


# ---------------------------------------------------------------------------
# BOP-style dataset fixtures
# ---------------------------------------------------------------------------

FIXTURE_INTRINSICS = CameraIntrinsics(fx=120.0, fy=120.0, cx=32.0, cy=32.0,
                                      width=64, height=64)
FIXTURE_DEPTH_SCALE = 1e-4  # 0.1 mm per raw unit


def splat_depth(points_cam: np.ndarray, k: CameraIntrinsics,
                depth_scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Point-splat z-buffer: returns (raw uint16 depth, hit mask)."""
    uv = np.round(project(points_cam, k)).astype(int)
    keep = ((uv[:, 0] >= 0) & (uv[:, 0] < k.width)
            & (uv[:, 1] >= 0) & (uv[:, 1] < k.height))
    uv, z = uv[keep], points_cam[keep, 2]
    depth = np.full((k.height, k.width), np.inf)
    np.minimum.at(depth, (uv[:, 1], uv[:, 0]), z)
    hit = np.isfinite(depth)
    raw = np.zeros((k.height, k.width), dtype=np.uint16)
    raw[hit] = np.clip(np.round(depth[hit] / depth_scale), 1, 65535).astype(np.uint16)
    return raw, hit


def _save_mask(path: Path, mask: np.ndarray) -> None:
    Image.fromarray((mask.astype(np.uint8)) * 255, mode="L").save(path)


def _save_depth(path: Path, raw: np.ndarray) -> None:
    Image.fromarray(raw.astype(np.uint16)).save(path)


def write_bop_scene(root: Path, scene_id: int, frames: list[dict],
                    meshes: dict[int, TriMesh]) -> None:
    """Write a synthetic scene in the BOP layout used by the ingest module.

    Each frame dict: {"frame_id": int, "instances": [{"obj_id": int,
    "pose": Sim3Pose (scale 1), optional "occluder_cols": (c0, c1)}],
    optional "camera_pose": RigidTransform (world-from-camera)}.
    Depth and masks are synthesized by splatting surface samples of the posed
    GT meshes; occluder_cols blanks mask columns to mimic occlusion.
    """
    k = FIXTURE_INTRINSICS
    scene_dir = root / f"{scene_id:06d}"
    for sub in ("depth", "mask", "mask_visib"):
        (scene_dir / sub).mkdir(parents=True, exist_ok=True)
    models_dir = root / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    for obj_id, mesh in meshes.items():
        save_ply(mesh, models_dir / f"obj_{obj_id:06d}.ply")

    cam_json: dict = {}
    gt_json: dict = {}
    k_flat = [k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0]
    for frame in frames:
        fid = frame["frame_id"]
        cam_entry = {"cam_K": k_flat, "depth_scale": FIXTURE_DEPTH_SCALE}
        if "camera_pose" in frame:
            w2c = frame["camera_pose"].inverse()
            cam_entry["cam_R_w2c"] = w2c.rotation.as_matrix().reshape(-1).tolist()
            cam_entry["cam_t_w2c"] = (w2c.translation * 1000.0).tolist()
        cam_json[str(fid)] = cam_entry

        raw_total = np.zeros((k.height, k.width), dtype=np.uint16)
        gts = []
        amodal_masks, visible_masks = [], []
        for inst in frame["instances"]:
            mesh = meshes[inst["obj_id"]]
            pose: Sim3Pose = inst["pose"]
            pts = pose.apply(sample_surface(mesh, 20_000, seed=11).points)
            raw, hit = splat_depth(pts, k, FIXTURE_DEPTH_SCALE)
            visible = hit.copy()
            if "occluder_cols" in inst:
                c0, c1 = inst["occluder_cols"]
                visible[:, c0:c1] = False
            amodal_masks.append(hit)
            visible_masks.append(visible)
            keep = raw > 0
            write = keep & ((raw_total == 0) | (raw < raw_total))
            raw_total[write] = raw[write]
            gts.append({
                "obj_id": inst["obj_id"],
                "cam_R_m2c": pose.rotation.as_matrix().reshape(-1).tolist(),
                "cam_t_m2c": (pose.translation * 1000.0).tolist(),
            })
        gt_json[str(fid)] = gts
        _save_depth(scene_dir / "depth" / f"{fid:06d}.png", raw_total)
        for idx, (vis, amo) in enumerate(zip(visible_masks, amodal_masks)):
            _save_mask(scene_dir / "mask_visib" / f"{fid:06d}_{idx:06d}.png", vis)
            _save_mask(scene_dir / "mask" / f"{fid:06d}_{idx:06d}.png", amo)

    (scene_dir / "scene_camera.json").write_text(json.dumps(cam_json, indent=1))
    (scene_dir / "scene_gt.json").write_text(json.dumps(gt_json, indent=1))


def write_bundle(pred_root: Path, instance_id: str, mesh: TriMesh,
                 poses: list[Sim3Pose], view_frames: list[int | None] | None = None,
                 seed_id: int | None = None, subdir: str | None = None,
                 rotation_as: str = "quat") -> Path:
    bundle_dir = pred_root / (subdir if subdir is not None else instance_id)
    bundle_dir.mkdir(parents=True, exist_ok=True)
    save_ply(mesh, bundle_dir / "mesh.ply")
    view_frames = view_frames if view_frames is not None else [None] * len(poses)
    records = []
    for view, (pose, frame_id) in enumerate(zip(poses, view_frames)):
        rec: dict = {"view_id": view,
                     "translation_m": pose.translation.tolist(),
                     "scale": pose.scale}
        if frame_id is not None:
            rec["frame_id"] = frame_id
        if rotation_as == "quat":
            rec["rotation_wxyz"] = pose.rotation.quat.tolist()
        else:
            rec["rotation_matrix"] = pose.rotation.as_matrix().reshape(-1).tolist()
        records.append(rec)
    meta = {"instance": instance_id, "poses": records}
    if seed_id is not None:
        meta["seed"] = seed_id
    (bundle_dir / "poses.json").write_text(json.dumps(meta, indent=1))
    return bundle_dir


def build_eval_fixture(root: Path, scene_ids=(1,), shift_fraction: float | None = None,
                       occlude_first: bool = False) -> tuple[Path, Path]:
    """Dataset + prediction roots with thin-plate objects.

    Predictions copy the GT meshes; when ``shift_fraction`` is set, every
    predicted pose is offset along the plate normal by that fraction of the
    object diameter (a plate moved along its normal keeps ADD-SB ~= the
    offset, which makes recall thresholds easy to place).
    """
    dataset = root / "dataset"
    pred = root / "pred"
    meshes = {10: plate_mesh(0.10), 11: plate_mesh(0.12)}
    diameters = {oid: float(np.linalg.norm(m.vertices.max(0) - m.vertices.min(0)))
                 for oid, m in meshes.items()}
    rng = np.random.default_rng(99)
    for scene_id in scene_ids:
        frames = []
        for frame_id in (0, 1):
            instances = []
            for slot, obj_id in enumerate((10, 11)):
                tilt = Rotation.from_axis_angle([1, 0, 0], rng.uniform(-0.25, 0.25))
                pose = Sim3Pose(tilt, [(-0.07 + 0.14 * slot), 0.0,
                                       0.55 + 0.04 * frame_id], 1.0)
                inst = {"obj_id": obj_id, "pose": pose}
                if occlude_first and slot == 0:
                    inst["occluder_cols"] = (26, 31)
                instances.append(inst)
            frames.append({"frame_id": frame_id, "instances": instances})
        write_bop_scene(dataset, scene_id, frames, meshes)

        for frame in frames:
            for gt_index, inst in enumerate(frame["instances"]):
                pose = inst["pose"]
                if shift_fraction is not None:
                    t = shift_fraction * diameters[inst["obj_id"]]
                    pose = pose.compose(Sim3Pose(Rotation.identity(), [0, 0, t]))
                iid = f"{scene_id:06d}_{frame['frame_id']:06d}_{gt_index:06d}"
                write_bundle(pred, iid, meshes[inst["obj_id"]], [pose],
                             view_frames=[frame["frame_id"]])
    return dataset, pred


def build_occlusion_fixture(root: Path) -> Path:
    """Hand-authored single-frame scene with exact visible-pixel counts.

    Four instances share a 100-pixel amodal box; visible counts 100/90/75/50
    give occlusion fractions 0.0 / 0.1 / 0.25 / 0.5 (one per bin).
    """
    scene = root / "000001"
    for sub in ("depth", "mask", "mask_visib"):
        (scene / sub).mkdir(parents=True, exist_ok=True)
    (scene / "scene_camera.json").write_text(json.dumps(
        {"0": {"cam_K": [10.0, 0.0, 8.0, 0.0, 10.0, 8.0, 0.0, 0.0, 1.0],
               "depth_scale": 0.0001}}, indent=1))
    gts = []
    for idx, count in enumerate([100, 90, 75, 50]):
        amodal = np.zeros((16, 16), dtype=np.uint8)
        amodal[:10, :10] = 255
        visible = np.zeros((16, 16), dtype=np.uint8)
        vis_flags = np.zeros(100, dtype=bool)
        vis_flags[:count] = True
        visible[:10, :10] = vis_flags.reshape(10, 10) * np.uint8(255)
        _save_mask(scene / "mask" / f"000000_{idx:06d}.png", amodal != 0)
        _save_mask(scene / "mask_visib" / f"000000_{idx:06d}.png", visible != 0)
        gts.append({"obj_id": idx + 1,
                    "cam_R_m2c": [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
                    "cam_t_m2c": [0.0, 0.0, 500.0]})
    (scene / "scene_gt.json").write_text(json.dumps({"0": gts}, indent=1))
    _save_depth(scene / "depth" / "000000.png", np.full((16, 16), 5000, dtype=np.uint16))
    return root


@pytest.fixture
def unit_cube() -> TriMesh:
    return box_mesh()
