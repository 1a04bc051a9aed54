"""Batch evaluation over BOP-style data: metric rows, selection studies,
aggregation.

Determinism contract: every instance gets its own RNG seed derived from
(global seed, scene, frame, gt index), workers share only immutable inputs,
and rows are gathered in instance-id order — so the worker count can never
change an emitted byte. Per-instance failures become error rows; only an
unusable configuration aborts a run.

Within a scene, gt indices are assumed stable across frames (the same
physical instance keeps its position in every frame's GT list); multi-view
bundles rely on this to find the second view's masks.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import MissingCameraPose, MissingFile, ShapePoseError
from .ingest import (
    EvalRecord,
    InstanceGT,
    PredictionBundle,
    SceneFrame,
    erode_mask,
    instance_key,
    load_bop_scene,
    load_mesh,
    load_predictions,
)
from .mesh import TriMesh, diameter, sample_surface
from .metrics import (
    OCCLUSION_BIN_OUT_OF_RANGE,
    add_sb,
    chamfer_normalized,
    dre,
    occlusion_bin,
    occlusion_bin_label,
    occlusion_fraction,
)
from .pointmap import Pointmap, backproject, mask_pointmap, normalization_transform, robust_normalization
from .selection import (
    PoseCandidate,
    alignment_score,
    argmin_candidate,
    oracle_select,
    score_candidates_cross_view,
    score_candidates_single_view,
    score_samples,
)

SELECTION_MODES = ("single_view", "cross_view", "multi_sample", "oracle")


@dataclass(frozen=True)
class RunConfig:
    dataset_root: Path
    pred_root: Path | None = None
    frames: tuple[tuple[int, int], ...] | None = None  # (scene, frame); None = all
    samples: int = 10_000
    seed: int = 0
    icp_iters: int = 60
    icp_tol: float = 1e-6
    recall_thresholds: tuple[float, float] = (0.10, 0.05)
    dre_threshold: float = 0.05
    trim: float = 0.10
    workers: int = 1
    out_dir: Path | None = None
    outlier_cap: float | None = None  # drop rows with add_sb >= cap * diameter

    def __post_init__(self):
        object.__setattr__(self, "dataset_root", Path(self.dataset_root))
        if self.pred_root is not None:
            object.__setattr__(self, "pred_root", Path(self.pred_root))
        if self.out_dir is not None:
            object.__setattr__(self, "out_dir", Path(self.out_dir))
        for t in self.recall_thresholds + (self.dre_threshold,):
            if not 0.0 < t < 1.0:
                raise ValueError(f"thresholds must be in (0, 1), got {t}")
        if not 0.0 <= self.trim < 0.5:
            raise ValueError(f"trim must be in [0, 0.5), got {self.trim}")
        if self.workers < 1:
            raise ValueError("worker count must be >= 1")


@dataclass(frozen=True)
class Report:
    """Instance rows plus aggregates; aggregates always recomputable from rows."""

    kind: str  # "eval" | "selection" | "occlusion"
    rows: tuple[dict, ...]
    aggregates: dict


def derive_instance_seed(global_seed: int, scene_id: int, frame_id: int, gt_index: int) -> int:
    """Schedule-independent per-instance seed (stable across runs/platforms)."""
    text = f"{global_seed}:{scene_id}:{frame_id}:{gt_index}"
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little")


def parse_frame_list(path) -> tuple[tuple[int, int], ...]:
    """Frame-list file: one ``scene_id frame_id`` pair per line, '#' comments."""
    pairs = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'scene_id frame_id'")
        pairs.append((int(parts[0]), int(parts[1])))
    return tuple(pairs)


def discover_frames(dataset_root: Path) -> tuple[tuple[int, int], ...]:
    """All (scene, frame) pairs present under the dataset root, sorted."""
    pairs = []
    for cam_file in sorted(Path(dataset_root).glob("*/scene_camera.json")):
        scene_id = int(cam_file.parent.name)
        for frame_key in json.loads(cam_file.read_text()):
            pairs.append((scene_id, int(frame_key)))
    return tuple(sorted(pairs))


def _pool_map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Shared loading
# ---------------------------------------------------------------------------

@dataclass
class _Workspace:
    """Immutable inputs shared by all workers."""

    cfg: RunConfig
    eval_frames: tuple[tuple[int, int], ...]
    frames: dict[tuple[int, int], SceneFrame]
    bundles: dict[str, list[PredictionBundle]]  # instance id -> seed-sorted bundles
    meshes: dict[Path, TriMesh] = field(default_factory=dict)

    def gt_mesh(self, inst: InstanceGT) -> TriMesh:
        if inst.mesh_path is None:
            raise MissingFile(f"no GT mesh reference for obj {inst.obj_id}")
        if inst.mesh_path not in self.meshes:
            raise MissingFile(f"GT mesh not preloaded: {inst.mesh_path}")
        return self.meshes[inst.mesh_path]


def _resolve_frames(cfg: RunConfig) -> tuple[tuple[int, int], ...]:
    pairs = cfg.frames if cfg.frames is not None else discover_frames(cfg.dataset_root)
    if not pairs:
        raise ValueError("frame list is empty; nothing to evaluate")
    return tuple(sorted(set(pairs)))


def _load_workspace(cfg: RunConfig, need_predictions: bool = True) -> _Workspace:
    pairs = _resolve_frames(cfg)
    wanted = set(pairs)
    frames: dict[tuple[int, int], SceneFrame] = {}
    for scene_id in sorted({s for s, _ in pairs}):
        for frame in load_bop_scene(cfg.dataset_root, scene_id):
            frames[(frame.scene_id, frame.frame_id)] = frame
    missing = [p for p in pairs if p not in frames]
    if missing:
        raise MissingFile(f"frames not found in dataset: {missing[:5]}")
    # keep every loaded frame: multi-view bundles may reference frames
    # outside the evaluation list
    bundles: dict[str, list[PredictionBundle]] = {}
    if need_predictions:
        if cfg.pred_root is None:
            raise ValueError("prediction root is required")
        for b in load_predictions(cfg.pred_root):
            bundles.setdefault(b.instance_id, []).append(b)
    ws = _Workspace(cfg, pairs, frames, bundles)
    for key in wanted:
        for inst in frames[key].instances:
            if inst.mesh_path is not None and inst.mesh_path not in ws.meshes:
                ws.meshes[inst.mesh_path] = load_mesh(inst.mesh_path)
    return ws


def _object_pointmap(frame: SceneFrame, gt_index: int) -> Pointmap:
    """Backproject the frame's depth and keep the instance's (eroded) pixels."""
    inst = frame.instances[gt_index]
    pm = backproject(frame.depth, frame.intrinsics)
    return mask_pointmap(pm, erode_mask(inst.visible_mask))


def _candidates_for(ws: _Workspace, record: EvalRecord) -> tuple[list[PoseCandidate], dict[int, Pointmap]]:
    """Wrap a bundle's metric poses as normalized-frame candidates per view."""
    bundle = record.prediction
    cands: list[PoseCandidate] = []
    pointmaps: dict[int, Pointmap] = {}
    for view, (pose, view_frame) in enumerate(zip(bundle.poses, bundle.view_frames)):
        frame_id = record.frame.frame_id if view_frame is None and view == 0 else view_frame
        if frame_id is None:
            raise MissingFile(
                f"{record.instance_id}: view {view} has no frame_id mapping")
        key = (record.frame.scene_id, int(frame_id))
        if key not in ws.frames:
            raise MissingFile(f"{record.instance_id}: view frame {key} not loaded")
        pm_obj = _object_pointmap(ws.frames[key], record.instance.gt_index)
        norm = robust_normalization(pm_obj)
        cands.append(PoseCandidate(
            pose=normalization_transform(norm).compose(pose),
            view_index=view,
            normalization=norm,
        ))
        pointmaps[view] = pm_obj
    return cands, pointmaps


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

EVAL_COLUMNS = (
    "instance_id", "scene_id", "frame_id", "obj_id", "status",
    "add_sb", "gt_diameter", "pred_diameter",
    "add_sb_recall_010", "add_sb_recall_005", "dre", "dre_ok_005",
    "cd_norm", "occlusion_fraction", "occlusion_bin",
    "selection_scores", "error",
)


def _blank_row(instance_id: str, scene_id: int, frame_id: int, obj_id: int | None,
               error: str) -> dict:
    row = {c: None for c in EVAL_COLUMNS}
    row.update(instance_id=instance_id, scene_id=scene_id, frame_id=frame_id,
               obj_id=obj_id, status="error", selection_scores=(), error=error)
    return row


def evaluate_record(ws: _Workspace, record: EvalRecord) -> dict:
    """Full metric row for one instance (ADD-SB, recalls, DRE, CD, occlusion)."""
    cfg = ws.cfg
    inst = record.instance
    seed = derive_instance_seed(cfg.seed, record.frame.scene_id,
                                record.frame.frame_id, inst.gt_index)
    n = cfg.samples
    gt_mesh = ws.gt_mesh(inst)
    pred_mesh = record.prediction.mesh
    pred_pose = record.prediction.poses[0]

    err = add_sb(pred_mesh, pred_pose, gt_mesh, inst.pose, n=n, seed=seed)
    d_pred = diameter(pred_pose.apply(sample_surface(pred_mesh, n, seed).points))
    d_gt = diameter(inst.pose.apply(sample_surface(gt_mesh, n, seed).points))
    dre_val = dre(d_pred, d_gt)
    cd = chamfer_normalized(pred_mesh.transformed(pred_pose),
                            gt_mesh.transformed(inst.pose),
                            d_gt, n=n, seed=seed,
                            icp_iters=cfg.icp_iters, icp_tol=cfg.icp_tol)

    occ = occ_bin = None
    if inst.amodal_mask is not None:
        occ = occlusion_fraction(inst.visible_mask, inst.amodal_mask)
        occ_bin = occlusion_bin(occ)

    scores: tuple[float, ...] = ()
    if len(record.prediction.poses) >= 2:
        try:
            cands, pointmaps = _candidates_for(ws, record)
            scores = tuple(
                alignment_score(pred_mesh, c, pointmaps[c.view_index],
                                cfg.trim, n, seed).score
                for c in cands)
        except ShapePoseError:
            scores = ()  # auxiliary; the metric row stands without them

    t10, t05 = cfg.recall_thresholds
    return {
        "instance_id": record.instance_id,
        "scene_id": record.frame.scene_id,
        "frame_id": record.frame.frame_id,
        "obj_id": inst.obj_id,
        "status": "ok",
        "add_sb": err,
        "gt_diameter": d_gt,
        "pred_diameter": d_pred,
        "add_sb_recall_010": err < t10 * d_gt,
        "add_sb_recall_005": err < t05 * d_gt,
        "dre": dre_val,
        "dre_ok_005": dre_val < cfg.dre_threshold,
        "cd_norm": cd,
        "occlusion_fraction": occ,
        "occlusion_bin": occ_bin,
        "selection_scores": scores,
        "error": "",
    }


def _build_records(ws: _Workspace) -> list[tuple[str, EvalRecord | None, dict]]:
    """(instance id, record or None, context) for every GT instance in scope."""
    items = []
    for key in ws.eval_frames:
        frame = ws.frames[key]
        for inst in frame.instances:
            iid = instance_key(frame.scene_id, frame.frame_id, inst.gt_index)
            ctx = {"scene_id": frame.scene_id, "frame_id": frame.frame_id,
                   "obj_id": inst.obj_id}
            matches = ws.bundles.get(iid)
            if not matches:
                items.append((iid, None, ctx))
                continue
            record = EvalRecord(iid, frame, inst, matches[0])
            items.append((iid, record, ctx))
    return items


def run_eval(cfg: RunConfig) -> Report:
    """Evaluate every instance in the frame list; failures become error rows."""
    ws = _load_workspace(cfg)

    def work(item) -> dict:
        iid, record, ctx = item
        if record is None:
            return _blank_row(iid, ctx["scene_id"], ctx["frame_id"],
                              ctx["obj_id"], "no prediction bundle")
        try:
            return evaluate_record(ws, record)
        except Exception as e:  # error rows, never batch aborts
            return _blank_row(iid, ctx["scene_id"], ctx["frame_id"],
                              ctx["obj_id"], f"{type(e).__name__}: {e}")

    rows = _pool_map(work, _build_records(ws), cfg.workers)
    rows.sort(key=lambda r: r["instance_id"])
    if cfg.outlier_cap is not None:
        rows = [r for r in rows
                if r["status"] != "ok" or r["add_sb"] < cfg.outlier_cap * r["gt_diameter"]]
    return Report("eval", tuple(rows), compute_aggregates("eval", rows))


# ---------------------------------------------------------------------------
# Selection study
# ---------------------------------------------------------------------------

SELECTION_COLUMNS = (
    "instance_id", "scene_id", "frame_id", "obj_id", "status", "mode",
    "n_candidates", "baseline_add_sb", "baseline_cd",
    "selected_index", "selected_add_sb", "selected_cd",
    "oracle_index", "oracle_add_sb", "oracle_cd", "scores", "error",
)


def _blank_selection_row(iid: str, ctx: dict, mode: str, error: str) -> dict:
    row = {c: None for c in SELECTION_COLUMNS}
    row.update(instance_id=iid, scene_id=ctx["scene_id"], frame_id=ctx["frame_id"],
               obj_id=ctx["obj_id"], status="error", mode=mode, scores=(), error=error)
    return row


def _candidate_metrics(ws: _Workspace, inst: InstanceGT, mesh: TriMesh,
                       pose, seed: int) -> dict[str, float]:
    cfg = ws.cfg
    gt_mesh = ws.gt_mesh(inst)
    err = add_sb(mesh, pose, gt_mesh, inst.pose, n=cfg.samples, seed=seed)
    d_gt = diameter(inst.pose.apply(sample_surface(gt_mesh, cfg.samples, seed).points))
    cd = chamfer_normalized(mesh.transformed(pose), gt_mesh.transformed(inst.pose),
                            d_gt, n=cfg.samples, seed=seed,
                            icp_iters=cfg.icp_iters, icp_tol=cfg.icp_tol)
    return {"add_sb": err, "chamfer": cd}


def _view_gt_instance(ws: _Workspace, record: EvalRecord, view: int) -> InstanceGT:
    """GT for a candidate's own view (poses live in per-view camera frames).

    ADD-SB and Chamfer are invariant under the rigid camera-frame change, so
    scoring each candidate against its own view's GT matches transporting
    everything into one common frame.
    """
    view_frame = record.prediction.view_frames[view]
    frame_id = record.frame.frame_id if view_frame is None and view == 0 else view_frame
    frame = ws.frames[(record.frame.scene_id, int(frame_id))]
    return frame.instances[record.instance.gt_index]


def _select_among_views(ws: _Workspace, record: EvalRecord, mode: str, seed: int) -> dict:
    cfg = ws.cfg
    bundle = record.prediction
    # single-candidate bundles degenerate gracefully: all columns identical
    metrics = [_candidate_metrics(ws, _view_gt_instance(ws, record, view),
                                  bundle.mesh, pose, seed)
               for view, pose in enumerate(bundle.poses)]
    oracle_idx = oracle_select(metrics, "chamfer")

    scores: tuple[float, ...] = ()
    if mode == "oracle":  # selection column mirrors the oracle, no alignment
        sel_idx = oracle_idx
    else:
        cands, pointmaps = _candidates_for(ws, record)
        if mode == "single_view":
            score_list = score_candidates_single_view(
                bundle.mesh, cands, pointmaps, cfg.trim, cfg.samples, seed)
        else:
            camera_poses = {}
            for view, view_frame in enumerate(bundle.view_frames):
                frame_id = record.frame.frame_id if view_frame is None and view == 0 \
                    else view_frame
                frame = ws.frames[(record.frame.scene_id, int(frame_id))]
                if frame.camera_pose is None:
                    raise MissingCameraPose(
                        f"frame {frame.frame_id} carries no camera pose annotation")
                camera_poses[view] = frame.camera_pose
            score_list = score_candidates_cross_view(
                bundle.mesh, cands, pointmaps, camera_poses,
                cfg.trim, cfg.samples, seed)
        scores = tuple(score_list)
        chosen = argmin_candidate([(s, c.view_index)
                                   for s, c in zip(score_list, cands)])
        sel_idx = cands[chosen].view_index
    return {"n": len(bundle.poses), "metrics": metrics,
            "selected": sel_idx, "oracle": oracle_idx, "scores": scores}


def _select_among_samples(ws: _Workspace, iid: str, frame: SceneFrame,
                          inst: InstanceGT, bundles: list[PredictionBundle],
                          seed: int) -> dict:
    cfg = ws.cfg
    # all generations are scored against the instance's own view
    pm_obj = _object_pointmap(frame, inst.gt_index)
    norm = robust_normalization(pm_obj)
    pairs = [(b.mesh,
              PoseCandidate(normalization_transform(norm).compose(b.poses[0]), 0, norm))
             for b in bundles]
    score_list = score_samples(pairs, pm_obj, cfg.trim, cfg.samples, seed)
    sel_idx = argmin_candidate(list(zip(score_list, range(len(score_list)))))
    metrics = [_candidate_metrics(ws, inst, b.mesh, b.poses[0], seed)
               for b in bundles]
    oracle_idx = oracle_select(metrics, "add_sb")
    return {"n": len(bundles), "metrics": metrics,
            "selected": sel_idx, "oracle": oracle_idx, "scores": tuple(score_list)}


def run_selection_study(cfg: RunConfig, mode: str) -> Report:
    """Compare first-candidate baseline, alignment-selected, and oracle picks."""
    if mode not in SELECTION_MODES:
        raise ValueError(f"mode must be one of {SELECTION_MODES}, got {mode!r}")
    ws = _load_workspace(cfg)

    def work(item) -> dict:
        iid, record, ctx = item
        if record is None:
            return _blank_selection_row(iid, ctx, mode, "no prediction bundle")
        seed = derive_instance_seed(cfg.seed, ctx["scene_id"], ctx["frame_id"],
                                    record.instance.gt_index)
        try:
            if mode == "multi_sample":
                out = _select_among_samples(ws, iid, record.frame, record.instance,
                                            ws.bundles[iid], seed)
            else:
                out = _select_among_views(ws, record, mode, seed)
        except Exception as e:
            return _blank_selection_row(iid, ctx, mode, f"{type(e).__name__}: {e}")
        metrics = out["metrics"]
        return {
            "instance_id": iid,
            "scene_id": ctx["scene_id"],
            "frame_id": ctx["frame_id"],
            "obj_id": ctx["obj_id"],
            "status": "ok",
            "mode": mode,
            "n_candidates": out["n"],
            "baseline_add_sb": metrics[0]["add_sb"],
            "baseline_cd": metrics[0]["chamfer"],
            "selected_index": out["selected"],
            "selected_add_sb": metrics[out["selected"]]["add_sb"],
            "selected_cd": metrics[out["selected"]]["chamfer"],
            "oracle_index": out["oracle"],
            "oracle_add_sb": metrics[out["oracle"]]["add_sb"],
            "oracle_cd": metrics[out["oracle"]]["chamfer"],
            "scores": out["scores"],
            "error": "",
        }

    rows = _pool_map(work, _build_records(ws), cfg.workers)
    rows.sort(key=lambda r: r["instance_id"])
    return Report("selection", tuple(rows), compute_aggregates("selection", rows))


# ---------------------------------------------------------------------------
# Occlusion-only report
# ---------------------------------------------------------------------------

OCCLUSION_COLUMNS = (
    "instance_id", "scene_id", "frame_id", "obj_id", "status",
    "occlusion_fraction", "occlusion_bin", "occlusion_label", "error",
)


def run_occlusion_report(cfg: RunConfig) -> Report:
    """Occlusion fraction and bin per instance; needs masks only."""
    ws = _load_workspace(cfg, need_predictions=False)
    rows = []
    for key in ws.eval_frames:
        frame = ws.frames[key]
        for inst in frame.instances:
            iid = instance_key(frame.scene_id, frame.frame_id, inst.gt_index)
            base = {"instance_id": iid, "scene_id": frame.scene_id,
                    "frame_id": frame.frame_id, "obj_id": inst.obj_id}
            if inst.amodal_mask is None:
                rows.append({**base, "status": "error", "occlusion_fraction": None,
                             "occlusion_bin": None, "occlusion_label": None,
                             "error": "amodal mask unavailable"})
                continue
            try:
                occ = occlusion_fraction(inst.visible_mask, inst.amodal_mask)
                b = occlusion_bin(occ)
            except Exception as e:
                rows.append({**base, "status": "error", "occlusion_fraction": None,
                             "occlusion_bin": None, "occlusion_label": None,
                             "error": f"{type(e).__name__}: {e}"})
                continue
            rows.append({**base, "status": "ok", "occlusion_fraction": occ,
                         "occlusion_bin": b, "occlusion_label": occlusion_bin_label(b),
                         "error": ""})
    rows.sort(key=lambda r: r["instance_id"])
    return Report("occlusion", tuple(rows), compute_aggregates("occlusion", rows))


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

def _lower_median(values: Sequence[float]) -> float:
    """Median using the lower-middle element for even counts."""
    v = sorted(values)
    return float(v[(len(v) - 1) // 2])


def _mean_median(rows: Sequence[dict], key: str) -> dict[str, float]:
    vals = [float(r[key]) for r in rows]
    return {f"{key}_mean": float(np.mean(vals)), f"{key}_median": _lower_median(vals)}


def compute_aggregates(kind: str, rows: Sequence[dict]) -> dict:
    """Aggregate instance rows; pure so emission can re-verify the result."""
    ok = [r for r in rows if r["status"] == "ok"]
    out: dict = {"overall": {"count": len(ok), "error_count": len(rows) - len(ok)}}
    if not ok:
        return out
    overall = out["overall"]

    if kind == "eval":
        for key in ("add_sb", "cd_norm", "dre"):
            overall.update(_mean_median(ok, key))
        overall["recall_add_sb_0.10"] = float(np.mean([r["add_sb_recall_010"] for r in ok]))
        overall["recall_add_sb_0.05"] = float(np.mean([r["add_sb_recall_005"] for r in ok]))
        overall["dre_recall_0.05"] = float(np.mean([r["dre_ok_005"] for r in ok]))

        per_object: dict = {}
        for obj_id in sorted({r["obj_id"] for r in ok}):
            sub = [r for r in ok if r["obj_id"] == obj_id]
            entry = {"count": len(sub)}
            for key in ("add_sb", "cd_norm", "dre"):
                entry.update(_mean_median(sub, key))
            entry["recall_add_sb_0.10"] = float(np.mean([r["add_sb_recall_010"] for r in sub]))
            entry["recall_add_sb_0.05"] = float(np.mean([r["add_sb_recall_005"] for r in sub]))
            per_object[str(obj_id)] = entry
        out["per_object"] = per_object

        binned = [r for r in ok if r["occlusion_bin"] is not None
                  and r["occlusion_bin"] != OCCLUSION_BIN_OUT_OF_RANGE]
        per_bin: dict = {}
        for b in range(4):
            sub = [r for r in binned if r["occlusion_bin"] == b]
            entry: dict = {"count": len(sub)}
            if sub:
                entry.update(_mean_median(sub, "add_sb"))
                entry.update(_mean_median(sub, "cd_norm"))
            per_bin[occlusion_bin_label(b)] = entry
        out["per_occlusion_bin"] = per_bin

    elif kind == "selection":
        for col in ("baseline", "selected", "oracle"):
            overall.update(_mean_median(ok, f"{col}_add_sb"))
            overall.update(_mean_median(ok, f"{col}_cd"))
        overall["selected_matches_oracle"] = float(np.mean(
            [r["selected_index"] == r["oracle_index"] for r in ok]))

    elif kind == "occlusion":
        overall.update(_mean_median(ok, "occlusion_fraction"))
        per_bin = {}
        for b in range(4):
            per_bin[occlusion_bin_label(b)] = {
                "count": sum(r["occlusion_bin"] == b for r in ok)}
        per_bin[occlusion_bin_label(OCCLUSION_BIN_OUT_OF_RANGE)] = {
            "count": sum(r["occlusion_bin"] == OCCLUSION_BIN_OUT_OF_RANGE for r in ok)}
        out["per_occlusion_bin"] = per_bin

    else:
        raise ValueError(f"unknown report kind {kind!r}")
    return out
