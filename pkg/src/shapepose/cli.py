"""Command-line entry point: ``shapepose <subcommand>``.

Exit code 0 on success (error rows in a report still count as success),
1 on a fatal configuration problem.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import flow as flow_mod
from .errors import ShapePoseError
from .harness import RunConfig, parse_frame_list, run_eval, run_occlusion_report, run_selection_study
from .mesh import load_mesh
from .metrics import icp_align
from .pose import PoseStats, Rotation, Sim3Pose, pose_normalize, pose_to_vector
from .report import emit_report


def _fatal(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _build_config(dataset_root, pred_root, frames, samples, seed, workers,
                  trim, icp_iters, icp_tol, out, outlier_cap=None) -> RunConfig:
    frame_pairs = parse_frame_list(frames) if frames else None
    return RunConfig(
        dataset_root=Path(dataset_root),
        pred_root=None if pred_root is None else Path(pred_root),
        frames=frame_pairs,
        samples=samples,
        seed=seed,
        workers=workers,
        trim=trim,
        icp_iters=icp_iters,
        icp_tol=icp_tol,
        out_dir=Path(out),
        outlier_cap=outlier_cap,
    )


@click.group()
def main() -> None:
    """Shape-completion / pose-estimation evaluation toolkit."""


_shared = [
    click.option("--dataset-root", required=True, type=click.Path(),
                 help="BOP-style dataset root."),
    click.option("--frames", type=click.Path(), default=None,
                 help="Frame list file ('scene_id frame_id' per line); default: all frames."),
    click.option("--samples", default=10_000, show_default=True,
                 help="Surface sample count per mesh."),
    click.option("--seed", default=0, show_default=True),
    click.option("--workers", default=1, show_default=True),
    click.option("--trim", default=0.10, show_default=True,
                 help="Trim fraction for alignment scores."),
    click.option("--icp-iters", default=60, show_default=True),
    click.option("--icp-tol", default=1e-6, show_default=True),
    click.option("--out", required=True, type=click.Path(), help="Report output directory."),
]


def _with_options(options):
    def deco(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn
    return deco


@main.command("eval")
@_with_options(_shared)
@click.option("--pred-root", required=True, type=click.Path(),
              help="Prediction bundle root.")
@click.option("--outlier-cap", type=float, default=None,
              help="Drop rows with ADD-SB >= cap * diameter (off by default).")
def eval_cmd(dataset_root, frames, samples, seed, workers, trim, icp_iters,
             icp_tol, out, pred_root, outlier_cap):
    """Evaluate predictions: ADD-SB, recalls, DRE, normalized Chamfer, occlusion."""
    try:
        cfg = _build_config(dataset_root, pred_root, frames, samples, seed,
                            workers, trim, icp_iters, icp_tol, out, outlier_cap)
        report = run_eval(cfg)
        emit_report(report, cfg.out_dir)
    except (ShapePoseError, ValueError, OSError) as e:
        _fatal(str(e))
    ok = report.aggregates["overall"]["count"]
    errs = report.aggregates["overall"]["error_count"]
    click.echo(f"evaluated {ok} instances ({errs} error rows) -> {out}")


@main.command("select-pose")
@_with_options(_shared)
@click.option("--pred-root", required=True, type=click.Path())
@click.option("--mode", type=click.Choice(["single_view", "cross_view",
                                           "multi_sample", "oracle"]),
              default="single_view", show_default=True)
def select_pose_cmd(dataset_root, frames, samples, seed, workers, trim,
                    icp_iters, icp_tol, out, pred_root, mode):
    """Selection study: first-candidate baseline vs alignment-selected vs oracle."""
    try:
        cfg = _build_config(dataset_root, pred_root, frames, samples, seed,
                            workers, trim, icp_iters, icp_tol, out)
        report = run_selection_study(cfg, mode)
        emit_report(report, cfg.out_dir)
    except (ShapePoseError, ValueError, OSError) as e:
        _fatal(str(e))
    ok = report.aggregates["overall"]["count"]
    errs = report.aggregates["overall"]["error_count"]
    click.echo(f"selection study ({mode}) on {ok} instances "
               f"({errs} error rows) -> {out}")


@main.command("occlusion-report")
@click.option("--dataset-root", required=True, type=click.Path())
@click.option("--frames", type=click.Path(), default=None)
@click.option("--out", required=True, type=click.Path())
def occlusion_report_cmd(dataset_root, frames, out):
    """Occlusion fraction and bin per instance (masks only, no predictions)."""
    try:
        cfg = RunConfig(dataset_root=Path(dataset_root),
                        frames=parse_frame_list(frames) if frames else None,
                        out_dir=Path(out))
        report = run_occlusion_report(cfg)
        emit_report(report, cfg.out_dir)
    except (ShapePoseError, ValueError, OSError) as e:
        _fatal(str(e))
    ok = report.aggregates["overall"]["count"]
    errs = report.aggregates["overall"]["error_count"]
    click.echo(f"occlusion report for {ok} instances ({errs} error rows) -> {out}")


@main.command("flow-demo")
@click.option("--steps", default=50, show_default=True)
@click.option("--cfg-scale", default=3.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--views", default=1, show_default=True)
@click.option("--pose-stats", type=click.Path(), default=None,
              help="PoseStats key-value file; default: zero-mean unit-std.")
@click.option("--out", type=click.Path(), default=None,
              help="Trajectory log file; default: stdout.")
def flow_demo_cmd(steps, cfg_scale, seed, views, pose_stats, out):
    """Run the goal-seeking oracle field end-to-end and log the trajectory.

    Each log line is 'step t latent_dist pose_dist': RMS distances of the
    current state to the goal. The final line should sit at numerical zero.
    """
    try:
        stats = PoseStats.load(pose_stats) if pose_stats else PoseStats.unit()
        rng = np.random.default_rng(seed + 1)
        goal_poses = []
        for _ in range(views):
            axis = rng.standard_normal(3)
            pose = Sim3Pose(Rotation.from_axis_angle(axis, rng.uniform(0, np.pi)),
                            rng.standard_normal(3), float(np.exp(0.2 * rng.standard_normal())))
            goal_poses.append(pose_normalize(pose_to_vector(pose, stats.rho_width), stats))
        goal = flow_mod.FlowState(rng.standard_normal(flow_mod.LATENT_SHAPE),
                                  np.stack(goal_poses))

        lines = [f"# step t latent_dist pose_dist (steps={steps} "
                 f"cfg_scale={cfg_scale} seed={seed} views={views})"]

        def log(k: int, t: float, state: flow_mod.FlowState) -> None:
            ld = float(np.sqrt(np.mean((state.latent - goal.latent) ** 2)))
            pd = float(np.sqrt(np.mean((state.pose_tokens - goal.pose_tokens) ** 2)))
            lines.append(f"{k} {t!r} {ld!r} {pd!r}")

        field = flow_mod.goal_seeking_field(goal)
        sampler = flow_mod.SamplerConfig(steps=steps, cfg_scale=cfg_scale, seed=seed)
        _, poses = flow_mod.denoise_joint(field, stats, sampler, num_views=views,
                                          on_step=log)
    except (ShapePoseError, ValueError, OSError) as e:
        _fatal(str(e))
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text)
        click.echo(f"wrote {steps}-step trajectory -> {out}")
    else:
        click.echo(text, nl=False)
    for i, pose in enumerate(poses):
        w, x, y, z = pose.rotation.quat
        click.echo(f"# pose[{i}] quat=({w:.6f},{x:.6f},{y:.6f},{z:.6f}) "
                   f"t=({pose.translation[0]:.6f},{pose.translation[1]:.6f},"
                   f"{pose.translation[2]:.6f}) s={pose.scale:.6f}", err=True)


def _load_points(path: Path) -> np.ndarray:
    if path.suffix.lower() in (".ply", ".obj"):
        return load_mesh(path).vertices
    rows = [[float(t) for t in ln.split()]
            for ln in path.read_text().splitlines() if ln.strip()]
    return np.asarray(rows, dtype=float)[:, :3]


@main.command("icp")
@click.argument("src", type=click.Path())
@click.argument("dst", type=click.Path())
@click.option("--icp-iters", default=60, show_default=True)
@click.option("--icp-tol", default=1e-6, show_default=True)
@click.option("--out", type=click.Path(), default=None,
              help="Write the transform as JSON; default: stdout.")
def icp_cmd(src, dst, icp_iters, icp_tol, out):
    """Align two point clouds (PLY/OBJ vertices or whitespace xyz text)."""
    try:
        a = _load_points(Path(src))
        b = _load_points(Path(dst))
        result = icp_align(a, b, max_iters=icp_iters, tol=icp_tol)
    except (ShapePoseError, ValueError, OSError) as e:
        _fatal(str(e))
    payload = {
        "rotation_matrix": result.transform.rotation.as_matrix().tolist(),
        "rotation_wxyz": result.transform.rotation.quat.tolist(),
        "translation_m": result.transform.translation.tolist(),
        "iterations": result.iterations,
        "converged": result.converged,
        "final_rms": result.rms_history[-1],
    }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
        click.echo(f"wrote transform -> {out}")
    else:
        click.echo(text, nl=False)


if __name__ == "__main__":
    main()
