import json

import numpy as np
from click.testing import CliRunner

from conftest import box_mesh, build_eval_fixture
from shapepose.cli import main
from shapepose.mesh import sample_surface
from shapepose.metrics import RigidTransform
from shapepose.pose import Rotation


class TestEvalCommand:
    def test_end_to_end(self, tmp_path):
        dataset, pred = build_eval_fixture(tmp_path)
        out = tmp_path / "report"
        result = CliRunner().invoke(main, [
            "eval", "--dataset-root", str(dataset), "--pred-root", str(pred),
            "--samples", "2000", "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "per_instance.csv").exists()
        assert (out / "aggregates.json").exists()
        agg = json.loads((out / "aggregates.json").read_text())
        assert agg["overall"]["count"] == 4
        assert agg["overall"]["recall_add_sb_0.10"] == 1.0

    def test_error_rows_still_exit_zero(self, tmp_path):
        dataset, pred = build_eval_fixture(tmp_path)
        (pred / "000001_000000_000000" / "poses.json").unlink()
        out = tmp_path / "report"
        result = CliRunner().invoke(main, [
            "eval", "--dataset-root", str(dataset), "--pred-root", str(pred),
            "--samples", "2000", "--out", str(out)])
        assert result.exit_code == 0
        assert "1 error rows" in result.output

    def test_fatal_config_error_exits_one(self, tmp_path):
        result = CliRunner().invoke(main, [
            "eval", "--dataset-root", str(tmp_path / "nope"),
            "--pred-root", str(tmp_path / "missing"),
            "--out", str(tmp_path / "out")])
        assert result.exit_code == 1
        assert "error:" in result.output

    def test_frames_flag(self, tmp_path):
        dataset, pred = build_eval_fixture(tmp_path)
        frames = tmp_path / "frames.txt"
        frames.write_text("1 1\n")
        out = tmp_path / "report"
        result = CliRunner().invoke(main, [
            "eval", "--dataset-root", str(dataset), "--pred-root", str(pred),
            "--frames", str(frames), "--samples", "2000", "--out", str(out)])
        assert result.exit_code == 0
        agg = json.loads((out / "aggregates.json").read_text())
        assert agg["overall"]["count"] == 2


class TestSelectPoseCommand:
    def test_single_view_study(self, tmp_path):
        dataset, pred = build_eval_fixture(tmp_path)
        out = tmp_path / "sel"
        result = CliRunner().invoke(main, [
            "select-pose", "--dataset-root", str(dataset), "--pred-root", str(pred),
            "--mode", "single_view", "--samples", "2000", "--out", str(out)])
        assert result.exit_code == 0, result.output
        csv_text = (out / "per_instance.csv").read_text()
        assert "selected_index" in csv_text.splitlines()[0]


class TestOcclusionReportCommand:
    def test_masks_only(self, tmp_path):
        dataset, _ = build_eval_fixture(tmp_path, occlude_first=True)
        out = tmp_path / "occ"
        result = CliRunner().invoke(main, [
            "occlusion-report", "--dataset-root", str(dataset), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "occlusion_counts.svg").exists()


class TestFlowDemoCommand:
    def test_trajectory_log_reaches_goal(self, tmp_path):
        log = tmp_path / "traj.log"
        result = CliRunner().invoke(main, [
            "flow-demo", "--steps", "40", "--seed", "3", "--out", str(log)])
        assert result.exit_code == 0, result.output
        lines = log.read_text().splitlines()
        assert lines[0].startswith("#")
        assert len(lines) == 41
        final = lines[-1].split()
        assert float(final[2]) < 1e-9  # latent distance to goal
        assert float(final[3]) < 1e-9  # pose-token distance to goal

    def test_deterministic_output(self, tmp_path):
        logs = []
        for name in ("a.log", "b.log"):
            path = tmp_path / name
            CliRunner().invoke(main, ["flow-demo", "--steps", "10",
                                      "--seed", "7", "--out", str(path)])
            logs.append(path.read_bytes())
        assert logs[0] == logs[1]

    def test_pose_stats_file_and_two_views(self, tmp_path):
        from shapepose.pose import pose_stats_fit

        rng = np.random.default_rng(5)
        stats_path = tmp_path / "stats.txt"
        pose_stats_fit(rng.standard_normal((40, 13)) + 3.0,
                       rho_width=9).save(stats_path)
        log = tmp_path / "traj.log"
        result = CliRunner().invoke(main, [
            "flow-demo", "--steps", "20", "--seed", "2", "--views", "2",
            "--pose-stats", str(stats_path), "--out", str(log)])
        assert result.exit_code == 0, result.output
        final = log.read_text().splitlines()[-1].split()
        assert float(final[2]) < 1e-9 and float(final[3]) < 1e-9

    def test_unreadable_stats_is_fatal(self, tmp_path):
        bad = tmp_path / "stats.txt"
        bad.write_text("rho0 not-a-number 1.0\n")
        result = CliRunner().invoke(main, ["flow-demo", "--pose-stats", str(bad)])
        assert result.exit_code == 1


class TestIcpCommand:
    def test_xyz_alignment(self, tmp_path):
        pts = sample_surface(box_mesh((0.2, 0.15, 0.1)), 600, seed=1).points
        true = RigidTransform(Rotation.from_axis_angle([0, 0, 1], 0.12),
                              np.array([0.03, -0.01, 0.02]))
        src = tmp_path / "src.xyz"
        dst = tmp_path / "dst.xyz"
        src.write_text("\n".join(" ".join(repr(float(v)) for v in p) for p in pts))
        dst.write_text("\n".join(" ".join(repr(float(v)) for v in p)
                                 for p in true.apply(pts)))
        out = tmp_path / "transform.json"
        result = CliRunner().invoke(main, ["icp", str(src), str(dst),
                                           "--out", str(out)])
        assert result.exit_code == 0, result.output
        payload = json.loads(out.read_text())
        got = Rotation(*payload["rotation_wxyz"])
        assert got.angle_to(true.rotation) < 1e-3
        assert np.abs(np.array(payload["translation_m"]) - true.translation).max() < 1e-4

    def test_missing_input_is_fatal(self, tmp_path):
        result = CliRunner().invoke(main, ["icp", str(tmp_path / "a.xyz"),
                                           str(tmp_path / "b.xyz")])
        assert result.exit_code == 1
