import numpy as np
import pytest

from conftest import random_pose
from shapepose.errors import NonFiniteState, ShapeMismatch
from shapepose.flow import (
    LATENT_SHAPE,
    FlowState,
    SamplerConfig,
    cfg_combine,
    cfm_interpolate,
    cfm_velocity_target,
    constant_field,
    denoise_joint,
    euler_sample,
    goal_seeking_field,
    joint_cfm_loss,
    linear_decay_field,
)
from shapepose.pose import PoseStats, pose_normalize, pose_to_vector

SMALL = (3, 3, 3, 2)


def state(latent_fill: float, token_fill: float, tokens: int = 1,
          shape=SMALL) -> FlowState:
    return FlowState(np.full(shape, latent_fill), np.full((tokens, 10), token_fill))


def random_state(rng, tokens: int = 1, shape=SMALL) -> FlowState:
    return FlowState(rng.standard_normal(shape), rng.standard_normal((tokens, 10)))


def max_diff(a: FlowState, b: FlowState) -> float:
    return max(np.abs(a.latent - b.latent).max(),
               np.abs(a.pose_tokens - b.pose_tokens).max())


class TestInterpolate:
    def test_endpoints(self):
        rng = np.random.default_rng(0)
        x0, x1 = random_state(rng), random_state(rng)
        assert max_diff(cfm_interpolate(x0, x1, 0.0), x0) == 0.0
        assert max_diff(cfm_interpolate(x0, x1, 1.0), x1) == 0.0

    def test_midpoint(self):
        mid = cfm_interpolate(state(0.0, 0.0), state(2.0, 2.0), 0.5)
        assert np.all(mid.latent == 1.0) and np.all(mid.pose_tokens == 1.0)

    def test_time_out_of_range(self):
        with pytest.raises(ValueError):
            cfm_interpolate(state(0, 0), state(1, 1), 1.5)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            cfm_interpolate(state(0, 0), state(1, 1, tokens=2), 0.5)


class TestVelocityTarget:
    def test_equal_states_give_zero(self):
        x = random_state(np.random.default_rng(1))
        v = cfm_velocity_target(x, x)
        assert np.all(v.latent == 0.0) and np.all(v.pose_tokens == 0.0)

    def test_constant_offset(self):
        v = cfm_velocity_target(state(0.0, 0.0), state(3.0, 3.0))
        assert np.all(v.latent == 3.0) and np.all(v.pose_tokens == 3.0)

    @pytest.mark.parametrize("steps", [1, 7, 50])
    def test_integrating_target_lands_on_endpoint(self, steps):
        rng = np.random.default_rng(2)
        x0, x1 = random_state(rng), random_state(rng)
        field = constant_field(cfm_velocity_target(x0, x1))
        out = euler_sample(field, x0, SamplerConfig(steps=steps))
        assert max_diff(out, x1) < 1e-12


class TestJointLoss:
    def test_zero_when_equal(self):
        x = random_state(np.random.default_rng(3))
        assert joint_cfm_loss(x, x) == 0.0

    def test_unit_latent_error(self):
        assert joint_cfm_loss(state(1.0, 0.0), state(0.0, 0.0)) == pytest.approx(1.0)

    def test_pose_weighting(self):
        # pose entries differ by 2 -> pose MSE 4; alpha 0.01 -> 0.04
        loss = joint_cfm_loss(state(0.0, 2.0), state(0.0, 0.0), alpha=0.01)
        assert loss == pytest.approx(0.04)

    def test_nonnegative(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            assert joint_cfm_loss(random_state(rng), random_state(rng)) >= 0.0


class TestEulerSample:
    def test_single_step_constant(self):
        x0 = state(1.0, -1.0)
        c = state(0.5, 2.0)
        out = euler_sample(constant_field(c), x0, SamplerConfig(steps=1))
        assert np.all(out.latent == 1.5) and np.all(out.pose_tokens == 1.0)

    def test_constant_field_step_count_invariant(self):
        x0 = state(1.0, -1.0)
        c = state(0.5, 2.0)
        results = [euler_sample(constant_field(c), x0, SamplerConfig(steps=s))
                   for s in (1, 3, 10, 50)]
        for r in results[1:]:
            assert max_diff(r, results[0]) < 1e-12

    def test_linear_decay_matches_closed_form(self):
        out = euler_sample(linear_decay_field(), state(1.0, 1.0),
                           SamplerConfig(steps=1000))
        assert np.abs(out.latent - np.exp(-1.0)).max() < 1e-3

    def test_global_error_halves_with_step_doubling(self):
        exact = np.exp(-1.0)

        def error(steps: int) -> float:
            out = euler_sample(linear_decay_field(), state(1.0, 1.0),
                               SamplerConfig(steps=steps))
            return abs(float(out.latent.flat[0]) - exact)

        for steps in (50, 100, 200, 400):
            ratio = error(2 * steps) / error(steps)
            assert 0.45 < ratio < 0.55

    def test_non_finite_detected(self):
        # velocity itself stays finite; the update overflows to inf
        huge = state(1e308, 1e308)
        with pytest.raises(NonFiniteState):
            euler_sample(constant_field(huge), huge, SamplerConfig(steps=1))

    def test_on_step_sees_every_update(self):
        seen = []
        euler_sample(constant_field(state(1.0, 1.0)), state(0.0, 0.0),
                     SamplerConfig(steps=5), on_step=lambda k, t, s: seen.append((k, t)))
        assert [k for k, _ in seen] == [0, 1, 2, 3, 4]
        assert seen[-1][1] == pytest.approx(1.0)


class TestCfgCombine:
    def test_scale_one_returns_conditional(self):
        rng = np.random.default_rng(5)
        vc, vu = random_state(rng), random_state(rng)
        assert max_diff(cfg_combine(vc, vu, 1.0), vc) < 1e-15

    def test_scale_zero_returns_unconditional(self):
        rng = np.random.default_rng(6)
        vc, vu = random_state(rng), random_state(rng)
        assert max_diff(cfg_combine(vc, vu, 0.0), vu) == 0.0

    def test_extrapolation_arithmetic(self):
        out = cfg_combine(state(2.0, 2.0), state(1.0, 1.0), 3.0)
        assert np.all(out.latent == 4.0) and np.all(out.pose_tokens == 4.0)

    def test_identical_fields_unchanged_for_any_scale(self):
        v = random_state(np.random.default_rng(7))
        for scale in (0.0, 0.7, 1.0, 3.0, 10.0):
            assert max_diff(cfg_combine(v, v, scale), v) == 0.0


class TestDenoiseJoint:
    def _goal(self, rng, stats, views):
        poses = [random_pose(rng) for _ in range(views)]
        tokens = np.stack([pose_normalize(pose_to_vector(p, stats.rho_width), stats)
                           for p in poses])
        return poses, FlowState(rng.standard_normal(LATENT_SHAPE), tokens)

    def test_goal_seeking_recovery(self):
        stats = PoseStats.unit(6)
        rng = np.random.default_rng(8)
        goal_poses, goal = self._goal(rng, stats, views=1)
        latent, poses = denoise_joint(goal_seeking_field(goal), stats,
                                      SamplerConfig(steps=50, cfg_scale=3.0, seed=9))
        assert np.abs(latent - goal.latent).max() < 1e-6
        assert poses[0].rotation.angle_to(goal_poses[0].rotation) < 1e-6
        assert np.abs(poses[0].translation - goal_poses[0].translation).max() < 1e-6
        assert abs(poses[0].scale - goal_poses[0].scale) < 1e-6

    def test_two_tokens_denormalize_independently(self):
        stats = PoseStats.unit(9)
        rng = np.random.default_rng(10)
        goal_poses, goal = self._goal(rng, stats, views=2)
        _, poses = denoise_joint(goal_seeking_field(goal), stats,
                                 SamplerConfig(steps=25, seed=11), num_views=2)
        assert len(poses) == 2
        for got, want in zip(poses, goal_poses):
            assert got.rotation.angle_to(want.rotation) < 1e-6
            assert np.abs(got.translation - want.translation).max() < 1e-6

    def test_bit_deterministic(self):
        stats = PoseStats.unit(6)
        rng = np.random.default_rng(12)
        _, goal = self._goal(rng, stats, views=1)
        field = goal_seeking_field(goal)
        cfg = SamplerConfig(steps=20, cfg_scale=3.0, seed=13)
        lat1, poses1 = denoise_joint(field, stats, cfg)
        lat2, poses2 = denoise_joint(field, stats, cfg)
        assert np.array_equal(lat1, lat2)
        assert np.array_equal(poses1[0].rotation.quat, poses2[0].rotation.quat)
        assert np.array_equal(poses1[0].translation, poses2[0].translation)
        assert poses1[0].scale == poses2[0].scale

    def test_single_step_equals_one_euler_update(self):
        stats = PoseStats.unit(6)
        drift = FlowState(np.full(LATENT_SHAPE, 0.25), np.full((1, 10), 0.25))
        cfg = SamplerConfig(steps=1, cfg_scale=1.0, seed=16)
        latent, _ = denoise_joint(constant_field(drift), stats, cfg)
        rng = np.random.default_rng(16)  # same draw order as denoise_joint
        init_latent = rng.standard_normal(LATENT_SHAPE)
        assert np.array_equal(latent, init_latent + 0.25)

    def test_token_width_follows_stats_layout(self):
        stats = PoseStats.unit(9)
        _, goal = self._goal(np.random.default_rng(14), stats, views=1)
        assert goal.pose_tokens.shape[1] == 13
        _, poses = denoise_joint(goal_seeking_field(goal), stats,
                                 SamplerConfig(steps=10, seed=15))
        assert len(poses) == 1
