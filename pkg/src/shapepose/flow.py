"""Conditional flow-matching engine over a joint (latent grid, pose) state.

Velocity fields are plain callables, so the engine runs with analytic test
fields; learned fields are out of scope. Time runs from t=0 (pure noise) to
t=1 (data), matching the rectified-flow convention, and sampling is plain
left-endpoint Euler integration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NonFiniteState, ShapeMismatch
from .pose import PoseStats, Sim3Pose, pose_denormalize, vector_to_pose

LATENT_SHAPE = (16, 16, 16, 8)


@dataclass(frozen=True)
class FlowState:
    """Joint state: a latent feature grid plus one pose token per view.

    ``pose_tokens`` is a (views, width) array of z-score-normalized pose
    parameter vectors. The same container also represents velocities.
    """

    latent: np.ndarray
    pose_tokens: np.ndarray

    def __post_init__(self):
        latent = np.asarray(self.latent, dtype=float)
        tokens = np.asarray(self.pose_tokens, dtype=float)
        if tokens.ndim != 2 or tokens.shape[0] < 1:
            raise ShapeMismatch("pose_tokens must be a (views, width) array with views >= 1")
        if not (np.isfinite(latent).all() and np.isfinite(tokens).all()):
            raise NonFiniteState("flow state contains NaN or infinity")
        latent.flags.writeable = False
        tokens.flags.writeable = False
        object.__setattr__(self, "latent", latent)
        object.__setattr__(self, "pose_tokens", tokens)

    def _check_shapes(self, other: "FlowState") -> None:
        if self.latent.shape != other.latent.shape \
                or self.pose_tokens.shape != other.pose_tokens.shape:
            raise ShapeMismatch(
                f"state shapes differ: latent {self.latent.shape} vs {other.latent.shape}, "
                f"tokens {self.pose_tokens.shape} vs {other.pose_tokens.shape}")

    # Elementwise arithmetic; both parts move together.
    def __add__(self, other: "FlowState") -> "FlowState":
        self._check_shapes(other)
        return FlowState(self.latent + other.latent,
                         self.pose_tokens + other.pose_tokens)

    def __sub__(self, other: "FlowState") -> "FlowState":
        self._check_shapes(other)
        return FlowState(self.latent - other.latent,
                         self.pose_tokens - other.pose_tokens)

    def __mul__(self, s: float) -> "FlowState":
        return FlowState(self.latent * s, self.pose_tokens * s)

    __rmul__ = __mul__

    @classmethod
    def zeros_like(cls, other: "FlowState") -> "FlowState":
        return cls(np.zeros_like(other.latent), np.zeros_like(other.pose_tokens))


# (state, time in [0,1], condition tag or None) -> velocity with equal shapes.
# Implementations must tolerate concurrent calls: independent trajectories may
# be sampled in parallel, while a single trajectory is strictly sequential.
VelocityField = Callable[[FlowState, float, Optional[str]], FlowState]


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 50
    cfg_scale: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.cfg_scale < 0:
            raise ValueError("cfg_scale must be >= 0")


def cfm_interpolate(x0: FlowState, x1: FlowState, t: float) -> FlowState:
    """Straight-line path point ``(1-t) x0 + t x1``."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must be in [0, 1], got {t}")
    x0._check_shapes(x1)
    return (1.0 - t) * x0 + t * x1


def cfm_velocity_target(x0: FlowState, x1: FlowState) -> FlowState:
    """Constant velocity ``x1 - x0`` of the straight-line path."""
    return x1 - x0


def joint_cfm_loss(pred: FlowState, target: FlowState, alpha: float = 0.01) -> float:
    """Latent MSE plus ``alpha`` times pose-token MSE.

    The small default weight keeps the (few) pose entries from being drowned
    out by — or dominating — the much larger latent grid.
    """
    pred._check_shapes(target)
    latent_mse = float(np.mean((pred.latent - target.latent) ** 2))
    pose_mse = float(np.mean((pred.pose_tokens - target.pose_tokens) ** 2))
    return latent_mse + alpha * pose_mse


def cfg_combine(v_cond: FlowState, v_uncond: FlowState, scale: float) -> FlowState:
    """Classifier-free guidance: ``v_uncond + scale * (v_cond - v_uncond)``."""
    v_cond._check_shapes(v_uncond)
    return v_uncond + scale * (v_cond - v_uncond)


def euler_sample(
    v: VelocityField,
    init: FlowState,
    cfg: SamplerConfig,
    condition: Optional[str] = None,
    on_step: Optional[Callable[[int, float, FlowState], None]] = None,
) -> FlowState:
    """Integrate ``x' = v(x, t)`` from t=0 to t=1 with uniform Euler steps.

    Left-endpoint rule: step k uses t = k/steps. ``on_step`` (if given) is
    called after every update with (step index, next t, state). Raises
    :class:`NonFiniteState` as soon as an update produces NaN/inf.
    """
    dt = 1.0 / cfg.steps
    x = init
    for k in range(cfg.steps):
        t = k * dt
        vel = v(x, t, condition)
        x._check_shapes(vel)
        with np.errstate(over="ignore", invalid="ignore"):
            latent = x.latent + dt * vel.latent
            tokens = x.pose_tokens + dt * vel.pose_tokens
        if not (np.isfinite(latent).all() and np.isfinite(tokens).all()):
            raise NonFiniteState(f"non-finite state after step {k} (t={t:.4f})")
        x = FlowState(latent, tokens)
        if on_step is not None:
            on_step(k, (k + 1) * dt, x)
    return x


def denoise_joint(
    v: VelocityField,
    stats: PoseStats,
    cfg: SamplerConfig,
    num_views: int = 1,
    latent_shape: tuple[int, ...] = LATENT_SHAPE,
    noise_seed: Optional[int] = None,
    on_step: Optional[Callable[[int, float, FlowState], None]] = None,
) -> tuple[np.ndarray, list[Sim3Pose]]:
    """Sample a (latent grid, poses) pair from noise with CFG-guided Euler.

    The initial state is standard normal (latent drawn first, then pose
    tokens) from ``noise_seed`` (default: ``cfg.seed``). Every step combines
    the field's conditional ("cond" tag) and unconditional (None tag)
    predictions with ``cfg.cfg_scale``. Final pose tokens are denormalized
    through ``stats`` and decoded per its rotation layout (6D or 9D).
    """
    width = stats.mean.size
    rng = np.random.default_rng(cfg.seed if noise_seed is None else noise_seed)
    init = FlowState(rng.standard_normal(latent_shape),
                     rng.standard_normal((num_views, width)))

    def guided(x: FlowState, t: float, _tag: Optional[str]) -> FlowState:
        return cfg_combine(v(x, t, "cond"), v(x, t, None), cfg.cfg_scale)

    final = euler_sample(guided, init, cfg, on_step=on_step)
    poses = [vector_to_pose(pose_denormalize(tok, stats))
             for tok in final.pose_tokens]
    return final.latent, poses


# ---------------------------------------------------------------------------
# Analytic fields (the engine ships no learned ones)
# ---------------------------------------------------------------------------

def constant_field(c: FlowState) -> VelocityField:
    """Velocity is ``c`` everywhere; Euler is exact for any step count."""
    def field(x: FlowState, t: float, tag: Optional[str]) -> FlowState:
        x._check_shapes(c)
        return c
    return field


def linear_decay_field() -> VelocityField:
    """``v(x) = -x``; exact solution ``x(t) = x0 * exp(-t)``."""
    def field(x: FlowState, t: float, tag: Optional[str]) -> FlowState:
        return -1.0 * x
    return field


def goal_seeking_field(goal: FlowState, t_clip: float = 1e-9) -> VelocityField:
    """Field that transports any state to ``goal`` by t=1.

    ``v(x, t) = (goal - x) / (1 - t)`` with the denominator clipped away
    from zero; under left-endpoint Euler the final step lands on the goal
    exactly.
    """
    def field(x: FlowState, t: float, tag: Optional[str]) -> FlowState:
        return (1.0 / max(1.0 - t, t_clip)) * (goal - x)
    return field
