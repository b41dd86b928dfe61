"""Velocity controller that follows the aligned mean trajectory.

Each control step folds the observed position into one alignment per
cluster, picks the cluster with the highest accumulated log marginal,
predicts where along that cluster the motion goes next, and moves along
the normalized gradient of the goal field

    g(x) = sum_i q_i(x) * P(next state = i | history)

where q_i is the Gaussian emission of mean state i. The speed blends the
posterior-weighted demonstrated speed with a recovery speed, weighted by
how close the agent is to the nearest mean state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .alignment import (
    AlignmentState,
    TransitionKernel,
    forward_update,
    init_alignment,
    log_emissions,
    predict_next,
    rbf,
)
from .errors import DegeneratePointError, InvalidArgumentError
from .trajectory import MeanTrajectory

__all__ = [
    "ControllerConfig",
    "ControllerState",
    "g_value",
    "g_gradient",
    "velocity_gain",
    "select_cluster",
    "step",
    "attractor",
]


@dataclass(frozen=True)
class ControllerConfig:
    """Controller gains and integration settings.

    Attributes:
        kv_perturbed: recovery speed used far from the mean trajectory.
        blend_sigma: RBF width (squared-distance units) for blending the
            aligned speed with the recovery speed; small values trust the
            demonstrated speed only very close to the mean states.
        control_dt: integration interval per control step.
        grad_floor: threshold on the rescaled gradient norm below which
            the commanded velocity is zero. The raw gradient norm is not
            used because it underflows far from the model, where motion
            must continue; see ``step``.
        switch_margin: log-marginal advantage a challenger cluster needs
            before the controller abandons the incumbent. Zero keeps the
            plain argmax.
    """

    kv_perturbed: float
    blend_sigma: float
    control_dt: float
    grad_floor: float = 1e-10
    switch_margin: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.kv_perturbed) and self.kv_perturbed >= 0):
            raise InvalidArgumentError(f"kv_perturbed must be >= 0, got {self.kv_perturbed}")
        if not (np.isfinite(self.blend_sigma) and self.blend_sigma > 0):
            raise InvalidArgumentError(f"blend_sigma must be > 0, got {self.blend_sigma}")
        if not (np.isfinite(self.control_dt) and self.control_dt > 0):
            raise InvalidArgumentError(f"control_dt must be > 0, got {self.control_dt}")
        if not (np.isfinite(self.grad_floor) and self.grad_floor >= 0):
            raise InvalidArgumentError(f"grad_floor must be >= 0, got {self.grad_floor}")
        if not (np.isfinite(self.switch_margin) and self.switch_margin >= 0):
            raise InvalidArgumentError(f"switch_margin must be >= 0, got {self.switch_margin}")

    @staticmethod
    def from_means(
        means: Sequence[MeanTrajectory],
        *,
        kv_perturbed: float | None = None,
        blend_sigma: float | None = None,
        control_dt: float | None = None,
        grad_floor: float = 1e-10,
        switch_margin: float = 0.0,
    ) -> "ControllerConfig":
        """Derive defaults from the learned means.

        Recovery speed defaults to the mean demonstrated speed,
        blend_sigma to the squared mean state spacing, control_dt to the
        means' sampling interval. Recovery faster than the demonstrated
        pace inflates the per-tick step near the endpoint, which can park
        the discrete integrator in a standoff cycle just outside the
        convergence tolerance; matching the demo pace keeps the terminal
        step small enough to settle.
        """
        if not means:
            raise InvalidArgumentError("need at least one mean trajectory")
        spacing = float(np.mean([m.spacing for m in means]))
        speed = float(np.mean([m.speeds.mean() for m in means]))
        if spacing <= 0:
            spacing = 1.0
        return ControllerConfig(
            kv_perturbed=speed if kv_perturbed is None else kv_perturbed,
            blend_sigma=spacing**2 if blend_sigma is None else blend_sigma,
            control_dt=means[0].dt if control_dt is None else control_dt,
            grad_floor=grad_floor,
            switch_margin=switch_margin,
        )


@dataclass(frozen=True)
class ControllerState:
    """Position, observation history, and per-cluster alignment states.

    ``per_cluster`` is empty until the first ``step`` folds in the first
    observation.
    """

    position: np.ndarray
    history: tuple[np.ndarray, ...] = ()
    per_cluster: tuple[AlignmentState, ...] = ()
    active_cluster: int = 0

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        if pos.ndim != 1 or pos.shape[0] < 1:
            raise InvalidArgumentError(f"position must be (d,), got shape {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise InvalidArgumentError("position contains non-finite values")
        pos = pos.copy()
        pos.setflags(write=False)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "history", tuple(self.history))
        object.__setattr__(self, "per_cluster", tuple(self.per_cluster))
        if self.active_cluster < 0:
            raise InvalidArgumentError("active_cluster must be non-negative")

    @staticmethod
    def initial(position) -> "ControllerState":
        return ControllerState(position=np.asarray(position, dtype=float))


def g_value(x, pred: np.ndarray, mean: MeanTrajectory) -> float:
    """Goal field sum_i q_i(x) * pred_i, in plain (unscaled) units.

    Underflows to zero far from the mean; use only where the emission
    densities are representable.
    """
    q = np.exp(log_emissions(x, mean))
    return float(q @ np.asarray(pred, dtype=float))


def g_gradient(x, pred: np.ndarray, mean: MeanTrajectory) -> np.ndarray:
    """Exact gradient of the goal field with respect to x.

    d g / d x = sum_i cov_inv (x_i - x) q_i(x) pred_i.
    """
    x = np.asarray(x, dtype=float)
    q = np.exp(log_emissions(x, mean))
    w = q * np.asarray(pred, dtype=float)
    return mean.cov_inv @ ((mean.states - x).T @ w)


def _gradient_direction(
    x: np.ndarray, pred: np.ndarray, mean: MeanTrajectory
) -> tuple[np.ndarray, float]:
    """Unit gradient direction plus a rescaled norm that never underflows.

    Weights are exponentiated relative to their own maximum, so the
    returned norm equals ||grad g|| * exp(-max_i log(q_i * pred_i)). It
    vanishes only where the weighted pulls genuinely balance, not merely
    where the densities are small.
    """
    with np.errstate(divide="ignore"):
        lw = log_emissions(x, mean) + np.log(pred)
    shift = float(lw.max())
    if not np.isfinite(shift):
        return np.zeros(mean.dim), 0.0
    w = np.exp(lw - shift)
    grad = mean.cov_inv @ ((mean.states - x).T @ w)
    norm = float(np.linalg.norm(grad))
    if norm <= 0.0:
        return np.zeros(mean.dim), 0.0
    return grad / norm, norm


def velocity_gain(x, mean: MeanTrajectory, post: np.ndarray, cfg: ControllerConfig) -> float:
    """Speed command blending aligned and recovery speeds.

    The aligned speed is the posterior-weighted mean of the model's
    per-state speeds; the blend weight is the RBF between x and the
    nearest mean state, so the demonstrated speed wins only near the
    trajectory.
    """
    x = np.asarray(x, dtype=float)
    post = np.asarray(post, dtype=float)
    if post.shape != (mean.n_states,):
        raise InvalidArgumentError(
            f"posterior shape {post.shape} != ({mean.n_states},)"
        )
    d2 = ((mean.states - x) ** 2).sum(axis=1)
    nearest = int(np.argmin(d2))
    w = float(rbf(x, mean.states[nearest], cfg.blend_sigma))
    total = float(post.sum())
    kv_aligned = float(post @ mean.speeds) / total if total > 0 else 0.0
    return w * kv_aligned + (1.0 - w) * cfg.kv_perturbed


def select_cluster(per_cluster: Sequence[AlignmentState]) -> int:
    """Index of the cluster with the highest log marginal.

    Ties resolve to the lowest index.
    """
    if not per_cluster:
        raise InvalidArgumentError("need at least one alignment state")
    return int(np.argmax([s.log_marginal for s in per_cluster]))


def step(
    state: ControllerState,
    means: Sequence[MeanTrajectory],
    kernels: TransitionKernel | Sequence[TransitionKernel],
    cfg: ControllerConfig,
) -> tuple[ControllerState, np.ndarray]:
    """One control step; returns the successor state and the velocity used.

    Stage order: observe the current position, update (or initialize)
    every cluster's alignment with it, select the active cluster, predict
    the next hidden state, take the goal-field gradient under the active
    mean, command speed * unit gradient (zero when the rescaled gradient
    norm sits below ``grad_floor``), then integrate one control_dt.

    The commanded speed is therefore either exactly zero or exactly the
    blended gain.

    Args:
        kernels: one kernel shared by all clusters, or one per cluster.
    """
    means = tuple(means)
    if not means:
        raise InvalidArgumentError("need at least one mean trajectory")
    if isinstance(kernels, TransitionKernel):
        kernels = (kernels,) * len(means)
    else:
        kernels = tuple(kernels)
        if len(kernels) != len(means):
            raise InvalidArgumentError(
                f"got {len(kernels)} kernels for {len(means)} clusters"
            )
    x = state.position
    if any(m.dim != x.shape[0] for m in means):
        raise InvalidArgumentError("mean dimension does not match position")

    if state.per_cluster:
        if len(state.per_cluster) != len(means):
            raise InvalidArgumentError(
                f"state tracks {len(state.per_cluster)} clusters, got {len(means)} means"
            )
        per = tuple(
            forward_update(s, x, m, k)
            for s, m, k in zip(state.per_cluster, means, kernels)
        )
        best = select_cluster(per)
        active = state.active_cluster
        if best != active:
            if cfg.switch_margin <= 0.0 or (
                per[best].log_marginal
                > per[active].log_marginal + cfg.switch_margin
            ):
                active = best
    else:
        per = tuple(init_alignment(m, k, x) for m, k in zip(means, kernels))
        active = select_cluster(per)

    mean = means[active]
    pred = predict_next(per[active].scaled_joint, kernels[active])
    direction, scaled_norm = _gradient_direction(x, pred, mean)
    if scaled_norm < cfg.grad_floor:
        velocity = np.zeros(x.shape[0])
    else:
        kv = velocity_gain(x, mean, per[active].scaled_joint, cfg)
        velocity = kv * direction
    new_position = x + velocity * cfg.control_dt
    if not np.all(np.isfinite(new_position)):
        raise DegeneratePointError("controller produced a non-finite position")
    next_state = ControllerState(
        position=new_position,
        history=state.history + (x,),
        per_cluster=per,
        active_cluster=active,
    )
    return next_state, velocity


def attractor(pred: np.ndarray, mean: MeanTrajectory, x) -> np.ndarray:
    """Instantaneous equilibrium point of the goal field at x.

    The gradient vanishes exactly at the emission-and-prediction weighted
    mean of the states, x* = sum_i c_i x_i / sum_i c_i with
    c_i = q_i(x) * pred_i. Computed in plain units as a diagnostic; the
    control loop itself never needs it.

    Raises:
        DegeneratePointError: when every weight underflows to zero.
    """
    x = np.asarray(x, dtype=float)
    q = np.exp(log_emissions(x, mean))
    c = q * np.asarray(pred, dtype=float)
    total = float(c.sum())
    if total <= 0.0 or not math.isfinite(total):
        raise DegeneratePointError(
            "attractor weights underflowed; x is too far from the mean trajectory"
        )
    return (mean.states.T @ c) / total
