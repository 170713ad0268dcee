"""2 1/2 D visual-servoing control laws and the feature-space trajectory planner."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cdpr import RobotDescription, cable_state, jacobian
from .geometry import Pose, adjoint
from .vision import FeatureVector, interaction_matrix


class SingularInteraction(ValueError):
    pass


class ZeroHorizon(ValueError):
    pass


@dataclass(frozen=True)
class GainSchedule:
    lambda0: float = 2.0
    lambda_inf: float = 0.4
    lambda_dot0: float = 30.0

    def __post_init__(self):
        if not self.lambda0 > self.lambda_inf > 0:
            raise ValueError("gains must satisfy lambda0 > lambda_inf > 0")
        if self.lambda_dot0 <= 0:
            raise ValueError("lambda_dot0 must be positive")


def adaptive_gain(g: GainSchedule, x: float) -> float:
    """Gain falling from ``lambda0`` at zero error to ``lambda_inf`` for large error."""
    if x < 0:
        raise ValueError("error norm must be non-negative")
    span = g.lambda0 - g.lambda_inf
    return span * math.exp(-(g.lambda_dot0 / span) * x) + g.lambda_inf


@dataclass(frozen=True)
class EstimatedModel:
    """What the controller believes: robot geometry, platform pose, hand-eye pose."""

    robot_est: RobotDescription
    pose_est: Pose
    camera_mount_est: Pose

    def jacobian(self) -> np.ndarray:
        return jacobian(cable_state(self.robot_est, self.pose_est))

    def adjoint(self) -> np.ndarray:
        return adjoint(self.camera_mount_est)


def _solve_interaction(features: FeatureVector, depth: float, rhs) -> np.ndarray:
    L = interaction_matrix(features, depth)
    try:
        cond = np.linalg.cond(L)
        if not np.isfinite(cond) or cond > 1e12:
            raise np.linalg.LinAlgError
        return np.linalg.solve(L, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularInteraction("estimated interaction matrix is not invertible") from exc


def camera_velocity(e, model: EstimatedModel, features, depth, lam, sdot_star=None):
    """Commanded camera body twist ``inv(L_s) (-lam e + sdot*)``."""
    rhs = -lam * np.asarray(e, dtype=float)
    if sdot_star is not None:
        rhs = rhs + np.asarray(sdot_star, dtype=float)
    return _solve_interaction(features, depth, rhs)


def classic_command(e, model: EstimatedModel, features: FeatureVector, depth: float, lam: float):
    """Cable velocities ``-lam A_hat Ad_hat inv(L_hat) e``."""
    v_c = camera_velocity(e, model, features, depth, lam)
    return model.jacobian() @ (model.adjoint() @ v_c)


def tracking_command(
    e, sdot_star, model: EstimatedModel, features: FeatureVector, depth: float, lam: float
):
    """Cable velocities ``A_hat Ad_hat inv(L_hat) (-lam e + sdot*)``."""
    sdot_star = np.asarray(sdot_star, dtype=float)
    if not np.any(sdot_star):
        return classic_command(e, model, features, depth, lam)
    v_c = camera_velocity(e, model, features, depth, lam, sdot_star)
    return model.jacobian() @ (model.adjoint() @ v_c)


@dataclass(frozen=True)
class Plan:
    s_init: np.ndarray
    s_fin: np.ndarray
    t_full: float
    c: np.ndarray
    dt: float
    samples: np.ndarray  # (k + 1, 6): s*(i dt), i = 0..k

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.samples))


def _vec(s) -> np.ndarray:
    return s.vector if isinstance(s, FeatureVector) else np.asarray(s, dtype=float)


def plan_trajectory(s_init, s_fin, v, dt: float) -> Plan:
    """Constant-velocity straight line in feature space from ``s_init`` to ``s_fin``.

    The horizon is the slowest component's ``|e_n| / v_n``.
    """
    s_init, s_fin = _vec(s_init), _vec(s_fin)
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0) or dt <= 0:
        raise ValueError("desired velocities and dt must be positive")
    e_full = s_init - s_fin
    t_full = float(np.max(np.abs(e_full) / v))
    if t_full == 0.0:
        raise ZeroHorizon("initial and final features coincide")
    c = (s_fin - s_init) / t_full
    k = int(math.floor(t_full / dt * (1.0 + 1e-12)))  # 0.6 / 0.1 / 0.05 must give 120
    samples = s_init + (dt * np.arange(k + 1))[:, None] * c
    return Plan(s_init, s_fin, t_full, c, dt, samples)


def velocity_for_horizon(s_init, s_fin, t_full: float, floor: float = 1e-12) -> np.ndarray:
    """Average velocity vector whose plan lasts exactly ``t_full``."""
    e_full = np.abs(_vec(s_init) - _vec(s_fin))
    return np.maximum(e_full / t_full, floor)


def desired_feature_at(plan: Plan, t: float):
    """``(s*(t), sdot*(t))``; linear between samples, goal and zero velocity after t_full."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if t >= plan.t_full:
        return plan.s_fin.copy(), np.zeros(6)
    times, pts = plan.times, plan.samples
    if times[-1] < plan.t_full:
        times = np.append(times, plan.t_full)
        pts = np.vstack([pts, plan.s_fin])
    i = min(int(np.searchsorted(times, t, side="right")) - 1, len(times) - 2)
    w = (t - times[i]) / (times[i + 1] - times[i])
    s = pts[i] + w * (pts[i + 1] - pts[i])
    return s, plan.c.copy()
