"""Kinematic closed-loop simulator and straight-line deviation metrics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cdpr import RobotDescription, acrobot, cable_state, jacobian, pseudo_inverse
from .control import (
    EstimatedModel,
    GainSchedule,
    adaptive_gain,
    classic_command,
    desired_feature_at,
    plan_trajectory,
    tracking_command,
    velocity_for_horizon,
)
from .geometry import Pose, log_so3, rxyz, se3_exp
from .stability import PerturbationDraw, estimated_model, stability_matrix, tracking_diagnostic
from .vision import (
    CameraModel,
    NoiseSpec,
    compute_features,
    desired_features,
    observe,
)


class DegenerateLine(ValueError):
    pass


class UnknownSet(KeyError):
    pass


def _deg(*values) -> list[float]:
    return [math.radians(v) for v in values]


# Nominal initial and goal poses of the servoing experiment.
NOMINAL_INITIAL_OBJECT = Pose(rxyz(*_deg(-157.0, -18.0, -176.0)), [-0.022, 0.136, 0.449])
NOMINAL_DESIRED_OBJECT = Pose(rxyz(*_deg(-180.0, 0.0, -180.0)), [0.0, 0.0, 0.09])
NOMINAL_GOAL_PLATFORM = Pose(np.eye(3), [0.30, 0.25, 0.12])


@dataclass(frozen=True)
class ExperimentConfig:
    robot: RobotDescription = field(default_factory=acrobot)
    goal_platform_pose: Pose = NOMINAL_GOAL_PLATFORM
    initial_object_pose: Pose = NOMINAL_INITIAL_OBJECT
    desired_object_pose: Pose = NOMINAL_DESIRED_OBJECT
    controller: str = "classic"  # or "tracking"
    gains: GainSchedule = field(default_factory=GainSchedule)
    constant_gain: float | None = None  # overrides the adaptive gain when set
    tracking_gain: float = 2.0
    velocity: tuple | None = None  # desired average feature velocity for the planner
    t_full: float | None = None  # plan horizon; overrides ``velocity``
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    perturbation: PerturbationDraw = field(default_factory=PerturbationDraw)
    perturbation_name: str = "none"
    camera: CameraModel = field(default_factory=CameraModel)
    dt: float = 0.05
    max_duration: float = 60.0
    threshold: float = 1e-3
    actuator_lag: float = 0.0  # first-order time constant on cable velocities, s; 0 = off
    seed: int = 0
    name: str = "experiment"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.max_duration <= 0:
            raise ValueError("max_duration must be positive")
        if self.controller not in ("classic", "tracking"):
            raise ValueError(f"controller must be 'classic' or 'tracking', got {self.controller!r}")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        if self.actuator_lag < 0:
            raise ValueError("actuator_lag must be non-negative")

    def object_in_base(self) -> Pose:
        """World placement of the object: the goal pose sees it at the desired pose."""
        return self.goal_platform_pose @ self.robot.camera_mount @ self.desired_object_pose

    def initial_platform_pose(self) -> Pose:
        return (
            self.object_in_base()
            @ self.initial_object_pose.inverse()
            @ self.robot.camera_mount.inverse()
        )


@dataclass(frozen=True)
class SimState:
    true_pose: Pose
    est_pose: Pose
    t: float
    cable_lengths: np.ndarray
    applied: np.ndarray = field(default_factory=lambda: np.zeros(8))  # lagged cable velocities


def step(
    state: SimState,
    ldot,
    dt: float,
    robot: RobotDescription,
    est_robot: RobotDescription | None = None,
    actuator_lag: float = 0.0,
) -> SimState:
    """Advance the plant one control period under constant cable velocities.

    The true platform moves with the least-squares twist ``pinv(A) ldot``; the
    estimate is integrated with the twist the controller believes it sent,
    ``pinv(A_hat) ldot``.
    """
    ldot = np.asarray(ldot, dtype=float)
    est_robot = robot if est_robot is None else est_robot
    if actuator_lag > 0.0:
        alpha = 1.0 - math.exp(-dt / actuator_lag)
        applied = state.applied + alpha * (ldot - state.applied)
    else:
        applied = ldot
    A = jacobian(cable_state(robot, state.true_pose))
    true_pose = state.true_pose @ se3_exp(pseudo_inverse(A) @ applied, dt)
    A_hat = jacobian(cable_state(est_robot, state.est_pose))
    est_pose = state.est_pose @ se3_exp(pseudo_inverse(A_hat) @ ldot, dt)
    lengths = cable_state(robot, true_pose).lengths
    return SimState(true_pose, est_pose, state.t + dt, lengths, applied)


LOG_COLUMNS = (
    ["iter", "t"]
    + [f"true_{k}" for k in ("x", "y", "z", "rx", "ry", "rz")]
    + [f"est_{k}" for k in ("x", "y", "z", "rx", "ry", "rz")]
    + [f"s{i}" for i in range(6)]
    + [f"sstar{i}" for i in range(6)]
    + [f"e{i}" for i in range(6)]
    + [f"ldot{i}" for i in range(8)]
    + ["cam_x", "cam_y", "cam_z", "u_px", "v_px", "lambda", "track_diag"]
)


@dataclass
class SimLog:
    rows: list = field(default_factory=list)
    converged: bool = False
    config_name: str = ""
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        k = LOG_COLUMNS.index(name)
        return np.array([r[k] for r in self.rows])

    def columns(self, names) -> np.ndarray:
        idx = [LOG_COLUMNS.index(n) for n in names]
        return np.array([[r[k] for k in idx] for r in self.rows])

    @property
    def t(self) -> np.ndarray:
        return self.column("t")

    @property
    def camera_positions(self) -> np.ndarray:
        return self.columns(["cam_x", "cam_y", "cam_z"])

    @property
    def centers_px(self) -> np.ndarray:
        return self.columns(["u_px", "v_px"])

    @property
    def features(self) -> np.ndarray:
        return self.columns([f"s{i}" for i in range(6)])

    @property
    def errors(self) -> np.ndarray:
        return self.columns([f"e{i}" for i in range(6)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in self.rows:
            w.writerow([r[0]] + [repr(float(x)) for x in r[1:]])
        meta = " ".join(f"{k}={v}" for k, v in {"converged": self.converged, **self.meta}.items())
        buf.write(f"# {meta}\n")
        return buf.getvalue()


def run(config: ExperimentConfig) -> SimLog:
    """Closed-loop servoing from the initial to the desired object pose."""
    robot = config.robot
    mount = robot.camera_mount
    bTo = config.object_in_base()
    true0 = config.initial_platform_pose()
    est0 = estimated_model(robot, true0, config.perturbation)
    est_robot = est0.robot_est
    est_mount = est0.camera_mount_est
    rng = np.random.default_rng(config.seed)

    s_fin = desired_features(config.desired_object_pose).vector
    state = SimState(true0, est0.pose_est, 0.0, cable_state(robot, true0).lengths)
    log = SimLog(config_name=config.name)
    plan = None
    tracking = config.controller == "tracking"
    max_iter = int(math.ceil(config.max_duration / config.dt))

    for k in range(max_iter + 1):
        t = k * config.dt
        bTc = state.true_pose @ mount
        cTo = bTc.inverse() @ bTo
        obs = observe(cTo, config.noise, rng)
        feats = compute_features(obs, config.desired_object_pose)
        s = feats.vector
        if tracking and plan is None:
            if config.t_full is not None:
                v = velocity_for_horizon(s, s_fin, config.t_full)
            elif config.velocity is not None:
                v = np.asarray(config.velocity, dtype=float)
            else:
                raise ValueError("tracking needs either t_full or velocity")
            plan = plan_trajectory(s, s_fin, v, config.dt)
            log.meta["t_full"] = repr(plan.t_full)

        done = np.linalg.norm(s - s_fin) <= config.threshold
        if tracking:
            s_star, sdot_star = desired_feature_at(plan, t)
        else:
            s_star, sdot_star = s_fin, np.zeros(6)
        e = s - s_star
        model = EstimatedModel(est_robot, state.est_pose, est_mount)

        if done or k == max_iter:
            lam = 0.0
            ldot = np.zeros(8)
        else:
            if tracking:
                lam = config.tracking_gain
                ldot = tracking_command(e, sdot_star, model, feats, obs.depth, lam)
            else:
                lam = (config.constant_gain if config.constant_gain is not None
                       else adaptive_gain(config.gains, float(np.linalg.norm(e))))
                ldot = classic_command(e, model, feats, obs.depth, lam)

        true_feats = feats if config.noise.is_zero else compute_features(
            observe(cTo), config.desired_object_pose)
        Pi = stability_matrix(robot, model, state.true_pose, true_feats,
                              float(cTo.translation[2]), feats, obs.depth)
        diag = tracking_diagnostic(Pi, sdot_star)

        px = config.camera.to_pixels(obs.center)
        row = (
            [k, t]
            + list(state.true_pose.translation) + list(log_so3(state.true_pose.rotation))
            + list(state.est_pose.translation) + list(log_so3(state.est_pose.rotation))
            + list(s) + list(s_star) + list(e) + list(ldot)
            + list(bTc.translation) + list(px) + [lam, diag]
        )
        log.rows.append(row)
        if done:
            log.converged = True
            break
        if k == max_iter:
            break
        state = step(state, ldot, config.dt, robot, est_robot, config.actuator_lag)

    log.meta.update(
        controller=config.controller,
        perturbation=config.perturbation_name,
        seed=config.seed,
        iterations=len(log.rows),
        duration=repr(log.rows[-1][1]),
    )
    return log


# --- deviation metrics -----------------------------------------------------


def distances_to_segment(points, start, end) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    start = np.asarray(start, dtype=float)
    d = np.asarray(end, dtype=float) - start
    dd = float(d @ d)
    if dd == 0.0:
        raise DegenerateLine("start and end points coincide")
    s = np.clip((points - start) @ d / dd, 0.0, 1.0)
    return np.linalg.norm(points - (start + s[:, None] * d), axis=1)


@dataclass(frozen=True)
class DeviationMetrics:
    image_max: float  # pixels
    image_mean: float
    space_max: float  # meters
    space_mean: float


def path_deviation(points) -> tuple[float, float]:
    points = np.asarray(points, dtype=float)
    d = distances_to_segment(points, points[0], points[-1])
    return float(d.max()), float(d.mean())


def deviation_metrics(log: SimLog) -> DeviationMetrics:
    """Max / mean distance of the image and camera paths from their end-to-end chords."""
    if len(log.rows) < 2:
        raise ValueError("deviation metrics need at least two iterations")
    im = path_deviation(log.centers_px)
    sp = path_deviation(log.camera_positions)
    return DeviationMetrics(im[0], im[1], sp[0], sp[1])


# --- perturbation sets -----------------------------------------------------


def _along(u, magnitude) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return magnitude * u / np.linalg.norm(u)


def _random_point_offsets(rng, magnitude: float) -> np.ndarray:
    v = rng.normal(size=(8, 3))
    return magnitude * v / np.linalg.norm(v, axis=1, keepdims=True)


def load_perturbation_set(name: str, seed: int = 0, custom: dict | None = None) -> PerturbationDraw:
    """Named estimate-error sets V1 and V2, or a custom one.

    ``V2``'s per-point offsets have random directions drawn from ``seed``.
    """
    key = name.lower()
    if key == "none":
        return PerturbationDraw()
    if key == "v1":
        return PerturbationDraw(
            pose_trans=_along([0.56, 0.64, 0.52], 0.19),
            pose_rot=_along([0.73, 0.67, -0.14], math.radians(8.4)),
            hand_eye_rot=_along([0.61, -0.51, -0.61], math.radians(18.0)),
        )
    if key == "v2":
        rng = np.random.default_rng([seed, 2])
        return PerturbationDraw(
            pose_trans=_along([-0.57, -0.52, 0.63], 0.13),
            pose_rot=_along([-0.52, 0.85, -0.04], math.radians(9.5)),
            hand_eye_trans=[0.0, 0.05, 0.0],
            hand_eye_rot=_along([0.78, -0.51, -0.35], math.radians(12.5)),
            exit_offsets=_random_point_offsets(rng, 0.005),
            anchor_offsets=_random_point_offsets(rng, 0.005),
        )
    if key == "custom":
        return PerturbationDraw(**(custom or {}))
    raise UnknownSet(name)


def with_perturbation(config: ExperimentConfig, name: str, seed: int | None = None,
                      custom: dict | None = None) -> ExperimentConfig:
    seed = config.seed if seed is None else seed
    return replace(config, perturbation=load_perturbation_set(name, seed, custom),
                   perturbation_name=name, seed=seed)


__all__ = [
    "DegenerateLine",
    "DeviationMetrics",
    "ExperimentConfig",
    "LOG_COLUMNS",
    "SimLog",
    "SimState",
    "UnknownSet",
    "deviation_metrics",
    "distances_to_segment",
    "load_perturbation_set",
    "run",
    "step",
    "with_perturbation",
]
