"""YAML loaders for robot descriptions and experiment configs.

Poses are written as ``{translation: [x, y, z], rotation_deg: [rx, ry, rz]}``
(angles composed as Rx @ Ry @ Rz) or with ``axis_angle: [ux, uy, uz, deg]``
in place of ``rotation_deg``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .cdpr import RobotDescription, acrobot
from .control import GainSchedule
from .geometry import Pose, rodrigues, rxyz
from .sim import ExperimentConfig, UnknownSet, load_perturbation_set
from .stability import GridSpec, PerturbationBounds, tilt_orientations
from .vision import CameraModel, NoiseSpec


class ConfigError(ValueError):
    """Invalid config; the message names the file, field and line when known."""


@dataclass(frozen=True)
class WorkspaceSettings:
    grid: GridSpec = field(default_factory=GridSpec)
    bounds: PerturbationBounds = field(default_factory=PerturbationBounds)
    n_samples: int = 64
    n_boundary: int = 16


@dataclass(frozen=True)
class LoadedConfig:
    experiment: ExperimentConfig
    workspace: WorkspaceSettings
    match_classic: bool  # tracking horizon taken from a paired classic run
    path: Path | None = None


EXPERIMENT_KEYS = {
    "name", "robot", "controller", "perturbation", "seed", "dt", "max_duration",
    "threshold", "gains", "constant_gain", "tracking_gain", "velocity", "t_full",
    "initial_object_pose", "desired_object_pose", "goal_platform_pose", "noise",
    "camera", "actuator_lag", "workspace",
}
ROBOT_KEYS = {
    "preset", "exit_points", "anchor_points", "tension_limits", "platform_mass",
    "gravity", "camera_mount", "frame_size", "corner_offset", "platform_size",
}


def _key_lines(text: str) -> dict:
    """Line number (1-based) of every mapping key, by dotted path."""
    lines = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}{k.value}"
                lines[path] = k.start_mark.line + 1
                walk(v, path + ".")

    try:
        walk(yaml.compose(text), "")
    except yaml.YAMLError:
        pass
    return lines


def _parse(text: str, source: str):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{source}:{where}: {problem}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    return data


class _Fields:
    """Field access that turns any conversion error into a named ConfigError."""

    def __init__(self, data: dict, source: str, lines: dict, prefix: str = ""):
        self.data, self.source, self.lines, self.prefix = data, source, lines, prefix

    def fail(self, key: str, msg: str):
        path = self.prefix + key
        line = self.lines.get(path)
        where = f" line {line}" if line else ""
        raise ConfigError(f"{self.source}:{where}: field '{path}': {msg}")

    def check_keys(self, allowed):
        for k in self.data:
            if k not in allowed:
                self.fail(str(k), "unknown field")

    def get(self, key, conv, default=None):
        if key not in self.data or self.data[key] is None:
            return default
        try:
            return conv(self.data[key])
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            self.fail(key, str(exc) or type(exc).__name__)

    def sub(self, key) -> "_Fields":
        value = self.data.get(key) or {}
        if not isinstance(value, dict):
            self.fail(key, "expected a mapping")
        return _Fields(value, self.source, self.lines, f"{self.prefix}{key}.")


def _array(shape):
    def conv(v):
        a = np.array(v, dtype=float)
        if a.shape != shape:
            raise ValueError(f"expected shape {shape}, got {a.shape}")
        return a
    return conv


def _positive(v):
    v = float(v)
    if not v > 0:
        raise ValueError("must be positive")
    return v


def _nonnegative(v):
    v = float(v)
    if v < 0:
        raise ValueError("must be non-negative")
    return v


def parse_pose(value) -> Pose:
    if not isinstance(value, dict):
        raise ValueError("pose must be a mapping with translation and rotation")
    unknown = set(value) - {"translation", "rotation_deg", "axis_angle"}
    if unknown:
        raise ValueError(f"unknown pose keys {sorted(unknown)}")
    t = _array((3,))(value.get("translation", [0.0, 0.0, 0.0]))
    if "rotation_deg" in value and "axis_angle" in value:
        raise ValueError("give either rotation_deg or axis_angle, not both")
    if "axis_angle" in value:
        aa = _array((4,))(value["axis_angle"])
        R = rodrigues(aa[:3], math.radians(aa[3]))
    else:
        R = rxyz(*np.radians(_array((3,))(value.get("rotation_deg", [0.0, 0.0, 0.0]))))
    return Pose(R, t)


def robot_from_dict(data: dict, source: str = "<robot>", lines: dict | None = None):
    f = _Fields(data, source, lines or {})
    f.check_keys(ROBOT_KEYS)
    preset = f.get("preset", str)
    if preset is not None and preset != "acrobot":
        f.fail("preset", f"unknown preset {preset!r}")
    limits = f.get("tension_limits", _array((2,)), np.array([1.0, 200.0]))
    mass = f.get("platform_mass", _positive, 1.5)
    base = acrobot(
        frame_size=f.get("frame_size", _positive, 1.2),
        corner_offset=f.get("corner_offset", _nonnegative, 0.05),
        platform_size=f.get("platform_size", _array((3,)), (0.1, 0.1, 0.07)),
    )
    kwargs = dict(
        exit_points=f.get("exit_points", _array((8, 3)), base.exit_points),
        anchor_points=f.get("anchor_points", _array((8, 3)), base.anchor_points),
        tension_limits=tuple(limits),
        platform_mass=mass,
        camera_mount=f.get("camera_mount", parse_pose, base.camera_mount),
        gravity=f.get("gravity", _array((3,)), base.gravity),
    )
    try:
        return RobotDescription(**kwargs)
    except ValueError as exc:
        msg = str(exc)
        key = "tension_limits" if "tension" in msg else "exit_points"
        f.fail(key, msg)


def load_robot(path) -> RobotDescription:
    path = Path(path)
    text = _read(path)
    return robot_from_dict(_parse(text, str(path)), str(path), _key_lines(text))


def _read(path: Path) -> str:
    try:
        return path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc


def _noise(f: _Fields) -> NoiseSpec:
    f.check_keys({"translation", "rotation", "rotation_deg", "center"})
    rot = f.get("rotation", _nonnegative, 0.0)
    if "rotation_deg" in f.data:
        rot = math.radians(f.get("rotation_deg", _nonnegative, 0.0))
    return NoiseSpec(
        translation=f.get("translation", _nonnegative, 0.0),
        rotation=rot,
        center=f.get("center", _nonnegative, 0.0),
    )


def _bounds(f: _Fields) -> PerturbationBounds:
    f.check_keys({"mp_pose_trans", "mp_pose_rot_deg", "hand_eye_trans", "hand_eye_rot_deg",
                  "exit_point", "anchor_point", "feature_noise"})
    return PerturbationBounds(
        mp_pose_trans=f.get("mp_pose_trans", _nonnegative, 0.0),
        mp_pose_rot=math.radians(f.get("mp_pose_rot_deg", _nonnegative, 0.0)),
        hand_eye_trans=f.get("hand_eye_trans", _nonnegative, 0.0),
        hand_eye_rot=math.radians(f.get("hand_eye_rot_deg", _nonnegative, 0.0)),
        exit_point=f.get("exit_point", _nonnegative, 0.0),
        anchor_point=f.get("anchor_point", _nonnegative, 0.0),
        feature_noise=_noise(f.sub("feature_noise")),
    )


def _grid(f: _Fields) -> GridSpec:
    f.check_keys({"x", "y", "z", "shape", "tilt_deg", "orientations_deg"})
    d = GridSpec()
    if "tilt_deg" in f.data and "orientations_deg" in f.data:
        f.fail("tilt_deg", "give either tilt_deg or orientations_deg, not both")
    orient = d.orientations
    if "tilt_deg" in f.data:
        orient = tilt_orientations(math.radians(f.get("tilt_deg", _nonnegative, 0.0)))
    if "orientations_deg" in f.data:
        arr = f.get("orientations_deg", lambda v: np.radians(np.array(v, dtype=float)))
        if arr.ndim != 2 or arr.shape[1] != 3 or len(arr) == 0:
            f.fail("orientations_deg", "expected a non-empty list of rotation vectors")
        orient = tuple(tuple(r) for r in arr)

    def shape(v):
        s = tuple(int(n) for n in v)
        if len(s) != 3 or min(s) < 1:
            raise ValueError("expected three positive integers")
        return s

    return GridSpec(
        x=tuple(f.get("x", _array((2,)), d.x)),
        y=tuple(f.get("y", _array((2,)), d.y)),
        z=tuple(f.get("z", _array((2,)), d.z)),
        shape=f.get("shape", shape, d.shape),
        orientations=orient,
    )


def _workspace(f: _Fields) -> WorkspaceSettings:
    f.check_keys({"grid", "bounds", "n_samples", "n_boundary"})

    def count(v):
        n = int(v)
        if n < 0:
            raise ValueError("must be non-negative")
        return n

    return WorkspaceSettings(
        grid=_grid(f.sub("grid")),
        bounds=_bounds(f.sub("bounds")),
        n_samples=f.get("n_samples", count, 64),
        n_boundary=f.get("n_boundary", count, 16),
    )


def experiment_from_dict(data: dict, source: str = "<config>", lines: dict | None = None,
                         base_dir: Path | None = None) -> LoadedConfig:
    lines = lines or {}
    f = _Fields(data, source, lines)
    f.check_keys(EXPERIMENT_KEYS)

    robot_ref = data.get("robot")
    if robot_ref is None:
        robot = acrobot()
    elif isinstance(robot_ref, dict):
        robot = robot_from_dict(robot_ref, source, {k[6:]: v for k, v in lines.items()
                                                    if k.startswith("robot.")})
    elif isinstance(robot_ref, str):
        path = Path(robot_ref)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        if not path.exists():
            f.fail("robot", f"robot file {str(path)!r} does not exist")
        robot = load_robot(path)
    else:
        f.fail("robot", "expected a file path or a mapping")

    seed = f.get("seed", int, 0)
    pert = data.get("perturbation", "none")
    if isinstance(pert, str):
        pert_name, custom = pert, None
    elif isinstance(pert, dict):
        pert_name = "custom"
        custom = {k: v for k, v in pert.items() if k != "name"}
    else:
        f.fail("perturbation", "expected a set name or a mapping")
    try:
        draw = load_perturbation_set(pert_name, seed, custom)
    except UnknownSet:
        f.fail("perturbation", f"unknown perturbation set {pert_name!r}")
    except (TypeError, ValueError) as exc:
        f.fail("perturbation", str(exc))

    g = f.sub("gains")
    g.check_keys({"lambda0", "lambda_inf", "lambda_dot0"})
    try:
        gains = GainSchedule(
            lambda0=g.get("lambda0", float, 2.0),
            lambda_inf=g.get("lambda_inf", float, 0.4),
            lambda_dot0=g.get("lambda_dot0", float, 30.0),
        )
    except ValueError as exc:
        f.fail("gains", str(exc))

    c = f.sub("camera")
    c.check_keys({"focal", "principal_point", "image_size"})
    camera = CameraModel(
        focal=c.get("focal", _positive, 800.0),
        principal_point=tuple(c.get("principal_point", _array((2,)), (320.0, 240.0))),
        image_size=tuple(int(n) for n in c.get("image_size", _array((2,)), (640, 480))),
    )

    controller = f.get("controller", str, "classic")
    if controller not in ("classic", "tracking"):
        f.fail("controller", "must be 'classic' or 'tracking'")
    velocity = f.get("velocity", lambda v: tuple(_array((6,))(v)))
    if velocity is not None and min(velocity) <= 0:
        f.fail("velocity", "all components must be positive")
    t_full_raw = data.get("t_full")
    match_classic = False
    t_full = None
    if t_full_raw == "match_classic":
        match_classic = True
    elif t_full_raw is not None:
        t_full = f.get("t_full", _positive)
    if controller == "tracking" and t_full is None and velocity is None:
        match_classic = True

    experiment = ExperimentConfig(
        robot=robot,
        goal_platform_pose=f.get("goal_platform_pose", parse_pose,
                                 ExperimentConfig.goal_platform_pose),
        initial_object_pose=f.get("initial_object_pose", parse_pose,
                                  ExperimentConfig.initial_object_pose),
        desired_object_pose=f.get("desired_object_pose", parse_pose,
                                  ExperimentConfig.desired_object_pose),
        controller=controller,
        gains=gains,
        constant_gain=f.get("constant_gain", _positive),
        tracking_gain=f.get("tracking_gain", _positive, 2.0),
        velocity=velocity,
        t_full=t_full,
        noise=_noise(f.sub("noise")),
        perturbation=draw,
        perturbation_name=pert_name,
        camera=camera,
        dt=f.get("dt", _positive, 0.05),
        max_duration=f.get("max_duration", _positive, 60.0),
        threshold=f.get("threshold", _positive, 1e-3),
        actuator_lag=f.get("actuator_lag", _nonnegative, 0.0),
        seed=seed,
        name=f.get("name", str, "experiment"),
    )
    return LoadedConfig(experiment, _workspace(f.sub("workspace")), match_classic)


def load_experiment(path) -> LoadedConfig:
    path = Path(path)
    text = _read(path)
    data = _parse(text, str(path))
    loaded = experiment_from_dict(data, str(path), _key_lines(text), path.parent)
    return LoadedConfig(loaded.experiment, loaded.workspace, loaded.match_classic, path)


__all__ = [
    "ConfigError",
    "LoadedConfig",
    "WorkspaceSettings",
    "experiment_from_dict",
    "load_experiment",
    "load_robot",
    "parse_pose",
    "robot_from_dict",
]
