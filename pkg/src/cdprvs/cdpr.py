"""Geometric model of an 8-cable parallel robot.

Frame ``b`` is the base frame; frame ``p`` is attached to the moving platform.
Exit points ``a_i`` are given in ``b`` and anchor points ``b_i`` in ``p``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Pose, rot_y
from .lp import box_feasible

N_CABLES = 8
MIN_CABLE_LENGTH = 1e-6
RANK_TOL = 1e-8


class DegenerateCable(ValueError):
    pass


class RankDeficient(ValueError):
    pass


@dataclass(frozen=True)
class RobotDescription:
    exit_points: np.ndarray  # (8, 3) in frame b, meters
    anchor_points: np.ndarray  # (8, 3) in frame p, meters
    tension_limits: tuple[float, float] = (1.0, 200.0)
    platform_mass: float = 1.5
    camera_mount: Pose = field(default_factory=Pose.identity)
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))

    def __post_init__(self):
        a = np.array(self.exit_points, dtype=float)
        b = np.array(self.anchor_points, dtype=float)
        object.__setattr__(self, "exit_points", a)
        object.__setattr__(self, "anchor_points", b)
        object.__setattr__(self, "gravity", np.array(self.gravity, dtype=float))
        object.__setattr__(self, "tension_limits", tuple(float(x) for x in self.tension_limits))
        if a.shape != (N_CABLES, 3) or b.shape != (N_CABLES, 3):
            raise ValueError(f"expected {N_CABLES} exit and anchor points of dimension 3")
        t_min, t_max = self.tension_limits
        if t_min < 0 or t_max <= t_min:
            raise ValueError("tension limits must satisfy 0 <= t_min < t_max")
        if self.platform_mass <= 0:
            raise ValueError("platform_mass must be positive")

    def with_points(self, exit_points=None, anchor_points=None) -> "RobotDescription":
        return replace(
            self,
            exit_points=self.exit_points if exit_points is None else exit_points,
            anchor_points=self.anchor_points if anchor_points is None else anchor_points,
        )

    @property
    def workspace_center(self) -> np.ndarray:
        """Centroid of the exit points projected to the floor (z = 0)."""
        c = self.exit_points.mean(axis=0)
        return np.array([c[0], c[1], 0.0])


def acrobot(
    frame_size: float = 1.2,
    corner_offset: float = 0.05,
    platform_size=(0.1, 0.1, 0.07),
    mass: float = 1.5,
    tension_limits=(1.0, 200.0),
) -> RobotDescription:
    """Suspended 8-cable layout in a cube frame, origin at the floor center.

    Each top corner of the frame carries two exit points split by
    ``corner_offset`` along the two frame edges meeting there. Each cable
    attaches to a top corner of the platform, two cables per corner, and the
    pairs are crossed so the cables from one frame corner reach different
    platform corners.
    """
    h = frame_size / 2.0
    d = corner_offset
    px, py, pz = (s / 2.0 for s in platform_size)
    corners = [(h, h), (-h, h), (-h, -h), (h, -h)]
    exits, anchors = [], []
    for cx, cy in corners:
        sx, sy = np.sign(cx), np.sign(cy)
        # exit point displaced along the x edge, cable to the neighbor in y
        exits.append([cx - sx * d, cy, frame_size])
        anchors.append([sx * px, -sy * py, pz])
        # exit point displaced along the y edge, cable to the neighbor in x
        exits.append([cx, cy - sy * d, frame_size])
        anchors.append([-sx * px, sy * py, pz])
    # camera under the platform, optical axis pointing at the floor
    mount = Pose(rot_y(np.pi), [0.0, 0.0, -pz])
    return RobotDescription(
        exit_points=np.array(exits),
        anchor_points=np.array(anchors),
        tension_limits=tension_limits,
        platform_mass=mass,
        camera_mount=mount,
    )


@dataclass(frozen=True)
class CableState:
    lengths: np.ndarray  # (8,)
    unit_vectors: np.ndarray  # (8, 3), frame p, from exit point to anchor
    anchor_points: np.ndarray  # (8, 3), frame p


def cable_state(robot: RobotDescription, pose: Pose) -> CableState:
    """Cable lengths and directions for the platform at ``pose`` (= bTp)."""
    inv = pose.inverse()
    a_p = inv.apply(robot.exit_points)  # exit points seen from p
    vec = robot.anchor_points - a_p
    lengths = np.linalg.norm(vec, axis=1)
    if np.any(lengths <= MIN_CABLE_LENGTH):
        raise DegenerateCable(f"cable length below {MIN_CABLE_LENGTH} m")
    return CableState(lengths, vec / lengths[:, None], robot.anchor_points)


def jacobian(state: CableState) -> np.ndarray:
    """8x6 map from platform body twist ``[v; w]`` to cable length rates."""
    u = state.unit_vectors
    return np.hstack([u, np.cross(state.anchor_points, u)])


def pseudo_inverse(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s[-1] < RANK_TOL:
        raise RankDeficient(f"smallest singular value {s[-1]:.3e} below {RANK_TOL}")
    return (Vt.T / s) @ U.T


def gravity_wrench(robot: RobotDescription, pose: Pose) -> np.ndarray:
    force_p = pose.rotation.T @ (robot.platform_mass * robot.gravity)
    return np.concatenate([force_p, np.zeros(3)])


def equilibrium_tensions(robot: RobotDescription, pose: Pose):
    """Some admissible tension vector balancing gravity, or ``None``."""
    A = jacobian(cable_state(robot, pose))
    W = -A.T
    w_g = gravity_wrench(robot, pose)
    t_min, t_max = robot.tension_limits
    ok, tau = box_feasible(W, -w_g, np.full(N_CABLES, t_min), np.full(N_CABLES, t_max))
    return tau if ok else None


def static_feasible(robot: RobotDescription, pose: Pose) -> bool:
    return equilibrium_tensions(robot, pose) is not None
