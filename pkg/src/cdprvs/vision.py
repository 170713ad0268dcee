"""Simulated perception for 2 1/2 D visual servoing.

The observed object is an abstract tagged pose ``cTo``; its center is the
origin of the object frame. Features are

    s = [c*t_c (3), x_o, y_o, (theta u)_z]

where ``c*T_c = c*T_o @ inv(cTo)`` is the current camera seen from the
desired camera frame, and ``(x_o, y_o)`` are normalized image coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, SingularRotation, axis_angle, exp_so3, rotation_log_matrix


class ObjectBehindCamera(ValueError):
    pass


class NonpositiveDepth(ValueError):
    pass


@dataclass(frozen=True)
class CameraModel:
    focal: float = 800.0
    principal_point: tuple[float, float] = (320.0, 240.0)
    image_size: tuple[int, int] = (640, 480)

    def __post_init__(self):
        if self.focal <= 0:
            raise ValueError("focal must be positive")

    def to_pixels(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return self.focal * xy + np.asarray(self.principal_point, dtype=float)


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean Gaussian measurement noise.

    ``translation`` is the per-axis sigma on ``cTo`` (m), ``rotation`` the
    sigma of the rotation angle about a uniformly random axis (rad) and
    ``center`` the per-axis sigma on the normalized center point.
    """

    translation: float = 0.0
    rotation: float = 0.0
    center: float = 0.0

    @property
    def is_zero(self) -> bool:
        return self.translation == 0.0 and self.rotation == 0.0 and self.center == 0.0


@dataclass(frozen=True)
class Observation:
    object_pose: Pose
    center: np.ndarray
    depth: float


@dataclass(frozen=True)
class FeatureVector:
    t: np.ndarray
    xo: float
    yo: float
    theta_u_z: float
    # c*R_c; the interaction matrix needs the full rotation, not just (theta u)_z
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    @property
    def vector(self) -> np.ndarray:
        return np.array([*self.t, self.xo, self.yo, self.theta_u_z])


def random_unit_vector(rng) -> np.ndarray:
    v = rng.normal(size=3)
    n = np.linalg.norm(v)
    while n < 1e-12:
        v = rng.normal(size=3)
        n = np.linalg.norm(v)
    return v / n


def project(point) -> np.ndarray:
    X, Y, Z = point
    if Z <= 0:
        raise ObjectBehindCamera(f"object depth {Z:.4g} m is not in front of the camera")
    return np.array([X / Z, Y / Z])


def observe(cTo: Pose, noise: NoiseSpec | None = None, rng=None) -> Observation:
    if cTo.translation[2] <= 0:
        raise ObjectBehindCamera(
            f"object depth {cTo.translation[2]:.4g} m is not in front of the camera"
        )
    if noise is None or noise.is_zero:
        return Observation(cTo, project(cTo.translation), float(cTo.translation[2]))
    if rng is None:
        raise ValueError("a random generator is required for noisy observations")
    t = cTo.translation + noise.translation * rng.normal(size=3)
    axis = random_unit_vector(rng)
    R = exp_so3(axis * noise.rotation * rng.normal()) @ cTo.rotation
    noisy = Pose(R, t)
    center = project(t) + noise.center * rng.normal(size=2)
    return Observation(noisy, center, float(t[2]))


def compute_features(obs: Observation, desired_cTo: Pose) -> FeatureVector:
    op = obs.object_pose
    if np.array_equal(op.rotation, desired_cTo.rotation) and np.array_equal(
        op.translation, desired_cTo.translation
    ):
        # exactly at the goal; skip the round-off of composing T with its inverse
        return desired_features(desired_cTo, obs.center)
    cdTc = desired_cTo @ op.inverse()
    aa = axis_angle(cdTc.rotation)
    return FeatureVector(
        t=cdTc.translation,
        xo=float(obs.center[0]),
        yo=float(obs.center[1]),
        theta_u_z=float(aa.theta * aa.u[2]),
        rotation=cdTc.rotation,
    )


def desired_features(desired_cTo: Pose, center=None) -> FeatureVector:
    """Features at the goal: zero translation and rotation, goal center point."""
    xy = project(desired_cTo.translation) if center is None else np.asarray(center, float)
    return FeatureVector(np.zeros(3), float(xy[0]), float(xy[1]), 0.0, np.eye(3))


def interaction_matrix(f: FeatureVector, Z: float) -> np.ndarray:
    """6x6 matrix ``L`` with ``ds/dt = L @ v_c`` for the camera body twist."""
    if Z <= 0:
        raise NonpositiveDepth(f"depth must be positive, got {Z}")
    aa = axis_angle(f.rotation)
    L_w = rotation_log_matrix(aa)  # raises SingularRotation at pi
    x, y = f.xo, f.yo
    L_v = np.array([[-1.0, 0.0, x], [0.0, -1.0, y], [0.0, 0.0, 0.0]])
    L_vw = np.array(
        [
            [x * y, -(1.0 + x * x), y],
            [1.0 + y * y, -x * y, -x],
            L_w[2],
        ]
    )
    L = np.zeros((6, 6))
    L[:3, :3] = f.rotation
    L[3:, :3] = L_v / Z
    L[3:, 3:] = L_vw
    return L


__all__ = [
    "CameraModel",
    "FeatureVector",
    "NoiseSpec",
    "NonpositiveDepth",
    "ObjectBehindCamera",
    "Observation",
    "SingularRotation",
    "compute_features",
    "desired_features",
    "interaction_matrix",
    "observe",
    "project",
]
