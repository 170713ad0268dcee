"""SE(3) / SO(3) primitives.

Conventions used across the package:

* A ``Pose`` ``T_ab`` maps coordinates in frame ``b`` to frame ``a``:
  ``p_a = R_ab @ p_b + t_ab``.
* Twists are 6-vectors ``[v; w]`` (linear first), expressed in the body frame
  of the moving pose, so ``T(t + dt) = T(t) @ exp(twist * dt)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Below this angle the sinc ratio in the rotation log matrix uses its series.
_SMALL_ANGLE = 1e-4


class SingularRotation(ValueError):
    """Raised when a rotation-dependent formula is evaluated at theta = pi."""


def skew(u) -> np.ndarray:
    x, y, z = np.asarray(u, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rodrigues(axis, theta: float) -> np.ndarray:
    """Rotation matrix for ``theta`` radians about ``axis`` (normalized here)."""
    u = np.asarray(axis, dtype=float)
    n = np.linalg.norm(u)
    if n == 0.0 or theta == 0.0:
        return np.eye(3)
    K = skew(u / n)
    return np.eye(3) + math.sin(theta) * K + (1.0 - math.cos(theta)) * (K @ K)


def exp_so3(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    if theta < 1e-12:
        W = skew(w)
        return np.eye(3) + W + 0.5 * (W @ W)
    return rodrigues(w / theta, theta)


def skew_batch(u) -> np.ndarray:
    """Stacked skew matrices for an (n, 3) array."""
    u = np.asarray(u, dtype=float)
    K = np.zeros(u.shape[:-1] + (3, 3))
    K[..., 0, 1], K[..., 0, 2] = -u[..., 2], u[..., 1]
    K[..., 1, 0], K[..., 1, 2] = u[..., 2], -u[..., 0]
    K[..., 2, 0], K[..., 2, 1] = -u[..., 1], u[..., 0]
    return K


def exp_so3_batch(w) -> np.ndarray:
    """``exp_so3`` for an (n, 3) array of rotation vectors."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w, axis=-1)
    small = theta < 1e-12
    safe = np.where(small, 1.0, theta)
    K = skew_batch(w)
    a = np.where(small, 1.0, np.sin(safe) / safe)
    b = np.where(small, 0.5, (1.0 - np.cos(safe)) / safe**2)
    return np.eye(3) + a[..., None, None] * K + b[..., None, None] * (K @ K)


def rot_x(a: float) -> np.ndarray:
    return rodrigues([1.0, 0.0, 0.0], a)


def rot_y(a: float) -> np.ndarray:
    return rodrigues([0.0, 1.0, 0.0], a)


def rot_z(a: float) -> np.ndarray:
    return rodrigues([0.0, 0.0, 1.0], a)


def rxyz(rx: float, ry: float, rz: float) -> np.ndarray:
    """Fixed-order Euler rotation ``Rx(rx) @ Ry(ry) @ Rz(rz)``."""
    return rot_x(rx) @ rot_y(ry) @ rot_z(rz)


def project_to_so3(R) -> np.ndarray:
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def is_rotation(R, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    return (
        R.shape == (3, 3)
        and np.allclose(R.T @ R, np.eye(3), atol=tol, rtol=0.0)
        and abs(np.linalg.det(R) - 1.0) < tol
    )


@dataclass(frozen=True)
class AxisAngle:
    u: np.ndarray
    theta: float

    @property
    def vector(self) -> np.ndarray:
        """The rotation vector ``theta * u``."""
        return self.theta * self.u


def axis_angle(R) -> AxisAngle:
    """Axis and angle of a rotation matrix, with ``theta`` in ``[0, pi]``.

    The identity returns the fixed axis ``[0, 0, 1]``.
    """
    R = np.asarray(R, dtype=float)
    c = float(np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0))
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    s = 0.5 * float(np.linalg.norm(w))
    theta = math.atan2(s, c)
    if theta < 1e-12:
        return AxisAngle(np.array([0.0, 0.0, 1.0]), 0.0)
    if c > -0.99:
        return AxisAngle(w / (2.0 * s), theta)
    # Near pi the antisymmetric part vanishes; read u u^T from the symmetric part.
    B = (0.5 * (R + R.T) - c * np.eye(3)) / (1.0 - c)
    k = int(np.argmax(np.diag(B)))
    u = B[:, k] / math.sqrt(max(B[k, k], 1e-300))
    u /= np.linalg.norm(u)
    if np.dot(w, u) < 0.0:
        u = -u
    return AxisAngle(u, theta)


def log_so3(R) -> np.ndarray:
    return axis_angle(R).vector


def _sinc(x: float) -> float:
    return math.sin(x) / x if x != 0.0 else 1.0


def rotation_log_matrix(aa: AxisAngle) -> np.ndarray:
    """Map from body angular velocity to the rate of ``theta * u``.

    ``d(theta u)/dt = L @ w`` when ``dR/dt = R @ skew(w)``, with
    ``L = I + (theta/2) [u]x + (1 - sinc(theta) / sinc^2(theta/2)) [u]x^2``.
    """
    theta = float(aa.theta)
    if theta >= math.pi:
        raise SingularRotation("rotation log matrix is undefined at theta = pi")
    K = skew(aa.u)
    if theta < _SMALL_ANGLE:
        # 1 - sinc(t)/sinc^2(t/2) = t^2/12 + t^4/720 + O(t^6)
        k2 = theta**2 / 12.0 + theta**4 / 720.0
    else:
        k2 = 1.0 - _sinc(theta) / _sinc(theta / 2.0) ** 2
    return np.eye(3) + 0.5 * theta * K + k2 * (K @ K)


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotation matrix plus translation (meters)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.array(self.rotation, dtype=float))
        object.__setattr__(self, "translation", np.array(self.translation, dtype=float))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, M) -> "Pose":
        M = np.asarray(M, dtype=float)
        return cls(M[:3, :3], M[:3, 3])

    @classmethod
    def from_translation_axis_angle(cls, t, rotvec) -> "Pose":
        return cls(exp_so3(rotvec), t)

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def apply(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return p @ self.rotation.T + self.translation


@dataclass(frozen=True)
class Twist:
    linear: np.ndarray
    angular: np.ndarray

    @classmethod
    def from_vector(cls, v) -> "Twist":
        v = np.asarray(v, dtype=float)
        return cls(v[:3].copy(), v[3:].copy())

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])


def se3_exp(v, dt: float = 1.0) -> Pose:
    """Pose reached after following the constant body twist ``v`` for ``dt``."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    xi = v.vector if isinstance(v, Twist) else np.asarray(v, dtype=float)
    rho = xi[:3] * dt
    phi = xi[3:] * dt
    theta = float(np.linalg.norm(phi))
    W = skew(phi)
    if theta < 1e-8:
        R = np.eye(3) + W + 0.5 * (W @ W)
        V = np.eye(3) + 0.5 * W + (W @ W) / 6.0
    else:
        s, c = math.sin(theta), math.cos(theta)
        R = np.eye(3) + (s / theta) * W + ((1.0 - c) / theta**2) * (W @ W)
        V = (
            np.eye(3)
            + ((1.0 - c) / theta**2) * W
            + ((theta - s) / theta**3) * (W @ W)
        )
    return Pose(R, V @ rho)


def adjoint(T: Pose) -> np.ndarray:
    """6x6 twist transport ``[[R, [t]x R], [0, R]]`` for ``T = T_ab``.

    Maps a body twist of frame ``b`` to the same motion seen as a body twist
    of frame ``a`` (both frames rigidly attached).
    """
    R, t = T.rotation, T.translation
    Ad = np.zeros((6, 6))
    Ad[:3, :3] = R
    Ad[:3, 3:] = skew(t) @ R
    Ad[3:, 3:] = R
    return Ad


def adjoint_inverse(T: Pose) -> np.ndarray:
    return adjoint(T.inverse())
