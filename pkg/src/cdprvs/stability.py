"""Closed-loop stability criterion and workspace grids.

The closed loop of the visual-servoing controller is ``de/dt = -lam Pi e``
with

    Pi = L_s inv(Ad) pinv(A) A_hat Ad_hat inv(L_hat)

where unhatted matrices are the true ones and hatted matrices the
controller's estimates. ``Pi > 0`` (positive definite quadratic form) for
every admissible perturbation defines the control stability workspace.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cdpr import (
    DegenerateCable,
    RankDeficient,
    RobotDescription,
    cable_state,
    jacobian,
    pseudo_inverse,
    static_feasible,
)
from .control import EstimatedModel, SingularInteraction
from .geometry import Pose, SingularRotation, adjoint, exp_so3, exp_so3_batch, rxyz, skew_batch
from .vision import (
    FeatureVector,
    NoiseSpec,
    NonpositiveDepth,
    compute_features,
    desired_features,
    interaction_matrix,
    observe,
)

PD_THRESHOLD = 1e-9
WORKERS_ENV = "CDPRVS_WORKERS"


def is_positive_definite(M, threshold: float = PD_THRESHOLD) -> bool:
    """``x^T M x > 0`` for all x, tested on the symmetric part."""
    M = np.asarray(M, dtype=float)
    return bool(np.linalg.eigvalsh(0.5 * (M + M.T)).min() > threshold)


def stability_matrix(
    robot: RobotDescription,
    est: EstimatedModel,
    pose: Pose,
    features: FeatureVector,
    depth: float,
    est_features: FeatureVector | None = None,
    est_depth: float | None = None,
) -> np.ndarray:
    """Criterion matrix Pi for the true platform ``pose`` and estimates ``est``."""
    if est_features is None:
        est_features, est_depth = features, depth
    L = interaction_matrix(features, depth)
    L_hat = interaction_matrix(est_features, est_depth)
    A_pinv = pseudo_inverse(jacobian(cable_state(robot, pose)))
    Ad_inv = adjoint(robot.camera_mount.inverse())
    inner = A_pinv @ est.jacobian() @ est.adjoint()
    try:
        return L @ Ad_inv @ inner @ np.linalg.inv(L_hat)
    except np.linalg.LinAlgError as exc:
        raise SingularInteraction("estimated interaction matrix is not invertible") from exc


@dataclass(frozen=True)
class PerturbationBounds:
    mp_pose_trans: float = 0.0
    mp_pose_rot: float = 0.0
    hand_eye_trans: float = 0.0
    hand_eye_rot: float = 0.0
    exit_point: float = 0.0
    anchor_point: float = 0.0
    # treated as magnitude bounds here, not as sigmas
    feature_noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        values = [
            self.mp_pose_trans,
            self.mp_pose_rot,
            self.hand_eye_trans,
            self.hand_eye_rot,
            self.exit_point,
            self.anchor_point,
            self.feature_noise.translation,
            self.feature_noise.rotation,
            self.feature_noise.center,
        ]
        if any(v < 0 for v in values):
            raise ValueError("perturbation bounds must be non-negative")


@dataclass(frozen=True)
class PerturbationDraw:
    """Concrete estimate errors.

    Pose offsets follow the error-state convention: the translation offset is
    added in the parent frame (``b`` for the platform pose, ``p`` for the
    camera mount) and the rotation offset acts about body-fixed axes,
    ``R_hat = R @ exp(rot)``. Feature offsets perturb the observed object pose
    (translation, rotation vector) and the normalized center point.
    """

    pose_trans: np.ndarray = field(default_factory=lambda: np.zeros(3))
    pose_rot: np.ndarray = field(default_factory=lambda: np.zeros(3))
    hand_eye_trans: np.ndarray = field(default_factory=lambda: np.zeros(3))
    hand_eye_rot: np.ndarray = field(default_factory=lambda: np.zeros(3))
    exit_offsets: np.ndarray = field(default_factory=lambda: np.zeros((8, 3)))
    anchor_offsets: np.ndarray = field(default_factory=lambda: np.zeros((8, 3)))
    feature_trans: np.ndarray = field(default_factory=lambda: np.zeros(3))
    feature_rot: np.ndarray = field(default_factory=lambda: np.zeros(3))
    feature_center: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))

    @property
    def is_zero(self) -> bool:
        return not any(np.any(getattr(self, n)) for n in self.__dataclass_fields__)


def perturb_pose(pose: Pose, trans, rotvec) -> Pose:
    return Pose(pose.rotation @ exp_so3(rotvec), pose.translation + np.asarray(trans, float))


def estimated_model(robot: RobotDescription, pose: Pose, draw: PerturbationDraw) -> EstimatedModel:
    """Controller's belief when the true robot at ``pose`` is misestimated by ``draw``."""
    if draw.is_zero:
        return EstimatedModel(robot, pose, robot.camera_mount)
    mount = perturb_pose(robot.camera_mount, draw.hand_eye_trans, draw.hand_eye_rot)
    robot_est = RobotDescription(
        exit_points=robot.exit_points + draw.exit_offsets,
        anchor_points=robot.anchor_points + draw.anchor_offsets,
        tension_limits=robot.tension_limits,
        platform_mass=robot.platform_mass,
        camera_mount=mount,
        gravity=robot.gravity,
    )
    return EstimatedModel(robot_est, perturb_pose(pose, draw.pose_trans, draw.pose_rot), mount)


_DRAW_FIELDS = (
    "pose_trans", "pose_rot", "hand_eye_trans", "hand_eye_rot", "exit_offsets",
    "anchor_offsets", "feature_trans", "feature_rot", "feature_center",
)


@dataclass(frozen=True)
class DrawBatch:
    """Perturbation draws stacked along a leading axis (fields as ``PerturbationDraw``)."""

    pose_trans: np.ndarray  # (n, 3)
    pose_rot: np.ndarray
    hand_eye_trans: np.ndarray
    hand_eye_rot: np.ndarray
    exit_offsets: np.ndarray  # (n, 8, 3)
    anchor_offsets: np.ndarray
    feature_trans: np.ndarray
    feature_rot: np.ndarray
    feature_center: np.ndarray  # (n, 2)

    def __len__(self) -> int:
        return len(self.pose_trans)

    def __getitem__(self, i: int) -> PerturbationDraw:
        return PerturbationDraw(**{k: getattr(self, k)[i] for k in _DRAW_FIELDS})

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @classmethod
    def from_draws(cls, draws) -> "DrawBatch":
        if isinstance(draws, DrawBatch):
            return draws
        draws = list(draws)
        if not draws:
            raise ValueError("empty draw list")
        return cls(**{k: np.stack([getattr(d, k) for d in draws]) for k in _DRAW_FIELDS})

    def concat(self, other: "DrawBatch") -> "DrawBatch":
        return DrawBatch(**{k: np.concatenate([getattr(self, k), getattr(other, k)])
                            for k in _DRAW_FIELDS})


def _units(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.maximum(n, 1e-300)


def sample_batch(bounds: PerturbationBounds, rng, n: int, mode: str = "interior") -> DrawBatch:
    """``n`` random draws inside ``bounds``.

    Every vector offset is ``magnitude * axis`` with the axis uniform on the
    sphere; interior magnitudes are uniform in ``[0, bound]``, boundary
    magnitudes equal the bound. The generator is consumed identically
    whatever the bound values, so one seed yields draws that scale with the
    bounds.
    """
    if mode not in ("interior", "boundary"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    axes = _units(rng.normal(size=(n, 23, 3)))  # 4 pose/mount + 16 points + 3 feature vectors
    frac = rng.uniform(size=(n, 23))
    if mode == "boundary":
        frac = np.ones((n, 23))
    center_dir = _units(rng.normal(size=(n, 2)))
    scaled = axes * frac[..., None]
    fn = bounds.feature_noise
    return DrawBatch(
        pose_trans=bounds.mp_pose_trans * scaled[:, 0],
        pose_rot=bounds.mp_pose_rot * scaled[:, 1],
        hand_eye_trans=bounds.hand_eye_trans * scaled[:, 2],
        hand_eye_rot=bounds.hand_eye_rot * scaled[:, 3],
        exit_offsets=bounds.exit_point * scaled[:, 4:12],
        anchor_offsets=bounds.anchor_point * scaled[:, 12:20],
        feature_trans=fn.translation * scaled[:, 20],
        feature_rot=fn.rotation * scaled[:, 21],
        feature_center=fn.center * frac[:, 22, None] * center_dir,
    )


def sample_perturbation(bounds: PerturbationBounds, rng, mode: str = "interior") -> PerturbationDraw:
    """One random draw inside ``bounds`` (see ``sample_batch``)."""
    return sample_batch(bounds, rng, 1, mode)[0]


def _interior_and_boundary(bounds, rng, n_interior: int, n_boundary: int):
    return (sample_batch(bounds, rng, n_interior, "interior"),
            sample_batch(bounds, rng, n_boundary, "boundary"))


def perturbation_draws(
    bounds: PerturbationBounds, rng, n_interior: int = 64, n_boundary: int = 16
) -> DrawBatch:
    """Interior draws followed by boundary draws."""
    interior, boundary = _interior_and_boundary(bounds, rng, n_interior, n_boundary)
    return interior.concat(boundary)


def _perturbed_goal_features(desired_cTo: Pose, draw: PerturbationDraw):
    """Features the controller would measure at the goal under the draw's feature offsets."""
    noisy = Pose(exp_so3(draw.feature_rot) @ desired_cTo.rotation,
                 desired_cTo.translation + draw.feature_trans)
    obs = observe(noisy)
    obs = type(obs)(obs.object_pose, obs.center + draw.feature_center, obs.depth)
    return compute_features(obs, desired_cTo), obs.depth


def _batched_estimated_products(robot, pose, draws: DrawBatch) -> np.ndarray:
    """``A_hat @ Ad_hat`` for every draw, shape (n, 8, 6)."""
    n = len(draws)
    exit_pts = robot.exit_points[None] + draws.exit_offsets
    anchors = robot.anchor_points[None] + draws.anchor_offsets
    R = pose.rotation @ exp_so3_batch(draws.pose_rot)
    t = pose.translation[None] + draws.pose_trans
    a_p = np.einsum("nji,nkj->nki", R, exit_pts - t[:, None, :])
    vec = anchors - a_p
    lengths = np.linalg.norm(vec, axis=2, keepdims=True)
    if np.any(lengths <= 1e-6):
        raise DegenerateCable("estimated cable length below threshold")
    u = vec / lengths
    A_hat = np.concatenate([u, np.cross(anchors, u)], axis=2)
    mount = robot.camera_mount
    Rc = mount.rotation @ exp_so3_batch(draws.hand_eye_rot)
    tc = mount.translation[None] + draws.hand_eye_trans
    Ad = np.zeros((n, 6, 6))
    Ad[:, :3, :3] = Rc
    Ad[:, 3:, 3:] = Rc
    Ad[:, :3, 3:] = skew_batch(tc) @ Rc
    return A_hat @ Ad


def stability_matrices(
    robot: RobotDescription,
    pose: Pose,
    draws,
    desired_cTo: Pose,
) -> np.ndarray:
    """Pi for every draw at the goal feature state, shape (n, 6, 6)."""
    draws = DrawBatch.from_draws(draws)
    f_goal = desired_features(desired_cTo)
    z_goal = float(desired_cTo.translation[2])
    L = interaction_matrix(f_goal, z_goal)
    A_pinv = pseudo_inverse(jacobian(cable_state(robot, pose)))
    left = L @ adjoint(robot.camera_mount.inverse()) @ A_pinv
    prod = _batched_estimated_products(robot, pose, draws)
    noisy = np.flatnonzero(np.any(draws.feature_trans, axis=1) | np.any(draws.feature_rot, axis=1)
                           | np.any(draws.feature_center, axis=1))
    L_inv = np.broadcast_to(np.linalg.inv(L), (len(draws), 6, 6)).copy()
    for i in noisy:
        f, z = _perturbed_goal_features(desired_cTo, draws[i])
        L_inv[i] = np.linalg.inv(interaction_matrix(f, z))
    return left @ prod @ L_inv


def _all_positive_definite(Pi: np.ndarray) -> bool:
    sym = 0.5 * (Pi + np.transpose(Pi, (0, 2, 1)))
    return bool(np.all(np.linalg.eigvalsh(sym)[:, 0] > PD_THRESHOLD))


def csw_verdict(
    robot: RobotDescription,
    pose: Pose,
    bounds: PerturbationBounds,
    n_samples: int = 64,
    n_boundary: int = 16,
    rng=None,
    desired_cTo: Pose | None = None,
    draws=None,
) -> bool:
    """Sampled check that Pi stays positive definite over the perturbation bounds.

    Undefined Pi (degenerate or rank-deficient geometry, singular features)
    counts as unstable. Pass ``draws`` to evaluate a fixed draw set instead of
    sampling. Boundary draws are checked first since they fail most often.
    """
    if desired_cTo is None:
        desired_cTo = default_desired_object_pose()
    if draws is None:
        if n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        rng = np.random.default_rng(0) if rng is None else rng
        interior, boundary = _interior_and_boundary(bounds, rng, n_samples, n_boundary)
        stages = [b for b in (boundary, interior) if len(b)]
    else:
        draws = list(draws) if not isinstance(draws, DrawBatch) else draws
        stages = [DrawBatch.from_draws(draws if len(draws) else [PerturbationDraw()])]
    try:
        for batch in stages:
            if not _all_positive_definite(stability_matrices(robot, pose, batch, desired_cTo)):
                return False
    except (DegenerateCable, RankDeficient, SingularInteraction, SingularRotation,
            NonpositiveDepth, np.linalg.LinAlgError, ValueError):
        return False
    return True


def default_desired_object_pose() -> Pose:
    """Goal object pose 9 cm in front of the camera, facing it."""
    return Pose(rxyz(-math.pi, 0.0, -math.pi), [0.0, 0.0, 0.09])


# --- workspace grids -------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    x: tuple[float, float] = (-0.55, 0.55)
    y: tuple[float, float] = (-0.55, 0.55)
    z: tuple[float, float] = (0.05, 1.15)
    shape: tuple[int, int, int] = (20, 20, 10)
    orientations: tuple = ((0.0, 0.0, 0.0),)  # rotation vectors, radians

    def __post_init__(self):
        if any(n < 1 for n in self.shape) or not self.orientations:
            raise ValueError("grid must be non-empty")

    def positions(self) -> np.ndarray:
        axes = [np.linspace(lo, hi, n) for (lo, hi), n in zip((self.x, self.y, self.z), self.shape)]
        X, Y, Z = np.meshgrid(*axes, indexing="ij")
        return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def rotations(self) -> list[np.ndarray]:
        return [exp_so3(r) for r in self.orientations]


def tilt_orientations(max_angle: float) -> tuple:
    """Identity plus rotations of +-``max_angle`` about the three base axes."""
    out = [(0.0, 0.0, 0.0)]
    for k in range(3):
        for sign in (1.0, -1.0):
            r = [0.0, 0.0, 0.0]
            r[k] = sign * max_angle
            out.append(tuple(r))
    return tuple(out)


@dataclass
class WorkspaceGrid:
    spec: GridSpec
    positions: np.ndarray  # (N, 3)
    sfw: np.ndarray  # (N, n_orient) bool
    csw: np.ndarray
    fc: np.ndarray

    def position_sets(self):
        """Per-position verdicts holding for every orientation of the set."""
        return self.sfw.all(axis=1), self.csw.all(axis=1), self.fc.all(axis=1)

    def counts(self) -> dict:
        sfw, csw, fc = self.position_sets()
        return {"cells": len(self.positions), "sfw": int(sfw.sum()),
                "csw": int(csw.sum()), "fc": int(fc.sum())}

    def rows(self):
        for i, p in enumerate(self.positions):
            for j in range(self.sfw.shape[1]):
                yield (p[0], p[1], p[2], j, bool(self.sfw[i, j]), bool(self.csw[i, j]),
                       bool(self.fc[i, j]))


def _cell_verdicts(args):
    robot, spec, bounds, n_samples, n_boundary, seed, desired_cTo, indices = args
    positions = spec.positions()
    rotations = spec.rotations()
    out = []
    for i in indices:
        sfw_row, csw_row = [], []
        for j, R in enumerate(rotations):
            pose = Pose(R, positions[i])
            try:
                sfw = static_feasible(robot, pose)
            except DegenerateCable:
                sfw = False
            rng = np.random.default_rng([seed, i, j])
            csw = csw_verdict(robot, pose, bounds, n_samples, n_boundary, rng, desired_cTo)
            sfw_row.append(sfw)
            csw_row.append(csw)
        out.append((i, sfw_row, csw_row))
    return out


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def compute_workspaces(
    robot: RobotDescription,
    spec: GridSpec,
    bounds: PerturbationBounds,
    n_samples: int = 64,
    n_boundary: int = 16,
    seed: int = 0,
    desired_cTo: Pose | None = None,
    workers: int | None = None,
) -> WorkspaceGrid:
    """SFW, CSW and their intersection on a position x orientation grid.

    Each cell draws from its own generator seeded by ``(seed, cell, orientation)``
    so the result does not depend on the worker count.
    """
    desired_cTo = default_desired_object_pose() if desired_cTo is None else desired_cTo
    positions = spec.positions()
    n, m = len(positions), len(spec.orientations)
    workers = worker_count() if workers is None else workers
    chunks = [c for c in np.array_split(np.arange(n), max(1, workers * 4)) if len(c)]
    jobs = [(robot, spec, bounds, n_samples, n_boundary, seed, desired_cTo, c) for c in chunks]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell_verdicts, jobs))
    else:
        results = [_cell_verdicts(job) for job in jobs]
    sfw = np.zeros((n, m), dtype=bool)
    csw = np.zeros((n, m), dtype=bool)
    for chunk in results:
        for i, s_row, c_row in chunk:
            sfw[i] = s_row
            csw[i] = c_row
    return WorkspaceGrid(spec, positions, sfw, csw, sfw & csw)


def tracking_diagnostic(Pi: np.ndarray, sdot_star) -> float:
    """Size of ``(Pi - I) sdot*``, the steady tracking bias source."""
    return float(np.linalg.norm((Pi - np.eye(6)) @ np.asarray(sdot_star, dtype=float)))


__all__ = [
    "DrawBatch",
    "GridSpec",
    "PerturbationBounds",
    "PerturbationDraw",
    "WorkspaceGrid",
    "compute_workspaces",
    "csw_verdict",
    "default_desired_object_pose",
    "estimated_model",
    "is_positive_definite",
    "perturbation_draws",
    "sample_batch",
    "sample_perturbation",
    "stability_matrices",
    "stability_matrix",
    "tilt_orientations",
    "tracking_diagnostic",
]
