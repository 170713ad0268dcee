import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cdprvs.cdpr import acrobot, static_feasible
from cdprvs.control import EstimatedModel
from cdprvs.geometry import Pose
from cdprvs.stability import (
    DrawBatch,
    GridSpec,
    PerturbationBounds,
    PerturbationDraw,
    compute_workspaces,
    csw_verdict,
    default_desired_object_pose,
    estimated_model,
    is_positive_definite,
    perturbation_draws,
    sample_batch,
    sample_perturbation,
    stability_matrices,
    stability_matrix,
    tilt_orientations,
    tracking_diagnostic,
)
from cdprvs.vision import NoiseSpec, desired_features

from conftest import interior_pose

CENTER = Pose(np.eye(3), [0.0, 0.0, 0.85])
MINIMAL = PerturbationBounds(mp_pose_trans=0.05, mp_pose_rot=math.radians(10),
                           hand_eye_trans=0.01, hand_eye_rot=math.radians(3))
ALL_KINDS = PerturbationBounds(0.05, 0.1, 0.01, 0.05, 0.004, 0.003, NoiseSpec(0.002, 0.01, 0.001))
GOAL = default_desired_object_pose()


def _goal_pi(robot, pose, est):
    f = desired_features(GOAL)
    return stability_matrix(robot, est, pose, f, GOAL.translation[2])


def test_exact_model_gives_identity(robot, rng):
    n = 0
    while n < 50:
        pose = interior_pose(rng, 0.5)
        if not static_feasible(robot, pose):
            continue
        n += 1
        est = EstimatedModel(robot, pose, robot.camera_mount)
        assert np.allclose(_goal_pi(robot, pose, est), np.eye(6), atol=1e-9)


def test_batched_matrices_match_single(robot, rng):
    pose = interior_pose(rng)
    draws = perturbation_draws(ALL_KINDS, rng, 6, 2)
    batch = stability_matrices(robot, pose, draws, GOAL)
    for d, Pi in zip(draws, batch):
        if np.any(d.feature_trans) or np.any(d.feature_rot) or np.any(d.feature_center):
            continue
        assert np.allclose(_goal_pi(robot, pose, estimated_model(robot, pose, d)), Pi, atol=1e-10)


def test_minimal_regime_is_stable_at_center(robot):
    assert csw_verdict(robot, CENTER, MINIMAL, rng=np.random.default_rng(0))


def test_half_turn_hand_eye_error_is_unstable(robot):
    draw = PerturbationDraw(hand_eye_rot=[0.0, 0.0, math.pi])
    Pi = _goal_pi(robot, CENTER, estimated_model(robot, CENTER, draw))
    assert not is_positive_definite(Pi)
    assert not csw_verdict(robot, CENTER, PerturbationBounds(), draws=[draw])


def test_positive_definite_examples():
    assert is_positive_definite(np.eye(6))
    assert not is_positive_definite(np.diag([1, 1, 1, 1, 1, -1.0]))
    M = np.eye(6)
    M[0, 1] = 10.0
    assert not is_positive_definite(M)


def test_positive_definite_agrees_with_quadratic_form_scan(rng):
    x = rng.normal(size=(10_000, 6))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    checked = 0
    while checked < 100:
        M = rng.normal(size=(6, 6)) + rng.uniform(0, 6) * np.eye(6)
        lo = np.linalg.eigvalsh(0.5 * (M + M.T)).min()
        if -0.5 < lo < 0.1:  # too close to the boundary for a finite scan
            continue
        checked += 1
        scan = np.einsum("ni,ij,nj->n", x, M, x)
        assert is_positive_definite(M) == bool(np.all(scan > 0))


def test_zero_bounds_give_zero_draw(robot, rng):
    d = sample_perturbation(PerturbationBounds(), rng, "boundary")
    assert d.is_zero
    est = estimated_model(robot, CENTER, d)
    assert est.robot_est is robot and est.pose_est is CENTER


def test_sampling_is_reproducible():
    a = perturbation_draws(ALL_KINDS, np.random.default_rng(4))
    b = perturbation_draws(ALL_KINDS, np.random.default_rng(4))
    for k in ("pose_trans", "exit_offsets", "feature_center"):
        assert np.array_equal(getattr(a, k), getattr(b, k))


def test_sample_magnitudes_respect_bounds():
    b = PerturbationBounds(0.19, 0.15, 0.01, 0.5, 0.005, 0.002, NoiseSpec(0.001, 0.02, 0.003))
    checks = [("pose_trans", 0.19), ("pose_rot", 0.15), ("hand_eye_trans", 0.01),
              ("hand_eye_rot", 0.5), ("exit_offsets", 0.005), ("anchor_offsets", 0.002),
              ("feature_trans", 0.001), ("feature_rot", 0.02), ("feature_center", 0.003)]
    rng = np.random.default_rng(1)
    inner = sample_batch(b, rng, 10_000, "interior")
    outer = sample_batch(b, rng, 10_000, "boundary")
    for name, bound in checks:
        m_in = np.linalg.norm(getattr(inner, name), axis=-1)
        m_out = np.linalg.norm(getattr(outer, name), axis=-1)
        assert m_in.max() <= bound * (1 + 1e-12)
        assert m_out.max() <= bound * (1 + 1e-12)
        assert m_out.min() >= 0.99 * bound
        assert abs(m_in.mean() / bound - 0.5) < 0.02  # uniform magnitude


def test_sampling_mode_validation(rng):
    with pytest.raises(ValueError):
        sample_perturbation(PerturbationBounds(), rng, "edge")
    with pytest.raises(ValueError):
        PerturbationBounds(mp_pose_trans=-0.1)


def test_draw_batch_round_trip(rng):
    batch = perturbation_draws(ALL_KINDS, rng, 3, 1)
    again = DrawBatch.from_draws(list(batch))
    assert np.array_equal(again.anchor_offsets, batch.anchor_offsets)
    assert len(again) == 4


def test_zero_bounds_verdict_true_where_defined(robot, rng):
    for _ in range(10):
        assert csw_verdict(robot, interior_pose(rng), PerturbationBounds(), 4, 2, rng)


def test_csw_needs_a_sample(robot):
    with pytest.raises(ValueError):
        csw_verdict(robot, CENTER, MINIMAL, n_samples=0)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.integers(0, 2**16))
def test_csw_verdict_monotone_in_bounds(small_k, extra, seed):
    robot = acrobot()
    large_k = small_k + extra
    base = PerturbationBounds(0.1, math.radians(12), 0.02, math.radians(12), 0.004, 0.004)

    def scaled(k):
        return PerturbationBounds(*(k * getattr(base, f) for f in
                                    ("mp_pose_trans", "mp_pose_rot", "hand_eye_trans",
                                     "hand_eye_rot", "exit_point", "anchor_point")))

    # unit draws scaled by each bound set: B_small is a subset of B_large
    unit = perturbation_draws(scaled(1.0), np.random.default_rng(seed), 16, 4)

    def draws_for(k):
        return DrawBatch(**{f: getattr(unit, f) * k for f in DrawBatch.__dataclass_fields__})

    pose = Pose(np.eye(3), [0.1, -0.1, 0.7])
    big = csw_verdict(robot, pose, scaled(large_k), draws=draws_for(large_k))
    small = csw_verdict(robot, pose, scaled(small_k), draws=draws_for(small_k))
    assert (not big) or small


def test_seeded_draws_scale_with_bounds():
    a = perturbation_draws(MINIMAL, np.random.default_rng(3), 8, 2)
    double = PerturbationBounds(0.1, math.radians(20), 0.02, math.radians(6))
    b = perturbation_draws(double, np.random.default_rng(3), 8, 2)
    assert np.allclose(b.pose_trans, 2 * a.pose_trans)
    assert np.allclose(b.hand_eye_rot, 2 * a.hand_eye_rot)


SMALL_GRID = GridSpec(shape=(5, 5, 4))


def test_workspace_sets_and_intersection(robot):
    grid = compute_workspaces(robot, SMALL_GRID, MINIMAL, 8, 4, seed=1, workers=1)
    assert np.array_equal(grid.fc, grid.sfw & grid.csw)
    counts = grid.counts()
    assert counts["fc"] <= min(counts["sfw"], counts["csw"])
    assert counts["sfw"] > 0
    sfw_pos, _, _ = grid.position_sets()
    assert np.all(grid.positions[sfw_pos, 2] < 1.2)


def test_workspace_above_exit_plane_is_infeasible(robot):
    spec = GridSpec(x=(-0.3, 0.3), y=(-0.3, 0.3), z=(1.25, 1.4), shape=(3, 3, 2))
    grid = compute_workspaces(robot, spec, PerturbationBounds(), 2, 1, workers=1)
    assert grid.counts()["sfw"] == 0


def test_workspace_monotone_across_nested_bounds(robot):
    counts = []
    for k in (0.0, 0.5, 1.0, 2.0):
        b = PerturbationBounds(*(k * getattr(MINIMAL, f) for f in
                                 ("mp_pose_trans", "mp_pose_rot", "hand_eye_trans",
                                  "hand_eye_rot")))
        counts.append(compute_workspaces(robot, SMALL_GRID, b, 8, 4, seed=2,
                                         workers=1).counts()["csw"])
    assert counts[0] == SMALL_GRID.positions().shape[0]
    assert counts == sorted(counts, reverse=True)


def test_workspace_independent_of_worker_count(robot):
    spec = GridSpec(shape=(3, 3, 2), orientations=tilt_orientations(0.3)[:2])
    one = compute_workspaces(robot, spec, MINIMAL, 4, 2, seed=5, workers=1)
    two = compute_workspaces(robot, spec, MINIMAL, 4, 2, seed=5, workers=2)
    assert list(one.rows()) == list(two.rows())


def test_tilt_orientations():
    o = tilt_orientations(0.5)
    assert len(o) == 7 and o[0] == (0.0, 0.0, 0.0)
    assert all(abs(np.linalg.norm(r) - 0.5) < 1e-15 for r in o[1:])


def test_tracking_diagnostic():
    assert tracking_diagnostic(np.eye(6), np.ones(6)) == 0.0
    Pi = np.eye(6)
    Pi[0, 0] = 2.0
    assert tracking_diagnostic(Pi, np.zeros(6)) == 0.0
    assert tracking_diagnostic(Pi, np.eye(6)[0] * 3) == pytest.approx(3.0)
