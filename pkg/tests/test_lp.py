import numpy as np
from scipy.optimize import linprog

from cdprvs.lp import box_feasible


def _scipy_feasible(A, b, lo, hi):
    res = linprog(np.zeros(A.shape[1]), A_eq=A, b_eq=b, bounds=list(zip(lo, hi)), method="highs")
    return res.status == 0


def test_trivial_feasible_point():
    A = np.array([[1.0, 1.0]])
    ok, x = box_feasible(A, np.array([1.0]), np.zeros(2), np.ones(2))
    assert ok
    assert np.allclose(A @ x, [1.0], atol=1e-7)
    assert np.all(x >= -1e-9) and np.all(x <= 1 + 1e-9)


def test_trivial_infeasible():
    ok, x = box_feasible(np.array([[1.0, 1.0]]), np.array([3.0]), np.zeros(2), np.ones(2))
    assert not ok and x is None


def test_degenerate_box_is_a_point():
    A = np.array([[1.0, 2.0], [0.0, 1.0]])
    lo = hi = np.array([0.5, 0.25])
    assert box_feasible(A, A @ lo, lo, hi)[0]
    assert not box_feasible(A, A @ lo + 0.1, lo, hi)[0]


def test_agrees_with_highs_on_random_problems():
    rng = np.random.default_rng(7)
    mismatches = 0
    for _ in range(400):
        m, n = rng.integers(1, 7), 8
        A = rng.normal(size=(m, n))
        lo = rng.uniform(0, 1, size=n)
        hi = lo + rng.uniform(0.1, 5, size=n)
        if rng.random() < 0.5:  # feasible by construction
            b = A @ rng.uniform(lo, hi)
        else:
            b = rng.normal(size=m) * 10
        ok, x = box_feasible(A, b, lo, hi)
        if ok:
            assert np.allclose(A @ x, b, atol=1e-6)
            assert np.all(x >= lo - 1e-9) and np.all(x <= hi + 1e-9)
        mismatches += ok != _scipy_feasible(A, b, lo, hi)
    assert mismatches == 0


def test_inverted_box_is_empty():
    assert box_feasible(np.eye(2), np.zeros(2), np.ones(2), np.zeros(2)) == (False, None)
