import numpy as np
import pytest
from hypothesis import settings

from cdprvs.cdpr import acrobot
from cdprvs.geometry import Pose, exp_so3

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def robot():
    return acrobot()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rotation(rng, max_angle=np.pi):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return exp_so3(axis * rng.uniform(0.0, max_angle))


def random_pose(rng, max_angle=np.pi, scale=1.0):
    return Pose(random_rotation(rng, max_angle), rng.normal(size=3) * scale)


def interior_pose(rng, max_angle=0.3):
    """Random pose well inside the ACROBOT frame."""
    t = np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(0.3, 0.9)])
    return Pose(random_rotation(rng, max_angle), t)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    def _report(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
