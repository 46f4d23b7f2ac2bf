import numpy as np
import pytest

from action_images.geometry import CameraView, look_at
from action_images.harness import default_rig

# (criterion, passed, detail) lines collected by test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def rig64():
    """Default two-view rig at 64x64: cheap enough for per-test encoding."""
    return default_rig(64, 2)


@pytest.fixture(scope="session")
def rig128():
    return default_rig(128, 2)


def random_camera(rng, width=96, height=72):
    """A camera somewhere on a 1-3 m shell looking near the origin."""
    d = rng.normal(size=3)
    eye = d / np.linalg.norm(d) * rng.uniform(1.0, 3.0)
    if abs(eye[2]) > 0.95 * np.linalg.norm(eye):
        eye[0] += 0.5
    target = rng.uniform(-0.2, 0.2, size=3)
    R, t = look_at(eye, target)
    f = rng.uniform(0.5, 1.5) * width
    return CameraView(f, f * rng.uniform(0.9, 1.1), width * rng.uniform(0.4, 0.6),
                      height * rng.uniform(0.4, 0.6), R, t, width, height)
