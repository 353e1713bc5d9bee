from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from contourcal.camera import default_intrinsics_for_fov
from contourcal.geometry import EulerPose, RigidTransform, from_euler
from contourcal.instrument import forceps_mesh

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"


@st.composite
def transforms(draw, max_t=100.0):
    """Random rigid transform built from unconstrained Euler angles."""
    t = [draw(st.floats(-max_t, max_t)) for _ in range(3)]
    a = [draw(st.floats(-180.0, 180.0)) for _ in range(3)]
    return from_euler(EulerPose(*t, *a))


def random_transform(rng, max_t=100.0) -> RigidTransform:
    return from_euler(EulerPose(*rng.uniform(-max_t, max_t, 3), *rng.uniform(-180.0, 180.0, 3)))


@pytest.fixture(scope="session")
def cam():
    return default_intrinsics_for_fov(299, 299, 95.0)


@pytest.fixture(scope="session")
def mesh():
    return forceps_mesh()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict = {}


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
