import numpy as np
import pytest

from gripset.geometry import GripperSpec

_CRITERIA = []


def record_criterion(name, passed, detail=""):
    _CRITERIA.append((name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _CRITERIA:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status}  {name}" + (f"  ({detail})" if detail else ""))


@pytest.fixture
def spec():
    return GripperSpec()


@pytest.fixture
def small_spec():
    """2x2x2 voxels of 1 cm."""
    return GripperSpec(width=0.02, height=0.02, depth=0.02, resolution=0.01)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
