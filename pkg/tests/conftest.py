import warnings

import pytest

from fiberspec.calibration import REFERENCE_POINTS, calibration_from_dispersion, fit_calibration
from fiberspec.calibration import CalibrationWarning
from fiberspec.dispersion import reference_fiber
from fiberspec.pdc_source import reference_model

_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def fiber():
    return reference_fiber()


@pytest.fixture(scope="session")
def curve(fiber):
    # dense inverse of the reference fiber over the band the tests use
    return calibration_from_dispersion(fiber, wavelength_range=(1320.0, 1580.0))


@pytest.fixture(scope="session")
def triple_curve():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CalibrationWarning)
        return fit_calibration(REFERENCE_POINTS, 2, strict=False)


@pytest.fixture(scope="session")
def pdc():
    return reference_model()


@pytest.fixture(scope="session")
def million_pairs(pdc):
    from fiberspec.pdc_source import sample_pairs

    return sample_pairs(pdc, 1_000_000, seed=20)


@pytest.fixture
def acceptance():
    def record(number: int, passed: bool, detail: str):
        _ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def fd_slope(f, x, h=1e-3):
    return (f(x + h) - f(x - h)) / (2 * h)


