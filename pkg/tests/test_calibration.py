import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fiberspec.calibration import (
    REFERENCE_POINTS,
    CalibrationCurve,
    CalibrationPoint,
    fit_calibration,
    linear_curve,
    offset_shift,
    read_points,
    resolution_at,
    time_at,
    wavelength_at,
    write_points,
)
from fiberspec.errors import (
    CalibrationError,
    CalibrationWarning,
    DomainError,
    NonMonotonicCalibrationError,
)


def lagrange(xs, ys, x):
    total = 0.0
    for j, (xj, yj) in enumerate(zip(xs, ys)):
        term = yj
        for m, xm in enumerate(xs):
            if m != j:
                term *= (x - xm) / (xj - xm)
        total += term
    return total


TRIPLE_T = [p.arrival_time for p in REFERENCE_POINTS]
TRIPLE_L = [p.reference_wavelength for p in REFERENCE_POINTS]

# monotone test quadratic: 1500 - 3 (t - 1900) + 0.01 (t - 1900)^2 on [1850, 1950]
QUAD = (43300.0, -41.0, 0.01)


def quad(t):
    return 1500 - 3 * (t - 1900) + 0.01 * (t - 1900) ** 2


def test_reference_triple_interpolates_exactly(triple_curve):
    assert max(abs(r) for r in triple_curve.fit_residuals) < 1e-9
    for t, lam in zip(TRIPLE_T, TRIPLE_L):
        assert triple_curve(t) == pytest.approx(lam, abs=1e-9)


def test_reference_triple_is_not_monotonic_on_its_span():
    with pytest.raises(NonMonotonicCalibrationError, match="1950"):
        fit_calibration(REFERENCE_POINTS, 2)
    with pytest.warns(CalibrationWarning):
        c = fit_calibration(REFERENCE_POINTS, 2, strict=False)
    assert not c.monotonic


def test_two_points_give_the_line():
    c = fit_calibration([(1500.0, 1900.0), (1480.0, 1905.0)], 1)
    assert c.coefficients == pytest.approx([1500 + 4 * 1900, -4.0], rel=1e-12)


def test_noise_free_quadratic_recovered():
    t = np.linspace(1850, 1950, 50)
    c = fit_calibration(list(zip(quad(t), t)), 2)
    assert c.coefficients == pytest.approx(QUAD, rel=1e-9)
    assert c.time_domain == (1850.0, 1950.0)


def test_fit_errors():
    with pytest.raises(CalibrationError, match="underdetermined"):
        fit_calibration([(1500, 1900), (1490, 1901)], 2)
    with pytest.raises(CalibrationError):
        fit_calibration([(1500, 1900), (1490, 1900), (1480, 1902)], 1)
    with pytest.raises(CalibrationError):
        fit_calibration([(1500, 1900), (1490, 1901)], 0)
    with pytest.raises(CalibrationError):
        fit_calibration([(-1, 1900), (1490, 1901)], 1)


def test_fit_optimality():
    rng = np.random.default_rng(5)
    t = np.linspace(1850, 1950, 40)
    lam = quad(t) + rng.normal(0, 0.05, t.size)
    c = fit_calibration(list(zip(lam, t)), 2)
    coef = c.coefficients

    def ssr(cf):
        return np.sum((lam - np.polynomial.polynomial.polyval(t, cf)) ** 2)

    best = ssr(coef)
    for k in range(3):
        for sign in (1, -1):
            cf = coef.copy()
            cf[k] += sign * 1e-3 * abs(cf[k])
            assert ssr(cf) >= best


def test_wavelength_at_points_and_flag(triple_curve):
    ev = wavelength_at(triple_curve, 1884.0)
    assert ev.wavelength == pytest.approx(1484.0, abs=1e-9) and not ev.extrapolated
    ev = wavelength_at(triple_curve, 1874.0)
    assert not ev.extrapolated
    ev = wavelength_at(triple_curve, 2090.0)
    assert ev.extrapolated
    assert ev.wavelength == pytest.approx(lagrange(TRIPLE_T, TRIPLE_L, 2090.0), rel=1e-10)


def test_time_at_reference_pair(triple_curve):
    assert time_at(triple_curve, 1484.0) == pytest.approx(1884.0, abs=1e-4)


def test_time_at_matches_quadratic_formula():
    t = np.linspace(1850, 1950, 11)
    c = fit_calibration(list(zip(quad(t), t)), 2)
    for lam in (1400.0, 1500.0, 1640.0):
        # 0.01 x^2 - 3 x + (1500 - lam) = 0 with x = t - 1900, smaller root
        disc = 9 - 4 * 0.01 * (1500 - lam)
        x = (3 - np.sqrt(disc)) / 0.02
        assert time_at(c, lam) == pytest.approx(1900 + x, abs=1e-4)


def test_time_at_out_of_range():
    t = np.linspace(1850, 1950, 11)
    c = fit_calibration(list(zip(quad(t), t)), 2)
    with pytest.raises(DomainError):
        time_at(c, 1700.0)


def test_resolution_values():
    c = linear_curve(-4.0, (1900.0, 1550.0), (1850.0, 1950.0))
    assert resolution_at(c, 1550.0, 0.180) == pytest.approx(0.72, abs=1e-12)
    c = linear_curve(-1 / 0.11, (1900.0, 1325.0), (1850.0, 1950.0))
    assert resolution_at(c, 1325.0, 0.180) == pytest.approx(1.63636, abs=1e-5)
    assert resolution_at(c, 1325.0, 1e-9) == pytest.approx(1e-9 / 0.11)
    with pytest.raises(ValueError):
        resolution_at(c, 1325.0, 0.0)


def test_offset_shift(triple_curve):
    same = offset_shift(triple_curve, 0.0)
    assert same(np.array(TRIPLE_T)).tolist() == triple_curve(np.array(TRIPLE_T)).tolist()
    s = offset_shift(triple_curve, 10.0)
    assert wavelength_at(s, 1874.0).wavelength == wavelength_at(triple_curve, 1884.0).wavelength
    assert s(1874.0) == pytest.approx(1484.0, abs=1e-9)
    assert s.time_domain == (1864.0, 1980.0)
    back = offset_shift(s, -10.0)
    assert back.coefficients == pytest.approx(triple_curve.coefficients, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(1800, 2000))
def test_shift_coherence(triple_curve, a, b, tau):
    two = offset_shift(offset_shift(triple_curve, a), b)
    one = offset_shift(triple_curve, a + b)
    assert two(tau) == one(tau)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0))
def test_round_trip(curve, frac):
    lo, hi = curve.time_domain
    t0 = lo + frac * (hi - lo)
    assert time_at(curve, wavelength_at(curve, t0).wavelength) == pytest.approx(t0, abs=1e-4)


def test_from_dispersion_is_accurate(fiber, curve):
    lam = np.linspace(1320, 1580, 501)
    tau = fiber.propagation_delay(lam)
    assert np.max(np.abs(curve(tau) - lam)) < 2e-3
    assert np.max(np.abs(curve.derivative(tau) * fiber.gvd(lam) - 1)) < 1e-3


def test_curve_file_round_trip(tmp_path, triple_curve):
    s = offset_shift(triple_curve, 3.25)
    p = tmp_path / "c.txt"
    s.save(p, ["seed=1"])
    text = p.read_text()
    assert text.startswith("# calibration-curve v1\n")
    back = CalibrationCurve.load(p)
    t = np.linspace(1860, 2000, 15)
    assert back(t).tolist() == s(t).tolist()
    assert back.fit_residuals == s.fit_residuals


def test_plain_coefficient_file(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# calibration-curve v1\ndegree=1\ncoeff0=9100\ncoeff1=-4\ndomain=1850,1950\n")
    c = CalibrationCurve.load(p)
    assert c(1900.0) == pytest.approx(1500.0)


def test_points_file(tmp_path):
    p = tmp_path / "pts.txt"
    p.write_text("# reference peaks\n1531,1874\n1484,1884  # second\n\n1391,1990\n")
    assert read_points(p) == list(REFERENCE_POINTS)
    q = tmp_path / "out.txt"
    write_points(q, REFERENCE_POINTS)
    assert read_points(q) == list(REFERENCE_POINTS)
    p.write_text("1531;1874\n")
    with pytest.raises(ValueError, match=":1:"):
        read_points(p)


def test_point_type():
    assert CalibrationPoint(1531.0, 1874.0).arrival_time == 1874.0
