import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fiberspec.dispersion import FiberDispersionModel, check_aliasing, gvd, propagation_delay, reference_fiber
from fiberspec.errors import DomainError, ModelError


def linear_model(slope=-0.20, anchor=(1531.0, 1874.0), domain=(1300.0, 1600.0)):
    lam0, t0 = anchor
    return FiberDispersionModel((t0 - slope * lam0, slope), domain)


def test_linear_model_reproduces_anchor_delay():
    m = linear_model()
    assert propagation_delay(m, 1531.0) == pytest.approx(1874.0, abs=1e-9)


def test_base_delay_is_added():
    m = FiberDispersionModel((0.0, -0.2), (1300, 1600), base_delay=16600.0)
    assert m.propagation_delay(1500.0) == pytest.approx(16600.0 - 300.0)


def test_constant_model_rejected():
    with pytest.raises(ModelError):
        FiberDispersionModel((1874.0,), (1300.0, 1600.0))


def test_turning_point_inside_domain_rejected():
    # derivative -0.2 + 0.002*(l - 1500) vanishes at 1600
    with pytest.raises(ModelError, match="monotonic"):
        FiberDispersionModel.from_gvd_line(((1500, -0.2), (1550, -0.1)), (1500, 0), (1400, 1700))


def test_empty_domain_rejected():
    with pytest.raises(ModelError):
        FiberDispersionModel((0, -0.2), (1500, 1500))


def test_group_index_from_transit_time():
    m = FiberDispersionModel((0.0, -0.2), (1300, 1600), base_delay=16_600.0, fiber_length=3300.0)
    # 3300 m / 16.6 us, by hand
    assert m.group_velocity == pytest.approx(1.98795e8, rel=1e-5)
    assert m.group_index == pytest.approx(1.508047, rel=1e-6)


def test_out_of_domain_names_interval():
    m = linear_model()
    with pytest.raises(DomainError, match=r"\[1300.0, 1600.0\]"):
        m.propagation_delay(1299.0)
    with pytest.raises(DomainError):
        gvd(m, 1700.0)


def test_reference_fiber_gvd_endpoints():
    f = reference_fiber()
    assert gvd(f, 1325.0) == pytest.approx(-0.11, abs=1e-12)
    assert gvd(f, 1575.0) == pytest.approx(-0.25, abs=1e-12)
    assert f.propagation_delay(1531.0) == pytest.approx(1874.0, abs=1e-9)


def test_linear_gvd_constant():
    m = linear_model(slope=-0.137)
    assert np.allclose(gvd(m, np.linspace(1300, 1600, 7)), -0.137)


def test_quadratic_gvd_matches_central_difference():
    m = FiberDispersionModel((3000.0, -1.5, 4.0e-4), (1300.0, 1600.0))
    for lam in (1310.0, 1450.0, 1590.0):
        h = 1e-3
        fd = (m.propagation_delay(lam + h) - m.propagation_delay(lam - h)) / (2 * h)
        assert gvd(m, lam) == pytest.approx(fd, rel=1e-6)


def test_aliasing_reference_support():
    f = reference_fiber()
    # spread oracle: quadrature of the GVD line over 1391..1531 nm
    lam = np.linspace(1391, 1531, 20001)
    d = -0.11 - 0.14 / 250 * (lam - 1325)
    spread = abs(np.trapezoid(d, lam))
    v80 = check_aliasing(f, (1391, 1531), 12.5)
    v1 = check_aliasing(f, (1391, 1531), 1000.0)
    assert v80.aliased and v1.ok
    assert v80.spread == pytest.approx(spread, rel=1e-6)
    assert v80.spread >= 0.11 * 140


def test_zero_width_support_ok():
    v = check_aliasing(reference_fiber(), (1500, 1500), 12.5)
    assert v.ok and v.spread == 0.0


def test_aliasing_rejects_bad_period():
    with pytest.raises(ValueError):
        check_aliasing(reference_fiber(), (1400, 1500), 0.0)


def test_file_round_trip(tmp_path):
    f = FiberDispersionModel((1234.5, -0.3, 1e-5), (1310.0, 1590.0), 16600.0, 3300.0)
    p = tmp_path / "fiber.txt"
    f.save(p)
    assert p.read_text().startswith("# dispersion-model v1\ndegree=2\n")
    assert FiberDispersionModel.load(p) == f


lam_pairs = st.tuples(st.floats(1300, 1600), st.floats(1300, 1600))


@settings(max_examples=200, deadline=None)
@given(lam_pairs, lam_pairs)
def test_monotonic_sign_is_constant(p, q):
    f = reference_fiber()
    signs = set()
    for a, b in (p, q):
        if a != b:
            lo, hi = min(a, b), max(a, b)
            signs.add(np.sign(f.propagation_delay(hi) - f.propagation_delay(lo)))
    assert len(signs) <= 1


@settings(max_examples=100, deadline=None)
@given(st.floats(1301, 1599))
def test_gvd_consistent_with_delay(lam):
    f = reference_fiber()
    h = 1e-3
    fd = (f.propagation_delay(lam + h) - f.propagation_delay(lam - h)) / (2 * h)
    assert f.gvd(lam) == pytest.approx(fd, rel=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.floats(1300, 1600), st.floats(0, 300), st.floats(0.01, 100), st.floats(1, 100))
def test_aliasing_monotone_in_period(lo, width, period, factor):
    f = reference_fiber()
    hi = min(lo + width, 1600.0)
    if f.check_aliasing((lo, hi), period).ok:
        assert f.check_aliasing((lo, hi), period * (1 + factor)).ok
