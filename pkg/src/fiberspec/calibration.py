"""Empirical time-to-wavelength calibration curves.

A curve maps arrival time (ns) to wavelength (nm). It is fitted by least
squares against reference pairs and stored as a polynomial in a centred,
scaled time variable so that evaluation near 2000 ns stays well conditioned.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from . import kvfile
from .errors import (
    CalibrationError,
    CalibrationWarning,
    DomainError,
    NonMonotonicCalibrationError,
    SingularMappingError,
)

HEADER = "calibration-curve v1"
_BISECT_TOL = 1e-9  # ns; well below the 1e-4 ns contract


class CalibrationPoint(NamedTuple):
    reference_wavelength: float  # nm
    arrival_time: float  # ns


class Evaluation(NamedTuple):
    wavelength: np.ndarray | float
    extrapolated: np.ndarray | bool


@dataclass(frozen=True)
class CalibrationCurve:
    """Polynomial ``c(tau)`` valid on ``time_domain``.

    ``scaled_coefficients`` are ascending powers of
    ``x = ((tau + offset) - center) / scale``. Use :attr:`coefficients` for
    plain powers of ``tau``.
    """

    scaled_coefficients: tuple[float, ...]
    center: float
    scale: float
    time_domain: tuple[float, float]
    fit_residuals: tuple[float, ...] = ()
    offset: float = 0.0
    _dq: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        q = tuple(float(c) for c in self.scaled_coefficients)
        object.__setattr__(self, "scaled_coefficients", q)
        object.__setattr__(self, "time_domain", tuple(float(t) for t in self.time_domain))
        object.__setattr__(self, "fit_residuals", tuple(float(r) for r in self.fit_residuals))
        if self.scale <= 0:
            raise CalibrationError("scale must be positive")
        if len(q) < 2:
            raise CalibrationError("calibration polynomial must have degree >= 1")
        object.__setattr__(self, "_dq", P.polyder(np.asarray(q)))

    @property
    def degree(self) -> int:
        return len(self.scaled_coefficients) - 1

    @property
    def coefficients(self) -> np.ndarray:
        """Ascending coefficients of ``c`` as a polynomial in ``tau``."""
        poly = np.polynomial.Polynomial(
            self.scaled_coefficients,
            domain=[self.center - self.offset - self.scale, self.center - self.offset + self.scale],
            window=[-1.0, 1.0],
        )
        return poly.convert().coef

    def _x(self, tau):
        return ((np.asarray(tau, dtype=float) + self.offset) - self.center) / self.scale

    def __call__(self, tau):
        return P.polyval(self._x(tau), self.scaled_coefficients)

    def derivative(self, tau):
        """dc/dtau in nm/ns."""
        return P.polyval(self._x(tau), self._dq) / self.scale

    def in_domain(self, tau):
        lo, hi = self.time_domain
        tau = np.asarray(tau, dtype=float)
        return (tau >= lo) & (tau <= hi)

    def critical_times(self) -> np.ndarray:
        """Times strictly inside the domain where dc/dtau vanishes."""
        if len(self._dq) < 2:
            return np.empty(0)
        roots = P.polyroots(self._dq)
        real = roots[np.abs(roots.imag) < 1e-12].real
        t = real * self.scale + self.center - self.offset
        lo, hi = self.time_domain
        return np.sort(t[(t > lo) & (t < hi)])

    @property
    def monotonic(self) -> bool:
        lo, hi = self.time_domain
        if self.critical_times().size:
            return False
        d = self.derivative(np.linspace(lo, hi, 1001))
        return bool(np.all(d > 0) or np.all(d < 0))

    def _pieces(self) -> list[tuple[float, float]]:
        lo, hi = self.time_domain
        edges = [lo, *self.critical_times().tolist(), hi]
        return list(zip(edges[:-1], edges[1:]))

    def wavelength_range(self) -> tuple[float, float]:
        lo, hi = self.time_domain
        vals = self(np.array([lo, hi, *self.critical_times()]))
        return float(vals.min()), float(vals.max())

    def dumps(self, comments: Sequence[str] = ()) -> str:
        f = kvfile.format_float
        items = [("degree", str(self.degree))]
        items += [(f"coeff{i}", f(c)) for i, c in enumerate(self.coefficients)]
        lo, hi = self.time_domain
        items += [
            ("domain", f"{f(lo)},{f(hi)}"),
            ("center_ns", f(self.center)),
            ("scale_ns", f(self.scale)),
            ("offset_ns", f(self.offset)),
        ]
        items += [(f"scaled_coeff{i}", f(c)) for i, c in enumerate(self.scaled_coefficients)]
        items += [(f"residual{i}", f(r)) for i, r in enumerate(self.fit_residuals)]
        items.append(("monotonic", str(self.monotonic).lower()))
        return kvfile.dumps(HEADER, items, comments)

    @classmethod
    def loads(cls, text: str) -> "CalibrationCurve":
        kv = kvfile.loads(text, HEADER)
        degree = int(kv["degree"])
        domain = kvfile.parse_pair(kv["domain"])
        residuals = []
        i = 0
        while f"residual{i}" in kv:
            residuals.append(float(kv[f"residual{i}"]))
            i += 1
        if "scaled_coeff0" in kv:
            q = [float(kv[f"scaled_coeff{i}"]) for i in range(degree + 1)]
            return cls(q, float(kv["center_ns"]), float(kv["scale_ns"]), domain,
                       residuals, float(kv.get("offset_ns", 0.0)))
        coeffs = [float(kv[f"coeff{i}"]) for i in range(degree + 1)]
        return cls(coeffs, 0.0, 1.0, domain, residuals)

    def save(self, path: str | Path, comments: Sequence[str] = ()) -> None:
        Path(path).write_text(self.dumps(comments))

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationCurve":
        return cls.loads(Path(path).read_text())


def _as_points(points: Iterable) -> list[CalibrationPoint]:
    return [p if isinstance(p, CalibrationPoint) else CalibrationPoint(*p) for p in points]


def fit_calibration(points: Iterable, degree: int = 2, strict: bool = True) -> CalibrationCurve:
    """Least-squares polynomial ``wavelength = c(arrival_time)``.

    Parameters
    ----------
    points : iterable of CalibrationPoint or (wavelength_nm, time_ns)
    degree : polynomial degree, at least 1
    strict : if True a curve that is not strictly monotonic on the span of
        the fitted times raises NonMonotonicCalibrationError; otherwise a
        CalibrationWarning is issued and the curve is returned.
    """
    pts = _as_points(points)
    if degree < 1:
        raise CalibrationError("degree must be >= 1")
    if len(pts) < degree + 1:
        raise CalibrationError(
            f"underdetermined fit: {len(pts)} points for degree {degree} "
            f"(need at least {degree + 1})"
        )
    lam = np.array([p.reference_wavelength for p in pts], dtype=float)
    tau = np.array([p.arrival_time for p in pts], dtype=float)
    if np.any(lam <= 0):
        raise CalibrationError("reference wavelengths must be positive")
    if len(np.unique(tau)) != len(tau):
        raise CalibrationError("arrival times must be pairwise distinct")

    center = float(tau.mean())
    scale = float(np.max(np.abs(tau - center)))
    x = (tau - center) / scale
    V = np.vander(x, degree + 1, increasing=True)
    q = np.linalg.solve(V.T @ V, V.T @ lam)
    # one refinement step against the normal equations' rounding
    q += np.linalg.solve(V.T @ V, V.T @ (lam - V @ q))

    curve = CalibrationCurve(q, center, scale, (float(tau.min()), float(tau.max())))
    curve = replace(curve, fit_residuals=tuple(lam - curve(tau)))
    if not curve.monotonic:
        crit = curve.critical_times()
        where = f"dc/dtau vanishes at {', '.join(f'{t:.3f}' for t in crit)} ns" if crit.size \
            else "derivative changes sign"
        msg = (f"calibration curve is not monotonic on [{tau.min()}, {tau.max()}] ns: "
               f"{where}; it cannot serve as a one-to-one time-to-wavelength map there")
        if strict:
            raise NonMonotonicCalibrationError(msg)
        warnings.warn(msg, CalibrationWarning, stacklevel=2)
    return curve


def wavelength_at(curve: CalibrationCurve, tau) -> Evaluation:
    lam = curve(tau)
    flag = ~curve.in_domain(tau)
    if np.ndim(lam) == 0:
        return Evaluation(float(lam), bool(flag))
    return Evaluation(lam, flag)


def _bisect(curve: CalibrationCurve, lam: np.ndarray, a: float, b: float) -> np.ndarray:
    lo = np.full(lam.shape, a)
    hi = np.full(lam.shape, b)
    increasing = curve(b) > curve(a)
    n = max(1, math.ceil(math.log2(max(b - a, _BISECT_TOL) / _BISECT_TOL)) + 1)
    for _ in range(n):
        mid = 0.5 * (lo + hi)
        above = curve(mid) > lam
        go_left = above if increasing else ~above
        hi = np.where(go_left, mid, hi)
        lo = np.where(go_left, lo, mid)
    return 0.5 * (lo + hi)


def time_at(curve: CalibrationCurve, wavelength):
    """Inverse of the curve on its time domain, by bisection."""
    lam = np.atleast_1d(np.asarray(wavelength, dtype=float))
    out = np.full(lam.shape, np.nan)
    hits = np.zeros(lam.shape, dtype=int)
    for a, b in curve._pieces():
        ca, cb = float(curve(a)), float(curve(b))
        inside = (lam >= min(ca, cb)) & (lam <= max(ca, cb))
        if np.any(inside & (hits == 0)):
            sel = inside & (hits == 0)
            out[sel] = _bisect(curve, lam[sel], a, b)
        hits += inside
    # a value shared by adjacent pieces exactly at a turning point counts once
    crit_vals = curve(curve.critical_times())
    for v in np.atleast_1d(crit_vals):
        hits[lam == v] -= 1
    if np.any(hits == 0):
        wmin, wmax = curve.wavelength_range()
        raise DomainError(f"wavelength outside calibration range [{wmin}, {wmax}] nm")
    if np.any(hits > 1):
        raise DomainError("wavelength has more than one preimage on a non-monotonic curve")
    return float(out[0]) if np.ndim(wavelength) == 0 else out


def resolution_at(curve: CalibrationCurve, wavelength, timing_sigma: float):
    """Wavelength resolution (nm) for a Gaussian timing spread ``timing_sigma`` (ns)."""
    if timing_sigma <= 0:
        raise ValueError("timing_sigma must be positive")
    slope = np.abs(curve.derivative(time_at(curve, wavelength)))
    if np.any(slope == 0):
        raise SingularMappingError("dc/dtau is zero at the requested wavelength")
    res = timing_sigma * slope
    return float(res) if np.ndim(res) == 0 else res


def offset_shift(curve: CalibrationCurve, delta: float) -> CalibrationCurve:
    """Return ``tau -> c(tau + delta)`` with its domain moved by ``-delta``."""
    lo, hi = curve.time_domain
    return replace(curve, offset=curve.offset + delta, time_domain=(lo - delta, hi - delta))


def linear_curve(slope: float, anchor: tuple[float, float],
                 time_domain: tuple[float, float]) -> CalibrationCurve:
    """Straight-line curve through ``anchor = (tau_ns, wavelength_nm)``."""
    t0, l0 = anchor
    return CalibrationCurve((l0, slope), t0, 1.0, time_domain)


def calibration_from_dispersion(fiber, degree: int = 10, samples: int = 401,
                                wavelength_range: tuple[float, float] | None = None) -> CalibrationCurve:
    """Fit ``c(tau)`` to a dense sampling of a fiber model's delay curve.

    The inverse of a quadratic delay curve is not a polynomial, so a high
    degree over the band actually in use keeps the mapping and its
    derivative accurate to ~1e-4 relative.
    """
    lo, hi = wavelength_range or fiber.wavelength_domain
    lam = np.linspace(lo, hi, samples)
    tau = fiber.propagation_delay(lam)
    return fit_calibration(list(zip(lam, tau)), degree)


def read_points(path: str | Path) -> list[CalibrationPoint]:
    pts = []
    for n, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            lam, tau = (float(v) for v in line.split(","))
        except ValueError:
            raise ValueError(f"{path}:{n}: expected '<wavelength_nm>,<arrival_time_ns>'") from None
        pts.append(CalibrationPoint(lam, tau))
    return pts


def write_points(path: str | Path, points: Iterable) -> None:
    lines = ["# wavelength_nm,arrival_time_ns"]
    lines += [f"{kvfile.format_float(p[0])},{kvfile.format_float(p[1])}" for p in _as_points(points)]
    Path(path).write_text("\n".join(lines) + "\n")


REFERENCE_POINTS = (
    CalibrationPoint(1531.0, 1874.0),
    CalibrationPoint(1484.0, 1884.0),
    CalibrationPoint(1391.0, 1990.0),
)
