"""Forward model of group delay in a dispersive fiber.

Wavelengths are in nm and delays in ns throughout. The delay is
``base_delay + p(wavelength)`` where ``p`` is a polynomial with ascending
coefficients; its derivative is the group velocity dispersion in ns/nm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial import polynomial as P

from . import kvfile
from .errors import DomainError, ModelError

SPEED_OF_LIGHT = 299_792_458.0  # m/s
_MONOTONIC_GRID = 1000
HEADER = "dispersion-model v1"


@dataclass(frozen=True)
class AliasingVerdict:
    aliased: bool
    spread: float  # ns

    @property
    def ok(self) -> bool:
        return not self.aliased


@dataclass(frozen=True)
class FiberDispersionModel:
    delay_coefficients: tuple[float, ...]
    wavelength_domain: tuple[float, float]
    base_delay: float = 0.0
    fiber_length: float = 0.0
    _deriv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.delay_coefficients)
        lo, hi = (float(x) for x in self.wavelength_domain)
        object.__setattr__(self, "delay_coefficients", coeffs)
        object.__setattr__(self, "wavelength_domain", (lo, hi))
        if not lo < hi:
            raise ModelError(f"empty wavelength domain [{lo}, {hi}]")
        if len(coeffs) < 2:
            raise ModelError("delay polynomial must have degree >= 1 (nonzero GVD)")
        deriv = P.polyder(np.asarray(coeffs))
        object.__setattr__(self, "_deriv", deriv)
        d = P.polyval(np.linspace(lo, hi, _MONOTONIC_GRID), deriv)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ModelError(
                "group delay is not strictly monotonic on "
                f"[{lo}, {hi}] nm (GVD changes sign or vanishes)"
            )

    @classmethod
    def from_gvd_line(
        cls,
        gvd_points: tuple[tuple[float, float], tuple[float, float]],
        anchor: tuple[float, float],
        wavelength_domain: tuple[float, float],
        base_delay: float = 0.0,
        fiber_length: float = 0.0,
    ) -> "FiberDispersionModel":
        """Quadratic delay whose GVD is linear through two (nm, ns/nm) points.

        ``anchor`` is a (wavelength, relative delay) pair the polynomial
        passes through; ``base_delay`` is added on top of it.
        """
        (l1, d1), (l2, d2) = gvd_points
        slope = (d2 - d1) / (l2 - l1)
        # GVD(l) = d1 + slope*(l - l1)  ->  a1 + 2*a2*l
        a2 = slope / 2.0
        a1 = d1 - slope * l1
        la, ta = anchor
        a0 = ta - a1 * la - a2 * la * la
        return cls((a0, a1, a2), wavelength_domain, base_delay, fiber_length)

    @property
    def degree(self) -> int:
        return len(self.delay_coefficients) - 1

    def _check(self, wavelength) -> np.ndarray:
        lam = np.asarray(wavelength, dtype=float)
        lo, hi = self.wavelength_domain
        if np.any((lam < lo) | (lam > hi)) or np.any(np.isnan(lam)):
            raise DomainError(f"wavelength outside valid interval [{lo}, {hi}] nm")
        return lam

    def propagation_delay(self, wavelength):
        lam = self._check(wavelength)
        return self.base_delay + P.polyval(lam, self.delay_coefficients)

    def gvd(self, wavelength):
        lam = self._check(wavelength)
        return P.polyval(lam, self._deriv)

    def check_aliasing(self, support: tuple[float, float], repetition_period: float) -> AliasingVerdict:
        if repetition_period <= 0:
            raise ValueError("repetition period must be positive")
        lo, hi = support
        if lo > hi:
            raise ValueError(f"support interval reversed: [{lo}, {hi}]")
        t = self.propagation_delay([lo, hi])
        spread = float(abs(t[1] - t[0]))
        return AliasingVerdict(spread >= repetition_period, spread)

    @property
    def group_velocity(self) -> float:
        """Mean group velocity in m/s implied by fiber_length and base_delay."""
        if self.base_delay <= 0 or self.fiber_length <= 0:
            raise ModelError("group velocity needs positive fiber_length and base_delay")
        return self.fiber_length / (self.base_delay * 1e-9)

    @property
    def group_index(self) -> float:
        return SPEED_OF_LIGHT / self.group_velocity

    def dumps(self) -> str:
        items = [("degree", str(self.degree))]
        items += [(f"coeff{i}", kvfile.format_float(c)) for i, c in enumerate(self.delay_coefficients)]
        lo, hi = self.wavelength_domain
        items += [
            ("domain", f"{kvfile.format_float(lo)},{kvfile.format_float(hi)}"),
            ("base_delay_ns", kvfile.format_float(self.base_delay)),
            ("fiber_length_m", kvfile.format_float(self.fiber_length)),
        ]
        return kvfile.dumps(HEADER, items)

    @classmethod
    def loads(cls, text: str) -> "FiberDispersionModel":
        kv = kvfile.loads(text, HEADER)
        degree = int(kv["degree"])
        coeffs = tuple(float(kv[f"coeff{i}"]) for i in range(degree + 1))
        return cls(
            coeffs,
            kvfile.parse_pair(kv["domain"]),
            float(kv.get("base_delay_ns", 0.0)),
            float(kv.get("fiber_length_m", 0.0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "FiberDispersionModel":
        return cls.loads(Path(path).read_text())


def propagation_delay(model: FiberDispersionModel, wavelength):
    return model.propagation_delay(wavelength)


def gvd(model: FiberDispersionModel, wavelength):
    return model.gvd(wavelength)


def check_aliasing(model: FiberDispersionModel, support, repetition_period: float) -> AliasingVerdict:
    return model.check_aliasing(support, repetition_period)


def reference_fiber(base_delay: float = 0.0) -> FiberDispersionModel:
    """Self-consistent DCF stand-in.

    GVD runs linearly from -0.11 ns/nm at 1325 nm to -0.25 ns/nm at 1575 nm
    and the relative delay at 1531 nm is 1874 ns.
    """
    return FiberDispersionModel.from_gvd_line(
        ((1325.0, -0.11), (1575.0, -0.25)),
        anchor=(1531.0, 1874.0),
        wavelength_domain=(1300.0, 1600.0),
        base_delay=base_delay,
        fiber_length=3300.0,
    )
