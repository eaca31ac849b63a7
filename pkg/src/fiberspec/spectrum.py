"""Tabulated one-photon spectra used as simulation input."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ModelError

FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))


@dataclass(frozen=True, eq=False)
class TabulatedSpectrum:
    """Piecewise-linear spectral density on a strictly increasing grid.

    A single grid point is a delta line at that wavelength.
    """

    wavelength: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.wavelength, dtype=float).ravel()
        dens = np.asarray(self.density, dtype=float).ravel()
        if lam.size == 0 or lam.shape != dens.shape:
            raise ModelError("wavelength and density must be non-empty and equally long")
        if np.any(np.diff(lam) <= 0):
            raise ModelError("spectrum grid must be strictly increasing")
        if np.any(dens < 0) or not np.all(np.isfinite(dens)):
            raise ModelError("spectral density must be finite and non-negative")
        if lam.size > 1 and np.trapezoid(dens, lam) <= 0:
            raise ModelError("spectrum has zero total weight")
        object.__setattr__(self, "wavelength", lam)
        object.__setattr__(self, "density", dens)

    @classmethod
    def delta(cls, wavelength: float) -> "TabulatedSpectrum":
        return cls([wavelength], [1.0])

    @classmethod
    def gaussian(cls, center: float, fwhm: float, points: int = 801,
                 half_span: float = 2.5) -> "TabulatedSpectrum":
        """Gaussian line tabulated over ``center +- half_span * fwhm``."""
        sigma = fwhm * FWHM_TO_SIGMA
        lam = np.linspace(center - half_span * fwhm, center + half_span * fwhm, points)
        return cls(lam, np.exp(-0.5 * ((lam - center) / sigma) ** 2))

    @classmethod
    def flat(cls, lo: float, hi: float) -> "TabulatedSpectrum":
        return cls([lo, hi], [1.0, 1.0])

    @property
    def support(self) -> tuple[float, float]:
        return float(self.wavelength[0]), float(self.wavelength[-1])

    def __call__(self, wavelength):
        if self.wavelength.size == 1:
            return np.where(np.asarray(wavelength) == self.wavelength[0], np.inf, 0.0)
        return np.interp(wavelength, self.wavelength, self.density, left=0.0, right=0.0)

    def sample(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms in [0, 1) to wavelengths by exact inverse CDF."""
        u = np.asarray(u, dtype=float)
        if self.wavelength.size == 1:
            return np.full(u.shape, self.wavelength[0])
        x, f = self.wavelength, self.density
        h = np.diff(x)
        area = 0.5 * (f[:-1] + f[1:]) * h
        cum = np.concatenate(([0.0], np.cumsum(area)))
        target = u * cum[-1]
        k = np.clip(np.searchsorted(cum, target, side="right") - 1, 0, len(h) - 1)
        r = target - cum[k]
        fk = f[k]
        m = (f[k + 1] - fk) / h[k]
        denom = fk + np.sqrt(np.maximum(fk * fk + 2.0 * m * r, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(denom > 0, 2.0 * r / denom, 0.0)
        return x[k] + np.clip(s, 0.0, h[k])


def read_table(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Two-column ``x,y`` text table with ``#`` comments."""
    rows = []
    for n, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            a, b = (float(v) for v in line.split(",")[:2])
        except ValueError:
            raise ValueError(f"{path}:{n}: expected two comma-separated numbers") from None
        rows.append((a, b))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.array(rows)
    return arr[:, 0], arr[:, 1]
