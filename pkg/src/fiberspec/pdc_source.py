"""Double-Gaussian joint spectral model of a type-II photon-pair source.

The joint spectral intensity is the product of a pump envelope, Gaussian in
the energy coordinate ``1/ls + 1/li`` and centred on ``1/lp``, and a
phase-matching factor, Gaussian in the detuning difference
``(ls - signal_center) - (li - idler_center)``. Both widths are intensity
FWHMs: ``pump_fwhm`` in nm at the pump wavelength, ``phasematch_width`` in nm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import _rng
from .errors import DomainError, ModelError
from .spectrum import FWHM_TO_SIGMA, TabulatedSpectrum

_BOUND_GRID = 256


def energy_fwhm(pump_center: float, pump_fwhm: float) -> float:
    """Pump FWHM mapped to the inverse-wavelength axis (nm^-1)."""
    return pump_fwhm / pump_center**2


def energy_residual(pump, signal, idler):
    """``1/pump - 1/signal - 1/idler`` in nm^-1."""
    return 1.0 / np.asarray(pump) - 1.0 / np.asarray(signal) - 1.0 / np.asarray(idler)


@dataclass(frozen=True)
class JointSpectralModel:
    pump_center: float = 765.0
    pump_fwhm: float = 1.9
    signal_center: float = 1544.0
    idler_center: float = 1517.0
    phasematch_width: float = 2.0
    grid_domain: tuple[tuple[float, float], tuple[float, float]] | None = None
    amplitude: float = 1.0
    consistency_tol: float = 5e-7
    _bound: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("pump_center", "pump_fwhm", "signal_center", "idler_center",
                     "phasematch_width", "amplitude"):
            if not getattr(self, name) > 0:
                raise ModelError(f"{name} must be positive")
        mismatch = abs(float(energy_residual(self.pump_center, self.signal_center, self.idler_center)))
        if mismatch > self.consistency_tol:
            raise ModelError(
                f"centre wavelengths violate energy conservation by {mismatch:.3g} nm^-1 "
                f"(tolerance {self.consistency_tol:.3g})"
            )
        if self.grid_domain is None:
            mean, cov = self.linearized_moments()
            half = 8.0 * np.sqrt(np.diag(cov))
            dom = ((mean[0] - half[0], mean[0] + half[0]), (mean[1] - half[1], mean[1] + half[1]))
        else:
            (a, b), (c, d) = self.grid_domain
            dom = ((float(a), float(b)), (float(c), float(d)))
        if not (dom[0][0] < dom[0][1] and dom[1][0] < dom[1][1]):
            raise ModelError("grid_domain ranges must be non-empty")
        object.__setattr__(self, "grid_domain", dom)

        s = np.linspace(*dom[0], _BOUND_GRID)
        i = np.linspace(*dom[1], _BOUND_GRID)
        peak = float(self.shape(s[:, None], i[None, :]).max())
        if peak <= 0:
            raise ModelError("joint spectral intensity vanishes on the grid domain")
        # both factors peak at 1, so 1 is a hard upper bound
        object.__setattr__(self, "_bound", min(1.0, 1.05 * peak))

    @property
    def energy_sigma(self) -> float:
        return energy_fwhm(self.pump_center, self.pump_fwhm) * FWHM_TO_SIGMA

    @property
    def phasematch_sigma(self) -> float:
        return self.phasematch_width * FWHM_TO_SIGMA

    def pump_equivalent_width(self, which: Literal["signal", "idler"]) -> float:
        """Pump FWHM mapped onto one photon's wavelength axis, partner held fixed."""
        lam = self.signal_center if which == "signal" else self.idler_center
        return energy_fwhm(self.pump_center, self.pump_fwhm) * lam**2

    def shape(self, ls, li):
        """Unit-peak JSI without domain checks."""
        ls = np.asarray(ls, dtype=float)
        li = np.asarray(li, dtype=float)
        e = (1.0 / ls + 1.0 / li) - 1.0 / self.pump_center
        d = (ls - self.signal_center) - (li - self.idler_center)
        return np.exp(-0.5 * (e / self.energy_sigma) ** 2 - 0.5 * (d / self.phasematch_sigma) ** 2)

    def in_domain(self, ls, li):
        (a, b), (c, d) = self.grid_domain
        ls = np.asarray(ls)
        li = np.asarray(li)
        return (ls >= a) & (ls <= b) & (li >= c) & (li <= d)

    def jsi_value(self, ls, li):
        if not np.all(self.in_domain(ls, li)):
            raise DomainError(f"(signal, idler) outside grid domain {self.grid_domain}")
        return self.amplitude * self.shape(ls, li)

    def linearized_moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Mean and covariance of (ls, li) with 1/l expanded to first order.

        Exact for the Gaussian factors; the only approximation is the
        linearisation of the energy coordinate about the centre wavelengths.
        """
        s0, i0 = self.signal_center, self.idler_center
        a, b = 1.0 / s0**2, 1.0 / i0**2
        e0 = float(-energy_residual(self.pump_center, s0, i0))
        se2 = self.energy_sigma**2
        sd2 = self.phasematch_sigma**2
        prec = np.array([
            [a * a / se2 + 1.0 / sd2, a * b / se2 - 1.0 / sd2],
            [a * b / se2 - 1.0 / sd2, b * b / se2 + 1.0 / sd2],
        ])
        cov = np.linalg.inv(prec)
        shift = cov @ np.array([a * e0 / se2, b * e0 / se2])
        return np.array([s0, i0]) + shift, cov


def jsi_value(model: JointSpectralModel, ls, li):
    return model.jsi_value(ls, li)


def analytic_correlation(model: JointSpectralModel, signal_resolution: float = 0.0,
                         idler_resolution: float = 0.0, signal_bin: float = 0.0,
                         idler_bin: float = 0.0) -> float:
    """Correlation coefficient of (ls, li) under the model.

    The optional resolutions (Gaussian sigma, nm) add independent per-channel
    measurement noise; bin widths add the ``h**2/12`` variance of reading a
    value off a histogram bin centre.
    """
    _, cov = model.linearized_moments()
    vs = cov[0, 0] + signal_resolution**2 + signal_bin**2 / 12.0
    vi = cov[1, 1] + idler_resolution**2 + idler_bin**2 / 12.0
    return float(cov[0, 1] / np.sqrt(vs * vi))


def separable_phasematch_width(pump_center: float, pump_fwhm: float,
                               signal_center: float, idler_center: float) -> float:
    """Phase-matching FWHM that cancels the linearised signal-idler coupling."""
    se = energy_fwhm(pump_center, pump_fwhm) * FWHM_TO_SIGMA
    sd = se * signal_center * idler_center
    return sd / FWHM_TO_SIGMA


def _sample_chunk(model: JointSpectralModel, n: int, seed: int, chunk: int) -> np.ndarray:
    out = np.empty((n, 2))
    if n == 0:
        return out
    rng = _rng.substream(seed, _rng.PAIRS, chunk)
    (a, b), (c, d) = model.grid_domain
    mean, cov = model.linearized_moments()
    area = (b - a) * (d - c)
    expected = 2 * np.pi * np.sqrt(np.linalg.det(cov)) / (area * model._bound)
    rate = min(1.0, max(expected, 1e-4))
    filled = 0
    while filled < n:
        batch = max(1024, int(1.2 * (n - filled) / rate))
        u = rng.random((batch, 3))
        ls = a + (b - a) * u[:, 0]
        li = c + (d - c) * u[:, 1]
        keep = u[:, 2] * model._bound < model.shape(ls, li)
        take = min(int(keep.sum()), n - filled)
        out[filled:filled + take, 0] = ls[keep][:take]
        out[filled:filled + take, 1] = li[keep][:take]
        filled += take
    return out


def sample_pairs(model: JointSpectralModel, count: int, seed: int, workers: int = 1) -> np.ndarray:
    """Draw ``count`` (signal, idler) wavelength pairs by rejection sampling.

    Returns an array of shape ``(count, 2)``. The result depends only on
    ``(model shape, count, seed)``; ``workers`` only changes wall time.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    jobs = list(_rng.chunks(count))
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda j: _sample_chunk(model, j[2] - j[1], seed, j[0]), jobs))
    else:
        parts = [_sample_chunk(model, stop - start, seed, c) for c, start, stop in jobs]
    return np.concatenate(parts) if parts else np.empty((0, 2))


def marginal_spectrum(model: JointSpectralModel, which: Literal["signal", "idler"],
                      grid, partner_points: int = 1024) -> TabulatedSpectrum:
    """Integrate the JSI over the partner wavelength (trapezoid rule)."""
    grid = np.asarray(grid, dtype=float)
    (a, b), (c, d) = model.grid_domain
    own = (a, b) if which == "signal" else (c, d)
    if grid.min() < own[0] or grid.max() > own[1]:
        raise DomainError(f"marginal grid outside {which} range {own}")
    partner = np.linspace(*((c, d) if which == "signal" else (a, b)), max(partner_points, 512))
    if which == "signal":
        vals = model.jsi_value(grid[:, None], partner[None, :])
    elif which == "idler":
        vals = model.jsi_value(partner[None, :], grid[:, None])
    else:
        raise ValueError("which must be 'signal' or 'idler'")
    return TabulatedSpectrum(grid, np.trapezoid(vals, partner, axis=1))


def reference_model(**overrides) -> JointSpectralModel:
    """765 nm pump with 1.9 nm FWHM producing pairs near 1544/1517 nm."""
    params = dict(pump_center=765.0, pump_fwhm=1.9, signal_center=1544.0, idler_center=1517.0)
    params.update(overrides)
    return JointSpectralModel(**params)
