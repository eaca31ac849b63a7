"""Two-channel inverse pipeline.

Coincidence timestamps are mapped to wavelength pairs through a calibration
curve whose time origin is fixed by energy conservation,
``1/pump = 1/c(ts + offset) + 1/c(ti + offset)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .calibration import CalibrationCurve
from .errors import OffsetBoundaryError, OffsetSearchError
from .pdc_source import energy_fwhm
from .simulator import CoincidenceTable

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _times_ns(coincidences) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(coincidences, CoincidenceTable):
        return coincidences.ts_signal / 1000.0, coincidences.ts_idler / 1000.0
    arr = np.asarray([(r[1], r[2]) for r in coincidences], dtype=float).reshape(-1, 2)
    return arr[:, 0] / 1000.0, arr[:, 1] / 1000.0


@dataclass(frozen=True)
class OffsetSolution:
    offset: float  # ns, common to both channels
    median_residual: float  # nm^-1
    residual_quantiles: dict  # {0.1: ..., 0.5: ..., 0.9: ...} of |residual|
    events: int
    outside_domain: int
    evaluations: int


class _Objective:
    def __init__(self, ts, ti, curve, pump, margin, idler_extra):
        self.ts, self.ti = ts, ti
        self.curve, self.inv_pump = curve, 1.0 / pump
        lo, hi = curve.time_domain
        self.lo, self.hi = lo - margin, hi + margin
        self.idler_extra = idler_extra
        self.calls = 0

    def residuals(self, delta: float) -> np.ndarray:
        a = self.ts + delta
        b = self.ti + (delta + self.idler_extra)
        r = self.inv_pump - 1.0 / self.curve(a) - 1.0 / self.curve(b)
        outside = (a < self.lo) | (a > self.hi) | (b < self.lo) | (b > self.hi)
        return np.where(outside, np.inf, np.abs(r))

    def __call__(self, delta: float) -> float:
        self.calls += 1
        return float(np.median(self.residuals(delta)))


def solve_offset(coincidences, curve: CalibrationCurve, pump_wavelength: float,
                 search: tuple[float, float], margin: float = 5.0, tol: float = 1e-3,
                 grid_points: int = 201, idler_extra_delay: float = 0.0) -> OffsetSolution:
    """Common time offset (ns) that best restores energy conservation.

    Minimises the median over events of
    ``|1/pump - 1/c(ts + d) - 1/c(ti + d)|`` by a grid scan over ``search``
    followed by golden-section refinement to ``tol`` ns. Events whose
    shifted times leave the curve domain widened by ``margin`` ns count as
    infinitely bad. ``idler_extra_delay`` adds a fixed, known delay to the
    idler channel only.
    """
    ts, ti = _times_ns(coincidences)
    if ts.size == 0:
        raise OffsetSearchError("no coincidences to solve for the offset")
    lo, hi = float(search[0]), float(search[1])
    if not hi > lo:
        raise ValueError("search interval must be non-empty")
    f = _Objective(ts, ti, curve, pump_wavelength, margin, idler_extra_delay)

    grid = np.linspace(lo, hi, grid_points)
    vals = np.array([f(d) for d in grid])
    if not np.any(np.isfinite(vals)):
        raise OffsetSearchError(
            f"search interval [{lo}, {hi}] ns moves most events outside the calibration domain")
    k = int(np.argmin(vals))
    if k == 0 or k == len(grid) - 1:
        raise OffsetBoundaryError(
            f"offset objective is smallest at the search boundary {grid[k]:.4f} ns; widen the range")
    a, b = grid[k - 1], grid[k + 1]
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    candidates = [(vals[k], grid[k]), (fc, c), (fd, d)]
    best_val, best = min(candidates)
    res = f.residuals(best)
    finite = res[np.isfinite(res)]
    q = {p: float(np.quantile(finite, p)) for p in (0.1, 0.5, 0.9)} if finite.size else {}
    return OffsetSolution(float(best), float(best_val), q, int(ts.size),
                          int((~np.isfinite(res)).sum()), f.calls)


def energy_residuals(coincidences, curve: CalibrationCurve, pump_wavelength: float,
                     offset: float, idler_extra_delay: float = 0.0) -> np.ndarray:
    """Signed ``1/pump - 1/c(ts + offset) - 1/c(ti + offset)`` per event (nm^-1)."""
    ts, ti = _times_ns(coincidences)
    return 1.0 / pump_wavelength - 1.0 / curve(ts + offset) - 1.0 / curve(ti + offset + idler_extra_delay)


@dataclass(eq=False)
class MappedPairs:
    signal: np.ndarray  # nm
    idler: np.ndarray  # nm
    extrapolated: np.ndarray  # bool, either channel outside the curve domain

    def __len__(self):
        return len(self.signal)

    @property
    def array(self) -> np.ndarray:
        return np.column_stack((self.signal, self.idler))


def map_pairs(coincidences, curve: CalibrationCurve, offset: float,
              idler_extra_delay: float = 0.0) -> MappedPairs:
    ts, ti = _times_ns(coincidences)
    a = ts + offset
    b = ti + (offset + idler_extra_delay)
    flag = ~(curve.in_domain(a) & curve.in_domain(b))
    return MappedPairs(curve(a), curve(b), flag)


@dataclass(eq=False)
class FilterResult:
    kept: np.ndarray  # (n, 2) signal, idler
    swapped: np.ndarray  # (n, 2) after relabelling
    discarded: np.ndarray

    @property
    def counts(self) -> dict:
        return {"kept": len(self.kept), "swapped": len(self.swapped), "discarded": len(self.discarded)}

    def accepted(self, strict: bool = False) -> np.ndarray:
        """Pairs used downstream; ``strict`` drops the relabelled ones."""
        return self.kept if strict else np.concatenate((self.kept, self.swapped))


def _in(x, band):
    return (x >= band[0]) & (x < band[1])


def filter_wrong_path(pairs, signal_band: tuple[float, float],
                      idler_band: tuple[float, float]) -> FilterResult:
    """Sort pairs by whether each photon arrived in its own channel's band.

    Bands are half-open ``[lo, hi)`` in nm and must not overlap.
    """
    if signal_band[0] < idler_band[1] and idler_band[0] < signal_band[1]:
        raise ValueError(f"signal band {signal_band} and idler band {idler_band} overlap")
    arr = pairs.array if isinstance(pairs, MappedPairs) else np.asarray(pairs, dtype=float).reshape(-1, 2)
    s, i = arr[:, 0], arr[:, 1]
    keep = _in(s, signal_band) & _in(i, idler_band)
    swap = ~keep & _in(i, signal_band) & _in(s, idler_band)
    return FilterResult(arr[keep], arr[swap][:, ::-1], arr[~keep & ~swap])


def bin_index(values, edges) -> np.ndarray:
    """Index of the half-open bin ``[e_k, e_k+1)`` holding each value, -1 outside."""
    edges = np.asarray(edges, dtype=float)
    idx = np.searchsorted(edges, values, side="right") - 1
    return np.where((idx >= 0) & (idx < len(edges) - 1), idx, -1)


def wavelength_histogram(values, edges) -> np.ndarray:
    idx = bin_index(values, edges)
    return np.bincount(idx[idx >= 0], minlength=len(edges) - 1)


@dataclass(eq=False)
class JointSpectrum:
    signal_grid: np.ndarray  # bin edges, nm
    idler_grid: np.ndarray
    counts: np.ndarray  # shape (len(signal_grid) - 1, len(idler_grid) - 1)
    outside: int = 0
    offset_used: float = float("nan")
    pump_wavelength: float = float("nan")

    def __post_init__(self):
        if self.counts.shape != (len(self.signal_grid) - 1, len(self.idler_grid) - 1):
            raise ValueError("count matrix does not match the grids")

    @property
    def signal_centers(self) -> np.ndarray:
        return 0.5 * (self.signal_grid[1:] + self.signal_grid[:-1])

    @property
    def idler_centers(self) -> np.ndarray:
        return 0.5 * (self.idler_grid[1:] + self.idler_grid[:-1])

    def marginal(self, which: str) -> np.ndarray:
        return self.counts.sum(axis=1 if which == "signal" else 0)

    def correlation(self, sheppard: bool = True) -> float:
        """Correlation of (signal, idler) read off bin centres.

        ``sheppard`` removes the ``h**2/12`` variance that binning adds.
        """
        w = self.counts.astype(float)
        n = w.sum()
        s = self.signal_centers[:, None]
        i = self.idler_centers[None, :]
        ms = (w * s).sum() / n
        mi = (w * i).sum() / n
        vs = (w * (s - ms) ** 2).sum() / n
        vi = (w * (i - mi) ** 2).sum() / n
        cov = (w * (s - ms) * (i - mi)).sum() / n
        if sheppard:
            vs -= np.mean(np.diff(self.signal_grid)) ** 2 / 12.0
            vi -= np.mean(np.diff(self.idler_grid)) ** 2 / 12.0
        return float(cov / np.sqrt(vs * vi))

    def dumps(self, comments: Sequence[str] = ()) -> str:
        lines = ["# jsi v1", *(f"# {c}" for c in comments),
                 f"# offset_ns={self.offset_used!r}", f"# pump_wavelength_nm={self.pump_wavelength!r}",
                 f"# outside={self.outside}",
                 ",".join(repr(float(v)) for v in self.signal_grid),
                 ",".join(repr(float(v)) for v in self.idler_grid)]
        lines += [",".join(str(int(v)) for v in row) for row in self.counts]
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path, comments: Sequence[str] = ()) -> None:
        Path(path).write_text(self.dumps(comments))

    @classmethod
    def loads(cls, text: str) -> "JointSpectrum":
        lines = text.splitlines()
        if not lines or lines[0].strip() != "# jsi v1":
            raise ValueError("expected header '# jsi v1'")
        meta = {}
        data = []
        for ln in lines[1:]:
            if ln.startswith("#"):
                if "=" in ln:
                    k, v = ln[1:].split("=", 1)
                    meta[k.strip()] = v.strip()
            elif ln.strip():
                data.append(ln)
        sg = np.array([float(v) for v in data[0].split(",")])
        ig = np.array([float(v) for v in data[1].split(",")])
        counts = np.array([[int(v) for v in row.split(",")] for row in data[2:]], dtype=np.int64)
        counts = counts.reshape(len(sg) - 1, len(ig) - 1)
        return cls(sg, ig, counts, int(meta.get("outside", 0)),
                   float(meta.get("offset_ns", "nan")), float(meta.get("pump_wavelength_nm", "nan")))


def build_jsi(pairs, signal_grid, idler_grid, offset_used: float = float("nan"),
              pump_wavelength: float = float("nan")) -> JointSpectrum:
    """2D histogram of wavelength pairs on half-open bins defined by the edge grids."""
    sg = np.asarray(signal_grid, dtype=float)
    ig = np.asarray(idler_grid, dtype=float)
    if np.any(np.diff(sg) <= 0) or np.any(np.diff(ig) <= 0):
        raise ValueError("grids must be strictly increasing")
    arr = pairs.array if isinstance(pairs, MappedPairs) else np.asarray(pairs, dtype=float).reshape(-1, 2)
    a = bin_index(arr[:, 0], sg)
    b = bin_index(arr[:, 1], ig)
    ok = (a >= 0) & (b >= 0)
    ns, ni = len(sg) - 1, len(ig) - 1
    flat = np.bincount(a[ok] * ni + b[ok], minlength=ns * ni)
    return JointSpectrum(sg, ig, flat.reshape(ns, ni).astype(np.int64), int((~ok).sum()),
                         offset_used, pump_wavelength)


def default_grids(model, bins: int = 64, half_widths: float = 3.0) -> tuple[np.ndarray, np.ndarray]:
    """Edge grids spanning +-``half_widths`` pump-equivalent FWHMs around each centre."""
    out = []
    for which, center in (("signal", model.signal_center), ("idler", model.idler_center)):
        w = half_widths * model.pump_equivalent_width(which)
        out.append(np.linspace(center - w, center + w, bins + 1))
    return out[0], out[1]


def pump_envelope_check(jsi: JointSpectrum, pump_wavelength: float, pump_fwhm: float,
                        subdivisions: int = 16) -> float:
    """Fraction of JSI counts inside the pump FWHM band of the energy coordinate.

    Counts are taken as uniform within a bin, and each bin contributes the share
    of its area that falls inside the band. Using bin centres alone makes the
    answer jump with the grid.
    """
    total = jsi.counts.sum()
    if total == 0:
        raise ValueError("JSI has no counts")
    if not np.isfinite(pump_fwhm):
        return 1.0
    half = 0.5 * energy_fwhm(pump_wavelength, pump_fwhm)
    u = (np.arange(subdivisions) + 0.5) / subdivisions

    def sub(edges):
        lo, w = edges[:-1, None], np.diff(edges)[:, None]
        return lo + w * u  # (bins, subdivisions)

    es = 1.0 / sub(jsi.signal_grid)
    ei = 1.0 / sub(jsi.idler_grid)
    e = es[:, None, :, None] + ei[None, :, None, :]
    share = (np.abs(e - 1.0 / pump_wavelength) <= half).mean(axis=(2, 3))
    return float((jsi.counts * share).sum() / total)


def marginals_dumps(jsi: JointSpectrum, comments: Sequence[str] = ()) -> str:
    lines = ["# marginals v1", *(f"# {c}" for c in comments), "# channel,wavelength_nm,counts"]
    for which, centers in (("signal", jsi.signal_centers), ("idler", jsi.idler_centers)):
        for lam, n in zip(centers.tolist(), jsi.marginal(which).tolist()):
            lines.append(f"{which},{lam!r},{n}")
    return "\n".join(lines) + "\n"
