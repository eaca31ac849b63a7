"""Single-channel inverse pipeline: histogram, peak, spectrum."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .calibration import CalibrationCurve
from .errors import SingularMappingError
from .simulator import EfficiencyCurve, EventTable

EXTRAPOLATED = 1
EFFICIENCY_CORRECTED = 2
UNRELIABLE = 4

_FLAG_NAMES = ((EXTRAPOLATED, "extrapolated"), (EFFICIENCY_CORRECTED, "efficiency"),
               (UNRELIABLE, "unreliable"))


@dataclass(eq=False)
class TimeHistogram:
    bin_width: int  # ps
    origin: float  # ps, left edge of bin 0
    counts: np.ndarray
    discarded: int = 0

    @property
    def edges(self) -> np.ndarray:
        return self.origin + self.bin_width * np.arange(len(self.counts) + 1)

    @property
    def centers_ns(self) -> np.ndarray:
        return (self.origin + self.bin_width * (np.arange(len(self.counts)) + 0.5)) / 1000.0


@dataclass(eq=False)
class Spectrum:
    wavelength: np.ndarray  # nm, increasing
    intensity: np.ndarray  # counts per nm
    bin_width: np.ndarray  # nm spanned by each source time bin
    counts: np.ndarray
    flags: np.ndarray

    def dumps(self, comments: Sequence[str] = (), normalize: bool = False) -> str:
        inten = self.intensity
        if normalize and inten.size and inten.max() > 0:
            inten = inten / inten.max()
        lines = ["# spectrum v1", *(f"# {c}" for c in comments),
                 "# wavelength_nm,intensity,flags"]
        for lam, val, fl in zip(self.wavelength.tolist(), inten.tolist(), self.flags.tolist()):
            names = "|".join(n for bit, n in _FLAG_NAMES if fl & bit) or "-"
            lines.append(f"{lam!r},{val!r},{names}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path, comments: Sequence[str] = (), normalize: bool = False) -> None:
        Path(path).write_text(self.dumps(comments, normalize))

    @classmethod
    def loads(cls, text: str) -> "Spectrum":
        lines = text.splitlines()
        if not lines or lines[0].strip() != "# spectrum v1":
            raise ValueError("expected header '# spectrum v1'")
        lam, inten, flags = [], [], []
        bits = {n: b for b, n in _FLAG_NAMES}
        for ln in lines[1:]:
            if not ln.strip() or ln.lstrip().startswith("#"):
                continue
            a, b, f = ln.split(",")
            lam.append(float(a))
            inten.append(float(b))
            flags.append(sum(bits[n] for n in f.split("|") if n in bits))
        n = len(lam)
        return cls(np.array(lam), np.array(inten), np.full(n, np.nan), np.full(n, np.nan),
                   np.array(flags, dtype=np.int64))


def histogram(events, bin_width: int, time_range: tuple[float, float]) -> TimeHistogram:
    """Count timestamps (ps) into ``[lo, hi)`` with left-closed bins.

    ``events`` may be an :class:`EventTable` or an array of timestamps. The
    last bin is truncated to whole bins: ``hi`` is rounded up to
    ``lo + k * bin_width``.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    ts = events.timestamp if isinstance(events, EventTable) else np.asarray(events, dtype=np.int64)
    lo, hi = time_range
    nbins = max(0, int(np.ceil((hi - lo) / bin_width)))
    idx = np.floor((ts - lo) / bin_width).astype(np.int64)
    inside = (idx >= 0) & (idx < nbins)
    counts = np.bincount(idx[inside], minlength=nbins).astype(np.int64)
    return TimeHistogram(int(bin_width), lo, counts, int((~inside).sum()))


def tdc_aligned_range(timestamps, tdc_bin: int, pad_bins: int = 2) -> tuple[float, float]:
    """Histogram range whose bins are centred on TDC codes and cover the data.

    Quantised timestamps sit on multiples of ``tdc_bin``; putting bin edges
    half a bin off that lattice keeps each bin centre on the code it holds.
    """
    ts = np.asarray(timestamps)
    first = (int(ts.min()) // tdc_bin - pad_bins) * tdc_bin
    last = (int(ts.max()) // tdc_bin + pad_bins + 1) * tdc_bin
    return first - tdc_bin / 2, last - tdc_bin / 2


def find_peak(hist: TimeHistogram) -> float:
    """FWHM centroid of the highest peak, in ns.

    The contiguous run of bins around the (earliest) maximum whose counts
    are at least half the maximum is averaged with count weights.
    """
    c = np.asarray(hist.counts)
    if c.size == 0 or c.max() <= 0:
        raise ValueError("histogram has no counts")
    k = int(np.argmax(c))
    half = c[k] / 2.0
    a = k
    while a > 0 and c[a - 1] >= half:
        a -= 1
    b = k
    while b < len(c) - 1 and c[b + 1] >= half:
        b += 1
    w = c[a:b + 1].astype(float)
    return float(np.dot(w, hist.centers_ns[a:b + 1]) / w.sum())


def to_spectrum(hist: TimeHistogram, curve: CalibrationCurve,
                efficiency: EfficiencyCurve | None = None, jacobian: bool = True,
                unreliable_below: float = 0.05) -> Spectrum:
    """Convert a time histogram into a density per nm.

    Each time bin centre maps to ``c(tau)``; with ``jacobian`` the counts are
    divided by the wavelength width ``|dc/dtau| * bin_width`` the bin spans.
    With an efficiency table the result is further divided by p_D and
    points with p_D below ``unreliable_below`` are flagged.
    """
    tau = hist.centers_ns
    counts = np.asarray(hist.counts)
    lam = curve(tau)
    dldt = curve.derivative(tau)
    populated = np.nonzero(counts)[0]
    if populated.size:
        span = slice(populated[0], populated[-1] + 1)
        d = dldt[span]
        if np.any(d == 0) or not (np.all(d > 0) or np.all(d < 0)):
            raise SingularMappingError(
                "dc/dtau vanishes or changes sign across the populated histogram range")
    width = np.abs(dldt) * (hist.bin_width / 1000.0)
    flags = np.where(curve.in_domain(tau), 0, EXTRAPOLATED).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inten = counts / width if jacobian else counts.astype(float)
    inten = np.where(counts == 0, 0.0, inten)
    if np.any((width == 0) & (counts > 0)):
        raise SingularMappingError("a populated time bin maps to zero wavelength width")
    if efficiency is not None:
        p = efficiency(lam)
        if np.any((p == 0) & (counts > 0)):
            raise ValueError("detection probability is zero at a populated bin")
        with np.errstate(divide="ignore", invalid="ignore"):
            inten = np.where(p > 0, inten / p, 0.0)
        flags |= EFFICIENCY_CORRECTED
        flags |= np.where(p < unreliable_below, UNRELIABLE, 0)
    order = np.argsort(lam, kind="stable")
    return Spectrum(lam[order], inten[order], width[order], counts[order], flags[order])


def peak_and_fwhm(wavelength, intensity) -> tuple[float, float]:
    """FWHM centroid and full width at half maximum of a sampled line.

    The half-maximum crossings are found by linear interpolation on the
    contiguous region around the maximum.
    """
    x = np.asarray(wavelength, dtype=float)
    y = np.asarray(intensity, dtype=float)
    k = int(np.argmax(y))
    half = y[k] / 2.0
    a = k
    while a > 0 and y[a - 1] >= half:
        a -= 1
    b = k
    while b < len(y) - 1 and y[b + 1] >= half:
        b += 1
    center = float(np.dot(y[a:b + 1], x[a:b + 1]) / y[a:b + 1].sum())
    left = x[a] if a == 0 else x[a - 1] + (half - y[a - 1]) * (x[a] - x[a - 1]) / (y[a] - y[a - 1])
    right = x[b] if b == len(y) - 1 else x[b] + (y[b] - half) * (x[b + 1] - x[b]) / (y[b] - y[b + 1])
    return center, float(right - left)
