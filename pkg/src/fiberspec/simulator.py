"""Monte Carlo of the detection chain.

Photon wavelength -> fiber delay -> Gaussian timing jitter -> detection
with probability p_D(wavelength) -> TDC quantisation. Timestamps are
integer picoseconds relative to the pulse's trigger, rounded half-up to the
nearest multiple of the TDC bin. All random numbers come from per-chunk
substreams (see :mod:`fiberspec._rng`), so results are identical for any
worker count.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from . import _rng
from .dispersion import FiberDispersionModel
from .errors import AliasingWarning, DomainError, ModelError
from .pdc_source import JointSpectralModel, _sample_chunk
from .spectrum import TabulatedSpectrum, read_table

CHANNELS = ("S", "I", "X")  # signal, idler, single-channel run


@dataclass(frozen=True, eq=False)
class EfficiencyCurve:
    """Piecewise-linear p_D(wavelength), held constant beyond the table ends."""

    wavelength: np.ndarray = field(default_factory=lambda: np.array([1550.0]))
    probability: np.ndarray = field(default_factory=lambda: np.array([1.0]))

    def __post_init__(self):
        lam = np.asarray(self.wavelength, dtype=float).ravel()
        p = np.asarray(self.probability, dtype=float).ravel()
        if lam.size == 0 or lam.shape != p.shape:
            raise ModelError("efficiency table needs equally long, non-empty columns")
        if np.any(np.diff(lam) <= 0):
            raise ModelError("efficiency wavelengths must be strictly increasing")
        if np.any((p < 0) | (p > 1)):
            raise ModelError("detection probabilities must lie in [0, 1]")
        object.__setattr__(self, "wavelength", lam)
        object.__setattr__(self, "probability", p)

    @classmethod
    def flat(cls, p: float) -> "EfficiencyCurve":
        return cls(np.array([1550.0]), np.array([p]))

    @classmethod
    def read(cls, path: str | Path) -> "EfficiencyCurve":
        return cls(*read_table(path))

    def __call__(self, wavelength):
        return np.interp(wavelength, self.wavelength, self.probability)


@dataclass(frozen=True)
class DetectorModel:
    jitter_sigma: float = 180.0  # ps
    tdc_bin: int = 81  # ps
    efficiency_curve: EfficiencyCurve = field(default_factory=EfficiencyCurve)
    # placeholder, not a measured detector figure
    dark_count_prob_per_gate: float = 1e-4
    gate_width: int = 200  # ps
    gate_step: int = 100  # ps

    def __post_init__(self):
        if self.jitter_sigma < 0:
            raise ModelError("jitter_sigma must be >= 0")
        if int(self.tdc_bin) != self.tdc_bin or self.tdc_bin <= 0:
            raise ModelError("tdc_bin must be a positive integer number of ps")
        if not 0 <= self.dark_count_prob_per_gate <= 1:
            raise ModelError("dark_count_prob_per_gate must lie in [0, 1]")
        if self.gate_width <= 0 or self.gate_step <= 0:
            raise ModelError("gate_width and gate_step must be positive")

    def quantize(self, t_ps) -> np.ndarray:
        b = int(self.tdc_bin)
        return (np.floor(np.asarray(t_ps) / b + 0.5).astype(np.int64)) * b


@dataclass(frozen=True)
class SourceRun:
    pulse_count: int
    repetition_period: float = 1000.0  # ns
    routing_contrast: float = 0.8
    # ps interval for dark counts; derived from the spectrum when None
    acquisition_window: tuple[int, int] | None = None

    def __post_init__(self):
        if self.repetition_period <= 0:
            raise ModelError("repetition_period must be positive")
        if self.pulse_count < 0:
            raise ModelError("pulse_count must be >= 0")
        if not 0 <= self.routing_contrast <= 1:
            raise ModelError("routing_contrast must lie in [0, 1]")


class EventRecord(NamedTuple):
    channel: str
    pulse_index: int
    timestamp: int  # ps


class CoincidenceRecord(NamedTuple):
    pulse_index: int
    ts_signal: int  # ps
    ts_idler: int  # ps


@dataclass(eq=False)
class EventTable:
    """Column store of :class:`EventRecord`, ordered by pulse then time."""

    channel: np.ndarray
    pulse_index: np.ndarray
    timestamp: np.ndarray

    def __post_init__(self):
        self.channel = np.asarray(self.channel, dtype="<U1")
        self.pulse_index = np.asarray(self.pulse_index, dtype=np.int64)
        self.timestamp = np.asarray(self.timestamp, dtype=np.int64)

    @classmethod
    def from_records(cls, records: Sequence[EventRecord]) -> "EventTable":
        if not records:
            return cls.empty()
        ch, pi, ts = zip(*records)
        return cls(np.array(ch), np.array(pi), np.array(ts))

    @classmethod
    def empty(cls) -> "EventTable":
        return cls(np.empty(0, "<U1"), np.empty(0, np.int64), np.empty(0, np.int64))

    def __len__(self) -> int:
        return len(self.timestamp)

    def __iter__(self) -> Iterator[EventRecord]:
        for c, p, t in zip(self.channel.tolist(), self.pulse_index.tolist(), self.timestamp.tolist()):
            yield EventRecord(c, p, t)

    def __getitem__(self, sel) -> "EventTable":
        return EventTable(self.channel[sel], self.pulse_index[sel], self.timestamp[sel])

    def select(self, channel: str) -> "EventTable":
        return self[self.channel == channel]

    def dumps(self, comments: Sequence[str] = ()) -> str:
        lines = ["# events v1", *(f"# {c}" for c in comments)]
        lines += [f"{c},{p},{t}" for c, p, t in
                  zip(self.channel.tolist(), self.pulse_index.tolist(), self.timestamp.tolist())]
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path, comments: Sequence[str] = ()) -> None:
        Path(path).write_text(self.dumps(comments))

    @classmethod
    def loads(cls, text: str) -> "EventTable":
        lines = text.splitlines()
        if not lines or lines[0].strip() != "# events v1":
            raise ValueError("expected header '# events v1'")
        body = [ln for ln in lines[1:] if ln.strip() and not ln.lstrip().startswith("#")]
        if not body:
            return cls.empty()
        ch, pi, ts = [], [], []
        for n, ln in enumerate(body):
            c, p, t = ln.split(",")
            if c not in CHANNELS:
                raise ValueError(f"unknown channel {c!r} in event line {ln!r}")
            ch.append(c)
            pi.append(int(p))
            ts.append(int(t))
        return cls(np.array(ch), np.array(pi), np.array(ts))

    @classmethod
    def load(cls, path: str | Path) -> "EventTable":
        return cls.loads(Path(path).read_text())


@dataclass(eq=False)
class CoincidenceTable:
    pulse_index: np.ndarray
    ts_signal: np.ndarray
    ts_idler: np.ndarray
    # simulation truth, not serialised: 0 both photons routed correctly,
    # 1 both swapped, 2 at least one click was a dark count
    origin: np.ndarray | None = None

    def __post_init__(self):
        self.pulse_index = np.asarray(self.pulse_index, dtype=np.int64)
        self.ts_signal = np.asarray(self.ts_signal, dtype=np.int64)
        self.ts_idler = np.asarray(self.ts_idler, dtype=np.int64)

    @classmethod
    def from_records(cls, records: Sequence[CoincidenceRecord]) -> "CoincidenceTable":
        if not records:
            return cls(np.empty(0), np.empty(0), np.empty(0))
        p, s, i = zip(*records)
        return cls(np.array(p), np.array(s), np.array(i))

    def __len__(self) -> int:
        return len(self.pulse_index)

    def __iter__(self) -> Iterator[CoincidenceRecord]:
        for p, s, i in zip(self.pulse_index.tolist(), self.ts_signal.tolist(), self.ts_idler.tolist()):
            yield CoincidenceRecord(p, s, i)

    def __getitem__(self, sel) -> "CoincidenceTable":
        origin = None if self.origin is None else self.origin[sel]
        return CoincidenceTable(self.pulse_index[sel], self.ts_signal[sel], self.ts_idler[sel], origin)

    def shifted(self, delta_ps: int) -> "CoincidenceTable":
        return CoincidenceTable(self.pulse_index, self.ts_signal + delta_ps,
                                self.ts_idler + delta_ps, self.origin)

    def dumps(self, comments: Sequence[str] = ()) -> str:
        lines = ["# coinc v1", *(f"# {c}" for c in comments)]
        lines += [f"{p},{s},{i}" for p, s, i in
                  zip(self.pulse_index.tolist(), self.ts_signal.tolist(), self.ts_idler.tolist())]
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path, comments: Sequence[str] = ()) -> None:
        Path(path).write_text(self.dumps(comments))

    @classmethod
    def loads(cls, text: str) -> "CoincidenceTable":
        lines = text.splitlines()
        if not lines or lines[0].strip() != "# coinc v1":
            raise ValueError("expected header '# coinc v1'")
        rows = [ln for ln in lines[1:] if ln.strip() and not ln.lstrip().startswith("#")]
        if not rows:
            return cls(np.empty(0), np.empty(0), np.empty(0))
        arr = np.array([[int(v) for v in ln.split(",")] for ln in rows], dtype=np.int64)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2])

    @classmethod
    def load(cls, path: str | Path) -> "CoincidenceTable":
        return cls.loads(Path(path).read_text())


def _check_support(fiber: FiberDispersionModel, lo: float, hi: float) -> None:
    flo, fhi = fiber.wavelength_domain
    if lo < flo or hi > fhi:
        raise DomainError(f"spectrum support [{lo}, {hi}] nm exceeds fiber domain [{flo}, {fhi}] nm")


def _warn_aliasing(fiber, support, run: SourceRun) -> None:
    verdict = fiber.check_aliasing(support, run.repetition_period)
    if verdict.aliased:
        warnings.warn(
            f"delay spread {verdict.spread:.3f} ns >= repetition period "
            f"{run.repetition_period} ns; consecutive pulses overlap",
            AliasingWarning, stacklevel=3)


def _default_window(fiber, support, detectors) -> tuple[int, int]:
    t = fiber.propagation_delay(np.array(support)) * 1000.0
    pad = max(5.0 * d.jitter_sigma + d.tdc_bin for d in detectors)
    return int(np.floor(t.min() - pad)), int(np.ceil(t.max() + pad))


def _run_chunks(fn, count: int, workers: int):
    jobs = list(_rng.chunks(count))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda j: fn(*j), jobs))
    return [fn(*j) for j in jobs]


def simulate_single(spectrum: TabulatedSpectrum, fiber: FiberDispersionModel,
                    detector: DetectorModel, run: SourceRun, seed: int,
                    workers: int = 1) -> EventTable:
    """Single-channel calibration-style run, channel ``X``."""
    lo, hi = spectrum.support
    _check_support(fiber, lo, hi)
    _warn_aliasing(fiber, (lo, hi), run)
    w0, w1 = run.acquisition_window or _default_window(fiber, (lo, hi), [detector])

    def chunk(c, start, stop):
        n = stop - start
        pulses = np.arange(start, stop, dtype=np.int64)
        lam = spectrum.sample(_rng.substream(seed, _rng.WAVELENGTH, c).random(n))
        t = fiber.propagation_delay(lam) * 1000.0
        t = t + detector.jitter_sigma * _rng.substream(seed, _rng.JITTER, c).standard_normal(n)
        alive = _rng.substream(seed, _rng.SURVIVAL, c).random(n) < detector.efficiency_curve(lam)
        dark = _rng.substream(seed, _rng.DARK, c).random(n) < detector.dark_count_prob_per_gate
        t_dark = w0 + (w1 - w0) * _rng.substream(seed, _rng.DARK_TIME, c).random(n)
        pi = np.concatenate((pulses[alive], pulses[dark]))
        ts = np.concatenate((detector.quantize(t[alive]), detector.quantize(t_dark[dark])))
        order = np.lexsort((ts, pi))
        return pi[order], ts[order]

    parts = _run_chunks(chunk, run.pulse_count, workers)
    if not parts:
        return EventTable.empty()
    pi = np.concatenate([p[0] for p in parts])
    ts = np.concatenate([p[1] for p in parts])
    return EventTable(np.full(len(pi), "X"), pi, ts)


def simulate_pairs(model: JointSpectralModel, fiber: FiberDispersionModel,
                   detectors: tuple[DetectorModel, DetectorModel], run: SourceRun,
                   seed: int, workers: int = 1) -> CoincidenceTable:
    """Two-channel run; a record is emitted only when both channels click.

    Each photon reaches its own channel with probability
    ``run.routing_contrast`` and the other channel otherwise. A channel that
    receives several candidates (photons or a dark count) reports the
    earliest.
    """
    (s0, s1), (i0, i1) = model.grid_domain
    lo, hi = min(s0, i0), max(s1, i1)
    _check_support(fiber, lo, hi)
    _warn_aliasing(fiber, (lo, hi), run)
    window = run.acquisition_window or _default_window(fiber, (lo, hi), detectors)
    sig_det, idl_det = detectors

    def chunk(c, start, stop):
        n = stop - start
        pairs = _sample_chunk(model, n, seed, c)
        # routed[:, k] is True when photon k (0 signal, 1 idler) lands on its own channel
        routed = np.stack([_rng.substream(seed, _rng.ROUTING, c, k).random(n) < run.routing_contrast
                           for k in (0, 1)], axis=1)
        # channel index each photon lands on: 0 = S, 1 = I
        lands = np.where(routed, np.array([0, 1]), np.array([1, 0]))
        delay = fiber.propagation_delay(pairs) * 1000.0
        z = np.stack([_rng.substream(seed, _rng.JITTER, c, k).standard_normal(n) for k in (0, 1)], axis=1)
        u = np.stack([_rng.substream(seed, _rng.SURVIVAL, c, k).random(n) for k in (0, 1)], axis=1)
        click = np.full((n, 2), np.inf)
        source = np.full((n, 2), -1)  # photon that made the click, 2 for dark count
        for k in (0, 1):
            for ch, det in enumerate(detectors):
                hit = lands[:, k] == ch
                t = delay[:, k] + det.jitter_sigma * z[:, k]
                ok = hit & (u[:, k] < det.efficiency_curve(pairs[:, k])) & (t < click[:, ch])
                click[ok, ch] = t[ok]
                source[ok, ch] = k
        for ch, det in enumerate(detectors):
            dark = _rng.substream(seed, _rng.DARK, c, ch).random(n) < det.dark_count_prob_per_gate
            t_dark = window[0] + (window[1] - window[0]) * \
                _rng.substream(seed, _rng.DARK_TIME, c, ch).random(n)
            ok = dark & (t_dark < click[:, ch])
            click[ok, ch] = t_dark[ok]
            source[ok, ch] = 2
        both = np.isfinite(click).all(axis=1)
        src = source[both]
        origin = np.full(src.shape[0], 2, dtype=np.int8)
        origin[(src[:, 0] == 0) & (src[:, 1] == 1)] = 0
        origin[(src[:, 0] == 1) & (src[:, 1] == 0)] = 1
        pulses = np.arange(start, stop, dtype=np.int64)[both]
        return (pulses, sig_det.quantize(click[both, 0]), idl_det.quantize(click[both, 1]), origin)

    parts = _run_chunks(chunk, run.pulse_count, workers)
    if not parts:
        return CoincidenceTable(np.empty(0), np.empty(0), np.empty(0), np.empty(0, np.int8))
    return CoincidenceTable(*(np.concatenate([p[k] for p in parts]) for k in range(4)))


@dataclass(eq=False)
class GateScanResult:
    events: EventTable
    gate_index: np.ndarray
    gate_positions: np.ndarray  # ps, left edge of each gate
    rejected: int


def gate_scan(events: EventTable, detector: DetectorModel,
              scan_range: tuple[int, int]) -> GateScanResult:
    """Assign each event to the first gate of the delay scan that contains it.

    Gates open at ``scan_range[0] + k * gate_step`` for every position below
    ``scan_range[1]`` and stay open for ``gate_width``; gate ``k`` covers
    ``[p_k, p_k + gate_width)``. Events outside ``[lo, hi)`` are rejected.
    """
    lo, hi = (int(v) for v in scan_range)
    if hi <= lo:
        raise ValueError("scan_range must be non-empty")
    step, width = int(detector.gate_step), int(detector.gate_width)
    positions = np.arange(lo, hi, step, dtype=np.int64)
    t = events.timestamp - lo
    # smallest k with k*step > t - width, i.e. floor((t - width) / step) + 1
    first = np.maximum(np.floor_divide(t - width, step) + 1, 0)
    ok = (t >= 0) & (events.timestamp < hi) & (first * step <= t) & (first < len(positions))
    return GateScanResult(events[ok], first[ok], positions, int((~ok).sum()))
