"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""

import io
import subprocess
import sys
import time
import warnings
from fractions import Fraction
from pathlib import Path

import numpy as np

from fiberspec.calibration import (
    REFERENCE_POINTS,
    CalibrationWarning,
    fit_calibration,
    linear_curve,
    resolution_at,
)
from fiberspec.cli import main
from fiberspec.dispersion import reference_fiber
from fiberspec.jsi_analysis import build_jsi, default_grids, filter_wrong_path, map_pairs, solve_offset
from fiberspec.pdc_source import analytic_correlation, energy_residual
from fiberspec.reconstruction import histogram, peak_and_fwhm, tdc_aligned_range, to_spectrum
from fiberspec.simulator import CoincidenceTable, DetectorModel, SourceRun, simulate_pairs, simulate_single
from fiberspec.spectrum import TabulatedSpectrum

FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))
QUIET = DetectorModel(dark_count_prob_per_gate=0.0)


def reconstruct(events, curve, detector=QUIET):
    h = histogram(events, detector.tdc_bin, tdc_aligned_range(events.timestamp, detector.tdc_bin))
    return to_spectrum(h, curve)


def test_1_resolution(tmp_path, acceptance):
    # |dtau/dlambda| = 0.25 ns/nm at 1550 nm
    curve = linear_curve(-4.0, (1874.0, 1550.0), (1700.0, 2000.0))
    direct = float(resolution_at(curve, 1550.0, 0.180))
    path = tmp_path / "curve.txt"
    curve.save(path)
    buf = io.StringIO()
    code = main(["resolution", "--curve", str(path), "--sigma-ps", "180", "--wavelengths", "1550"], out=buf)
    reported = float([ln for ln in buf.getvalue().splitlines() if ln.startswith("1550")][0].split(",")[1])
    ok = code == 0 and abs(direct - 0.72) <= 0.005 and abs(reported - 0.72) <= 0.005
    acceptance(1, ok, f"resolution={reported:.6f} nm (function {direct:.6f})")
    assert ok


def test_2_calibration_exactness(acceptance):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CalibrationWarning)
        curve = fit_calibration(REFERENCE_POINTS, 2, strict=False)
    back = [float(curve(t)) for _, t in REFERENCE_POINTS]
    worst = max(max(abs(r) for r in curve.fit_residuals),
                max(abs(b - lam) for b, (lam, _) in zip(back, REFERENCE_POINTS)))
    ok = worst < 1e-9
    acceptance(2, ok, f"max |residual| = {worst:.2e} nm")
    assert ok


def test_3_single_channel_closure(fiber, curve, acceptance):
    source = TabulatedSpectrum.gaussian(1531.0, 3.0)
    events = simulate_single(source, fiber, QUIET, SourceRun(1_000_000), seed=31)
    spec = reconstruct(events, curve)
    centre, fwhm = peak_and_fwhm(spec.wavelength, spec.intensity)
    sigma_t = np.hypot(QUIET.jitter_sigma, QUIET.tdc_bin / np.sqrt(12.0)) / 1000.0
    res = float(resolution_at(curve, 1531.0, sigma_t))
    expected = np.hypot(3.0, FWHM_PER_SIGMA * res)
    ok = abs(centre - 1531.0) < 0.2 and abs(fwhm / expected - 1.0) < 0.10
    acceptance(3, ok, f"centre={centre:.3f} nm, fwhm={fwhm:.3f} nm vs predicted {expected:.3f} nm "
                      f"({len(events)} events)")
    assert ok


def test_4_jacobian_flatness(fiber, curve, acceptance):
    lo, hi = 1325.0, 1575.0
    events = simulate_single(TabulatedSpectrum.flat(lo, hi), fiber, QUIET, SourceRun(1_000_000), seed=41)
    spec = reconstruct(events, curve)
    # the jitter rolls off the support edges; keep bins well inside
    inner = (spec.wavelength > lo + 10.0) & (spec.wavelength < hi - 10.0)
    inten, se = spec.intensity[inner], np.sqrt(spec.counts[inner]) / spec.bin_width[inner]
    worst = float(np.max(np.abs(inten - inten.mean()) / se))
    ok = worst < 4.0
    acceptance(4, ok, f"max deviation {worst:.2f} SE over {inner.sum()} bins")
    assert ok


def test_5_offset_recovery(pdc, curve, acceptance):
    errors = []
    for d0 in (-5.0, 0.0, 5.0):
        co = simulate_pairs(pdc, reference_fiber(base_delay=-d0), (QUIET, QUIET), SourceRun(16_000), seed=51)
        n = 10_000
        assert len(co) >= n
        co = CoincidenceTable(co.pulse_index[:n], co.ts_signal[:n], co.ts_idler[:n])
        errors.append(solve_offset(co, curve, 765.0, (-20.0, 20.0)).offset - d0)
    ok = all(abs(e) < 0.081 for e in errors)
    acceptance(5, ok, "errors " + ", ".join(f"{e * 1000:+.1f} ps" for e in errors))
    assert ok


def test_6_energy_residual(acceptance):
    got = float(energy_residual(765.0, 1544.0, 1517.0))
    exact = float(Fraction(1, 765) - Fraction(1, 1544) - Fraction(1, 1517))
    ok = abs(got / exact - 1.0) < 0.01 and float(f"{got:.2g}") == 3.3e-7
    acceptance(6, ok, f"residual={got:.5e} nm^-1 (exact {exact:.5e})")
    assert ok


def test_7_jsi_closure(pdc, fiber, curve, acceptance):
    det = DetectorModel()
    co = simulate_pairs(pdc, fiber, (det, det), SourceRun(1_000_000), seed=71, workers=4)
    sol = solve_offset(co, curve, 765.0, (-20.0, 20.0))
    pairs = map_pairs(co, curve, sol.offset)
    sg, ig = default_grids(pdc)
    mid = 0.5 * (pdc.signal_center + pdc.idler_center)
    filt = filter_wrong_path(pairs, (mid, float(sg[-1])), (float(ig[0]), mid))
    jsi = build_jsi(filt.accepted(), sg, ig, sol.offset, 765.0)

    sigma_t = np.hypot(det.jitter_sigma, det.tdc_bin / np.sqrt(12.0)) / 1000.0
    rs = float(resolution_at(curve, pdc.signal_center, sigma_t))
    ri = float(resolution_at(curve, pdc.idler_center, sigma_t))
    model_rho = analytic_correlation(pdc, rs, ri)
    rho = jsi.correlation()
    ps = jsi.signal_centers[np.argmax(jsi.marginal("signal"))]
    pi = jsi.idler_centers[np.argmax(jsi.marginal("idler"))]
    ws, wi = np.diff(sg).mean(), np.diff(ig).mean()
    ok = abs(rho - model_rho) < 0.02 and abs(ps - 1544.0) <= ws and abs(pi - 1517.0) <= wi
    acceptance(7, ok, f"rho={rho:.4f} vs {model_rho:.4f} (raw model {analytic_correlation(pdc):.4f}); "
                      f"peaks {ps:.2f}/{pi:.2f} nm, bins {ws:.2f}/{wi:.2f} nm; {int(jsi.counts.sum())} pairs")
    assert ok


def test_8_aliasing(fiber, acceptance):
    support = (1460.0, 1600.0)
    fast = fiber.check_aliasing(support, 12.5)
    slow = fiber.check_aliasing(support, 1000.0)
    ok = fast.aliased and not slow.aliased
    acceptance(8, ok, f"spread={fast.spread:.2f} ns: 12.5 ns {'aliased' if fast.aliased else 'ok'}, "
                      f"1000 ns {'aliased' if slow.aliased else 'ok'}")
    assert ok


PROPERTY_TESTS = (
    "test_simulator.py::test_determinism_across_workers",
    "test_simulator.py::test_gate_scan_matches_enumeration",
    "test_pdc_source.py::test_sampling_independent_of_workers_and_scale",
    "test_pdc_source.py::test_prefix_stability",
    "test_reconstruction.py::test_count_conservation_and_ordering",
    "test_jsi_analysis.py::test_marginals_are_1d_histograms",
    "test_jsi_analysis.py::test_filter_partitions",
)


def test_9_property_suites(acceptance):
    here = Path(__file__).parent
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *(str(here / t) for t in PROPERTY_TESTS)],
                          capture_output=True, text=True, cwd=here.parent)
    elapsed = time.perf_counter() - start
    ok = proc.returncode == 0 and elapsed < 60.0
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    acceptance(9, ok, f"{summary} ({elapsed:.1f} s)")
    assert ok, proc.stdout[-2000:]
