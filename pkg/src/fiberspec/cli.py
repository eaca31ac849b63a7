"""Command-line front end.

Every subcommand echoes the resolved configuration (defaults included) and
the seed, and stamps output files with the tool version, a hash of that
configuration and the seed. Exit status: 0 success, 1 usage or
configuration error, 2 data or domain error.
"""

from __future__ import annotations

import argparse
import sys
import warnings

import numpy as np

from . import __version__
from .calibration import (
    CalibrationCurve,
    calibration_from_dispersion,
    fit_calibration,
    read_points,
    resolution_at,
)
from .config import ConfigError, RunConfig
from .dispersion import FiberDispersionModel
from .errors import DomainError
from .jsi_analysis import (
    build_jsi,
    default_grids,
    filter_wrong_path,
    map_pairs,
    marginals_dumps,
    pump_envelope_check,
    solve_offset,
)
from .reconstruction import find_peak, histogram, tdc_aligned_range, to_spectrum
from .simulator import CoincidenceTable, EfficiencyCurve, EventTable, simulate_pairs, simulate_single

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _kv(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def _pair(text: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected '<lo>,<hi>', got {text!r}") from None
    return a, b


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--set", dest="overrides", action="append", type=_kv, default=[],
                        metavar="KEY=VALUE", help="override a configuration value (repeatable)")
    common.add_argument("--seed", type=int, help="shorthand for --set seed=N")

    p = _Parser(prog="fiberspec", description="Dispersive-fiber single-photon spectrograph toolkit")
    p.add_argument("--version", action="version", version=f"fiberspec {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="generate event or coincidence files")
    s.add_argument("--mode", choices=("single", "pairs"), default="single")
    s.add_argument("--out", required=True)

    s = sub.add_parser("calibrate", parents=[common], help="fit a calibration curve")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--points", help="file of '<wavelength_nm>,<arrival_time_ns>' lines")
    src.add_argument("--from-fiber", action="store_true",
                     help="sample the configured fiber model instead of a points file")
    s.add_argument("--range", type=_pair, help="wavelength range for --from-fiber (nm)")
    s.add_argument("--degree", type=int)
    s.add_argument("--sigma-ps", type=float)
    s.add_argument("--strict", action="store_true", help="refuse non-monotonic curves")
    s.add_argument("--out", required=True)

    s = sub.add_parser("reconstruct", parents=[common], help="events -> spectrum")
    s.add_argument("--events", required=True)
    s.add_argument("--curve", required=True)
    s.add_argument("--efficiency", help="file of '<wavelength_nm>,<p_D>' lines")
    s.add_argument("--channel", default="X", choices=("S", "I", "X"))
    s.add_argument("--bin-ps", type=int, help="histogram bin width (default: TDC bin)")
    s.add_argument("--no-jacobian", action="store_true")
    s.add_argument("--normalize", action="store_true", help="scale output to unit peak")
    s.add_argument("--out", required=True)

    s = sub.add_parser("jsi", parents=[common], help="coincidences -> offset, JSI, marginals")
    s.add_argument("--coincidences", required=True)
    s.add_argument("--curve", required=True)
    s.add_argument("--pump-nm", type=float)
    s.add_argument("--search", type=_pair, help="offset search interval in ns")
    s.add_argument("--out", required=True)
    s.add_argument("--marginals")

    s = sub.add_parser("resolution", parents=[common], help="resolution table for a curve")
    s.add_argument("--curve", required=True)
    s.add_argument("--sigma-ps", type=float)
    s.add_argument("--wavelengths", help="comma-separated wavelengths in nm")
    s.add_argument("--out")

    s = sub.add_parser("check-aliasing", parents=[common], help="pulse overlap verdict")
    s.add_argument("--model", help="dispersion model file (default: configured fiber)")
    s.add_argument("--support", type=_pair, required=True, help="spectrum support lo,hi in nm")
    s.add_argument("--period-ns", type=float, required=True)
    return p


def _config(args) -> RunConfig:
    overrides = dict(args.overrides)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    return RunConfig.load(args.config, overrides)


def _echo(cfg: RunConfig, out) -> list[str]:
    out.write(f"# fiberspec {__version__}\n# resolved configuration (sha256 {cfg.digest}):\n")
    for line in cfg.text().splitlines():
        out.write(f"#   {line}\n")
    out.write(f"# seed={cfg.get('seed')}\n")
    return [f"fiberspec {__version__}", f"config_sha256={cfg.digest}", f"seed={cfg.get('seed')}"]


def _simulate(args, cfg, stamp, out):
    fiber = cfg.fiber()
    run = cfg.source_run()
    seed = cfg.num("seed", int)
    workers = cfg.num("workers", int)
    if args.mode == "single":
        events = simulate_single(cfg.spectrum(), fiber, cfg.detector("single"), run, seed, workers)
        events.save(args.out, stamp)
        out.write(f"pulses={run.pulse_count} events={len(events)} -> {args.out}\n")
    else:
        coinc = simulate_pairs(cfg.pdc(), fiber, (cfg.detector("signal"), cfg.detector("idler")),
                               run, seed, workers)
        coinc.save(args.out, stamp)
        out.write(f"pulses={run.pulse_count} coincidences={len(coinc)} -> {args.out}\n")


def _calibrate(args, cfg, stamp, out):
    sigma = (args.sigma_ps if args.sigma_ps is not None else cfg.num("resolution.sigma_ps")) / 1000.0
    strict = args.strict or cfg.flag("calibrate.strict")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if args.from_fiber:
            fiber = cfg.fiber()
            curve = calibration_from_dispersion(fiber, cfg.num("calibrate.fiber_degree", int),
                                                wavelength_range=args.range)
            points = None
        else:
            points = read_points(args.points)
            degree = args.degree if args.degree is not None else cfg.num("calibrate.degree", int)
            curve = fit_calibration(points, degree, strict=strict)
    for w in caught:
        out.write(f"warning: {w.message}\n")
    curve.save(args.out, stamp)
    out.write(f"degree={curve.degree} domain_ns={curve.time_domain[0]!r},{curve.time_domain[1]!r} "
              f"monotonic={str(curve.monotonic).lower()}\n")
    out.write("wavelength_nm,arrival_time_ns,residual_nm,resolution_nm\n")
    if points is None:
        return
    for pt, r in zip(points, curve.fit_residuals):
        try:
            res = f"{resolution_at(curve, pt.reference_wavelength, sigma):.6f}"
        except DomainError:
            res = "n/a"
        out.write(f"{pt.reference_wavelength!r},{pt.arrival_time!r},{r:.3e},{res}\n")


def _reconstruct(args, cfg, stamp, out):
    curve = CalibrationCurve.load(args.curve)
    events = EventTable.load(args.events).select(args.channel)
    if len(events) == 0:
        raise ValueError(f"no events on channel {args.channel}")
    det = cfg.detector({"X": "single", "S": "signal", "I": "idler"}[args.channel])
    bin_ps = args.bin_ps or det.tdc_bin
    hist = histogram(events, bin_ps, tdc_aligned_range(events.timestamp, bin_ps))
    eff = EfficiencyCurve.read(args.efficiency) if args.efficiency else None
    jac = cfg.flag("reconstruct.jacobian") and not args.no_jacobian
    spec = to_spectrum(hist, curve, eff, jacobian=jac,
                       unreliable_below=cfg.num("reconstruct.unreliable_below"))
    spec.save(args.out, stamp + [f"jacobian={str(jac).lower()}"], normalize=args.normalize)
    out.write(f"events={len(events)} peak_time_ns={find_peak(hist):.4f} "
              f"points={len(spec.wavelength)} -> {args.out}\n")


def _jsi(args, cfg, stamp, out):
    curve = CalibrationCurve.load(args.curve)
    coinc = CoincidenceTable.load(args.coincidences)
    model = cfg.pdc()
    pump = args.pump_nm if args.pump_nm is not None else cfg.num("pdc.pump_nm")
    search = args.search or cfg.pair("jsi.search_ns")
    sol = solve_offset(coinc, curve, pump, search, margin=cfg.num("jsi.margin_ns"))
    out.write(f"offset_ns={sol.offset:.6f} median_residual_per_nm={sol.median_residual:.6e} "
              f"events={sol.events} outside_domain={sol.outside_domain}\n")
    for q, v in sol.residual_quantiles.items():
        out.write(f"residual_quantile_{q}={v:.6e}\n")
    pairs = map_pairs(coinc, curve, sol.offset)
    sg, ig = default_grids(model, cfg.num("jsi.bins", int), cfg.num("jsi.half_widths"))
    mid = 0.5 * (model.signal_center + model.idler_center)
    if model.signal_center > model.idler_center:
        sband, iband = (mid, float(sg[-1])), (float(ig[0]), mid)
    else:
        sband, iband = (float(sg[0]), mid), (mid, float(ig[-1]))
    filt = filter_wrong_path(pairs, sband, iband)
    c = filt.counts
    out.write(f"kept={c['kept']} swapped={c['swapped']} discarded={c['discarded']}\n")
    jsi = build_jsi(filt.accepted(cfg.flag("jsi.strict_discard")), sg, ig, sol.offset, pump)
    jsi.save(args.out, stamp)
    frac = pump_envelope_check(jsi, pump, model.pump_fwhm) if jsi.counts.sum() else float("nan")
    out.write(f"jsi_counts={int(jsi.counts.sum())} outside_grid={jsi.outside} "
              f"pump_band_fraction={frac:.4f} correlation={jsi.correlation():.4f} -> {args.out}\n")
    if args.marginals:
        with open(args.marginals, "w") as fh:
            fh.write(marginals_dumps(jsi, stamp))


def _resolution(args, cfg, stamp, out):
    curve = CalibrationCurve.load(args.curve)
    sigma = (args.sigma_ps if args.sigma_ps is not None else cfg.num("resolution.sigma_ps")) / 1000.0
    if args.wavelengths:
        lam = np.array([float(v) for v in args.wavelengths.split(",")])
    else:
        lo, hi = curve.wavelength_range()
        lam = np.linspace(lo, hi, 11)
    res = np.atleast_1d(resolution_at(curve, lam, sigma))
    lines = [f"# sigma_ps={sigma * 1000:g}", "wavelength_nm,resolution_nm"]
    lines += [f"{a:.4f},{b:.6f}" for a, b in zip(lam, res)]
    text = "\n".join(lines) + "\n"
    out.write(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("".join(f"# {s}\n" for s in stamp) + text)


def _check_aliasing(args, cfg, stamp, out):
    fiber = FiberDispersionModel.load(args.model) if args.model else cfg.fiber()
    v = fiber.check_aliasing(args.support, args.period_ns)
    out.write(f"verdict={'aliased' if v.aliased else 'ok'} spread_ns={v.spread:.4f} "
              f"period_ns={args.period_ns:g}\n")


_COMMANDS = {
    "simulate": _simulate,
    "calibrate": _calibrate,
    "reconstruct": _reconstruct,
    "jsi": _jsi,
    "resolution": _resolution,
    "check-aliasing": _check_aliasing,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    err = sys.stderr
    try:
        args = build_parser().parse_args(argv)
        cfg = _config(args)
    except _UsageError as e:
        err.write(f"{e}\n")
        return EXIT_CONFIG
    except ConfigError as e:
        for p in e.problems:
            err.write(f"config error: {p}\n")
        return EXIT_CONFIG
    stamp = _echo(cfg, out)
    try:
        _COMMANDS[args.command](args, cfg, stamp, out)
    except ConfigError as e:
        for p in e.problems:
            err.write(f"config error: {p}\n")
        return EXIT_CONFIG
    except (ValueError, RuntimeError, OSError, KeyError) as e:
        err.write(f"{args.command}: {type(e).__name__}: {e}\n")
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
