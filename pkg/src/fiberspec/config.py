"""Flat ``section.key=value`` run configuration and model builders."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .dispersion import FiberDispersionModel
from .errors import ModelError
from .pdc_source import JointSpectralModel
from .simulator import DetectorModel, EfficiencyCurve, SourceRun
from .spectrum import TabulatedSpectrum, read_table


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


_DETECTOR = {
    "jitter_ps": "180",
    "tdc_bin_ps": "81",
    "efficiency": "1.0",
    "efficiency_file": "",
    "dark_count_prob": "0.0001",
    "gate_width_ps": "200",
    "gate_step_ps": "100",
}

DEFAULTS: dict[str, str] = {
    "seed": "1",
    "workers": "1",
    "fiber.model_file": "",
    "fiber.gvd_ref1_nm": "1325",
    "fiber.gvd_ref1_ns_per_nm": "-0.11",
    "fiber.gvd_ref2_nm": "1575",
    "fiber.gvd_ref2_ns_per_nm": "-0.25",
    "fiber.anchor_nm": "1531",
    "fiber.anchor_delay_ns": "1874",
    "fiber.domain_nm": "1300,1600",
    "fiber.base_delay_ns": "0",
    "fiber.length_m": "3300",
    **{f"detector.{ch}.{k}": v for ch in ("single", "signal", "idler") for k, v in _DETECTOR.items()},
    "source.pulse_count": "100000",
    "source.repetition_period_ns": "1000",
    "source.routing_contrast": "0.8",
    "source.spectrum": "gaussian",
    "source.center_nm": "1531",
    "source.fwhm_nm": "3",
    "source.flat_range_nm": "1325,1575",
    "source.spectrum_file": "",
    "pdc.pump_nm": "765",
    "pdc.pump_fwhm_nm": "1.9",
    "pdc.signal_nm": "1544",
    "pdc.idler_nm": "1517",
    "pdc.phasematch_fwhm_nm": "2.0",
    "calibrate.degree": "2",
    "calibrate.fiber_degree": "10",
    "calibrate.strict": "false",
    "resolution.sigma_ps": "180",
    "jsi.search_ns": "-20,20",
    "jsi.margin_ns": "5",
    "jsi.bins": "64",
    "jsi.half_widths": "3",
    "jsi.strict_discard": "false",
    "reconstruct.jacobian": "true",
    "reconstruct.unreliable_below": "0.05",
}

_PATH_KEYS = ("fiber.model_file", "source.spectrum_file",
              *(f"detector.{ch}.efficiency_file" for ch in ("single", "signal", "idler")))


def parse_text(text: str, origin: str = "config") -> dict[str, str]:
    out = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError([f"{origin}:{n}: expected key=value, got {raw.strip()!r}"])
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


@dataclass
class RunConfig:
    values: dict[str, str] = field(default_factory=lambda: dict(DEFAULTS))

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: dict[str, str] | None = None) -> "RunConfig":
        values = dict(DEFAULTS)
        problems = []
        layers = []
        if path:
            p = Path(path)
            if not p.is_file():
                raise ConfigError([f"config file not found: {p}"])
            layers.append(parse_text(p.read_text(), str(p)))
        layers.append(overrides or {})
        for layer in layers:
            for k, v in layer.items():
                if k not in DEFAULTS:
                    problems.append(f"{k}: unknown configuration key")
                values[k] = v
        for k in _PATH_KEYS:
            if values.get(k) and not Path(values[k]).is_file():
                problems.append(f"{k}: file not found: {values[k]}")
        if problems:
            raise ConfigError(problems)
        return cls(values)

    def text(self) -> str:
        return "".join(f"{k}={self.values[k]}\n" for k in sorted(self.values))

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text().encode()).hexdigest()[:16]

    def get(self, key: str) -> str:
        return self.values[key]

    def num(self, key: str, kind=float):
        try:
            return kind(self.values[key])
        except ValueError:
            raise ConfigError([f"{key}: expected {kind.__name__}, got {self.values[key]!r}"]) from None

    def pair(self, key: str) -> tuple[float, float]:
        try:
            a, b = (float(v) for v in self.values[key].split(","))
        except ValueError:
            raise ConfigError([f"{key}: expected '<lo>,<hi>', got {self.values[key]!r}"]) from None
        return a, b

    def flag(self, key: str) -> bool:
        v = self.values[key].lower()
        if v not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError([f"{key}: expected true/false, got {self.values[key]!r}"])
        return v in ("true", "1", "yes")

    # model builders; invariant violations surface as ConfigError naming the section

    def fiber(self) -> FiberDispersionModel:
        try:
            if self.get("fiber.model_file"):
                return FiberDispersionModel.load(self.get("fiber.model_file"))
            return FiberDispersionModel.from_gvd_line(
                ((self.num("fiber.gvd_ref1_nm"), self.num("fiber.gvd_ref1_ns_per_nm")),
                 (self.num("fiber.gvd_ref2_nm"), self.num("fiber.gvd_ref2_ns_per_nm"))),
                anchor=(self.num("fiber.anchor_nm"), self.num("fiber.anchor_delay_ns")),
                wavelength_domain=self.pair("fiber.domain_nm"),
                base_delay=self.num("fiber.base_delay_ns"),
                fiber_length=self.num("fiber.length_m"),
            )
        except ModelError as e:
            raise ConfigError([f"fiber: {e}"]) from None

    def detector(self, channel: str) -> DetectorModel:
        p = f"detector.{channel}."
        try:
            if self.get(p + "efficiency_file"):
                eff = EfficiencyCurve.read(self.get(p + "efficiency_file"))
            else:
                eff = EfficiencyCurve.flat(self.num(p + "efficiency"))
            return DetectorModel(
                jitter_sigma=self.num(p + "jitter_ps"),
                tdc_bin=self.num(p + "tdc_bin_ps", int),
                efficiency_curve=eff,
                dark_count_prob_per_gate=self.num(p + "dark_count_prob"),
                gate_width=self.num(p + "gate_width_ps", int),
                gate_step=self.num(p + "gate_step_ps", int),
            )
        except ModelError as e:
            raise ConfigError([f"detector.{channel}: {e}"]) from None

    def source_run(self) -> SourceRun:
        try:
            return SourceRun(
                pulse_count=self.num("source.pulse_count", int),
                repetition_period=self.num("source.repetition_period_ns"),
                routing_contrast=self.num("source.routing_contrast"),
            )
        except ModelError as e:
            raise ConfigError([f"source: {e}"]) from None

    def spectrum(self) -> TabulatedSpectrum:
        kind = self.get("source.spectrum")
        try:
            if kind == "gaussian":
                return TabulatedSpectrum.gaussian(self.num("source.center_nm"), self.num("source.fwhm_nm"))
            if kind == "delta":
                return TabulatedSpectrum.delta(self.num("source.center_nm"))
            if kind == "flat":
                return TabulatedSpectrum.flat(*self.pair("source.flat_range_nm"))
            if kind == "file":
                if not self.get("source.spectrum_file"):
                    raise ConfigError(["source.spectrum_file: required when source.spectrum=file"])
                return TabulatedSpectrum(*read_table(self.get("source.spectrum_file")))
        except ModelError as e:
            raise ConfigError([f"source: {e}"]) from None
        raise ConfigError([f"source.spectrum: expected gaussian|delta|flat|file, got {kind!r}"])

    def pdc(self) -> JointSpectralModel:
        try:
            return JointSpectralModel(
                pump_center=self.num("pdc.pump_nm"),
                pump_fwhm=self.num("pdc.pump_fwhm_nm"),
                signal_center=self.num("pdc.signal_nm"),
                idler_center=self.num("pdc.idler_nm"),
                phasematch_width=self.num("pdc.phasematch_fwhm_nm"),
            )
        except ModelError as e:
            raise ConfigError([f"pdc: {e}"]) from None


