"""Run configuration.

One INI file, five sections (device, fault, solar, load, experiment),
everything optional: a missing file, section, or key falls back to the
built-in defaults, which reproduce the reference chip. Unknown sections
or keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass

from . import device as dev
from . import faults as fl
from . import pipeline as pl
from . import power as pw
from .errors import ConfigError


@dataclass
class DeviceSection:
    lrs_median_ohms: float = 10e3
    lrs_log_sigma: float = 0.3
    hrs_median_ohms: float = 1e6
    hrs_log_sigma: float = 0.8
    margin_threshold: float = 0.0
    pulse_tolerance: float = dev.PULSE_TOLERANCE


@dataclass
class FaultSection:
    mode: str = "stochastic_output"
    law_a: float = 20.0
    law_b: float = 0.09
    law_v0: float = 1.0
    calibration_csv: str = ""


@dataclass
class SolarSection:
    i_ph_1sun_a: float = 2.5e-3
    i_0_a: float = 3.353e-16
    ideality: float = 1.5
    r_s_ohms: float = 1.0
    r_sh_ohms: float = 1e5
    temperature_k: float = 300.0
    area_cm2: float = 0.25


@dataclass
class LoadSection:
    c_eff_f: float = pw.DEFAULT_C_EFF_F
    i_leak_a: float = 1e-6
    f_mhz: float = 0.3
    cycles_per_inference: int = pw.DEFAULT_CYCLES_PER_INFERENCE


@dataclass
class ExperimentSection:
    seed: int = 1234
    trials: int = 20
    samples: int = 64
    threads: int = 1
    engine: str = "SINGLE_TILE_58x64"
    voltages: tuple = (0.7, 0.8, 0.9, 1.0, 1.1, 1.2)
    frequencies: tuple = (10.0, 33.0, 66.0)
    suns: tuple = (8.0, 0.8, 0.36, 0.08)
    supply_voltage: tuple = ()  # lab-rail alternative to suns; exclusive
    model: str = ""
    images: str = ""
    labels: str = ""


@dataclass
class SimConfig:
    device: DeviceSection = dataclasses.field(default_factory=DeviceSection)
    fault: FaultSection = dataclasses.field(default_factory=FaultSection)
    solar: SolarSection = dataclasses.field(default_factory=SolarSection)
    load: LoadSection = dataclasses.field(default_factory=LoadSection)
    experiment: ExperimentSection = dataclasses.field(default_factory=ExperimentSection)


_SECTIONS = {
    "device": DeviceSection,
    "fault": FaultSection,
    "solar": SolarSection,
    "load": LoadSection,
    "experiment": ExperimentSection,
}

_TUPLE_KEYS = {"voltages", "frequencies", "suns", "supply_voltage"}


def _coerce(section: str, key: str, raw: str, kind: type):
    raw = raw.strip()
    try:
        if key in _TUPLE_KEYS:
            return tuple(float(tok) for tok in raw.split(",") if tok.strip())
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc


def load_config(path: str | None = None) -> SimConfig:
    """Parse an INI file into a SimConfig; None gives pure defaults."""
    cfg = SimConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        target = getattr(cfg, section)
        types = {f.name: type(getattr(target, f.name)) for f in dataclasses.fields(target)}
        for key, raw in parser.items(section):
            if key not in types:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            setattr(target, key, _coerce(section, key, raw, types[key]))
    if parser.has_section("experiment"):
        given = dict(parser.items("experiment"))
        if "suns" in given and "supply_voltage" in given:
            raise ConfigError("[experiment] suns and supply_voltage are mutually exclusive")
        if "supply_voltage" in given:
            cfg.experiment.suns = ()  # lab rail replaces the default suns grid
    validate_config(cfg)
    return cfg


def validate_config(cfg: SimConfig) -> None:
    d = cfg.device
    if min(d.lrs_median_ohms, d.hrs_median_ohms) <= 0:
        raise ConfigError("[device] resistance medians must be > 0")
    if min(d.lrs_log_sigma, d.hrs_log_sigma) < 0:
        raise ConfigError("[device] log sigmas must be >= 0")
    if d.margin_threshold < 0:
        raise ConfigError("[device] margin_threshold must be >= 0")
    fault_mode(cfg)
    e = cfg.experiment
    if e.trials < 1 or e.samples < 1:
        raise ConfigError("[experiment] trials and samples must be >= 1")
    if e.threads < 1:
        raise ConfigError("[experiment] threads must be >= 1")
    if not e.voltages or not e.frequencies:
        raise ConfigError("[experiment] voltages and frequencies must be non-empty")
    if not e.suns and not e.supply_voltage:
        raise ConfigError("[experiment] needs a suns or supply_voltage grid")
    engine_config(cfg)
    if cfg.load.cycles_per_inference < 1:
        raise ConfigError("[load] cycles_per_inference must be >= 1")
    if cfg.solar.i_ph_1sun_a <= 0:
        raise ConfigError("[solar] i_ph_1sun_a must be > 0")


# --- adapters into the model types ---

def variability(cfg: SimConfig) -> dev.DeviceVariability:
    d = cfg.device
    return dev.DeviceVariability(
        lrs_median_ohms=d.lrs_median_ohms, lrs_log_sigma=d.lrs_log_sigma,
        hrs_median_ohms=d.hrs_median_ohms, hrs_log_sigma=d.hrs_log_sigma)


def fault_mode(cfg: SimConfig) -> fl.FaultMode:
    name = cfg.fault.mode.strip().upper()
    try:
        return fl.FaultMode[name]
    except KeyError:
        valid = ", ".join(m.name.lower() for m in fl.FaultMode)
        raise ConfigError(f"[fault] mode must be one of: {valid}") from None


def margin_law(cfg: SimConfig) -> fl.MarginLaw:
    f = cfg.fault
    return fl.MarginLaw(a=f.law_a, b=f.law_b, v0=f.law_v0)


def solar_cell(cfg: SimConfig) -> pw.SolarCellModel:
    s = cfg.solar
    return pw.SolarCellModel(
        i_ph_1sun_a=s.i_ph_1sun_a, i_0_a=s.i_0_a, ideality=s.ideality,
        r_s_ohms=s.r_s_ohms, r_sh_ohms=s.r_sh_ohms,
        temperature_k=s.temperature_k, area_cm2=s.area_cm2)


def chip_load(cfg: SimConfig, f_mhz: float | None = None) -> pw.ChipLoadModel:
    ld = cfg.load
    return pw.ChipLoadModel(
        c_eff_f=ld.c_eff_f, i_leak_a=ld.i_leak_a,
        f_mhz=ld.f_mhz if f_mhz is None else f_mhz,
        cycles_per_inference=ld.cycles_per_inference)


def engine_config(cfg: SimConfig) -> pl.EngineConfig:
    name = cfg.experiment.engine.strip().lower()
    for member in pl.EngineConfig:
        if member.name.lower() == name:
            return member
    valid = ", ".join(c.name for c in pl.EngineConfig)
    raise ConfigError(f"[experiment] engine must be one of: {valid}") from None
