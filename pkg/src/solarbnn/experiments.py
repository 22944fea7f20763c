"""Experiment drivers and deterministic reporting.

Every experiment is a pure function of (config, base_seed): random
streams are derived per condition/trial/sample by hashing stable
identity strings, so conditions can run in any order, in any number of
threads, and re-emit byte-identical CSVs. Condition grids fan out to a
worker pool; rows are keyed and sorted before emission.

The pattern experiments drive a physical engine programmed with a
synthetic layer whose output preactivations cycle a fixed span of
targets, so accuracy can be reported both per supply condition and per
preactivation value.
"""

from __future__ import annotations

import csv
import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from importlib import metadata

import numpy as np

from . import config as cf
from . import faults as fl
from . import mapper as mp
from . import pipeline as pl
from . import power as pw
from . import tile as tl
from .errors import ConfigError, IoError, NoOperatingPoint

# preactivation targets cycled across pattern columns
DELTA_SPAN = tuple(range(-8, 9))

SCHMOO_HEADER = ["voltage_v", "frequency_mhz", "accuracy_pct", "functional"]
PATTERN_HEADER = ["voltage_v", "frequency_mhz", "delta", "accuracy_pct"]
SOLAR_HEADER = ["suns", "v_operating", "delta", "accuracy_pct"]
ACCURACY_HEADER = ["condition", "accuracy_pct", "ci_low_pct", "ci_high_pct",
                   "n_samples", "seed"]
ENERGY_HEADER = ["category", "energy_j", "fraction"]
IV_HEADER = ["suns", "v", "i"]

BROWNOUT = "brownout"


# --- seed derivation ---

def derive_seed(base_seed: int, *parts) -> int:
    """Collapse (base_seed, identity parts) into one 64-bit seed.

    Parts are hashed by their string form, so equal identities give
    equal streams no matter where they sit in a grid or batch.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(base_seed)).encode())
    for part in parts:
        h.update(b"\x1f")
        h.update(str(part).encode())
    return int.from_bytes(h.digest(), "big")


def derive_rng(base_seed: int, *parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(base_seed, *parts))


# --- statistics ---

def wilson_interval(successes: int, total: int,
                    z: float = 1.959963984540054) -> tuple[float, float]:
    """95% score interval for a binomial proportion, as fractions."""
    if total <= 0:
        raise ValueError("total must be positive")
    if not 0 <= successes <= total:
        raise ValueError("successes outside [0, total]")
    phat = successes / total
    z2 = z * z
    denom = 1.0 + z2 / total
    center = (phat + z2 / (2 * total)) / denom
    half = z * math.sqrt(phat * (1 - phat) / total + z2 / (4 * total * total)) / denom
    return max(0.0, center - half), min(1.0, center + half)


# --- shared pattern machinery ---

def _cycle_targets(n_outputs: int, span=DELTA_SPAN) -> np.ndarray:
    reps = -(-n_outputs // len(span))
    return np.tile(np.asarray(span, np.int64), reps)[:n_outputs]


def pattern_engine(ecfg: pl.EngineConfig, variability, base_seed: int, tag: str):
    """Freshly programmed preactivation-spanning engine, seed-determined.

    Each worker builds its own copy (same derived seed, same realized
    devices), so conditions never share mutable pipeline state.
    """
    rng = derive_rng(base_seed, tag, "program")
    engine = pl.LayerEngine(ecfg, variability, rng)
    targets = _cycle_targets(engine.n_outputs)
    weights, x, thresholds = pl.gen_preactivation_pattern(targets, engine.fan_in)
    pl.program_layer(engine, weights, thresholds, tl.ProgramContext(variability, rng))
    oracle_out, _ = pl.oracle_eval(weights, x, thresholds)
    return engine, x, targets, oracle_out


def _run_condition(engine, x, targets, oracle_out, profile, policy,
                   theta: float, trials: int, base_seed: int, cond_tag: str):
    """Trial loop for one supply condition; per-target-delta match counts."""
    ctx = tl.SenseContext(theta, derive_rng(base_seed, cond_tag, "weak"),
                          deterministic_weak=True)
    match_per_col = np.zeros(len(targets), np.int64)
    for trial in range(trials):
        rng_t = derive_rng(base_seed, cond_tag, "trial", trial)
        outputs, deltas, _ = pl.run_inference(engine, x, ctx)
        observed = fl.apply_output_errors(outputs, deltas, profile, policy, rng_t)
        match_per_col += observed == oracle_out
    per_delta = []
    for d in sorted(set(int(t) for t in targets)):
        mask = targets == d
        per_delta.append((d, int(match_per_col[mask].sum()), int(mask.sum()) * trials))
    return per_delta, int(match_per_col.sum()), len(targets) * trials


def resolve_profiles(cfg: cf.SimConfig) -> dict:
    profiles = fl.default_profiles()
    if cfg.fault.calibration_csv:
        profiles.update(fl.load_profiles_csv(cfg.fault.calibration_csv))
    return profiles


def _fan_out(workers, threads: int):
    if threads <= 1:
        return [w() for w in workers]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda w: w(), workers))


# --- schmoo / pattern grid ---

@dataclass(frozen=True)
class SchmooCell:
    voltage_v: float
    frequency_mhz: float
    accuracy_pct: float
    functional: bool
    per_delta: tuple  # ((delta, correct, total), ...)


@dataclass(frozen=True)
class PatternResult:
    cells: tuple

    def schmoo_rows(self) -> list[list[str]]:
        return [[f"{c.voltage_v:g}", f"{c.frequency_mhz:g}",
                 f"{c.accuracy_pct:.4f}", "1" if c.functional else "0"]
                for c in self.cells]

    def pattern_rows(self) -> list[list[str]]:
        rows = []
        for c in self.cells:
            for d, correct, total in c.per_delta:
                rows.append([f"{c.voltage_v:g}", f"{c.frequency_mhz:g}",
                             str(d), f"{100.0 * correct / total:.4f}"])
        return rows


def run_pattern_experiment(cfg: cf.SimConfig, base_seed: int | None = None,
                           threads: int | None = None,
                           profiles: dict | None = None) -> PatternResult:
    """Accuracy of the pattern engine over the (voltage, frequency) grid.

    Per grid cell: the voltage-keyed error profile, the margin law at
    (V, f) when the fault mode senses weak cells, and the digital
    functionality limit. Non-functional cells are still measured and
    flagged rather than zeroed.
    """
    exp = cfg.experiment
    seed = exp.seed if base_seed is None else base_seed
    threads = exp.threads if threads is None else threads
    voltages, freqs = exp.voltages, exp.frequencies
    if not voltages or not freqs:
        raise ConfigError("voltage and frequency grids must be non-empty")
    if min(voltages) <= 0 or min(freqs) <= 0:
        raise ConfigError("grid voltages and frequencies must be > 0")
    ecfg = cf.engine_config(cfg)
    variability = cf.variability(cfg)
    mode = cf.fault_mode(cfg)
    law = cf.margin_law(cfg)
    profiles = resolve_profiles(cfg) if profiles is None else profiles
    policy = fl.FaultPolicy(mode, seed)

    def make_worker(v: float, f: float):
        def work() -> SchmooCell:
            engine, x, targets, oracle_out = pattern_engine(
                ecfg, variability, seed, "pattern")
            profile = fl.resolve_profile(profiles, fl.voltage(v))
            theta = (0.0 if mode is fl.FaultMode.STOCHASTIC_OUTPUT
                     else fl.margin_threshold(law, v, f))
            per_delta, correct, total = _run_condition(
                engine, x, targets, oracle_out, profile, policy,
                theta, exp.trials, seed, f"v={v:g},f={f:g}")
            return SchmooCell(v, f, 100.0 * correct / total,
                              f <= fl.max_functional_frequency(v),
                              tuple(per_delta))
        return work

    workers = [make_worker(v, f) for v in voltages for f in freqs]
    cells = _fan_out(workers, threads)
    cells.sort(key=lambda c: (c.voltage_v, c.frequency_mhz))
    return PatternResult(tuple(cells))


# --- solar sweep ---

@dataclass(frozen=True)
class SolarRow:
    suns: float | None       # None in lab-supply mode
    v_operating: float | None  # None on brown-out
    per_delta: tuple | None

    @property
    def brownout(self) -> bool:
        return self.v_operating is None


@dataclass(frozen=True)
class SolarResult:
    rows: tuple
    lab_mode: bool

    @property
    def all_brownout(self) -> bool:
        return bool(self.rows) and all(r.brownout for r in self.rows)

    def sweep_rows(self) -> list[list[str]]:
        out = []
        for r in self.rows:
            suns_s = "" if r.suns is None else f"{r.suns:g}"
            if r.brownout:
                out.extend([suns_s, BROWNOUT, str(d), ""] for d in DELTA_SPAN)
                continue
            for d, correct, total in r.per_delta:
                out.append([suns_s, f"{r.v_operating:.6f}", str(d),
                            f"{100.0 * correct / total:.4f}"])
        return out


def run_solar_sweep(cfg: cf.SimConfig, base_seed: int | None = None,
                    threads: int | None = None,
                    profiles: dict | None = None) -> SolarResult:
    """Per-suns accuracy-vs-preactivation table at solved operating points.

    For each illumination: solve the supply/load crossing, pick the
    illumination-keyed error profile, and run the pattern experiment at
    the operating voltage. Illuminations whose load has no crossing are
    recorded as brown-out rows, never dropped. With supply_voltage
    configured instead of suns, the rail is pinned (lab supply) and
    profiles resolve by voltage.
    """
    exp = cfg.experiment
    seed = exp.seed if base_seed is None else base_seed
    threads = exp.threads if threads is None else threads
    lab_mode = bool(exp.supply_voltage)
    grid = exp.supply_voltage if lab_mode else exp.suns
    if not grid:
        raise ConfigError("solar sweep needs a non-empty suns or supply_voltage grid")
    ecfg = cf.engine_config(cfg)
    variability = cf.variability(cfg)
    mode = cf.fault_mode(cfg)
    law = cf.margin_law(cfg)
    cell = cf.solar_cell(cfg)
    load = cf.chip_load(cfg)
    profiles = resolve_profiles(cfg) if profiles is None else profiles
    policy = fl.FaultPolicy(mode, seed)

    def make_worker(value: float):
        def work() -> SolarRow:
            if lab_mode:
                v_op = value
                condition = fl.voltage(value)
                tag = f"voltage={value:g}"
            else:
                condition = fl.suns(value)
                tag = f"suns={value:g}"
                try:
                    v_op = pw.operating_point(cell, load, value).v_volts
                except NoOperatingPoint:
                    return SolarRow(value, None, None)
            engine, x, targets, oracle_out = pattern_engine(
                ecfg, variability, seed, "solar")
            profile = fl.resolve_profile(profiles, condition)
            theta = (0.0 if mode is fl.FaultMode.STOCHASTIC_OUTPUT
                     else fl.margin_threshold(law, v_op, load.f_mhz))
            per_delta, _, _ = _run_condition(
                engine, x, targets, oracle_out, profile, policy,
                theta, exp.trials, seed, tag)
            return SolarRow(None if lab_mode else value, v_op, tuple(per_delta))
        return work

    rows = _fan_out([make_worker(v) for v in grid], threads)
    rows.sort(key=lambda r: (r.suns if r.suns is not None else r.v_operating))
    return SolarResult(tuple(rows), lab_mode)


def iv_sweep_rows(cell: pw.SolarCellModel, suns_grid, points: int = 50
                  ) -> list[list[str]]:
    """IV curve rows (suns, v, i) from 0 to Voc per illumination."""
    rows = []
    for s in sorted(suns_grid):
        voc = pw.open_circuit_voltage(cell, s)
        for v in np.linspace(0.0, voc, points) if voc > 0 else [0.0]:
            rows.append([f"{s:g}", f"{float(v):.6f}",
                         f"{pw.iv_current(cell, float(v), s):.9e}"])
    return rows


# --- dataset accuracy ---

@dataclass(frozen=True)
class AccuracyRow:
    condition: fl.Condition
    correct: int
    total: int
    seed: int

    @property
    def accuracy_pct(self) -> float:
        return 100.0 * self.correct / self.total

    def interval_pct(self) -> tuple[float, float]:
        lo, hi = wilson_interval(self.correct, self.total)
        return 100.0 * lo, 100.0 * hi


def accuracy_rows(results: list[AccuracyRow]) -> list[list[str]]:
    out = []
    for r in results:
        lo, hi = r.interval_pct()
        out.append([str(r.condition), f"{r.accuracy_pct:.4f}", f"{lo:.4f}",
                    f"{hi:.4f}", str(r.total), str(r.seed)])
    return out


def run_accuracy(model: mp.BNNModel, plan: mp.TilePlan, images: np.ndarray,
                 labels: np.ndarray, conditions, *, trials: int, samples: int,
                 base_seed: int, mode: fl.FaultMode = fl.FaultMode.STOCHASTIC_OUTPUT,
                 profiles: dict | None = None,
                 threads: int = 1) -> list[AccuracyRow]:
    """Mapped-model accuracy per supply condition, pooled over trials.

    Each trial draws a sample subset shared by every condition (paired
    comparisons), and each (trial, sample) stream is shared across
    conditions too (common random numbers: profiles that dominate
    pointwise then produce nested flip sets), so outcomes do not depend
    on condition order or thread count. The error-free baseline
    condition skips injection.
    """
    if trials < 1 or samples < 1:
        raise ConfigError("trials and samples must be >= 1")
    profiles = fl.default_profiles() if profiles is None else profiles
    n = len(images)
    take = min(samples, n)
    picks = [np.sort(derive_rng(base_seed, "accuracy-pick", t).choice(n, take, replace=False))
             for t in range(trials)]

    def make_worker(cond: fl.Condition):
        def work() -> AccuracyRow:
            profile = (None if cond.kind == "baseline"
                       else fl.resolve_profile(profiles, cond))
            policy = fl.FaultPolicy(mode, base_seed)
            correct = 0
            for t in range(trials):
                for i in picks[t]:
                    rng_s = derive_rng(base_seed, "sample", t, int(i))
                    scores = mp.evaluate_mapped(model, plan, images[i].ravel(),
                                                profile, policy, rng_s)
                    correct += int(np.argmax(scores)) == int(labels[i])
            return AccuracyRow(cond, correct, trials * take, base_seed)
        return work

    results = _fan_out([make_worker(c) for c in conditions], threads)
    results.sort(key=lambda r: (r.condition.kind, r.condition.value))
    return results


# --- energy report rows ---

def energy_rows(report: pw.EnergyReport) -> list[list[str]]:
    return [[name, f"{joules:.9e}", f"{joules / report.total_j:.6f}"]
            for name, joules in report.breakdown_j.items()]


# --- emission ---

def write_csv(path, header: list[str], rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def config_echo(cfg: cf.SimConfig) -> list[str]:
    lines = []
    for section in fields(cfg):
        block = getattr(cfg, section.name)
        for f in fields(block):
            lines.append(f"{section.name}.{f.name} = {getattr(block, f.name)}")
    return lines


def _package_version() -> str:
    try:
        return metadata.version("solarbnn")
    except metadata.PackageNotFoundError:
        return "unknown"


def write_manifest(out_dir, cfg: cf.SimConfig, base_seed: int,
                   filenames: list[str]) -> str:
    """Run manifest: version, seed, config echo, and output hashes."""
    lines = [f"solarbnn {_package_version()}", f"seed {base_seed}", ""]
    lines.extend(config_echo(cfg))
    lines.append("")
    for name in sorted(filenames):
        lines.append(f"{file_sha256(f'{out_dir}/{name}')}  {name}")
    path = f"{out_dir}/manifest.txt"
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path
