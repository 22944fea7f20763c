"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 when a
solar sweep browns out at every requested illumination.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import config as cf
from . import dataset as ds
from . import experiments as ex
from . import faults as fl
from . import mapper as mp
from . import pipeline as pl
from . import power as pw
from . import tile as tl
from .errors import ConfigError, SimulationError


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", default=None,
                        help="INI config file (defaults built in)")
    parser.add_argument("--seed", metavar="U64", type=int, default=None,
                        help="base seed (overrides [experiment] seed)")
    parser.add_argument("--out", metavar="DIR", default=None,
                        help="output directory (default: current)")
    parser.add_argument("--threads", metavar="N", type=int, default=None,
                        help="worker threads (overrides [experiment] threads)")


def _load(args) -> tuple[cf.SimConfig, int, int]:
    cfg = cf.load_config(args.config)
    seed = cfg.experiment.seed if args.seed is None else args.seed
    threads = cfg.experiment.threads if args.threads is None else args.threads
    if threads < 1:
        raise ConfigError("--threads must be >= 1")
    return cfg, seed, threads


def _outdir(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _emit(out, cfg, seed, files: dict) -> None:
    for name, (header, rows) in files.items():
        ex.write_csv(f"{out}/{name}", header, rows)
    ex.write_manifest(out, cfg, seed, sorted(files))
    for name in sorted(files):
        print(f"wrote {out}/{name}")
    print(f"wrote {out}/manifest.txt")


def cmd_program(args) -> int:
    cfg, seed, _ = _load(args)
    out = _outdir(args)
    ecfg = cf.engine_config(cfg)
    engine, _, _, _ = ex.pattern_engine(ecfg, cf.variability(cfg), seed, "pattern")
    names = []
    for g in range(engine.groups):
        for s in range(engine.stack):
            name = f"tile_g{g}s{s}.txt"
            with open(f"{out}/{name}", "w") as fh:
                fh.write(tl.tile_to_text(engine.tile_at(g, s)))
            names.append(name)
    ex.write_manifest(out, cfg, seed, names)
    margins = np.concatenate([np.abs(t.margin_matrix()).ravel() for t in engine.tiles])
    print(f"programmed {ecfg.name}: {len(names)} tile(s), "
          f"min |margin| {margins.min():.3f} ln-ohm")
    for name in names:
        print(f"wrote {out}/{name}")
    return 0


def cmd_infer(args) -> int:
    cfg, seed, _ = _load(args)
    variability = cf.variability(cfg)
    ecfg = cf.engine_config(cfg)
    if args.tile:
        parsed = []
        for path in args.tile:
            try:
                with open(path) as fh:
                    parsed.append(tl.parse_tile_text(fh.read()))
            except ValueError as exc:
                raise ConfigError(f"bad tile file {path}: {exc}") from exc
        rng = ex.derive_rng(seed, "infer", "program")
        engine = pl.LayerEngine(ecfg, variability, rng)
        n_tiles = engine.groups * engine.stack
        if len(parsed) != n_tiles:
            raise ConfigError(f"{ecfg.name} needs {n_tiles} --tile file(s), "
                              f"got {len(parsed)}")
        weights = np.empty((engine.fan_in, engine.n_outputs), np.int8)
        thresholds = np.zeros(engine.n_outputs, np.int64)
        for g in range(engine.groups):
            for s in range(engine.stack):
                w, t = parsed[g * engine.stack + s]
                weights[s * tl.WEIGHT_ROWS:(s + 1) * tl.WEIGHT_ROWS,
                        g * tl.N_COLS:(g + 1) * tl.N_COLS] = w
                thresholds[g * tl.N_COLS:(g + 1) * tl.N_COLS] += t
        pl.program_layer(engine, weights, thresholds,
                         tl.ProgramContext(variability, rng))
        in_rng = ex.derive_rng(seed, "infer", "input")
        x = np.where(in_rng.random(engine.fan_in) < 0.5, 1, -1).astype(np.int8)
    else:
        engine, x, _, _ = ex.pattern_engine(ecfg, variability, seed, "pattern")
    ctx = tl.SenseContext(cfg.device.margin_threshold,
                          ex.derive_rng(seed, "infer", "sense"),
                          deterministic_weak=True)
    outputs, deltas, trace = pl.run_inference(engine, x, ctx)
    print(f"engine {ecfg.name}: {trace.cycles} cycles")
    print("outputs " + "".join("+" if o > 0 else "-" for o in outputs))
    print("deltas  " + " ".join(str(int(d)) for d in deltas))
    return 0


def cmd_pattern(args) -> int:
    cfg, seed, threads = _load(args)
    if args.trials is not None:
        cfg.experiment.trials = args.trials
    result = ex.run_pattern_experiment(cfg, seed, threads)
    _emit(_outdir(args), cfg, seed,
          {"pattern.csv": (ex.PATTERN_HEADER, result.pattern_rows())})
    return 0


def cmd_schmoo(args) -> int:
    cfg, seed, threads = _load(args)
    if args.trials is not None:
        cfg.experiment.trials = args.trials
    result = ex.run_pattern_experiment(cfg, seed, threads)
    _emit(_outdir(args), cfg, seed,
          {"schmoo.csv": (ex.SCHMOO_HEADER, result.schmoo_rows())})
    return 0


def cmd_solar(args) -> int:
    cfg, seed, threads = _load(args)
    if args.trials is not None:
        cfg.experiment.trials = args.trials
    result = ex.run_solar_sweep(cfg, seed, threads)
    cell = cf.solar_cell(cfg)
    grid = cfg.experiment.suns if not result.lab_mode else ()
    files = {"solar.csv": (ex.SOLAR_HEADER, result.sweep_rows())}
    if grid:
        files["iv.csv"] = (ex.IV_HEADER, ex.iv_sweep_rows(cell, grid))
    _emit(_outdir(args), cfg, seed, files)
    if result.all_brownout:
        print("all conditions browned out", file=sys.stderr)
        return 4
    return 0


def cmd_accuracy(args) -> int:
    cfg, seed, threads = _load(args)
    exp = cfg.experiment
    model_path = args.model or exp.model
    images_path = args.images or exp.images
    labels_path = args.labels or exp.labels
    if not (model_path and images_path and labels_path):
        raise ConfigError("accuracy needs --model, --images and --labels "
                          "(flags or [experiment] keys)")
    if args.trials is not None:
        exp.trials = args.trials
    if args.samples is not None:
        exp.samples = args.samples
    model = mp.load_model(model_path)
    plan = mp.compile_model(model)
    images, labels = ds.load_dataset(images_path, labels_path)
    if exp.supply_voltage:
        conditions = [fl.BASELINE] + [fl.voltage(v) for v in exp.supply_voltage]
    else:
        conditions = [fl.BASELINE] + [fl.suns(s) for s in exp.suns]
    results = ex.run_accuracy(
        model, plan, images, labels, conditions,
        trials=exp.trials, samples=exp.samples, base_seed=seed,
        mode=cf.fault_mode(cfg), profiles=ex.resolve_profiles(cfg),
        threads=threads)
    _emit(_outdir(args), cfg, seed,
          {"accuracy.csv": (ex.ACCURACY_HEADER, ex.accuracy_rows(results))})
    for r in results:
        lo, hi = r.interval_pct()
        print(f"{r.condition}: {r.accuracy_pct:.2f}% [{lo:.2f}, {hi:.2f}] "
              f"({r.total} evals)")
    return 0


def cmd_energy(args) -> int:
    cfg, seed, _ = _load(args)
    report = pw.build_energy_report(args.voltage, args.frequency)
    print(f"energy/inference at {report.v_volts:g} V: {report.total_j * 1e9:.3f} nJ")
    for name, joules in report.breakdown_j.items():
        print(f"  {name:<10} {joules * 1e9:8.3f} nJ  {joules / report.total_j:6.1%}")
    print(f"ops {report.ops}, counted {report.counted_energy_j * 1e9:.3f} nJ, "
          f"{report.tops_per_watt:.2f} TOPS/W")
    if args.out is not None:
        _emit(_outdir(args), cfg, seed,
              {"energy.csv": (ex.ENERGY_HEADER, ex.energy_rows(report))})
    return 0


def cmd_map(args) -> int:
    cfg, seed, _ = _load(args)
    model_path = args.model or cfg.experiment.model
    if not model_path:
        raise ConfigError("map needs --model (flag or [experiment] key)")
    model = mp.load_model(model_path)
    plan = mp.compile_model(model)
    out = _outdir(args)
    mp.export_plan_csv(plan, f"{out}/plan.csv")
    ex.write_manifest(out, cfg, seed, ["plan.csv"])
    for li, lp in enumerate(plan.layers):
        print(f"layer {li}: {lp.fan_in} -> {lp.fan_out}, "
              f"{lp.n_blocks} block(s), pad {lp.pad}")
    print(f"wrote {out}/plan.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="solarbnn",
        description="Behavioral simulator of a memristive BNN chip on a solar supply")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("program", help="program the pattern engine, dump tiles")
    _common(p)
    p.set_defaults(func=cmd_program)

    p = sub.add_parser("infer", help="run one inference, print outputs")
    _common(p)
    p.add_argument("--tile", metavar="PATH", action="append", default=None,
                   help="programmed tile file (repeat per engine tile)")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("pattern", help="per-preactivation accuracy table")
    _common(p)
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(func=cmd_pattern)

    p = sub.add_parser("schmoo", help="voltage/frequency accuracy grid")
    _common(p)
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(func=cmd_schmoo)

    p = sub.add_parser("solar", help="solar-powered sweep over illuminations")
    _common(p)
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(func=cmd_solar)

    p = sub.add_parser("accuracy", help="dataset accuracy per supply condition")
    _common(p)
    p.add_argument("--model", metavar="PATH", default=None)
    p.add_argument("--images", metavar="PATH", default=None)
    p.add_argument("--labels", metavar="PATH", default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.set_defaults(func=cmd_accuracy)

    p = sub.add_parser("energy", help="energy law, breakdown, efficiency")
    _common(p)
    p.add_argument("--voltage", type=float, default=pw.E0_V)
    p.add_argument("--frequency", type=float, default=10.0)
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("map", help="compile a model to tile blocks")
    _common(p)
    p.add_argument("--model", metavar="PATH", default=None)
    p.set_defaults(func=cmd_map)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SimulationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
