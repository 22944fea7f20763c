"""Layer engine: the cycle-accurate XNOR-popcount inference protocol.

An engine groups tiles into a layer:

    SINGLE_TILE_58x64    1 tile            58 inputs  x  64 outputs
    TWO_LAYER_116x64     2 tiles stacked  116 inputs  x  64 outputs
    ONE_LAYER_116x128    4 tiles, 2 stacked pairs side by side sharing
                         the input rows: 116 inputs x 128 outputs

Stacked tiles feed one shared signed register per output column. An
inference runs

    cycles 0..5            threshold rows sensed one per cycle; each
                           column register initialized to the summed
                           per-tile thresholds
    cycles 6..6+fan_in-1   one input row per cycle; every register whose
                           sensed XNOR output is +1 is decremented
    2 drain cycles         sign evaluation and shift-out

so the register ends at T - popcount and the output bit is the sign
bit: +1 exactly when popcount > T (a zero preactivation reads -1).

`oracle_eval` is the pure arithmetic reference for the same computation;
weights are (fan_in, n_outputs), matching the physical row-major layout.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import tile as tl
from .device import DeviceVariability
from .errors import (
    DimensionMismatch,
    NotProgrammed,
    RowOutOfRange,
    TargetOutOfRange,
    ThresholdOutOfRange,
    ThresholdsNotLoaded,
)

THRESHOLD_LOAD_CYCLES = 6
DRAIN_CYCLES = 2


class EngineConfig(enum.Enum):
    SINGLE_TILE_58x64 = "single_tile_58x64"
    TWO_LAYER_116x64 = "two_layer_116x64"
    ONE_LAYER_116x128 = "one_layer_116x128"


# config -> (column groups, stacked tiles per group)
_GEOMETRY = {
    EngineConfig.SINGLE_TILE_58x64: (1, 1),
    EngineConfig.TWO_LAYER_116x64: (1, 2),
    EngineConfig.ONE_LAYER_116x128: (2, 2),
}


@dataclass
class PipelineTrace:
    """Cycle log of one inference: (cycle, kind, row) events."""

    cycles: int = 0
    events: list[tuple[int, str, int | None]] = field(default_factory=list)


class LayerEngine:
    """Tiles plus the shared output registers of one mapped layer."""

    def __init__(self, config: EngineConfig,
                 variability: DeviceVariability | None = None,
                 rng: np.random.Generator | None = None,
                 tiles: list[tl.Tile] | None = None):
        self.config = config
        self.groups, self.stack = _GEOMETRY[config]
        n_tiles = self.groups * self.stack
        if tiles is not None:
            if len(tiles) != n_tiles:
                raise DimensionMismatch(
                    f"{config.value} needs {n_tiles} tiles, got {len(tiles)}")
            self.tiles = list(tiles)
        else:
            if variability is None or rng is None:
                raise ValueError("need variability and rng to form fresh tiles")
            self.tiles = [tl.Tile.formed_blank(variability, rng) for _ in range(n_tiles)]
        self.registers = np.zeros(self.n_outputs, np.int16)
        self.thresholds_loaded = False

    @property
    def fan_in(self) -> int:
        return self.stack * tl.WEIGHT_ROWS

    @property
    def n_outputs(self) -> int:
        return self.groups * tl.N_COLS

    def tile_at(self, group: int, stack: int) -> tl.Tile:
        return self.tiles[group * self.stack + stack]


def program_layer(engine: LayerEngine, weights: np.ndarray,
                  thresholds: np.ndarray, ctx: tl.ProgramContext) -> LayerEngine:
    """Program a full layer: weights (fan_in, n_outputs), thresholds (n_outputs,).

    Column thresholds up to 63 per stacked tile; a two-tile column
    splits t as (min(t, 63), remainder). Tiles are programmed in engine
    order (group-major), weights before thresholds within each tile.
    """
    weights = np.asarray(weights)
    thresholds = np.asarray(thresholds, np.int64)
    if weights.shape != (engine.fan_in, engine.n_outputs):
        raise DimensionMismatch(
            f"weights {weights.shape} != ({engine.fan_in}, {engine.n_outputs})")
    if thresholds.shape != (engine.n_outputs,):
        raise DimensionMismatch(
            f"thresholds {thresholds.shape} != ({engine.n_outputs},)")
    max_t = tl.THRESHOLD_MAX * engine.stack
    if thresholds.min() < 0 or thresholds.max() > max_t:
        raise ThresholdOutOfRange(f"column thresholds must be in 0..{max_t}")
    for g in range(engine.groups):
        cols = slice(g * tl.N_COLS, (g + 1) * tl.N_COLS)
        t_rest = thresholds[cols].copy()
        for s in range(engine.stack):
            t_here = np.minimum(t_rest, tl.THRESHOLD_MAX)
            t_rest = t_rest - t_here
            tile = engine.tile_at(g, s)
            rows = slice(s * tl.WEIGHT_ROWS, (s + 1) * tl.WEIGHT_ROWS)
            tl.program_weight_block(tile, weights[rows, cols], ctx)
            tl.program_thresholds(tile, t_here, ctx)
    engine.thresholds_loaded = False
    return engine


def _check_programmed(engine: LayerEngine, thresholds: bool) -> None:
    region = (slice(tl.THRESHOLD_LSB_ROW, tl.N_ROWS) if thresholds
              else slice(0, tl.WEIGHT_ROWS))
    for tile in engine.tiles:
        if not tile.programmed[region].all():
            what = "threshold" if thresholds else "weight"
            raise NotProgrammed(f"engine has unprogrammed {what} cells")


def load_thresholds(engine: LayerEngine, ctx: tl.SenseContext) -> LayerEngine:
    """Sense the threshold rows and preset the column registers.

    Registers hold the sum over a column's stacked tiles. Takes the 6
    threshold-load cycles; reads go through the same sense path as
    weights, so weak threshold bits can corrupt the preset.
    """
    _check_programmed(engine, thresholds=True)
    engine.registers[:] = 0
    for g in range(engine.groups):
        cols = slice(g * tl.N_COLS, (g + 1) * tl.N_COLS)
        for s in range(engine.stack):
            engine.registers[cols] += tl.read_thresholds(engine.tile_at(g, s), ctx).astype(np.int16)
    engine.thresholds_loaded = True
    return engine


def present_input(engine: LayerEngine, row: int, x: int,
                  ctx: tl.SenseContext) -> LayerEngine:
    """One input cycle: row's XNOR outputs decrement their registers.

    `row` is the global input index (0..fan_in-1); it addresses weight
    row row%58 of every stack-row//58 tile across the column groups.
    """
    if not engine.thresholds_loaded:
        raise ThresholdsNotLoaded("present_input before load_thresholds")
    if not 0 <= row < engine.fan_in:
        raise RowOutOfRange(f"input row {row} outside 0..{engine.fan_in - 1}")
    _check_programmed(engine, thresholds=False)
    s, tile_row = divmod(row, tl.WEIGHT_ROWS)
    for g in range(engine.groups):
        cols = slice(g * tl.N_COLS, (g + 1) * tl.N_COLS)
        bits = tl.read_row(engine.tile_at(g, s), tile_row, x, ctx)
        engine.registers[cols] -= (bits == 1)
    return engine


def read_outputs(engine: LayerEngine) -> tuple[np.ndarray, np.ndarray]:
    """Sign-evaluate the registers: (outputs +/-1, preactivation deltas).

    Register r = T - popcount, so delta = -r and the output is +1 only
    for a strictly negative register (delta 0 reads -1).
    """
    deltas = -engine.registers.astype(np.int64)
    outputs = np.where(deltas > 0, 1, -1).astype(np.int8)
    return outputs, deltas


def _needs_weak_draws(engine: LayerEngine, ctx: tl.SenseContext) -> bool:
    for tile in engine.tiles:
        weak = np.abs(tile.margin_matrix()) <= ctx.margin_threshold
        if not weak.any():
            continue
        if not ctx.deterministic_weak:
            return True
        if (weak & (ctx._tile_resolutions(tile) == 0)).any():
            return True
    return False


def _trace_for(fan_in: int) -> PipelineTrace:
    trace = PipelineTrace()
    cycle = 0
    for k in range(THRESHOLD_LOAD_CYCLES):
        trace.events.append((cycle, "threshold_load", tl.THRESHOLD_LSB_ROW + k))
        cycle += 1
    for row in range(fan_in):
        trace.events.append((cycle, "input", row))
        cycle += 1
    for _ in range(DRAIN_CYCLES):
        trace.events.append((cycle, "drain", None))
        cycle += 1
    trace.cycles = cycle
    return trace


def run_inference(engine: LayerEngine, x: np.ndarray,
                  ctx: tl.SenseContext) -> tuple[np.ndarray, np.ndarray, PipelineTrace]:
    """Full inference of one input vector: (outputs, deltas, trace).

    Semantically identical to load_thresholds + one present_input per
    row + read_outputs, and takes 6 + fan_in + 2 cycles. When no weak
    cell needs a random resolution the row loop is evaluated in closed
    form (integer accumulation commutes); otherwise the sequential
    protocol runs so random draws happen in the documented order.
    """
    x = np.asarray(x)
    if x.shape != (engine.fan_in,):
        raise DimensionMismatch(f"input {x.shape} != ({engine.fan_in},)")
    if not (np.abs(x) == 1).all():
        raise ValueError("inputs must be +1/-1")
    _check_programmed(engine, thresholds=True)
    _check_programmed(engine, thresholds=False)

    if _needs_weak_draws(engine, ctx):
        load_thresholds(engine, ctx)
        for row in range(engine.fan_in):
            present_input(engine, row, int(x[row]), ctx)
    else:
        engine.registers[:] = 0
        xb = x > 0
        for g in range(engine.groups):
            cols = slice(g * tl.N_COLS, (g + 1) * tl.N_COLS)
            acc = np.zeros(tl.N_COLS, np.int16)
            for s in range(engine.stack):
                tile = engine.tile_at(g, s)
                acc += tl.read_thresholds(tile, ctx).astype(np.int16)
                w = tl.decode_weights(tile, ctx)
                rows = slice(s * tl.WEIGHT_ROWS, (s + 1) * tl.WEIGHT_ROWS)
                eq = (w > 0) == xb[rows, None]
                acc -= eq.sum(axis=0, dtype=np.int16)
            engine.registers[cols] = acc
        engine.thresholds_loaded = True
    outputs, deltas = read_outputs(engine)
    return outputs, deltas, _trace_for(engine.fan_in)


def oracle_eval(weights: np.ndarray, x: np.ndarray,
                thresholds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pure arithmetic reference: sign(popcount(XNOR(W, X)) - T).

    weights (fan_in, n_outputs), x (fan_in,), thresholds (n_outputs,).
    Returns (outputs +/-1, deltas) with delta_j = popcount_j - T_j and
    output_j = +1 exactly when delta_j > 0.
    """
    weights = np.asarray(weights)
    x = np.asarray(x)
    thresholds = np.asarray(thresholds, np.int64)
    if weights.ndim != 2 or x.ndim != 1 or weights.shape[0] != x.shape[0]:
        raise DimensionMismatch(f"weights {weights.shape} vs input {x.shape}")
    if thresholds.shape != (weights.shape[1],):
        raise DimensionMismatch(f"thresholds {thresholds.shape} vs {weights.shape[1]} outputs")
    popcount = (weights == x[:, None]).sum(axis=0, dtype=np.int64)
    deltas = popcount - thresholds
    outputs = np.where(deltas > 0, 1, -1).astype(np.int8)
    return outputs, deltas


def gen_preactivation_pattern(target_deltas, fan_in: int
                              ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic (W, X, T) whose oracle deltas hit the targets exactly.

    One output column per target. X is all +1; column j disagrees with X
    on its first k_j rows and carries threshold T_j, chosen so that
    fan_in - k_j - T_j equals the target. Thresholds stay encodable for
    the engine covering fan_in (63 per stacked tile). Targets beyond
    +/-fan_in raise TargetOutOfRange.
    """
    targets = np.asarray(target_deltas, np.int64)
    if targets.ndim != 1 or len(targets) == 0:
        raise DimensionMismatch("target_deltas must be a non-empty vector")
    if fan_in < 1:
        raise DimensionMismatch("fan_in must be positive")
    if (np.abs(targets) > fan_in).any():
        bad = targets[np.abs(targets) > fan_in][0]
        raise TargetOutOfRange(f"|{bad}| > fan_in {fan_in}")
    stack = -(-fan_in // tl.WEIGHT_ROWS)
    max_t = tl.THRESHOLD_MAX * stack
    need = fan_in - targets                # k_j + T_j
    t = np.minimum(need, max_t)
    k = need - t
    x = np.ones(fan_in, np.int8)
    w = np.ones((fan_in, len(targets)), np.int8)
    for j, kj in enumerate(k):
        w[:kj, j] = -1
    return w, x, t
