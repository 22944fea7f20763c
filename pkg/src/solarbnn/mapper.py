"""Mapping fully-connected BNN layers onto 58-input tile blocks.

A layer with fan_in > 58 is cut into an odd number of 58-row blocks.
Missing rows are padded with +1 inputs against +1 weights, and every
block's threshold is raised by its pad count, which cancels the pad
contribution exactly: block preactivations are unchanged by padding.

Each block behaves as an independent binary neuron per output column;
a hidden neuron's activation is the majority vote over its block
outputs. The odd block count guarantees a strict majority. Votes also
localize faults: flipping one block output moves the vote sum by 2 and
only swings neurons whose vote was that close.

The final layer is not binarized: class scores are the integer sum of
block preactivations (equal to the monolithic popcount minus summed
thresholds, again because padding cancels), evaluated through the
pipeline oracle with no fault injection. First-layer inputs binarize
per the model rule (unit-scaled pixel > threshold reads +1).

Weights are (fan_in, fan_out) everywhere, matching tile row order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import faults as fl
from . import pipeline as pl
from . import tile as tl
from .errors import (
    DimensionMismatch,
    EmptyModel,
    EvenLength,
    ModelError,
    PlanMismatch,
    ThresholdOverflow,
    UnsupportedLayer,
)

BLOCK_ROWS = tl.WEIGHT_ROWS  # 58


def plan_blocks(fan_in: int) -> tuple[int, int]:
    """(n_blocks, pad): smallest odd block count covering fan_in.

    plan_blocks(1102) == (19, 0), plan_blocks(100) == (3, 74). Padding
    never reaches two full blocks.
    """
    if fan_in < 1:
        raise DimensionMismatch(f"fan_in must be >= 1, got {fan_in}")
    n = -(-fan_in // BLOCK_ROWS)
    if n % 2 == 0:
        n += 1
    return n, n * BLOCK_ROWS - fan_in


def pad_inputs(x: np.ndarray, pad: int) -> np.ndarray:
    """Append `pad` +1 activations."""
    x = np.asarray(x)
    if pad == 0:
        return x
    return np.concatenate([x, np.ones(pad, x.dtype)])


def majority_vote(block_outputs) -> int:
    """Strict majority of +/-1 block outputs; even counts are rejected."""
    votes = np.asarray(block_outputs)
    if votes.size % 2 == 0:
        raise EvenLength(f"majority vote over {votes.size} blocks")
    if not (np.abs(votes) == 1).all():
        raise ValueError("block outputs must be +/-1")
    return 1 if votes.sum() > 0 else -1


def split_threshold(t: int, n_blocks: int) -> np.ndarray:
    """Spread a monolithic threshold over blocks, floor split.

    Lowest-index blocks take the remainder: split_threshold(100, 3) is
    [34, 33, 33]. Sums back to t.
    """
    if n_blocks < 1:
        raise DimensionMismatch("n_blocks must be >= 1")
    q, r = divmod(int(t), n_blocks)
    out = np.full(n_blocks, q, np.int64)
    out[:r] += 1
    return out


def binarize(x: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Unit-scaled input to +/-1: strictly above threshold reads +1."""
    return np.where(np.asarray(x) > threshold, 1, -1).astype(np.int8)


@dataclass
class Layer:
    """One dense layer: weights (fan_in, fan_out) in +/-1 and per-block
    thresholds (n_blocks, fan_out) before padding offsets."""

    weights: np.ndarray
    block_thresholds: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, np.int8)
        self.block_thresholds = np.asarray(self.block_thresholds, np.int64)
        if self.weights.ndim != 2:
            raise ModelError("layer weights must be 2-D")
        if not (np.abs(self.weights) == 1).all():
            raise ModelError("layer weights must be +/-1")
        n_blocks, _ = plan_blocks(self.fan_in)
        if self.block_thresholds.shape != (n_blocks, self.fan_out):
            raise ModelError(
                f"block thresholds {self.block_thresholds.shape} != "
                f"({n_blocks}, {self.fan_out})")

    @property
    def fan_in(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[1]


@dataclass
class BNNModel:
    """Dense binary network; last layer emits integer class scores."""

    layers: list[Layer]
    binarize_threshold: float = 0.5

    def __post_init__(self):
        if not self.layers:
            raise EmptyModel("model has no layers")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.fan_out != b.fan_in:
                raise ModelError(f"layer fan_out {a.fan_out} feeds fan_in {b.fan_in}")


def model_from_monolithic(pairs, binarize_threshold: float = 0.5) -> BNNModel:
    """Build a model from (weights, monolithic thresholds) per layer.

    Each column threshold is floor-split over the layer's blocks with
    the remainder on the lowest blocks.
    """
    layers = []
    for weights, thresholds in pairs:
        weights = np.asarray(weights)
        thresholds = np.asarray(thresholds, np.int64)
        n_blocks, _ = plan_blocks(weights.shape[0])
        table = np.stack([split_threshold(t, n_blocks) for t in thresholds], axis=1)
        layers.append(Layer(weights, table))
    return BNNModel(layers, binarize_threshold)


@dataclass
class LayerPlan:
    """Compiled mapping of one layer onto tile blocks."""

    fan_in: int
    fan_out: int
    n_blocks: int
    pad: int
    offsets: np.ndarray             # (n_blocks,) pad rows per block
    padded_weights: np.ndarray      # (n_blocks*58, fan_out) int8
    encoded_thresholds: np.ndarray  # (n_blocks, fan_out), offsets applied
    first_tile: int
    tiles_per_block: int


@dataclass
class TilePlan:
    layers: list[LayerPlan] = field(default_factory=list)


def compile_model(model: BNNModel) -> TilePlan:
    """Block/pad/threshold layout for every layer of the model.

    Raises ThresholdOverflow when any encoded per-block threshold
    (base + pad offset) leaves 0..63.
    """
    plan = TilePlan()
    next_tile = 0
    for idx, layer in enumerate(model.layers):
        n_blocks, pad = plan_blocks(layer.fan_in)
        padded_rows = n_blocks * BLOCK_ROWS
        offsets = np.zeros(n_blocks, np.int64)
        for b in range(n_blocks):
            lo, hi = b * BLOCK_ROWS, (b + 1) * BLOCK_ROWS
            offsets[b] = max(0, hi - max(lo, layer.fan_in))
        padded_weights = np.ones((padded_rows, layer.fan_out), np.int8)
        padded_weights[:layer.fan_in] = layer.weights
        encoded = layer.block_thresholds + offsets[:, None]
        if encoded.min() < 0 or encoded.max() > tl.THRESHOLD_MAX:
            raise ThresholdOverflow(
                f"layer {idx}: encoded thresholds span "
                f"{encoded.min()}..{encoded.max()}, need 0..{tl.THRESHOLD_MAX}")
        tiles_per_block = -(-layer.fan_out // tl.N_COLS)
        plan.layers.append(LayerPlan(
            fan_in=layer.fan_in, fan_out=layer.fan_out, n_blocks=n_blocks,
            pad=pad, offsets=offsets, padded_weights=padded_weights,
            encoded_thresholds=encoded, first_tile=next_tile,
            tiles_per_block=tiles_per_block))
        next_tile += n_blocks * tiles_per_block
    return plan


def _check_plan(model: BNNModel, plan: TilePlan) -> None:
    if len(plan.layers) != len(model.layers):
        raise PlanMismatch(f"plan has {len(plan.layers)} layers, model "
                           f"{len(model.layers)}")
    for idx, (layer, lp) in enumerate(zip(model.layers, plan.layers)):
        if (lp.fan_in, lp.fan_out) != (layer.fan_in, layer.fan_out):
            raise PlanMismatch(f"layer {idx} dims differ between plan and model")


def _eval_blocks(lp: LayerPlan, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-block oracle pass: (outputs, deltas), both (n_blocks, fan_out)."""
    xp = pad_inputs(x, lp.pad)
    outs = np.empty((lp.n_blocks, lp.fan_out), np.int8)
    deltas = np.empty((lp.n_blocks, lp.fan_out), np.int64)
    for b in range(lp.n_blocks):
        rows = slice(b * BLOCK_ROWS, (b + 1) * BLOCK_ROWS)
        o, d = pl.oracle_eval(lp.padded_weights[rows], xp[rows],
                              lp.encoded_thresholds[b])
        outs[b] = o
        deltas[b] = d
    return outs, deltas


def evaluate_mapped(model: BNNModel, plan: TilePlan, x: np.ndarray,
                    profile: fl.ErrorProfile | None = None,
                    policy: fl.FaultPolicy | None = None,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """One sample through the mapped network; returns integer class scores.

    Hidden layers run block-by-block through the pipeline oracle with
    fault injection on each block output (a block's own preactivation
    drives its flip probability), then majority-vote. The final layer
    is oracle-evaluated with no injected errors. Pass profile=None for
    the error-free baseline.
    """
    _check_plan(model, plan)
    policy = policy or fl.FaultPolicy()
    x = binarize(np.asarray(x, np.float64), model.binarize_threshold)
    for lp in plan.layers[:-1]:
        if x.shape != (lp.fan_in,):
            raise DimensionMismatch(f"input {x.shape} != ({lp.fan_in},)")
        outs, deltas = _eval_blocks(lp, x)
        if profile is not None:
            outs = fl.apply_output_errors(outs, deltas, profile, policy, rng)
        sums = outs.astype(np.int64).sum(axis=0)
        x = np.where(sums > 0, 1, -1).astype(np.int8)
    lp = plan.layers[-1]
    if x.shape != (lp.fan_in,):
        raise DimensionMismatch(f"input {x.shape} != ({lp.fan_in},)")
    _, deltas = _eval_blocks(lp, x)
    return deltas.sum(axis=0)


# --- model file format ---

MODEL_HEADER = "BNNMODEL v1"


def save_model(model: BNNModel, path) -> None:
    """Versioned text dump: dims per layer, weights as 0/1 rows (row per
    input, '1' means +1), per-block threshold lines."""
    with open(path, "w") as fh:
        fh.write(f"{MODEL_HEADER}\n")
        fh.write(f"binarize {model.binarize_threshold:g}\n")
        fh.write(f"layers {len(model.layers)}\n")
        for idx, layer in enumerate(model.layers):
            n_blocks, _ = plan_blocks(layer.fan_in)
            fh.write(f"layer {idx} dense {layer.fan_in} {layer.fan_out}\n")
            fh.write(f"blocks {n_blocks}\n")
            for row in layer.weights:
                fh.write("".join("1" if v == 1 else "0" for v in row) + "\n")
            for b in range(n_blocks):
                fh.write(" ".join(str(int(t)) for t in layer.block_thresholds[b]) + "\n")


def load_model(path) -> BNNModel:
    """Parse the text format back into a BNNModel.

    Only dense layers exist in the format; any other layer kind raises
    UnsupportedLayer. Structural problems raise ModelError.
    """
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    pos = 0

    def take() -> str:
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            raise ModelError("unexpected end of model file")
        pos += 1
        return lines[pos - 1].strip()

    if take() != MODEL_HEADER:
        raise ModelError(f"expected '{MODEL_HEADER}' header")
    fields = take().split()
    if len(fields) != 2 or fields[0] != "binarize":
        raise ModelError("expected binarize line")
    binarize_threshold = float(fields[1])
    fields = take().split()
    if len(fields) != 2 or fields[0] != "layers":
        raise ModelError("expected layers line")
    n_layers = int(fields[1])
    layers = []
    for idx in range(n_layers):
        fields = take().split()
        if len(fields) != 5 or fields[0] != "layer":
            raise ModelError(f"expected layer line, got {fields}")
        if fields[2] != "dense":
            raise UnsupportedLayer(f"layer kind {fields[2]!r} cannot map to tiles")
        fan_in, fan_out = int(fields[3]), int(fields[4])
        fields = take().split()
        if len(fields) != 2 or fields[0] != "blocks":
            raise ModelError("expected blocks line")
        n_blocks = int(fields[1])
        if n_blocks != plan_blocks(fan_in)[0]:
            raise ModelError(f"layer {idx}: {n_blocks} blocks inconsistent "
                             f"with fan_in {fan_in}")
        weights = np.empty((fan_in, fan_out), np.int8)
        for r in range(fan_in):
            bits = take()
            if len(bits) != fan_out or set(bits) - {"0", "1"}:
                raise ModelError(f"layer {idx} weight row {r} malformed")
            weights[r] = np.frombuffer(bits.encode(), np.uint8) - ord("0")
        weights = (weights * 2 - 1).astype(np.int8)
        thresholds = np.empty((n_blocks, fan_out), np.int64)
        for b in range(n_blocks):
            vals = take().split()
            if len(vals) != fan_out:
                raise ModelError(f"layer {idx} threshold row {b} malformed")
            thresholds[b] = [int(v) for v in vals]
        layers.append(Layer(weights, thresholds))
    return BNNModel(layers, binarize_threshold)


PLAN_HEADER = ["layer", "block", "tile", "pad_count", "threshold_offset"]


def export_plan_csv(plan: TilePlan, path) -> None:
    """One row per block; `tile` is the first of the block's
    ceil(fan_out/64) consecutive physical tiles."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PLAN_HEADER)
        for idx, lp in enumerate(plan.layers):
            for b in range(lp.n_blocks):
                writer.writerow([idx, b, lp.first_tile + b * lp.tiles_per_block,
                                 int(lp.offsets[b]), int(lp.offsets[b])])
