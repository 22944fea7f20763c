"""64x64 bit-cell tile: complementary 2T2R storage plus differential sensing.

Geometry
    rows 0..57   weight cells, one binary weight each
    rows 58..63  threshold cells: bit k of the 6-bit unsigned column
                 threshold lives in row 58+k (LSB lowest, MSB highest)

Each bit cell pairs two memristors. Encoding of a +1 weight: left device
LRS, right device HRS; -1 is the mirror image. A stored bit therefore
shows up as the sign of the log-resistance margin

    m = ln(R_right) - ln(R_left)      (> 0 reads +1)

The sense amplifier computes XNOR(weight, activation) during the read by
steering the precharged column pair with the input line, so a read
returns the product of the decoded weight and x in {+1, -1} algebra.
Cells whose |m| falls at or below the sense margin threshold are "weak"
(both devices at similar resistance) and decode to a uniform random bit.
Reads never disturb the stored resistances.

Tiles are containers of plain device values. Programming mutates the
tile in place and returns it; use copy() to branch. Nothing here is
thread-safe while programming, shared reads afterwards are fine.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from . import device as dev
from .errors import (
    AlreadyFormed,
    ColOutOfRange,
    NotFormed,
    RowOutOfRange,
    ThresholdOutOfRange,
)

N_ROWS = 64
N_COLS = 64
WEIGHT_ROWS = 58
THRESHOLD_ROWS = 6
THRESHOLD_LSB_ROW = WEIGHT_ROWS  # bit k stored at absolute row 58+k
THRESHOLD_MAX = 2 ** THRESHOLD_ROWS - 1  # 63

# device index within a cell
LEFT = 0
RIGHT = 1

_BIT_WEIGHTS = (1 << np.arange(THRESHOLD_ROWS)).astype(np.int64)  # (6,)


@dataclass(frozen=True)
class BitCell:
    """One complementary pair, as values."""

    left: dev.MemristorDevice
    right: dev.MemristorDevice


@dataclass
class ProgramContext:
    """Everything a programming op needs besides the target bits."""

    variability: dev.DeviceVariability
    rng: np.random.Generator
    tolerance: float = dev.PULSE_TOLERANCE


class SenseContext:
    """State for the differential read path.

    margin_threshold is in ln-ohm units and must be >= 0; 0 means ideal
    sensing (only exact resistance ties are ambiguous). Weak cells
    resolve to a uniform random bit drawn from `rng`; with
    deterministic_weak=True each cell's resolution is drawn once and
    cached for the life of this context (one context per supply
    condition models errors that persist within a run).
    """

    def __init__(self, margin_threshold: float = 0.0,
                 rng: np.random.Generator | None = None,
                 deterministic_weak: bool = False):
        if margin_threshold < 0:
            raise ValueError("margin_threshold must be >= 0")
        self.margin_threshold = float(margin_threshold)
        self.rng = rng
        self.deterministic_weak = bool(deterministic_weak)
        self._cell_cache: dict = {}   # hashable key -> +1/-1
        self._tile_cache: dict = {}   # tile token -> int8 (64, 64), 0 = unresolved

    def _draw(self, n: int) -> np.ndarray:
        # u < 0.5 -> +1, else -1
        if self.rng is None:
            raise ValueError("sense context needs an rng to resolve weak cells")
        return np.where(self.rng.random(n) < 0.5, 1, -1).astype(np.int8)

    def weak_decode(self, key=None) -> int:
        """Resolve one weak cell; `key` identifies the cell for caching."""
        if self.deterministic_weak and key is not None:
            if key not in self._cell_cache:
                self._cell_cache[key] = int(self._draw(1)[0])
            return self._cell_cache[key]
        return int(self._draw(1)[0])

    def weak_decode_cell(self, tile: "Tile", row: int, col: int) -> int:
        """Weak decode for an addressed tile cell, sharing the per-tile cache."""
        if self.deterministic_weak:
            cache = self._tile_resolutions(tile)
            if cache[row, col] == 0:
                cache[row, col] = self._draw(1)[0]
            return int(cache[row, col])
        return int(self._draw(1)[0])

    def _tile_resolutions(self, tile: "Tile") -> np.ndarray:
        cache = self._tile_cache.get(tile._token)
        if cache is None:
            cache = np.zeros((N_ROWS, N_COLS), np.int8)
            self._tile_cache[tile._token] = cache
        return cache


IDEAL_SENSE = SenseContext(margin_threshold=0.0)


class Tile:
    """4096 bit cells backed by flat arrays (one entry per device)."""

    def __init__(self):
        self.formed = np.zeros((N_ROWS, N_COLS, 2), bool)
        self.state = np.zeros((N_ROWS, N_COLS, 2), np.int8)  # 1 = LRS, 0 = HRS
        self.log_r = np.zeros((N_ROWS, N_COLS, 2), np.float64)
        self.programmed = np.zeros((N_ROWS, N_COLS), bool)
        self._token = object()  # identity for per-context weak-cell caches

    @classmethod
    def formed_blank(cls, variability: dev.DeviceVariability,
                     rng: np.random.Generator) -> "Tile":
        """Fresh tile with every device formed (LRS), nothing programmed."""
        tile = cls()
        form_all(tile, variability, rng)
        return tile

    def copy(self) -> "Tile":
        other = Tile()
        other.formed = self.formed.copy()
        other.state = self.state.copy()
        other.log_r = self.log_r.copy()
        other.programmed = self.programmed.copy()
        return other

    def _device(self, row: int, col: int, side: int) -> dev.MemristorDevice:
        if not self.formed[row, col, side]:
            return dev.MemristorDevice()
        state = dev.ResistanceState.LRS if self.state[row, col, side] else dev.ResistanceState.HRS
        return dev.MemristorDevice(formed=True, state=state,
                                   log_resistance=float(self.log_r[row, col, side]))

    def cell(self, row: int, col: int) -> BitCell:
        _check_cell_addr(row, col)
        return BitCell(self._device(row, col, LEFT), self._device(row, col, RIGHT))

    def _put_device(self, row: int, col: int, side: int, d: dev.MemristorDevice) -> None:
        self.formed[row, col, side] = d.formed
        self.state[row, col, side] = 1 if d.state is dev.ResistanceState.LRS else 0
        self.log_r[row, col, side] = d.log_resistance if d.log_resistance is not None else 0.0

    def margin(self, row: int, col: int) -> float:
        """ln(R_right) - ln(R_left) for one cell."""
        _check_cell_addr(row, col)
        return float(self.log_r[row, col, RIGHT] - self.log_r[row, col, LEFT])

    def margin_matrix(self) -> np.ndarray:
        """(64, 64) margins for every cell, weight and threshold rows alike."""
        return self.log_r[:, :, RIGHT] - self.log_r[:, :, LEFT]


def _check_cell_addr(row: int, col: int) -> None:
    if not 0 <= row < N_ROWS:
        raise RowOutOfRange(f"row {row} outside 0..{N_ROWS - 1}")
    if not 0 <= col < N_COLS:
        raise ColOutOfRange(f"col {col} outside 0..{N_COLS - 1}")


def _check_weight_addr(row: int, col: int) -> None:
    if not 0 <= row < WEIGHT_ROWS:
        raise RowOutOfRange(f"weight row {row} outside 0..{WEIGHT_ROWS - 1}")
    if not 0 <= col < N_COLS:
        raise ColOutOfRange(f"col {col} outside 0..{N_COLS - 1}")


def form_all(tile: Tile, variability: dev.DeviceVariability,
             rng: np.random.Generator) -> Tile:
    """Form every device in the tile (row-major, left device then right).

    Raises AlreadyFormed if any device was formed before.
    """
    if tile.formed.any():
        raise AlreadyFormed("tile contains formed devices")
    tile.formed[:] = True
    tile.state[:] = 1  # forming ends in LRS
    tile.log_r[:] = _bulk_log_resistance(
        np.ones((N_ROWS, N_COLS, 2), bool), variability, rng)
    return tile


def _bulk_log_resistance(lrs_mask: np.ndarray, variability: dev.DeviceVariability,
                         rng: np.random.Generator) -> np.ndarray:
    """Sample ln-resistances for a device array; lrs_mask True -> LRS target.

    Draws the generator exactly like an elementwise sequence of
    sample_log_resistance calls in C order (devices with sigma == 0
    consume nothing).
    """
    mu = np.where(lrs_mask, math.log(variability.lrs_median_ohms),
                  math.log(variability.hrs_median_ohms))
    sigma = np.where(lrs_mask, variability.lrs_log_sigma, variability.hrs_log_sigma)
    if sigma.max() == 0.0:
        return mu
    out = mu.copy()
    draw = sigma > 0
    if draw.all():
        out += sigma * rng.standard_normal(lrs_mask.shape)
    else:
        z = rng.standard_normal(int(draw.sum()))
        out[draw] += sigma[draw] * z
    return out


def _require_formed(tile: Tile, rows: slice) -> None:
    if not tile.formed[rows].all():
        raise NotFormed("tile region contains unformed devices")


def program_weight(tile: Tile, row: int, col: int, w: int,
                   ctx: ProgramContext) -> Tile:
    """Store one binary weight: both devices repulsed, left first.

    +1 programs left LRS / right HRS, -1 the mirror. Weight rows only;
    row 58 and up raises RowOutOfRange.
    """
    _check_weight_addr(row, col)
    if w not in (1, -1):
        raise ValueError(f"weight must be +1 or -1, got {w}")
    _program_cell(tile, row, col, w == 1, ctx)
    return tile


def _program_cell(tile: Tile, row: int, col: int, left_lrs: bool,
                  ctx: ProgramContext) -> None:
    left_target = dev.ResistanceState.LRS if left_lrs else dev.ResistanceState.HRS
    right_target = dev.ResistanceState.HRS if left_lrs else dev.ResistanceState.LRS
    pulses = {
        dev.ResistanceState.LRS: dev.ProgrammingPulse.set_lrs(),
        dev.ResistanceState.HRS: dev.ProgrammingPulse.reset_hrs(),
    }
    left = dev.program_device(tile._device(row, col, LEFT), left_target,
                              pulses[left_target], ctx.variability, ctx.rng,
                              ctx.tolerance)
    right = dev.program_device(tile._device(row, col, RIGHT), right_target,
                               pulses[right_target], ctx.variability, ctx.rng,
                               ctx.tolerance)
    tile._put_device(row, col, LEFT, left)
    tile._put_device(row, col, RIGHT, right)
    tile.programmed[row, col] = True


def program_weight_block(tile: Tile, weights: np.ndarray,
                         ctx: ProgramContext) -> Tile:
    """Program the whole 58x64 weight region in one pass.

    Consumes the rng exactly like the equivalent sequence of
    program_weight calls in row-major order.
    """
    weights = np.asarray(weights)
    if weights.shape != (WEIGHT_ROWS, N_COLS):
        raise ValueError(f"weights must be ({WEIGHT_ROWS}, {N_COLS}), got {weights.shape}")
    if not (np.abs(weights) == 1).all():
        raise ValueError("weights must be +1/-1")
    region = slice(0, WEIGHT_ROWS)
    _require_formed(tile, region)
    lrs_mask = np.empty((WEIGHT_ROWS, N_COLS, 2), bool)
    lrs_mask[:, :, LEFT] = weights == 1
    lrs_mask[:, :, RIGHT] = weights != 1
    tile.log_r[region] = _bulk_log_resistance(lrs_mask, ctx.variability, ctx.rng)
    tile.state[region] = lrs_mask
    tile.programmed[region] = True
    return tile


def program_threshold(tile: Tile, col: int, t: int, ctx: ProgramContext) -> Tile:
    """Store a 6-bit unsigned threshold for one column.

    Bit k goes to row 58+k, set bits stored like +1 weights. Values
    outside 0..63 raise ThresholdOutOfRange.
    """
    if not 0 <= col < N_COLS:
        raise ColOutOfRange(f"col {col} outside 0..{N_COLS - 1}")
    if not 0 <= t <= THRESHOLD_MAX:
        raise ThresholdOutOfRange(f"threshold {t} outside 0..{THRESHOLD_MAX}")
    for k in range(THRESHOLD_ROWS):
        bit = (t >> k) & 1
        _program_cell(tile, THRESHOLD_LSB_ROW + k, col, bit == 1, ctx)
    return tile


def program_thresholds(tile: Tile, thresholds: np.ndarray,
                       ctx: ProgramContext) -> Tile:
    """Program all 64 column thresholds at once (rows 58..63, row-major)."""
    thresholds = np.asarray(thresholds, np.int64)
    if thresholds.shape != (N_COLS,):
        raise ValueError(f"thresholds must be ({N_COLS},), got {thresholds.shape}")
    if thresholds.min() < 0 or thresholds.max() > THRESHOLD_MAX:
        raise ThresholdOutOfRange("thresholds outside 0..63")
    region = slice(THRESHOLD_LSB_ROW, N_ROWS)
    _require_formed(tile, region)
    bits = (thresholds[None, :] >> np.arange(THRESHOLD_ROWS)[:, None]) & 1  # (6, 64)
    lrs_mask = np.empty((THRESHOLD_ROWS, N_COLS, 2), bool)
    lrs_mask[:, :, LEFT] = bits == 1
    lrs_mask[:, :, RIGHT] = bits != 1
    tile.log_r[region] = _bulk_log_resistance(lrs_mask, ctx.variability, ctx.rng)
    tile.state[region] = lrs_mask
    tile.programmed[region] = True
    return tile


def cell_margin(cell: BitCell) -> float:
    """ln(R_right) - ln(R_left); requires both devices formed."""
    if not (cell.left.formed and cell.right.formed):
        raise NotFormed("margin of a cell with unformed devices")
    return cell.right.log_resistance - cell.left.log_resistance


def xpcsa_read(cell: BitCell, x: int, ctx: SenseContext, key=None) -> int:
    """Differential read of one cell with input x: returns XNOR(w, x).

    |margin| above the context threshold decodes the stored weight from
    the margin sign; at or below it the decode is a uniform random bit
    (cached per cell when the context is deterministic-weak and a key is
    given). The read leaves the cell untouched.
    """
    if x not in (1, -1):
        raise ValueError(f"input must be +1 or -1, got {x}")
    m = cell_margin(cell)
    if abs(m) > ctx.margin_threshold:
        w = 1 if m > 0 else -1
    else:
        w = ctx.weak_decode(key)
    return w * x


def _decode_rows(tile: Tile, rows: slice, ctx: SenseContext) -> np.ndarray:
    """Decode stored bits for a row range, weak cells resolved in row-major order."""
    m = tile.log_r[rows, :, RIGHT] - tile.log_r[rows, :, LEFT]
    w = np.where(m > 0, 1, -1).astype(np.int8)
    weak = np.abs(m) <= ctx.margin_threshold
    if weak.any():
        if ctx.deterministic_weak:
            cache = ctx._tile_resolutions(tile)[rows]
            need = weak & (cache == 0)
            if need.any():
                cache[need] = ctx._draw(int(need.sum()))
            w[weak] = cache[weak]
        else:
            w[weak] = ctx._draw(int(weak.sum()))
    return w


def read_row(tile: Tile, row: int, x: int, ctx: SenseContext) -> np.ndarray:
    """Present input x on one weight row; returns the 64 XNOR outputs."""
    _check_weight_addr(row, 0)
    if x not in (1, -1):
        raise ValueError(f"input must be +1 or -1, got {x}")
    w = _decode_rows(tile, slice(row, row + 1), ctx)[0]
    return (w * x).astype(np.int8)


def decode_weights(tile: Tile, ctx: SenseContext) -> np.ndarray:
    """(58, 64) decoded weights, one sense pass over the weight region."""
    return _decode_rows(tile, slice(0, WEIGHT_ROWS), ctx)


def read_threshold(tile: Tile, col: int, ctx: SenseContext) -> int:
    """Reassemble one column's 6-bit threshold through the sense path."""
    if not 0 <= col < N_COLS:
        raise ColOutOfRange(f"col {col} outside 0..{N_COLS - 1}")
    t = 0
    for k in range(THRESHOLD_ROWS):
        row = THRESHOLD_LSB_ROW + k
        m = tile.margin(row, col)
        if abs(m) > ctx.margin_threshold:
            bit = 1 if m > 0 else -1
        else:
            bit = ctx.weak_decode_cell(tile, row, col)
        if bit == 1:
            t |= 1 << k
    return t


def read_thresholds(tile: Tile, ctx: SenseContext) -> np.ndarray:
    """All 64 column thresholds; threshold rows sensed in row-major order."""
    bits = _decode_rows(tile, slice(THRESHOLD_LSB_ROW, N_ROWS), ctx)  # (6, 64) of +/-1
    return ((bits == 1).astype(np.int64) * _BIT_WEIGHTS[:, None]).sum(axis=0)


# --- text serialization (deterministic, ideal decode) ---

TILE_HEADER = "TILE v1"


def tile_to_text(tile: Tile) -> str:
    """Canonical dump: decoded weight matrix row-major, then thresholds.

    Decodes by margin sign (exact ties read -1), so the dump of a
    programmed tile is deterministic.
    """
    m = tile.margin_matrix()
    w = np.where(m[:WEIGHT_ROWS] > 0, 1, -1)
    bits = m[THRESHOLD_LSB_ROW:] > 0  # (6, 64)
    thresholds = (bits.astype(np.int64) * _BIT_WEIGHTS[:, None]).sum(axis=0)
    out = io.StringIO()
    out.write(f"{TILE_HEADER}\n")
    out.write(f"weights {WEIGHT_ROWS} {N_COLS}\n")
    for row in w:
        out.write(" ".join(f"{int(v):+d}" for v in row) + "\n")
    out.write(f"thresholds {N_COLS}\n")
    out.write(" ".join(str(int(t)) for t in thresholds) + "\n")
    return out.getvalue()


def parse_tile_text(text: str) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of tile_to_text: returns (weights (58, 64), thresholds (64,))."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != TILE_HEADER:
        raise ValueError(f"expected '{TILE_HEADER}' header")
    if lines[1].split() != ["weights", str(WEIGHT_ROWS), str(N_COLS)]:
        raise ValueError(f"bad weights header: {lines[1]!r}")
    w = np.array([[int(v) for v in lines[2 + r].split()] for r in range(WEIGHT_ROWS)],
                 np.int8)
    if w.shape != (WEIGHT_ROWS, N_COLS) or not np.isin(w, (1, -1)).all():
        raise ValueError("weight block malformed")
    idx = 2 + WEIGHT_ROWS
    if lines[idx].split() != ["thresholds", str(N_COLS)]:
        raise ValueError(f"bad thresholds header: {lines[idx]!r}")
    t = np.array([int(v) for v in lines[idx + 1].split()], np.int64)
    if t.shape != (N_COLS,) or t.min() < 0 or t.max() > THRESHOLD_MAX:
        raise ValueError("threshold line malformed")
    return w, t
