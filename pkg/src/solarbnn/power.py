"""Solar supply and chip energy accounting.

The supply is a single-diode photovoltaic cell (5 mm x 5 mm, wide-gap
absorber) with series and shunt resistance:

    I = suns*I_ph - I_0*(exp((V + I*R_s)/(n*V_t)) - 1) - (V + I*R_s)/R_sh

solved implicitly for I. Illumination is expressed in equivalent suns,
defined as the measured short-circuit current over the one-sun value.

The chip looks like a leakage floor plus a switched-capacitance load:
I_load = i_leak + (C_eff/cycles) * V * f. The supply's operating point
is the crossing of the two curves; no crossing means the chip browns
out. Defaults put the cell open-circuit voltage at 1.23 V under high
illumination (8 suns) and keep short-circuit current linear in suns.

Measured chip energy: 45 nJ per inference at 0.7 V, scaling as V^2 and
independent of clock frequency. The default load frequency (0.3 MHz) is
the low-power solar operating mode; bench energy quotes are at 10 MHz.

Efficiency convention: one weight-cell read counts 2 ops (multiply and
accumulate), 58 x 64 cells x 4 tiles = 29,696 ops per full-chip
inference. The headline efficiency eliminates the control FSM energy;
its share is back-solved from the bench measurement (2.9 TOPS/W at
0.7 V, 10 MHz) rather than from the breakdown pie, whose categories
bundle control with other overheads. Both conventions are exposed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.optimize import brentq

from .errors import FractionOverflow, NoConvergence, NoOperatingPoint
from .pipeline import DRAIN_CYCLES, THRESHOLD_LOAD_CYCLES

K_B = 1.380649e-23   # J/K
Q_E = 1.602176634e-19  # C

# measured energy law anchor
E0_J = 45e-9   # per inference at the anchor voltage
E0_V = 0.7

CHIP_FAN_IN = 116
DEFAULT_CYCLES_PER_INFERENCE = THRESHOLD_LOAD_CYCLES + CHIP_FAN_IN + DRAIN_CYCLES  # 124
DEFAULT_C_EFF_F = E0_J / (E0_V * E0_V)  # 91.84 nF switched per inference

HIGH_ILLUMINATION_SUNS = 8.0

# ops per inference: 2 ops per weight cell, whole chip
OPS_PER_CELL = 2
CHIP_TILES = 4
WEIGHT_CELLS_PER_TILE = 58 * 64

# share of total energy charged to the control FSM when quoting
# efficiency after control elimination; back-solved from the bench
# point (2.9 TOPS/W at 0.7 V, 10 MHz, 29,696 ops, 45 nJ)
CONTROL_SHARE_ELIMINATED = 0.7724

# breakdown pie measured on chip; control+other is the remainder
DEFAULT_FRACTIONS = {"clock": 0.052, "registers": 0.160, "mac": 0.065, "other": 0.0}


@dataclass(frozen=True)
class SolarCellModel:
    """Single-diode cell parameters; defaults fit the reference cell."""

    i_ph_1sun_a: float = 2.5e-3
    i_0_a: float = 3.353e-16
    ideality: float = 1.5
    r_s_ohms: float = 1.0
    r_sh_ohms: float = 1e5
    temperature_k: float = 300.0
    area_cm2: float = 0.25

    @property
    def nvt(self) -> float:
        """n * kT/q in volts."""
        return self.ideality * K_B * self.temperature_k / Q_E


def _expm1_capped(x: float) -> float:
    # the solver only needs the sign far from the root
    return math.expm1(min(x, 700.0))


def iv_current(cell: SolarCellModel, v: float, suns: float) -> float:
    """Terminal current in amps at terminal voltage v under `suns`.

    Solves the implicit diode equation to high precision (relative
    tolerance well under 1e-9). v and suns must be >= 0.
    """
    if v < 0:
        raise ValueError("terminal voltage must be >= 0")
    if suns < 0:
        raise ValueError("suns must be >= 0")
    iph = suns * cell.i_ph_1sun_a
    nvt = cell.nvt
    if cell.r_s_ohms == 0.0:
        return iph - cell.i_0_a * _expm1_capped(v / nvt) - v / cell.r_sh_ohms

    def mismatch(i: float) -> float:
        vd = v + i * cell.r_s_ohms
        return iph - cell.i_0_a * _expm1_capped(vd / nvt) - vd / cell.r_sh_ohms - i

    lo = -(v / cell.r_s_ohms) - iph - 1.0  # diode hard-on, mismatch > 0
    hi = iph + cell.i_0_a + 1.0            # mismatch < 0
    try:
        return float(brentq(mismatch, lo, hi, xtol=1e-18, rtol=1e-12, maxiter=200))
    except (ValueError, RuntimeError) as exc:
        raise NoConvergence(f"diode solve failed at v={v}, suns={suns}") from exc


def short_circuit_current(cell: SolarCellModel, suns: float) -> float:
    return iv_current(cell, 0.0, suns)


def open_circuit_voltage(cell: SolarCellModel, suns: float) -> float:
    """Zero-current terminal voltage; 0 in the dark."""
    if suns <= 0:
        return 0.0
    isc = short_circuit_current(cell, suns)
    if isc <= 0:
        return 0.0
    v_hi = cell.nvt * math.log1p(suns * cell.i_ph_1sun_a / cell.i_0_a) + 0.1
    try:
        return float(brentq(lambda v: iv_current(cell, v, suns), 0.0, v_hi,
                            xtol=1e-9, rtol=1e-12, maxiter=200))
    except (ValueError, RuntimeError) as exc:
        raise NoConvergence(f"Voc solve failed at suns={suns}") from exc


def equivalent_suns(cell: SolarCellModel, i_sc_measured: float) -> float:
    """Illumination in suns from a measured short-circuit current."""
    if i_sc_measured < 0:
        raise ValueError("short-circuit current must be >= 0")
    return i_sc_measured / short_circuit_current(cell, 1.0)


@dataclass(frozen=True)
class ChipLoadModel:
    """Chip seen from the supply: leakage plus switched capacitance."""

    c_eff_f: float = DEFAULT_C_EFF_F
    i_leak_a: float = 1e-6
    f_mhz: float = 0.3
    cycles_per_inference: int = DEFAULT_CYCLES_PER_INFERENCE


def load_current(load: ChipLoadModel, v: float) -> float:
    """Average supply current in amps at rail voltage v."""
    if v < 0:
        raise ValueError("rail voltage must be >= 0")
    c_cycle = load.c_eff_f / load.cycles_per_inference
    return load.i_leak_a + c_cycle * v * load.f_mhz * 1e6


@dataclass(frozen=True)
class OperatingPoint:
    v_volts: float
    i_amps: float
    suns: float


def operating_point(cell: SolarCellModel, load: ChipLoadModel,
                    suns: float) -> OperatingPoint:
    """Self-consistent supply point: bisection on [0, Voc] to 1e-6 V.

    The supply curve falls and the load curve rises, so a crossing is
    unique. Raises NoOperatingPoint when the load exceeds the supply
    already at 0 V (dark cell with leakage, or load too hungry).
    """
    voc = open_circuit_voltage(cell, suns)

    def surplus(v: float) -> float:
        return iv_current(cell, v, suns) - load_current(load, v)

    if voc <= 0.0 or surplus(0.0) <= 0.0:
        raise NoOperatingPoint(f"no supply/load crossing at suns={suns}")
    lo, hi = 0.0, voc
    if surplus(hi) > 0.0:  # zero load: the point sits at Voc itself
        return OperatingPoint(voc, load_current(load, voc), suns)
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if surplus(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    v = 0.5 * (lo + hi)
    return OperatingPoint(v, load_current(load, v), suns)


# --- energy accounting ---

def energy_per_inference(v: float, e0_j: float = E0_J, v0: float = E0_V) -> float:
    """Inference energy at rail voltage v: e0 * (v/v0)^2, frequency-free."""
    if v < 0:
        raise ValueError("rail voltage must be >= 0")
    return e0_j * (v / v0) ** 2


def energy_breakdown(total_j: float, fractions: dict | None = None) -> dict[str, float]:
    """Split a total into named shares; control is the remainder.

    `fractions` may override clock/registers/mac/other. Shares must be
    non-negative and sum to at most 1, else FractionOverflow.
    """
    shares = dict(DEFAULT_FRACTIONS)
    if fractions:
        unknown = set(fractions) - set(DEFAULT_FRACTIONS)
        if unknown:
            raise ValueError(f"unknown breakdown categories {sorted(unknown)}")
        shares.update(fractions)
    if min(shares.values()) < 0:
        raise ValueError("breakdown fractions must be >= 0")
    s = sum(shares.values())
    if s > 1.0 + 1e-12:
        raise FractionOverflow(f"fractions sum to {s}, over 1")
    shares["control"] = 1.0 - s
    return {k: v * total_j for k, v in shares.items()}


def inference_ops(n_tiles: int = CHIP_TILES) -> int:
    """Ops per inference under the 2-ops-per-cell convention."""
    return OPS_PER_CELL * WEIGHT_CELLS_PER_TILE * n_tiles


def non_control_energy(total_j: float) -> float:
    """Energy left after eliminating the control FSM share."""
    return total_j * (1.0 - CONTROL_SHARE_ELIMINATED)


def tops_per_watt(counted_energy_j: float, ops: int) -> float:
    """Efficiency in TOPS/W for `ops` done in `counted_energy_j` joules."""
    if counted_energy_j <= 0:
        raise ValueError("counted energy must be > 0")
    if ops <= 0:
        raise ValueError("ops must be > 0")
    return ops / counted_energy_j / 1e12


@dataclass(frozen=True)
class EnergyReport:
    v_volts: float
    f_mhz: float
    total_j: float
    breakdown_j: dict
    ops: int
    counted_energy_j: float
    tops_per_watt: float


def build_energy_report(v: float = E0_V, f_mhz: float = 10.0,
                        fractions: dict | None = None) -> EnergyReport:
    """Energy law, breakdown, and post-elimination efficiency at (v, f)."""
    total = energy_per_inference(v)
    counted = non_control_energy(total)
    ops = inference_ops()
    return EnergyReport(
        v_volts=v, f_mhz=f_mhz, total_j=total,
        breakdown_j=energy_breakdown(total, fractions),
        ops=ops, counted_energy_j=counted,
        tops_per_watt=tops_per_watt(counted, ops))
