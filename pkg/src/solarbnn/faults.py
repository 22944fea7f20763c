"""Supply-condition fault model.

Two complementary injection routes describe the same silicon behavior:

* output-level: an ErrorProfile maps a neuron's |preactivation| to a
  flip probability. Errors concentrate where the popcount lands near
  the threshold; beyond the profile cutoff the output never flips.
* cell-level: a MarginLaw converts a supply condition (V, f) into the
  sense margin threshold below which a bit cell is "weak" (its two
  memristors programmed to similar resistance). Weak cells misread,
  which is why errors persist across frequency: the failing-cell set
  only grows as V drops or f rises.

Profiles are keyed by supply condition, either a lab supply voltage or
an equivalent-suns illumination level. The shipped defaults are
calibration placeholders with the measured structure (cutoffs, the
2 percent ceiling, error-free operation from 1.0 V up); recalibrate
from bench CSVs for quantitative work.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatch, MalformedTable
from .tile import Tile

log = logging.getLogger(__name__)

MAX_DEFAULT_PROB = 0.02  # profile ceiling observed at and above 0.7 V


@dataclass(frozen=True)
class Condition:
    """Supply condition key: lab voltage, equivalent suns, or baseline."""

    kind: str  # "voltage" | "suns" | "baseline"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("voltage", "suns", "baseline"):
            raise ConfigError(f"unknown condition kind {self.kind!r}")

    def __str__(self) -> str:
        if self.kind == "baseline":
            return "baseline"
        return f"{self.kind}={self.value:g}"

    @classmethod
    def parse(cls, text: str) -> "Condition":
        text = text.strip()
        if text == "baseline":
            return cls("baseline")
        if "=" not in text:
            raise ConfigError(f"cannot parse condition {text!r}")
        kind, _, value = text.partition("=")
        try:
            return cls(kind.strip(), float(value))
        except ValueError as exc:
            raise ConfigError(f"cannot parse condition {text!r}") from exc


def voltage(v: float) -> Condition:
    return Condition("voltage", v)


def suns(s: float) -> Condition:
    return Condition("suns", s)


BASELINE = Condition("baseline")


class ErrorProfile:
    """Flip probability per |preactivation|, dense from 0 to cutoff.

    probs[d] is the flip probability at |delta| = d; anything past the
    cutoff is exactly 0. Tables must be non-increasing in |delta| and
    inside [0, 1].
    """

    def __init__(self, condition: Condition, probs):
        probs = np.asarray(probs, np.float64)
        if probs.ndim != 1 or len(probs) == 0:
            raise MalformedTable("probs must be a non-empty vector")
        if probs.min() < 0.0 or probs.max() > 1.0:
            raise MalformedTable("probabilities outside [0, 1]")
        if (np.diff(probs) > 0).any():
            raise MalformedTable("profile must be non-increasing in |delta|")
        self.condition = condition
        self.probs = probs
        self.probs.setflags(write=False)

    @property
    def cutoff(self) -> int:
        return len(self.probs) - 1

    def prob(self, delta: int) -> float:
        d = abs(int(delta))
        return float(self.probs[d]) if d <= self.cutoff else 0.0

    def prob_vector(self, deltas: np.ndarray) -> np.ndarray:
        d = np.abs(np.asarray(deltas, np.int64))
        p = self.probs[np.minimum(d, self.cutoff)]
        return np.where(d <= self.cutoff, p, 0.0)

    def __eq__(self, other):
        return (isinstance(other, ErrorProfile)
                and self.condition == other.condition
                and np.array_equal(self.probs, other.probs))

    def __repr__(self):
        return f"ErrorProfile({self.condition}, cutoff={self.cutoff})"


def zero_profile(condition: Condition) -> ErrorProfile:
    return ErrorProfile(condition, [0.0])


def neuron_error_prob(profile: ErrorProfile, delta: int) -> float:
    """Flip probability of an output with preactivation delta."""
    return profile.prob(delta)


class FaultMode(enum.Enum):
    STOCHASTIC_OUTPUT = "stochastic_output"
    DETERMINISTIC_WEAK_CELL = "deterministic_weak_cell"
    COMBINED = "combined"


@dataclass(frozen=True)
class FaultPolicy:
    """How faults are injected; base_seed anchors the derived streams."""

    mode: FaultMode = FaultMode.STOCHASTIC_OUTPUT
    base_seed: int | None = None


def apply_output_errors(outputs: np.ndarray, deltas: np.ndarray,
                        profile: ErrorProfile, policy: FaultPolicy,
                        rng: np.random.Generator) -> np.ndarray:
    """Flip outputs per the profile; returns a new array.

    Active for STOCHASTIC_OUTPUT and for the residual term of COMBINED;
    DETERMINISTIC_WEAK_CELL injects at the sense level instead, so
    outputs pass through unchanged here. One uniform draw per output,
    flipped when it lands under the profile probability of its delta.
    """
    outputs = np.asarray(outputs)
    deltas = np.asarray(deltas)
    if outputs.shape != deltas.shape:
        raise DimensionMismatch(f"outputs {outputs.shape} vs deltas {deltas.shape}")
    if policy.mode is FaultMode.DETERMINISTIC_WEAK_CELL:
        return outputs.copy()
    p = profile.prob_vector(deltas)
    flip = rng.random(outputs.shape) < p
    result = outputs.copy()
    result[flip] = -result[flip]
    return result


@dataclass(frozen=True)
class MarginLaw:
    """Sense margin threshold as a function of supply point.

    theta(V, f) = (a + b*f) * max(0, v0 - V), in ln-ohm units with V in
    volts and f in MHz. Non-increasing in V, non-decreasing in f, and
    exactly zero from v0 up, which is what pins "no errors at or above
    one volt" for the default calibration.
    """

    a: float = 20.0
    b: float = 0.09
    v0: float = 1.0

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ValueError("margin law coefficients must be >= 0")


DEFAULT_MARGIN_LAW = MarginLaw()


def margin_threshold(law: MarginLaw, v_volts: float, f_mhz: float) -> float:
    """Evaluate the margin law at a supply point."""
    if f_mhz < 0:
        raise ValueError("frequency must be >= 0")
    return (law.a + law.b * f_mhz) * max(0.0, law.v0 - v_volts)


def failing_cell_set(tile: Tile, law: MarginLaw, v_volts: float,
                     f_mhz: float) -> set[tuple[int, int]]:
    """(row, col) cells whose |margin| is inside the weak window at (V, f).

    Monotone by construction: lowering V or raising f can only grow the
    set, because the threshold theta(V, f) only grows.
    """
    theta = margin_threshold(law, v_volts, f_mhz)
    weak = np.abs(tile.margin_matrix()) <= theta
    rows, cols = np.nonzero(weak)
    return {(int(r), int(c)) for r, c in zip(rows, cols)}


# --- default profiles ---

def _linear_profile(condition: Condition, p0: float, cutoff: int) -> ErrorProfile:
    d = np.arange(cutoff + 1)
    probs = np.clip(p0 * (1.0 - d / (cutoff + 1.0)), 0.0, MAX_DEFAULT_PROB)
    return ErrorProfile(condition, probs)


def default_profiles() -> dict[Condition, ErrorProfile]:
    """Shipped placeholder calibration, one profile per bench condition.

    Voltage keys: error-free from 1.0 V up (1.2 V residuals, when a
    bench shows them, belong in calibration CSVs, not the defaults);
    errors out to |delta| = 5 from 0.9 V down, capped at 2 percent.
    Illumination keys mirror the solar bench: 8 suns sits next to the
    1.2 V supply with a faint residual, dimmer conditions widen the
    cutoff and raise the ceiling.
    """
    table = [
        (voltage(0.7), 0.02, 5),
        (voltage(0.8), 0.02, 5),
        (voltage(0.9), 0.02, 5),
        (suns(8), 0.005, 1),
        (suns(0.8), 0.01, 3),
        (suns(0.36), 0.015, 3),
        (suns(0.08), 0.02, 5),
    ]
    profiles = {cond: _linear_profile(cond, p0, cutoff) for cond, p0, cutoff in table}
    for v in (1.0, 1.1, 1.2):
        profiles[voltage(v)] = zero_profile(voltage(v))
    profiles[BASELINE] = zero_profile(BASELINE)
    return profiles


def resolve_profile(profiles: dict[Condition, ErrorProfile],
                    condition: Condition) -> ErrorProfile:
    """Exact condition match, else nearest same-kind key in log-space.

    Nearest-neighbor fallback logs a warning; no same-kind profile at
    all is a configuration error. Baseline always resolves error-free.
    """
    if condition.kind == "baseline":
        return profiles.get(condition, zero_profile(condition))
    if condition in profiles:
        return profiles[condition]
    candidates = [c for c in profiles if c.kind == condition.kind and c.value > 0]
    if not candidates or condition.value <= 0:
        raise ConfigError(f"no profile available for condition {condition}")
    nearest = min(candidates,
                  key=lambda c: abs(math.log(c.value) - math.log(condition.value)))
    log.warning("no profile for %s, using nearest %s", condition, nearest)
    return profiles[nearest]


# --- schmoo functionality boundary (digital timing, not sensing) ---

# (minimum voltage, highest functional frequency in MHz), descending
DEFAULT_FREQUENCY_LIMITS = ((1.0, 66.0), (0.8, 33.0), (0.7, 10.0))


def max_functional_frequency(v_volts: float,
                             limits=DEFAULT_FREQUENCY_LIMITS) -> float:
    """Highest clock the digital logic sustains at a supply voltage."""
    for v_min, f_max in limits:
        if v_volts >= v_min:
            return f_max
    return 0.0


# --- calibration ---

def calibrate_profile(measurements) -> ErrorProfile:
    """Fit an ErrorProfile from (condition, delta, error_rate) rows.

    Rows must share one condition and carry rates in [0, 1]; signed
    deltas fold onto |delta| taking the worse rate. The fit applies a
    monotone envelope p(d) = max over measured d' >= d, which also fills
    unmeasured gaps below the cutoff; the cutoff is the largest |delta|
    with a nonzero measured rate. Violations raise MalformedTable.
    """
    rows = list(measurements)
    if not rows:
        raise MalformedTable("empty calibration table")
    condition = rows[0][0]
    raw: dict[int, float] = {}
    for cond, delta, rate in rows:
        if cond != condition:
            raise MalformedTable(f"mixed conditions {condition} and {cond}")
        rate = float(rate)
        if not 0.0 <= rate <= 1.0:
            raise MalformedTable(f"error rate {rate} outside [0, 1]")
        d = abs(int(delta))
        raw[d] = max(raw.get(d, 0.0), rate)
    cutoff = max((d for d, r in raw.items() if r > 0.0), default=0)
    probs = np.zeros(cutoff + 1)
    for d in range(cutoff + 1):
        probs[d] = max((r for dd, r in raw.items() if dd >= d), default=0.0)
    return ErrorProfile(condition, probs)


CALIBRATION_HEADER = ["condition", "delta", "error_rate"]


def load_calibration_csv(path) -> list[tuple[Condition, int, float]]:
    """Read calibration rows; header must be condition,delta,error_rate."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CALIBRATION_HEADER:
            raise MalformedTable(f"bad calibration header {header}")
        rows = []
        for rec in reader:
            if not rec:
                continue
            if len(rec) != 3:
                raise MalformedTable(f"bad calibration row {rec}")
            rows.append((Condition.parse(rec[0]), int(rec[1]), float(rec[2])))
    return rows


def export_profile_csv(profile: ErrorProfile, path) -> None:
    """Write a profile as calibration rows (one per |delta| to cutoff)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CALIBRATION_HEADER)
        for d in range(profile.cutoff + 1):
            # repr round-trips the float exactly
            writer.writerow([str(profile.condition), d, repr(float(profile.probs[d]))])


def load_profiles_csv(path) -> dict[Condition, ErrorProfile]:
    """Read a multi-condition calibration CSV into a profile map."""
    by_condition: dict[Condition, list] = {}
    for row in load_calibration_csv(path):
        by_condition.setdefault(row[0], []).append(row)
    return {cond: calibrate_profile(rows) for cond, rows in by_condition.items()}
