"""Single-memristor behavior: forming, programming, resistance statistics.

A fresh device is non-conductive until a one-time FORM pulse builds the
filament and leaves it in the low-resistance state (LRS). After forming,
SET pulses return it to LRS and RESET pulses push it to the
high-resistance state (HRS). Each (re)programming event draws a fresh
resistance from a lognormal distribution around the state median; there
is no drift and no program-and-verify loop, so the drawn value is what
every later read sees.

Resistances are handled in log-domain internally (ln ohms): the sense
path downstream compares log-resistances, and a lognormal draw is just
a normal draw in the log.

Voltage rails follow the programming scheme of the chip:

    FORM      VDDC=4.5 V  VDDR=2.7 V  VDD=1.2 V  10 us
    SET_LRS   VDDC=2.7 V  VDDR=2.7 V  VDD=1.2 V   6 us
    RESET_HRS VDDC=2.7 V  VDDR=4.5 V  VDD=1.2 V   6 us

Pulses deviating from their nominal tuple by more than the tolerance
(default 5 percent, relative, per entry) are rejected.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import AlreadyFormed, IllegalPulse, NotFormed


class ResistanceState(enum.Enum):
    LRS = "lrs"
    HRS = "hrs"


class PulseKind(enum.Enum):
    FORM = "form"
    SET_LRS = "set_lrs"
    RESET_HRS = "reset_hrs"


# nominal (vddc_v, vddr_v, vdd_v, duration_us) per pulse kind
NOMINAL_PULSES = {
    PulseKind.FORM: (4.5, 2.7, 1.2, 10.0),
    PulseKind.SET_LRS: (2.7, 2.7, 1.2, 6.0),
    PulseKind.RESET_HRS: (2.7, 4.5, 1.2, 6.0),
}

PULSE_TOLERANCE = 0.05  # relative, per tuple entry


@dataclass(frozen=True)
class ProgrammingPulse:
    """Programming pulse as applied to the column/row drivers."""

    kind: PulseKind
    vddc_v: float
    vddr_v: float
    vdd_v: float
    duration_us: float

    @classmethod
    def form(cls) -> "ProgrammingPulse":
        return cls(PulseKind.FORM, *NOMINAL_PULSES[PulseKind.FORM])

    @classmethod
    def set_lrs(cls) -> "ProgrammingPulse":
        return cls(PulseKind.SET_LRS, *NOMINAL_PULSES[PulseKind.SET_LRS])

    @classmethod
    def reset_hrs(cls) -> "ProgrammingPulse":
        return cls(PulseKind.RESET_HRS, *NOMINAL_PULSES[PulseKind.RESET_HRS])

    def tuple(self) -> tuple[float, float, float, float]:
        return (self.vddc_v, self.vddr_v, self.vdd_v, self.duration_us)


@dataclass(frozen=True)
class DeviceVariability:
    """Lognormal resistance statistics per state.

    Medians in ohms, sigmas in natural-log units. Zero sigma collapses
    the distribution onto the median exactly.
    """

    lrs_median_ohms: float = 10e3
    lrs_log_sigma: float = 0.3
    hrs_median_ohms: float = 1e6
    hrs_log_sigma: float = 0.8

    def median(self, state: ResistanceState) -> float:
        return self.lrs_median_ohms if state is ResistanceState.LRS else self.hrs_median_ohms

    def log_sigma(self, state: ResistanceState) -> float:
        return self.lrs_log_sigma if state is ResistanceState.LRS else self.hrs_log_sigma


IDEAL_VARIABILITY = DeviceVariability(lrs_log_sigma=0.0, hrs_log_sigma=0.0)


@dataclass(frozen=True)
class MemristorDevice:
    """Value snapshot of one memristor.

    An unformed device has no state and no meaningful resistance; reads
    go through the tile layer, which only addresses formed cells.
    """

    formed: bool = False
    state: ResistanceState | None = None
    log_resistance: float | None = None  # ln(ohms)

    @property
    def resistance_ohms(self) -> float | None:
        if self.log_resistance is None:
            return None
        return math.exp(self.log_resistance)


def check_pulse(pulse: ProgrammingPulse, kind: PulseKind,
                tolerance: float = PULSE_TOLERANCE) -> None:
    """Reject a pulse whose kind or amplitudes are out of tolerance.

    Raises IllegalPulse when pulse.kind differs from the operation's
    expected kind or any tuple entry deviates from nominal by more than
    `tolerance` (relative).
    """
    if pulse.kind is not kind:
        raise IllegalPulse(f"expected {kind.value} pulse, got {pulse.kind.value}")
    nominal = NOMINAL_PULSES[kind]
    for value, ref in zip(pulse.tuple(), nominal):
        if abs(value - ref) > tolerance * ref:
            raise IllegalPulse(
                f"{kind.value} pulse {pulse.tuple()} outside +/-{tolerance:.0%} of {nominal}")


def sample_log_resistance(state: ResistanceState, variability: DeviceVariability,
                          rng: np.random.Generator) -> float:
    """One ln-resistance draw for a device entering `state`.

    ln R = ln(median) + sigma * z with z ~ N(0, 1). A zero sigma returns
    ln(median) without consuming the generator, so ideal-device runs
    stay reproducible and cheap.
    """
    mu = math.log(variability.median(state))
    sigma = variability.log_sigma(state)
    if sigma == 0.0:
        return mu
    return mu + sigma * rng.standard_normal()


def sample_resistance(state: ResistanceState, variability: DeviceVariability,
                      rng: np.random.Generator) -> float:
    """One resistance draw in ohms (lognormal around the state median).

    Zero sigma returns the median itself, not exp(ln(median)), so ideal
    devices sit on the configured value exactly.
    """
    if variability.log_sigma(state) == 0.0:
        return variability.median(state)
    return math.exp(sample_log_resistance(state, variability, rng))


def form_device(device: MemristorDevice, pulse: ProgrammingPulse,
                variability: DeviceVariability, rng: np.random.Generator,
                tolerance: float = PULSE_TOLERANCE) -> MemristorDevice:
    """One-time forming step. Leaves the device in LRS.

    Raises AlreadyFormed on a formed device and IllegalPulse when the
    pulse is not a FORM tuple within tolerance.
    """
    if device.formed:
        raise AlreadyFormed("device already formed")
    check_pulse(pulse, PulseKind.FORM, tolerance)
    log_r = sample_log_resistance(ResistanceState.LRS, variability, rng)
    return MemristorDevice(formed=True, state=ResistanceState.LRS, log_resistance=log_r)


def program_device(device: MemristorDevice, target: ResistanceState,
                   pulse: ProgrammingPulse, variability: DeviceVariability,
                   rng: np.random.Generator,
                   tolerance: float = PULSE_TOLERANCE) -> MemristorDevice:
    """SET or RESET a formed device; resistance freshly drawn each time.

    Re-programming to the current state still redraws the resistance:
    every pulse rebuilds or dissolves the filament. Raises NotFormed on
    an unformed device, IllegalPulse on a kind/tuple mismatch.
    """
    if not device.formed:
        raise NotFormed("program pulse on unformed device")
    kind = PulseKind.SET_LRS if target is ResistanceState.LRS else PulseKind.RESET_HRS
    check_pulse(pulse, kind, tolerance)
    log_r = sample_log_resistance(target, variability, rng)
    return replace(device, state=target, log_resistance=log_r)
