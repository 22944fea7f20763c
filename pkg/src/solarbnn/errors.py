"""Exception types shared across the simulator.

Grouped by the layer that raises them. The CLI maps these onto process
exit codes: ConfigError -> 2, data/model/io errors -> 3.
"""


class SimulationError(Exception):
    """Base class for every error raised by this package."""


# device layer

class AlreadyFormed(SimulationError):
    """FORM pulse applied to a device that already went through forming."""


class NotFormed(SimulationError):
    """SET/RESET pulse applied to a device that was never formed."""


class IllegalPulse(SimulationError):
    """Pulse kind or amplitudes outside the tolerated programming window."""


# tile layer

class RowOutOfRange(SimulationError):
    """Row index outside the addressed region of the tile."""


class ColOutOfRange(SimulationError):
    """Column index outside the tile."""


class ThresholdOutOfRange(SimulationError):
    """Threshold not encodable in the available 6-bit rows."""


# pipeline layer

class NotProgrammed(SimulationError):
    """Inference attempted on an engine with unprogrammed cells."""


class ThresholdsNotLoaded(SimulationError):
    """Input presented before the threshold-load phase ran."""


class DimensionMismatch(SimulationError):
    """Vector or matrix shape does not match the engine geometry."""


class TargetOutOfRange(SimulationError):
    """Requested preactivation unreachable for the given fan-in."""


# fault model

class MalformedTable(SimulationError):
    """Calibration table rows are inconsistent or out of range."""


# mapper

class EvenLength(SimulationError):
    """Majority vote over an even number of block outputs."""


class ThresholdOverflow(SimulationError):
    """Per-block threshold falls outside 0..63 after padding offsets."""


class EmptyModel(SimulationError):
    """Model with no layers."""


class PlanMismatch(SimulationError):
    """Tile plan does not describe the model it is applied to."""


class UnsupportedLayer(SimulationError):
    """Layer kind the mapper does not handle (only dense layers map)."""


# power / solar

class NoConvergence(SimulationError):
    """Root solve exhausted its iteration budget."""


class NoOperatingPoint(SimulationError):
    """Supply and load curves do not intersect (brown-out)."""


class FractionOverflow(SimulationError):
    """Energy breakdown fractions sum past 1."""


# harness

class ConfigError(SimulationError):
    """Unreadable or inconsistent configuration."""


class DatasetError(SimulationError):
    """Dataset files unreadable or inconsistent."""


class BadMagic(DatasetError):
    """IDX file does not start with the expected magic number."""


class CountMismatch(DatasetError):
    """IDX image and label counts disagree, or payload truncated."""


class ModelError(SimulationError):
    """Model file unreadable or inconsistent."""


class IoError(SimulationError):
    """Report files could not be written."""
