"""Behavioral simulator of a solar-powered memristive BNN accelerator.

Layered like the hardware: `device` (memristor programming and
variability), `tile` (2T2R arrays and differential sensing), `pipeline`
(row-sequenced inference engine), `faults` (supply-condition error
injection), `mapper` (network-to-tile compilation), `power` (solar cell,
operating point, energy), with `config`/`dataset`/`experiments`/`cli`
as the harness on top.
"""

from . import cli, config, dataset, device, experiments, faults, mapper, pipeline, power, tile
from .device import (
    DeviceVariability,
    IDEAL_VARIABILITY,
    MemristorDevice,
    ProgrammingPulse,
    PulseKind,
    ResistanceState,
)
from .errors import SimulationError
from .faults import Condition, ErrorProfile, FaultMode, FaultPolicy, MarginLaw
from .mapper import BNNModel, Layer, TilePlan, compile_model, evaluate_mapped
from .pipeline import EngineConfig, LayerEngine, oracle_eval, run_inference
from .power import ChipLoadModel, EnergyReport, OperatingPoint, SolarCellModel
from .tile import ProgramContext, SenseContext, Tile

__version__ = "0.1.0"

__all__ = [
    "BNNModel",
    "ChipLoadModel",
    "Condition",
    "DeviceVariability",
    "EnergyReport",
    "EngineConfig",
    "ErrorProfile",
    "FaultMode",
    "FaultPolicy",
    "IDEAL_VARIABILITY",
    "Layer",
    "LayerEngine",
    "MarginLaw",
    "MemristorDevice",
    "OperatingPoint",
    "ProgramContext",
    "ProgrammingPulse",
    "PulseKind",
    "ResistanceState",
    "SenseContext",
    "SimulationError",
    "SolarCellModel",
    "Tile",
    "TilePlan",
    "cli",
    "compile_model",
    "config",
    "dataset",
    "device",
    "evaluate_mapped",
    "experiments",
    "faults",
    "mapper",
    "oracle_eval",
    "pipeline",
    "power",
    "run_inference",
    "tile",
]
