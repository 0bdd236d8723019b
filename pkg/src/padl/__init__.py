"""Simulation and calibration toolkit for a parametrically addressed microwave delay line."""

__version__ = "0.1.0"

from . import circuit, dynamics, model, mpo, protocols, tuner  # noqa: E402
from ._kernels import BACKEND  # noqa: E402
from .dynamics import PulseEnvelope, SimulationResult, TimeTrace, gaussian_pulse, simulate  # noqa: E402
from .model import DelayLineModel, build_delay_line, dbp, fit_s11, group_delay, s11  # noqa: E402
from .protocols import (  # noqa: E402
    Continuous,
    ControlSchedule,
    EchoSelect,
    SwapDetunings,
    Translate,
    build_schedule,
    fidelity,
    two_pulse_experiment,
)

__all__ = [
    "BACKEND", "Continuous", "ControlSchedule", "DelayLineModel", "EchoSelect", "PulseEnvelope",
    "SimulationResult", "SwapDetunings", "TimeTrace", "Translate", "build_delay_line", "build_schedule",
    "circuit", "dbp", "dynamics", "fidelity", "fit_s11", "gaussian_pulse", "group_delay", "model", "mpo",
    "protocols", "s11", "simulate", "tuner", "two_pulse_experiment",
]
