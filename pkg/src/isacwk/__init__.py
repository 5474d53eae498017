"""Dual-function radar/communication waveform design toolkit."""

from .admm import ConvergenceDiagnostics, DivergenceError, SolverConfig, SolverState, solve
from .metrics import MetricReport, evaluate, papr, papr_db
from .model import Constellation, Scenario, WaveformFrame, make_scenario, zf_precode

__version__ = "0.1.0"

__all__ = [
    "Constellation", "ConvergenceDiagnostics", "DivergenceError", "MetricReport", "Scenario",
    "SolverConfig", "SolverState", "WaveformFrame", "evaluate", "make_scenario", "papr", "papr_db",
    "solve", "zf_precode",
]
