"""Simulation and analysis of donor electron-nuclear spin systems in silicon."""

from ._version import __version__
from .errors import (
    ConvergenceError,
    DonorSpinError,
    IngestionError,
    NumericError,
    TrackingError,
    UsageError,
)
from .spin import AS75, PB0, PRESETS, SpinSystem, build_hamiltonian, eigensolve, solve
from .transitions import find_clock_transitions, sweep, transition_table
from .lockin import SpectrumConfig, simulate_spectrum
from .linewidth import LinewidthModel, fit_linewidth_model, predict_linewidth, strain_from_deltaA
from .specfit import assign_transitions, fit_peaks, subtract_background
from .diffusion import ConcentrationProfile, DiffusivityModel, ThermalStep, diffuse, mit_crossing

__all__ = [
    "__version__",
    "AS75",
    "PB0",
    "PRESETS",
    "SpinSystem",
    "build_hamiltonian",
    "eigensolve",
    "solve",
    "find_clock_transitions",
    "sweep",
    "transition_table",
    "SpectrumConfig",
    "simulate_spectrum",
    "LinewidthModel",
    "fit_linewidth_model",
    "predict_linewidth",
    "strain_from_deltaA",
    "fit_peaks",
    "subtract_background",
    "assign_transitions",
    "ConcentrationProfile",
    "DiffusivityModel",
    "ThermalStep",
    "diffuse",
    "mit_crossing",
    "DonorSpinError",
    "UsageError",
    "IngestionError",
    "NumericError",
    "ConvergenceError",
    "TrackingError",
]
