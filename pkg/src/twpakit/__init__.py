"""twpakit: simulation and design toolkit for flux-tunable Josephson
traveling-wave parametric amplifiers with inverse-Kerr phase matching.

Modules
-------
cellmodel   unit-cell physics: current-phase relation, inductance, Kerr
            coefficient, loss conductance, characteristic impedance
dispersion  linear propagation: wavenumber, plasma frequency, chromatic
            mismatch, cascaded-network S21 (insertion loss and ripple)
cme         four-wave-mixing gain: SPM/XPM shifts, couplings, closed-form
            and ODE gain, phase-matching roots
timedomain  nonlinear LC-ladder transient simulator: gain extraction,
            harmonic diagnostics, compression sweeps
fitkit      measurement analysis: thru calibration, dispersion fits,
            theta_nl slope fits, Y-factor noise fits, ripple statistics
cli         config-driven batch front-end emitting CSV/JSON artifacts
"""

from . import cellmodel, cme, dispersion, fitkit, timedomain
from .cellmodel import FluxBias, UnitCellParams, get_preset
from .cme import GainProfile, OperatingPoint, PumpState
from .dispersion import ComplexTrace, FrequencyGrid
from .errors import (
    FitError,
    OperatingRangeError,
    SimulationError,
    TwpaError,
    UnwrapError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "cellmodel",
    "dispersion",
    "cme",
    "timedomain",
    "fitkit",
    "UnitCellParams",
    "FluxBias",
    "OperatingPoint",
    "PumpState",
    "FrequencyGrid",
    "ComplexTrace",
    "GainProfile",
    "get_preset",
    "TwpaError",
    "OperatingRangeError",
    "ValidationError",
    "UnwrapError",
    "FitError",
    "SimulationError",
]
