"""Physical constants and power-unit helpers shared across the toolkit.

Constants are pinned to fixed literals (rather than pulled from
scipy.constants) so that outputs are bit-reproducible across environments.
"""

from __future__ import annotations

import math

import numpy as np

PHI0 = 2.067833848e-15    # magnetic flux quantum, Wb
HBAR = 1.054571817e-34    # reduced Planck constant, J s
KB = 1.380649e-23         # Boltzmann constant, J/K

PHI0_RED = PHI0 / (2.0 * math.pi)   # reduced flux quantum Phi0/2pi, Wb

_DBM_REF_W = 1e-3


def dbm_to_watts(p_dbm):
    """Convert dBm to watts (1 mW reference). -inf maps to 0 W."""
    return _DBM_REF_W * np.power(10.0, np.asarray(p_dbm, dtype=float) / 10.0)


def watts_to_dbm(p_watts):
    """Convert watts to dBm. 0 W maps to -inf."""
    p = np.asarray(p_watts, dtype=float)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(p / _DBM_REF_W)


def round_db(x: float, ndigits: int = 2) -> float:
    """Round a dB figure for reports (round-half-even, default 0.01 dB)."""
    return round(float(x), ndigits)
