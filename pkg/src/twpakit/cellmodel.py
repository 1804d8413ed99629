"""Unit-cell physics of the flux-tunable coupled-SQUID transmission line.

Each unit cell is a pair of coupled asymmetric SQUIDs: a small junction
(critical current i0) in one arm and large junctions (r*i0) in the other,
threaded by an external flux. Expanding the composite current-phase
relation to cubic order gives

    I(phi) = i0*[r/2 + 2*cos(2*pi*f)]*phi - (i0/3)*[r/16 + cos(2*pi*f)]*phi^3

with f = Phi/Phi0 the normalized flux. Both the linear inductance and the
cubic (Kerr) coefficient are flux tunable, and the Kerr term inverts sign
once per half flux quantum when r < 16.

All functions here are pure and accept numpy arrays for the frequency
argument where one exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .constants import PHI0, PHI0_RED
from .errors import OperatingRangeError, ValidationError

__all__ = [
    "UnitCellParams",
    "FluxBias",
    "DerivedCellConstants",
    "DevicePreset",
    "PRESETS",
    "get_preset",
    "linear_coeff",
    "cubic_coeff",
    "branch_current",
    "junction_inductance",
    "linear_inductance",
    "kerr_coefficient",
    "kerr_free_flux",
    "shunt_conductance",
    "effective_junction_capacitance",
    "characteristic_impedance",
    "derived_constants",
]


@dataclass(frozen=True)
class UnitCellParams:
    """Fabrication-level constants of one unit cell.

    i0        -- critical current of the small junction (A)
    r         -- junction area ratio, large/small (dimensionless)
    c0        -- small-junction shunt capacitance (F)
    cgnd      -- per-cell capacitance to ground (F)
    tan_delta -- loss tangent of the grounding-capacitor dielectric
    a         -- physical cell pitch (m); bookkeeping only, propagation is
                 computed per cell
    """

    i0: float
    r: float
    c0: float
    cgnd: float
    tan_delta: float = 0.0027
    a: float = 10e-6

    def __post_init__(self):
        if not self.i0 > 0:
            raise ValidationError("i0 must be > 0")
        if not self.r > 0:
            raise ValidationError("r must be > 0")
        if self.c0 < 0:
            raise ValidationError("c0 must be >= 0")
        if not self.cgnd > 0:
            raise ValidationError("cgnd must be > 0")
        if self.tan_delta < 0:
            raise ValidationError("tan_delta must be >= 0")
        if not self.a > 0:
            raise ValidationError("a must be > 0")


@dataclass(frozen=True)
class FluxBias:
    """Normalized external flux f = Phi/Phi0. Any real value is accepted;
    every derived quantity is periodic with period 1 and even in f."""

    f: float


def _fval(flux) -> float:
    return float(flux.f) if isinstance(flux, FluxBias) else float(flux)


def linear_coeff(flux, p: UnitCellParams) -> float:
    """Flux-dependent coefficient of the linear current-phase term,
    r/2 + 2*cos(2*pi*f)."""
    f = _fval(flux)
    return p.r / 2.0 + 2.0 * math.cos(2.0 * math.pi * f)


def cubic_coeff(flux, p: UnitCellParams) -> float:
    """Flux-dependent coefficient of the cubic current-phase term,
    r/16 + cos(2*pi*f). Zero at the Kerr-free flux."""
    f = _fval(flux)
    return p.r / 16.0 + math.cos(2.0 * math.pi * f)


def branch_current(phi, flux, p: UnitCellParams):
    """Cell branch current (A) at superconducting phase difference phi (rad).

    Cubic-order expansion of the coupled-SQUID current-phase relation;
    odd in phi, purely linear at the Kerr-free flux.
    """
    phi = np.asarray(phi, dtype=float)
    c1 = linear_coeff(flux, p)
    c3 = cubic_coeff(flux, p)
    out = p.i0 * c1 * phi - (p.i0 / 3.0) * c3 * phi**3
    return out if out.ndim else float(out)


def junction_inductance(p: UnitCellParams) -> float:
    """Bare small-junction inductance L0 = Phi0 / (2*pi*i0), in H."""
    return PHI0 / (2.0 * math.pi * p.i0)


def linear_inductance(flux, p: UnitCellParams) -> float:
    """Flux-tunable linear cell inductance L0 / (r/2 + 2*cos(2*pi*f)), in H.

    Raises OperatingRangeError when the denominator is not positive
    (inductance divergence: flux bias outside the stable range).
    """
    c1 = linear_coeff(flux, p)
    if c1 <= 0.0:
        raise OperatingRangeError(
            f"inductance divergence: r/2 + 2*cos(2*pi*f) = {c1:.6g} <= 0 "
            f"at f = {_fval(flux):.6g}"
        )
    return junction_inductance(p) / c1


def kerr_coefficient(flux, p: UnitCellParams) -> float:
    """Kerr coefficient gamma = [r/16 + cos(2*pi*f)] / (3*phi0^2*L0).

    Positive at integer flux (same sign as a bare junction), negative near
    half flux when r < 16. phi0 is the reduced flux quantum.
    """
    l0 = junction_inductance(p)
    return cubic_coeff(flux, p) / (3.0 * PHI0_RED**2 * l0)


def kerr_free_flux(p: UnitCellParams) -> float:
    """Flux f in [0, 0.5] where the Kerr coefficient vanishes.

    Solves r/16 + cos(2*pi*f) = 0; requires r <= 16.
    """
    if p.r > 16.0:
        raise OperatingRangeError(
            f"no Kerr-free point: r = {p.r:.6g} > 16, the cubic coefficient "
            "never changes sign"
        )
    return math.acos(-p.r / 16.0) / (2.0 * math.pi)


def shunt_conductance(omega, p: UnitCellParams):
    """Per-cell dielectric loss conductance G = omega * cgnd * tan_delta (S)."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValidationError("omega must be >= 0")
    out = omega * p.cgnd * p.tan_delta
    return out if out.ndim else float(out)


def effective_junction_capacitance(p: UnitCellParams) -> float:
    """Capacitance shunting the cell's series branch, c0*(r/2 + 2), in F."""
    return p.c0 * (p.r / 2.0 + 2.0)


def characteristic_impedance(omega, flux, p: UnitCellParams):
    """Characteristic impedance sqrt(L_eff(omega)/cgnd), in ohms.

    L_eff(omega) = L0 / ([r/2 + 2*cos(2*pi*f)] - omega^2*L0*c0*(r/2+2))
    includes the junction-capacitance correction; at omega -> 0 it reduces
    to sqrt(linear_inductance/cgnd). Raises OperatingRangeError at or above
    the plasma frequency (evanescent band).
    """
    omega = np.asarray(omega, dtype=float)
    c1 = linear_coeff(flux, p)
    if c1 <= 0.0:
        raise OperatingRangeError(
            f"inductance divergence at f = {_fval(flux):.6g}"
        )
    l0 = junction_inductance(p)
    radicand = c1 - omega**2 * l0 * effective_junction_capacitance(p)
    if np.any(radicand <= 0.0):
        raise OperatingRangeError(
            "evanescent band: frequency at or above the plasma frequency "
            f"for flux f = {_fval(flux):.6g}"
        )
    out = np.sqrt(l0 / (radicand * p.cgnd))
    return out if out.ndim else float(out)


def derived_constants(omega, flux, p: UnitCellParams) -> "DerivedCellConstants":
    """Bundle of the derived cell quantities at one frequency and flux."""
    return DerivedCellConstants(
        l0=junction_inductance(p),
        l_lin=linear_inductance(flux, p),
        gamma=kerr_coefficient(flux, p),
        z0=float(characteristic_impedance(omega, flux, p)),
    )


@dataclass(frozen=True)
class DerivedCellConstants:
    """Derived quantities: bare junction inductance, linear cell inductance,
    Kerr coefficient and characteristic impedance."""

    l0: float
    l_lin: float
    gamma: float
    z0: float


@dataclass(frozen=True)
class DevicePreset:
    """A named device: cell count plus design and fitted parameter sets."""

    name: str
    n_cells: int
    design: UnitCellParams
    fitted: UnitCellParams

    def params(self, fitted: bool = True) -> UnitCellParams:
        return self.fitted if fitted else self.design


_DESIGN = UnitCellParams(i0=1.2e-6, r=6.0, c0=40e-15, cgnd=110e-15)
_FITTED = UnitCellParams(i0=1.25e-6, r=6.2, c0=45e-15, cgnd=115e-15)

PRESETS = {
    "jtwpa-a": DevicePreset("jtwpa-a", 865, _DESIGN, _FITTED),
    "jtwpa-b": DevicePreset("jtwpa-b", 350, _DESIGN, _FITTED),
}


def get_preset(name: str, *, tan_delta: float | None = None) -> DevicePreset:
    """Look up a device preset by name (case-insensitive).

    tan_delta optionally overrides the bundled loss tangent in both
    parameter sets.
    """
    key = name.strip().lower()
    if key not in PRESETS:
        raise ValidationError(
            f"unknown preset {name!r}; available: {sorted(PRESETS)}"
        )
    preset = PRESETS[key]
    if tan_delta is not None:
        preset = replace(
            preset,
            design=replace(preset.design, tan_delta=tan_delta),
            fitted=replace(preset.fitted, tan_delta=tan_delta),
        )
    return preset
