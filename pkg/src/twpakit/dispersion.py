"""Linear-regime propagation: dispersion relation and cascaded-network S21.

The lossless, small-signal dispersion of the ladder is

    k(omega, f) = omega*sqrt(L0*cgnd) /
                  sqrt([r/2 + 2*cos(2*pi*f)] - omega^2*L0*c0*(r/2+2))

with k in radians per cell (distances are cell counts throughout). The
radicand vanishes at the plasma frequency; propagation above it is
evanescent.

``linear_s21`` cascades the exact two-port of the discrete ladder,
including dielectric loss and resistive terminations, and therefore
captures both insertion loss and the standing-wave ripple caused by an
impedance mismatch.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import cellmodel
from .cellmodel import UnitCellParams
from .errors import OperatingRangeError, ValidationError

__all__ = [
    "FrequencyGrid",
    "DispersionCurve",
    "ComplexTrace",
    "wavenumber",
    "plasma_frequency",
    "delta_k",
    "dispersion_curve",
    "shunt_admittance",
    "linear_s21",
    "passband_ripple",
]

TRACE_CSV_COLUMNS = ("freq_hz", "re", "im", "mag_db", "phase_rad")


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing grid of angular frequencies (rad/s)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size == 0:
            raise ValidationError("frequency grid must be a non-empty 1-d array")
        if np.any(pts <= 0):
            raise ValidationError("frequencies must be positive")
        if np.any(np.diff(pts) <= 0):
            raise ValidationError("frequencies must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_hz(cls, f_lo_hz: float, f_hi_hz: float, n: int) -> "FrequencyGrid":
        return cls(2.0 * math.pi * np.linspace(f_lo_hz, f_hi_hz, n))

    @property
    def hz(self) -> np.ndarray:
        return self.points / (2.0 * math.pi)

    def __len__(self) -> int:
        return self.points.size


@dataclass(frozen=True)
class DispersionCurve:
    """Wavenumber per cell sampled on a frequency grid."""

    grid: FrequencyGrid
    k: np.ndarray


@dataclass(frozen=True)
class ComplexTrace:
    """Complex transmission values on a frequency grid (the S21 unit of
    exchange between modules and files)."""

    grid: FrequencyGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (len(self.grid),):
            raise ValidationError("trace length must match its grid")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("trace values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def mag_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(np.abs(self.values))

    @property
    def phase_rad(self) -> np.ndarray:
        return np.angle(self.values)

    def to_csv(self, path) -> None:
        """Write the fixed trace schema: freq_hz, re, im, mag_db, phase_rad."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_CSV_COLUMNS)
            for f_hz, v, m, ph in zip(
                self.grid.hz, self.values, self.mag_db, self.phase_rad
            ):
                w.writerow(
                    [f"{f_hz:.17g}", f"{v.real:.17g}", f"{v.imag:.17g}",
                     f"{m:.17g}", f"{ph:.17g}"]
                )


def wavenumber(omega, flux, p: UnitCellParams):
    """Wavenumber k (rad/cell) below the plasma frequency.

    Raises OperatingRangeError when any requested frequency is at or above
    the plasma frequency.
    """
    omega = np.asarray(omega, dtype=float)
    c1 = cellmodel.linear_coeff(flux, p)
    if c1 <= 0.0:
        raise OperatingRangeError(
            f"inductance divergence at f = {cellmodel._fval(flux):.6g}"
        )
    l0 = cellmodel.junction_inductance(p)
    ceff = cellmodel.effective_junction_capacitance(p)
    radicand = c1 - omega**2 * l0 * ceff
    if np.any(radicand <= 0.0):
        raise OperatingRangeError(
            "above plasma frequency: dispersion radicand <= 0 "
            f"(plasma at {plasma_frequency(flux, p) / 2e9 / math.pi:.3f} GHz)"
        )
    out = omega * math.sqrt(l0 * p.cgnd) / np.sqrt(radicand)
    return out if out.ndim else float(out)


def plasma_frequency(flux, p: UnitCellParams) -> float:
    """Pole of the dispersion relation (rad/s), set by the junction
    capacitance: sqrt([r/2 + 2*cos(2*pi*f)] / (L0*c0*(r/2+2)))."""
    c1 = cellmodel.linear_coeff(flux, p)
    if c1 <= 0.0:
        raise OperatingRangeError(
            f"inductance divergence at f = {cellmodel._fval(flux):.6g}"
        )
    ceff = cellmodel.effective_junction_capacitance(p)
    if ceff == 0.0:
        return math.inf
    return math.sqrt(c1 / (cellmodel.junction_inductance(p) * ceff))


def delta_k(omega_s, omega_p: float, flux, p: UnitCellParams):
    """Chromatic phase mismatch k(w_s) + k(2*w_p - w_s) - 2*k(w_p), rad/cell.

    Symmetric under w_s <-> 2*w_p - w_s and strictly positive for
    w_s != w_p because k is convex below the plasma frequency.
    """
    omega_s = np.asarray(omega_s, dtype=float)
    omega_i = 2.0 * omega_p - omega_s
    if np.any(omega_i <= 0.0):
        raise ValidationError("idler frequency 2*omega_p - omega_s must be > 0")
    out = np.asarray(
        wavenumber(omega_s, flux, p)
        + wavenumber(omega_i, flux, p)
        - 2.0 * wavenumber(omega_p, flux, p)
    )
    return out if out.ndim else float(out)


def dispersion_curve(grid: FrequencyGrid, flux, p: UnitCellParams) -> DispersionCurve:
    return DispersionCurve(grid, wavenumber(grid.points, flux, p))


def shunt_admittance(
    omega,
    p: UnitCellParams,
    loss_model: str = "omega",
    loss_anchor_omega: float | None = None,
):
    """Per-cell shunt admittance: cgnd in parallel with the loss element.

    loss_model:
      "omega"  -- conductance omega*cgnd*tan_delta (default; the loss law
                  used throughout the frequency-domain model)
      "fixed"  -- constant conductance evaluated at loss_anchor_omega
                  (time-domain stand-in: loss anchored at the pump)
      "rc"     -- a small series-RC leg in parallel with cgnd whose
                  conductance equals omega*cgnd*tan_delta at the anchor
                  (matches the time-domain rc mode; conductance rises
                  ~omega^2 below the anchor and saturates above)
      "off"    -- lossless
    """
    omega = np.asarray(omega, dtype=float)
    jwc = 1j * omega * p.cgnd
    if loss_model == "omega":
        return jwc + omega * p.cgnd * p.tan_delta
    if loss_model == "off":
        return jwc
    if loss_anchor_omega is None:
        raise ValidationError(f"loss_model={loss_model!r} requires loss_anchor_omega")
    if loss_model == "fixed":
        return jwc + loss_anchor_omega * p.cgnd * p.tan_delta
    if loss_model == "rc":
        c_leg, r_leg = rc_loss_elements(p, loss_anchor_omega)
        if c_leg == 0.0:
            return jwc
        y_leg = 1j * omega * c_leg / (1.0 + 1j * omega * r_leg * c_leg)
        return jwc + y_leg
    raise ValidationError(f"unknown loss_model {loss_model!r}")


def rc_loss_elements(p: UnitCellParams, anchor_omega: float) -> tuple[float, float]:
    """(C, R) of the per-cell series-RC loss leg.

    The leg corner sits at the anchor frequency (omega*R*C = 1 there), and
    C = 2*tan_delta*cgnd makes the leg conductance equal the target
    omega*cgnd*tan_delta at the anchor. The added reactive loading is only
    ~tan_delta of cgnd, and the leg relaxation time 1/anchor_omega is slow
    enough for an explicit integrator.
    """
    c_leg = 2.0 * p.tan_delta * p.cgnd
    if c_leg == 0.0:
        return 0.0, 0.0
    return c_leg, 1.0 / (anchor_omega * c_leg)


def _cell_abcd(omega: np.ndarray, flux, p: UnitCellParams,
               loss_model: str, loss_anchor_omega) -> np.ndarray:
    """ABCD matrix of one symmetric cell: half-shunt, series branch,
    half-shunt. The series branch is the linear inductance in parallel with
    the effective junction capacitance."""
    l_lin = cellmodel.linear_inductance(flux, p)
    ceff = cellmodel.effective_junction_capacitance(p)
    z_ser = 1j * omega * l_lin / (1.0 - omega**2 * l_lin * ceff)
    y_sh = shunt_admittance(omega, p, loss_model, loss_anchor_omega)
    zy = z_ser * y_sh
    m = np.empty((omega.size, 2, 2), dtype=complex)
    m[:, 0, 0] = 1.0 + zy / 2.0
    m[:, 0, 1] = z_ser
    m[:, 1, 0] = y_sh * (1.0 + zy / 4.0)
    m[:, 1, 1] = 1.0 + zy / 2.0
    return m


def _matrix_power(m: np.ndarray, n: int) -> np.ndarray:
    out = np.broadcast_to(np.eye(2, dtype=complex), m.shape).copy()
    base = m
    e = n
    while e:
        if e & 1:
            out = out @ base
        base = base @ base
        e >>= 1
    return out


def linear_s21(
    grid: FrequencyGrid,
    flux,
    p: UnitCellParams,
    n_cells: int,
    z_source: float,
    z_load: float,
    *,
    loss_model: str = "omega",
    loss_anchor_omega: float | None = None,
) -> ComplexTrace:
    """S21 of n_cells cascaded identical cells into resistive terminations.

    Captures both insertion loss and standing-wave ripple. S12 equals S21
    for this reciprocal cascade by construction (unit ABCD determinant).
    """
    if n_cells < 1:
        raise ValidationError("n_cells must be >= 1")
    if z_source <= 0 or z_load <= 0:
        raise ValidationError("terminations must be positive")
    omega = grid.points
    total = _matrix_power(
        _cell_abcd(omega, flux, p, loss_model, loss_anchor_omega), int(n_cells)
    )
    a = total[:, 0, 0]
    b = total[:, 0, 1]
    c = total[:, 1, 0]
    d = total[:, 1, 1]
    s21 = 2.0 * math.sqrt(z_source * z_load) / (
        a * z_load + b + c * z_source * z_load + d * z_source
    )
    return ComplexTrace(grid, s21)


def passband_ripple(trace: ComplexTrace, band_hz: tuple[float, float]) -> float:
    """Mean peak-to-peak standing-wave ripple of |S21| (dB) within a band.

    Averages local maxima and local minima separately and returns their
    difference, which is insensitive to a slow insertion-loss tilt across
    the band. Falls back to max - min when the band holds fewer than three
    ripple periods.
    """
    f_hz = trace.grid.hz
    sel = (f_hz >= band_hz[0]) & (f_hz <= band_hz[1])
    if np.count_nonzero(sel) < 5:
        raise ValidationError("band holds too few grid points for a ripple estimate")
    m = trace.mag_db[sel]
    interior = np.arange(1, m.size - 1)
    is_max = (m[interior] > m[interior - 1]) & (m[interior] > m[interior + 1])
    is_min = (m[interior] < m[interior - 1]) & (m[interior] < m[interior + 1])
    maxima = m[interior[is_max]]
    minima = m[interior[is_min]]
    if maxima.size < 3 or minima.size < 3:
        return float(m.max() - m.min())
    return float(maxima.mean() - minima.mean())
