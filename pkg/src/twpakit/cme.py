"""Four-wave-mixing gain theory for the flux-biased ladder.

A strong pump at w_p mixes with a signal at w_s and generates an idler at
w_i = 2*w_p - w_s. With a stiff pump the signal/idler envelopes obey

    da_s/dz = i*kappa_s * conj(a_i) * exp(i*kappa*z)
    da_i/dz = i*kappa_i * conj(a_s) * exp(i*kappa*z)

whose power gain over a length z (cells) is

    G_s = cosh^2(g z) + (kappa^2 / 4 g^2) * sinh^2(g z),
    g   = sqrt(kappa_s*kappa_i - (kappa/2)^2).

kappa = dk + alpha_nl combines chromatic dispersion with the pump-induced
self/cross phase shifts; a sign-inverted Kerr coefficient makes
alpha_nl < 0 so that kappa crosses zero away from the pump, which is where
exponential gain appears.

Coupling normalization. Pump amplitudes are carried as phase-wave
amplitudes in radians (node voltage V = phi0 * omega * amp), so the Kerr
coefficient always enters as gamma*phi0^2. Two k-power conventions are
provided:

  "corrected" (default) -- one power of k_p removed from the pump
      self-phase and from the couplings relative to the printed forms, so
      that the degenerate limits alpha_s(w_p) = 2*alpha_p and
      sqrt(kappa_s*kappa_i)|_{w_p} = |alpha_p| hold exactly:
          alpha_p    = 3*g2*k_p^4*amp^2 / (8*cgnd*w_p^2)
          alpha_s,i  = 3*g2*k_s,i^2*k_p^2*amp^2 / (4*cgnd*w_s,i^2)
          kappa_s    = 3*g2*k_p*k_s*k_i*(2k_p - k_i)*amp^2 / (8*cgnd*w_s^2)
          kappa_i    = 3*g2*k_p*k_s*k_i*(2k_p - k_s)*amp^2 / (8*cgnd*w_i^2)
      with g2 = gamma*phi0^2.
  "as-printed" -- the same expressions with k_p^5 in alpha_p and k_p^2 in
      the couplings (alpha_s,i unchanged); kept selectable so the two
      normalizations can be compared with a single flag.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import cellmodel, dispersion
from .cellmodel import UnitCellParams
from .constants import PHI0_RED, dbm_to_watts
from .dispersion import FrequencyGrid
from .errors import FitError, SimulationError, ValidationError

__all__ = [
    "CONVENTIONS",
    "OperatingPoint",
    "PumpState",
    "MismatchDecomposition",
    "GainProfile",
    "pump_amplitude_from_power",
    "pump_state_from_theta_nl",
    "calibrate_amplitude_scale",
    "mismatch_terms",
    "analytic_gain",
    "gain_from_couplings",
    "integrate_cme",
    "phase_match_frequencies",
    "gain_from_measured_mismatch",
    "phase_matched_peak_db",
    "phase_match_band",
]

CONVENTIONS = ("corrected", "as-printed")

GAIN_CSV_COLUMNS = ("freq_hz", "gain_db", "dk", "alpha_nl", "kappa", "g_re", "g_im")


@dataclass(frozen=True)
class OperatingPoint:
    """A bias choice: flux, pump frequency, pump power and device length."""

    flux: cellmodel.FluxBias
    omega_p: float
    pump_power_dbm: float
    n_cells: int

    def __post_init__(self):
        if isinstance(self.flux, (int, float)):
            object.__setattr__(self, "flux", cellmodel.FluxBias(float(self.flux)))
        if not self.omega_p > 0:
            raise ValidationError("omega_p must be > 0")
        if self.n_cells < 1:
            raise ValidationError("n_cells must be >= 1")
        if math.isnan(self.pump_power_dbm) or self.pump_power_dbm == math.inf:
            raise ValidationError("pump_power_dbm must be finite or -inf")


@dataclass(frozen=True)
class PumpState:
    """Pump strength: phase-wave amplitude amp = |A_p| (rad), self-phase
    shift per cell alpha_p (rad/cell, signed like the Kerr coefficient) and
    the accumulated shift theta_nl = alpha_p * n_cells (rad)."""

    amp: float
    alpha_p: float
    theta_nl: float

    def __post_init__(self):
        if self.amp < 0:
            raise ValidationError("amp must be >= 0")


@dataclass(frozen=True)
class MismatchDecomposition:
    """Per-frequency mismatch terms (all rad/cell): chromatic dk, nonlinear
    alpha_nl, total kappa = dk + alpha_nl, couplings kappa_s/kappa_i, and
    the complex exponential gain factor g."""

    dk: np.ndarray
    alpha_nl: np.ndarray
    kappa: np.ndarray
    kappa_s: np.ndarray
    kappa_i: np.ndarray
    g: np.ndarray


@dataclass(frozen=True)
class GainProfile:
    """Power gain (dB) on a signal-frequency grid with its mismatch
    decomposition."""

    grid: FrequencyGrid
    gain_db: np.ndarray
    decomposition: MismatchDecomposition

    def to_csv(self, path) -> None:
        d = self.decomposition
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(GAIN_CSV_COLUMNS)
            for i, f_hz in enumerate(self.grid.hz):
                w.writerow(
                    [f"{f_hz:.17g}", f"{self.gain_db[i]:.17g}", f"{d.dk[i]:.17g}",
                     f"{d.alpha_nl[i]:.17g}", f"{d.kappa[i]:.17g}",
                     f"{d.g[i].real:.17g}", f"{d.g[i].imag:.17g}"]
                )


def _check_convention(convention: str) -> None:
    if convention not in CONVENTIONS:
        raise ValidationError(
            f"unknown convention {convention!r}; choose from {CONVENTIONS}"
        )


def _alpha_p_per_amp2(op: OperatingPoint, p: UnitCellParams, convention: str) -> float:
    """alpha_p / amp^2 at the operating point (rad/cell per rad^2)."""
    g2 = cellmodel.kerr_coefficient(op.flux, p) * PHI0_RED**2
    k_p = dispersion.wavenumber(op.omega_p, op.flux, p)
    power = 4 if convention == "corrected" else 5
    return 3.0 * g2 * k_p**power / (8.0 * p.cgnd * op.omega_p**2)


def pump_amplitude_from_power(
    op: OperatingPoint,
    p: UnitCellParams,
    *,
    scale: float = 1.0,
    convention: str = "corrected",
) -> PumpState:
    """Map pump power (dBm at the device input) to a PumpState.

    Models the pump as a traveling wave of voltage amplitude
    V = sqrt(2 * Z0(w_p) * P), giving amp = V / (phi0 * w_p). ``scale``
    multiplies amp^2 and is normally obtained from
    calibrate_amplitude_scale; the raw map is approximate and should be
    anchored to a measured theta_nl when absolute powers matter.
    """
    _check_convention(convention)
    if scale < 0:
        raise ValidationError("scale must be >= 0")
    p_watts = float(dbm_to_watts(op.pump_power_dbm))
    z0 = cellmodel.characteristic_impedance(op.omega_p, op.flux, p)
    amp = math.sqrt(scale * 2.0 * z0 * p_watts) / (PHI0_RED * op.omega_p)
    alpha_p = _alpha_p_per_amp2(op, p, convention) * amp**2
    return PumpState(amp=amp, alpha_p=alpha_p, theta_nl=alpha_p * op.n_cells)


def pump_state_from_theta_nl(
    theta_nl: float,
    op: OperatingPoint,
    p: UnitCellParams,
    *,
    convention: str = "corrected",
) -> PumpState:
    """PumpState whose accumulated self-phase magnitude is |theta_nl|.

    The sign of the stored alpha_p/theta_nl follows the Kerr coefficient at
    the operating flux (measured values are usually quoted as magnitudes).
    """
    _check_convention(convention)
    coeff = _alpha_p_per_amp2(op, p, convention)
    if coeff == 0.0:
        raise ValidationError("Kerr-free bias: theta_nl cannot be produced")
    amp2 = abs(theta_nl) / (abs(coeff) * op.n_cells)
    alpha_p = coeff * amp2
    return PumpState(amp=math.sqrt(amp2), alpha_p=alpha_p,
                     theta_nl=alpha_p * op.n_cells)


def calibrate_amplitude_scale(
    measured: list[tuple[float, float]],
    op: OperatingPoint,
    p: UnitCellParams,
    *,
    convention: str = "corrected",
) -> tuple[float, float]:
    """Least-squares scale s on amp^2 so model theta_nl matches measured data.

    ``measured`` holds (pump power dBm, theta_nl rad) points from the
    linear region; magnitudes are compared. A single point acts as an exact
    anchor. Returns (s, rms residual in rad).
    """
    _check_convention(convention)
    if len(measured) < 1:
        raise ValidationError("need at least one (power, theta_nl) point")
    powers = np.array([m[0] for m in measured], dtype=float)
    thetas = np.abs(np.array([m[1] for m in measured], dtype=float))
    if len(measured) >= 2 and np.ptp(powers) == 0.0:
        raise FitError("degenerate calibration: all pump powers are equal")
    model = np.array(
        [
            abs(
                pump_amplitude_from_power(
                    OperatingPoint(op.flux, op.omega_p, pw, op.n_cells),
                    p,
                    convention=convention,
                ).theta_nl
            )
            for pw in powers
        ]
    )
    denom = float(np.dot(model, model))
    if denom == 0.0:
        raise FitError("degenerate calibration: model theta_nl is zero")
    s = float(np.dot(thetas, model)) / denom
    resid = float(np.sqrt(np.mean((thetas - s * model) ** 2)))
    return s, resid


def mismatch_terms(
    omega_s,
    op: OperatingPoint,
    pump: PumpState,
    p: UnitCellParams,
    *,
    convention: str = "corrected",
) -> MismatchDecomposition:
    """Mismatch decomposition at signal frequency(ies) omega_s.

    The pump state must have been built with the same convention. The
    degenerate point w_s = w_p needs no special casing here; the removable
    singularity only appears in the gain formula.
    """
    _check_convention(convention)
    w_s = np.atleast_1d(np.asarray(omega_s, dtype=float))
    w_i = 2.0 * op.omega_p - w_s
    if np.any(w_i <= 0.0):
        raise ValidationError("idler frequency must be positive")
    flux = op.flux
    k_s = np.atleast_1d(dispersion.wavenumber(w_s, flux, p))
    k_i = np.atleast_1d(dispersion.wavenumber(w_i, flux, p))
    k_p = dispersion.wavenumber(op.omega_p, flux, p)

    g2 = cellmodel.kerr_coefficient(flux, p) * PHI0_RED**2
    base = 3.0 * g2 * pump.amp**2 / (8.0 * p.cgnd)
    kp_pump = k_p**4 if convention == "corrected" else k_p**5
    kp_coup = k_p if convention == "corrected" else k_p**2

    alpha_p = base * kp_pump / op.omega_p**2
    alpha_s = 2.0 * base * k_s**2 * k_p**2 / w_s**2
    alpha_i = 2.0 * base * k_i**2 * k_p**2 / w_i**2
    kappa_s = base * kp_coup * k_s * k_i * (2.0 * k_p - k_i) / w_s**2
    kappa_i = base * kp_coup * k_s * k_i * (2.0 * k_p - k_s) / w_i**2

    dk = k_s + k_i - 2.0 * k_p
    alpha_nl = alpha_s + alpha_i - 2.0 * alpha_p
    kappa = dk + alpha_nl
    g = np.sqrt((kappa_s * kappa_i - (kappa / 2.0) ** 2).astype(complex))
    return MismatchDecomposition(
        dk=dk, alpha_nl=alpha_nl, kappa=kappa,
        kappa_s=kappa_s, kappa_i=kappa_i, g=g,
    )


def gain_from_couplings(kappa, kappa_s, kappa_i, z: float) -> np.ndarray:
    """Power gain (linear) from the closed-form solution.

    Evaluated with complex g so the hyperbolic form rolls over to the
    trigonometric one automatically; the g -> 0 removable singularity is
    handled by a series for sinh(gz)/g.
    """
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    kappa_s = np.atleast_1d(np.asarray(kappa_s, dtype=float))
    kappa_i = np.atleast_1d(np.asarray(kappa_i, dtype=float))
    g = np.sqrt((kappa_s * kappa_i - (kappa / 2.0) ** 2).astype(complex))
    gz = g * z
    small = np.abs(gz) < 1e-8
    # sinh(gz)/g, series where gz ~ 0
    with np.errstate(invalid="ignore", divide="ignore"):
        shc = np.where(small, z * (1.0 + gz**2 / 6.0), np.sinh(gz) / np.where(g == 0, 1.0, g))
    gain_c = np.cosh(gz) ** 2 + (kappa / 2.0) ** 2 * shc**2
    gain = gain_c.real
    residue = np.max(np.abs(gain_c.imag) / np.maximum(np.abs(gain), 1.0))
    if residue > 1e-9:
        raise SimulationError(f"gain formula imaginary residue {residue:.3g}")
    return gain


def analytic_gain(
    grid: FrequencyGrid,
    op: OperatingPoint,
    pump: PumpState,
    p: UnitCellParams,
    *,
    convention: str = "corrected",
) -> GainProfile:
    """Closed-form power gain over a signal grid at the device output."""
    mt = mismatch_terms(grid.points, op, pump, p, convention=convention)
    gain = gain_from_couplings(mt.kappa, mt.kappa_s, mt.kappa_i, float(op.n_cells))
    return GainProfile(grid, 10.0 * np.log10(gain), mt)


def phase_matched_peak_db(theta_nl: float) -> float:
    """Gain at exact phase matching (kappa = 0, g = |alpha_p|):
    10*log10(cosh^2(theta_nl)), close to exp(2*theta_nl)/4 for large
    theta_nl."""
    return 10.0 * math.log10(math.cosh(abs(theta_nl)) ** 2)


def integrate_cme(
    omega_s: float,
    op: OperatingPoint,
    pump: PumpState,
    p: UnitCellParams,
    a_s0: complex,
    a_i0: complex,
    *,
    rtol: float = 1e-10,
    convention: str = "corrected",
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integrate the signal/idler envelope equations from z = 0 to n_cells.

    Returns (z, a_s(z), a_i(z)) sampled once per cell. The signal power
    gain is |a_s(l)/a_s(0)|^2 and matches the closed form when a_i0 = 0.
    """
    mt = mismatch_terms(omega_s, op, pump, p, convention=convention)
    kap = float(mt.kappa[0])
    ks = float(mt.kappa_s[0])
    ki = float(mt.kappa_i[0])

    def rhs(z, y):
        a_s = y[0] + 1j * y[1]
        a_i = y[2] + 1j * y[3]
        ph = np.exp(1j * kap * z)
        das = 1j * ks * np.conj(a_i) * ph
        dai = 1j * ki * np.conj(a_s) * ph
        return [das.real, das.imag, dai.real, dai.imag]

    scale = max(abs(a_s0), abs(a_i0), 1e-30)
    y0 = [a_s0.real, a_s0.imag, a_i0.real, a_i0.imag]
    z_eval = np.arange(op.n_cells + 1, dtype=float)
    sol = solve_ivp(
        rhs, (0.0, float(op.n_cells)), y0, method="DOP853",
        rtol=rtol, atol=1e-6 * rtol * scale, t_eval=z_eval,
    )
    if not sol.success:
        raise SimulationError(f"envelope integration failed: {sol.message}")
    a_s = sol.y[0] + 1j * sol.y[1]
    a_i = sol.y[2] + 1j * sol.y[3]
    return z_eval, a_s, a_i


def phase_match_frequencies(
    op: OperatingPoint,
    pump: PumpState,
    p: UnitCellParams,
    *,
    convention: str = "corrected",
    n_scan: int = 2001,
) -> np.ndarray:
    """Signal frequencies (rad/s) where kappa crosses zero.

    Scans a window that excludes guard bands at DC and at the plasma
    frequency and is symmetric about the pump, then refines each sign
    change by bisection. Roots come in mirror pairs (w, 2*w_p - w); an
    empty array (positive-Kerr bias) is not an error.
    """
    _check_convention(convention)
    w_pl = dispersion.plasma_frequency(op.flux, p)
    hi = min(1.9 * op.omega_p, 0.95 * w_pl)
    lo = max(0.1 * op.omega_p, 2.0 * op.omega_p - hi)
    if not lo < hi:
        return np.array([])
    w = np.linspace(lo, hi, n_scan)
    kap = mismatch_terms(w, op, pump, p, convention=convention).kappa

    def kappa_at(x: float) -> float:
        return float(
            mismatch_terms(x, op, pump, p, convention=convention).kappa[0]
        )

    roots: list[float] = []
    # strict sign changes only: a tangential zero (kappa touching zero at
    # the pump with zero drive) is not a phase-matching crossing
    crossing = np.nonzero(kap[:-1] * kap[1:] < 0.0)[0]
    for i in crossing:
        root = brentq(kappa_at, w[i], w[i + 1], xtol=2.0 * math.pi * 100.0)
        roots.append(float(root))
    exact = np.nonzero(kap == 0.0)[0]
    for i in exact:
        if 0 < i < kap.size - 1 and kap[i - 1] * kap[i + 1] < 0.0:
            roots.append(float(w[i]))
    roots.sort()
    # collapse near-duplicates from grid-boundary hits
    dedup: list[float] = []
    for r in roots:
        if not dedup or abs(r - dedup[-1]) > 2.0 * math.pi * 1e3:
            dedup.append(r)
    return np.array(dedup)


def gain_from_measured_mismatch(
    dk_trace: tuple[FrequencyGrid, np.ndarray],
    alpha_trace: tuple[FrequencyGrid, np.ndarray],
    n_cells: int,
    pump: PumpState,
    *,
    omega_p: float,
    couplings: tuple[np.ndarray, np.ndarray] | None = None,
) -> GainProfile:
    """Gain reconstructed from measured mismatch traces, no fitted params.

    dk_trace and alpha_trace are (grid, values) pairs on a shared signal
    grid carrying the measured chromatic mismatch and the measured
    pump-induced nonlinear mismatch. kappa = dk + alpha_nl comes straight
    from the data. The signal/idler couplings are not directly measurable;
    by default they are closed with

        kappa_s = (alpha_nl + 2*alpha_p)/4 * (w_i / w_p)
        kappa_i = (alpha_nl + 2*alpha_p)/4 * (w_s / w_p)

    which is exact at the degenerate point and in the dispersionless limit
    (a few-dB-level approximation at the gain lobes of a dispersive line;
    the kappa roots themselves come straight from the data and are exact).
    Pass ``couplings=(kappa_s, kappa_i)`` (e.g. from a model decomposition)
    to override the closure; with model traces and model couplings the
    result is identical to analytic_gain.
    """
    grid_dk, dk = dk_trace
    grid_al, alpha_nl = alpha_trace
    if len(grid_dk) != len(grid_al) or not np.allclose(
        grid_dk.points, grid_al.points, rtol=0, atol=1e-6
    ):
        raise ValidationError("dk and alpha_nl traces must share a grid")
    dk = np.asarray(dk, dtype=float)
    alpha_nl = np.asarray(alpha_nl, dtype=float)
    if dk.shape != (len(grid_dk),) or alpha_nl.shape != (len(grid_al),):
        raise ValidationError("trace values must match the grid length")
    if n_cells < 1:
        raise ValidationError("n_cells must be >= 1")
    w_s = grid_dk.points
    w_i = 2.0 * omega_p - w_s
    if np.any(w_i <= 0.0):
        raise ValidationError("grid extends past 2*omega_p (negative idler)")

    kappa = dk + alpha_nl
    if couplings is not None:
        kappa_s = np.asarray(couplings[0], dtype=float)
        kappa_i = np.asarray(couplings[1], dtype=float)
        if kappa_s.shape != w_s.shape or kappa_i.shape != w_s.shape:
            raise ValidationError("couplings must match the grid length")
    else:
        quarter = (alpha_nl + 2.0 * pump.alpha_p) / 4.0
        kappa_s = quarter * (w_i / omega_p)
        kappa_i = quarter * (w_s / omega_p)

    gain = gain_from_couplings(kappa, kappa_s, kappa_i, float(n_cells))
    g = np.sqrt((kappa_s * kappa_i - (kappa / 2.0) ** 2).astype(complex))
    mt = MismatchDecomposition(
        dk=dk, alpha_nl=alpha_nl, kappa=kappa,
        kappa_s=kappa_s, kappa_i=kappa_i, g=g,
    )
    return GainProfile(grid_dk, 10.0 * np.log10(gain), mt)


def phase_match_band(
    profile: GainProfile, root_omega: float, drop_db: float = 3.0
) -> tuple[float, float]:
    """Contiguous frequency span (Hz) around a kappa root where the gain
    stays within drop_db of the lobe peak. This is the default averaging
    band for ripple statistics."""
    f_hz = profile.grid.hz
    root_hz = root_omega / (2.0 * math.pi)
    idx0 = int(np.argmin(np.abs(f_hz - root_hz)))
    # walk to the lobe maximum around the root, then out to the -drop edge
    g = profile.gain_db
    i_pk = idx0
    moved = True
    while moved:
        moved = False
        if i_pk > 0 and g[i_pk - 1] > g[i_pk]:
            i_pk -= 1
            moved = True
        elif i_pk < g.size - 1 and g[i_pk + 1] > g[i_pk]:
            i_pk += 1
            moved = True
    floor = g[i_pk] - drop_db
    lo = i_pk
    while lo > 0 and g[lo - 1] >= floor:
        lo -= 1
    hi = i_pk
    while hi < g.size - 1 and g[hi + 1] >= floor:
        hi += 1
    return float(f_hz[lo]), float(f_hz[hi])
