"""Large-signal transient simulation of the discrete nonlinear ladder.

The simulator integrates the full circuit: per cell, a nonlinear inductor
following the cubic current-phase relation (branch phase as a state,
updated from the node-voltage difference via V = phi0 * dphi/dt) shunted
by the junction capacitance c0*(r/2+2); per node, the ground capacitance
plus a loss element; resistive Thevenin source and load. End nodes carry
half the shunt so the topology matches the symmetric cell used by
dispersion.linear_s21 exactly.

Because an exactly omega-proportional conductance is non-causal, the time
domain offers three loss stand-ins:

  "off"            -- lossless
  "fixed-at-pump"  -- constant conductance omega_anchor*cgnd*tan_delta
                      (the pump frequency dominates dissipation)
  "per-cell-rc"    -- a small series-RC leg (C = 2*tan_delta*cgnd with its
                      corner at the anchor frequency) in parallel with
                      cgnd; its conductance equals omega*cgnd*tan_delta at
                      the anchor and grows ~omega^2 below it, i.e. the
                      effective loss tangent is omega-proportional to
                      first order

Integration is fixed-step RK4 for spectral cleanliness of the windowed
DFT extraction; the first 20% of each record is discarded as transient.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal.windows import flattop

from . import _ladder, cellmodel, cme, dispersion
from .cellmodel import FluxBias, UnitCellParams
from .constants import PHI0_RED, dbm_to_watts, watts_to_dbm
from .errors import SimulationError, ValidationError

__all__ = [
    "LadderConfig",
    "ToneSource",
    "PortRecord",
    "CompressionResult",
    "CalibratedPump",
    "run_transient",
    "extract_tone_power",
    "tone_phasor",
    "spectrum",
    "simulate_gain",
    "compression_sweep",
    "calibrate_transient_pump",
]

DISCARD_FRACTION = 0.2   # of t_total, dropped before any extraction
RAMP_FRACTION = 0.1      # raised-cosine source turn-on, inside the discard
LOSS_MODES = ("off", "fixed-at-pump", "per-cell-rc")


@dataclass(frozen=True)
class LadderConfig:
    """Transient-run configuration.

    dt defaults to 1/(64*f_plasma); t_total defaults to the larger of ten
    line transits and 250 ns (>= 5 MHz resolution bandwidth after the 20%
    transient discard). loss_anchor_omega is required for the lossy modes.
    """

    p: UnitCellParams
    flux: FluxBias
    n_cells: int
    z_source: float = 50.0
    z_load: float = 50.0
    dt: float | None = None
    t_total: float | None = None
    loss_mode: str = "fixed-at-pump"
    loss_anchor_omega: float | None = None

    def __post_init__(self):
        if isinstance(self.flux, (int, float)):
            object.__setattr__(self, "flux", FluxBias(float(self.flux)))
        if self.n_cells < 1:
            raise ValidationError("n_cells must be >= 1")
        if self.z_source <= 0 or self.z_load <= 0:
            raise ValidationError("terminations must be positive")
        if self.loss_mode not in LOSS_MODES:
            raise ValidationError(
                f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}"
            )
        if self.loss_mode != "off" and self.loss_anchor_omega is None:
            raise ValidationError("lossy modes need loss_anchor_omega")
        f_pl = dispersion.plasma_frequency(self.flux, self.p) / (2.0 * math.pi)
        if self.dt is None:
            object.__setattr__(self, "dt", 1.0 / (64.0 * f_pl))
        if not self.dt < 0.05 / f_pl:
            raise ValidationError(
                f"dt = {self.dt:.3g} s too large for stability: need < "
                f"{0.05 / f_pl:.3g} s (0.05 / f_plasma)"
            )
        transit = self.n_cells * math.sqrt(
            cellmodel.linear_inductance(self.flux, self.p) * self.p.cgnd
        )
        if self.t_total is None:
            object.__setattr__(self, "t_total", max(10.5 * transit, 250e-9))
        if not self.t_total > 10.0 * transit:
            raise ValidationError(
                f"t_total = {self.t_total:.3g} s must exceed 10 line transits "
                f"({10.0 * transit:.3g} s)"
            )


@dataclass(frozen=True)
class ToneSource:
    """Thevenin sum of tones: (omega rad/s, available power dBm, phase rad)."""

    tones: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        tones = tuple((float(w), float(pw), float(ph)) for w, pw, ph in self.tones)
        freqs = [t[0] for t in tones]
        if any(w <= 0 for w in freqs):
            raise ValidationError("tone frequencies must be positive")
        if len(set(freqs)) != len(freqs):
            raise ValidationError("tone frequencies must be distinct")
        object.__setattr__(self, "tones", tones)


@dataclass(frozen=True)
class PortRecord:
    """Uniformly sampled input/output node voltages after transient discard."""

    t0: float
    dt: float
    v_in: np.ndarray
    v_out: np.ndarray

    @property
    def duration(self) -> float:
        return (self.v_out.size - 1) * self.dt

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.v_out.size)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("t_s", "v_in", "v_out"))
            for t, vi, vo in zip(self.times(), self.v_in, self.v_out):
                w.writerow([f"{t:.17g}", f"{vi:.17g}", f"{vo:.17g}"])


def _node_arrays(cfg: LadderConfig):
    """Capacitance-matrix Thomas factors, node conductances, rc-leg arrays."""
    p = cfg.p
    nn = cfg.n_cells + 1
    ceff = cellmodel.effective_junction_capacitance(p)
    rc = cfg.loss_mode == "per-cell-rc"

    c_direct = np.full(nn, p.cgnd)
    c_direct[0] = c_direct[-1] = 0.5 * p.cgnd
    inv_r_leg = np.zeros(nn)
    inv_c_leg = np.zeros(nn)
    if rc:
        c_unit, r_unit = dispersion.rc_loss_elements(p, cfg.loss_anchor_omega)
        if c_unit > 0:
            # end nodes carry half a leg; R scales inversely so the leg
            # time constant (and corner frequency) is the same everywhere
            c_leg = np.full(nn, c_unit)
            c_leg[0] = c_leg[-1] = 0.5 * c_unit
            inv_r_leg = c_leg / (r_unit * c_unit)
            inv_c_leg = 1.0 / c_leg
        else:
            rc = False

    diag = c_direct + 2.0 * ceff
    diag[0] = c_direct[0] + ceff
    diag[-1] = c_direct[-1] + ceff
    lower = -ceff
    upper = -ceff
    w_fac = np.zeros(nn)
    bprime = np.empty(nn)
    bprime[0] = diag[0]
    for j in range(1, nn):
        w_fac[j] = lower / bprime[j - 1]
        bprime[j] = diag[j] - w_fac[j] * upper

    g_node = np.zeros(nn)
    if cfg.loss_mode == "fixed-at-pump":
        g = cellmodel.shunt_conductance(cfg.loss_anchor_omega, p)
        g_node[:] = g
        g_node[0] = g_node[-1] = 0.5 * g
    return w_fac, bprime, upper, g_node, inv_r_leg, inv_c_leg, int(rc)


def run_transient(cfg: LadderConfig, src: ToneSource) -> PortRecord:
    """Integrate the ladder and return the port record after discarding the
    first 20% of t_total. Raises SimulationError (with the step index) on
    numerical blow-up, which signals pump overdrive or an unstable dt."""
    p = cfg.p
    nb = cfg.n_cells
    nn = nb + 1
    c1 = cellmodel.linear_coeff(cfg.flux, p)
    c3 = cellmodel.cubic_coeff(cfg.flux, p)
    if c1 <= 0:
        raise ValidationError("flux bias outside the stable range")

    w_fac, bprime, upper, g_node, inv_r_leg, inv_c_leg, rc_mode = _node_arrays(cfg)

    if src.tones:
        src_omega = np.array([t[0] for t in src.tones])
        src_amp = np.array(
            [math.sqrt(8.0 * cfg.z_source * float(dbm_to_watts(t[1])))
             for t in src.tones]
        )
        src_phase = np.array([t[2] for t in src.tones])
    else:
        src_omega = np.zeros(0)
        src_amp = np.zeros(0)
        src_phase = np.zeros(0)

    nsteps = int(math.ceil(cfg.t_total / cfg.dt))
    vin = np.empty(nsteps + 1)
    vout = np.empty(nsteps + 1)
    phi = np.zeros(nb)
    v = np.zeros(nn)
    u = np.zeros(nn)

    fail = _ladder.run_ladder(
        nsteps, cfg.dt, phi, v, u,
        p.i0, c1, c3 / 3.0, 1.0 / PHI0_RED,
        cfg.z_source, cfg.z_load, g_node,
        w_fac, bprime, upper,
        rc_mode, inv_r_leg, inv_c_leg,
        src_omega, src_amp, src_phase, RAMP_FRACTION * cfg.t_total,
        vin, vout,
    )
    if fail >= 0:
        raise SimulationError(
            f"numerical blow-up at step {fail} (t = {fail * cfg.dt:.3g} s): "
            "pump overdrive or dt too large", step=int(fail),
        )
    start = int(math.floor(DISCARD_FRACTION * (nsteps + 1)))
    return PortRecord(t0=start * cfg.dt, dt=cfg.dt,
                      v_in=vin[start:], v_out=vout[start:])


def tone_phasor(rec: PortRecord, omega: float, side: str = "out") -> complex:
    """Complex amplitude of one tone via a flat-top-windowed DFT over an
    integer number of periods."""
    if omega <= 0:
        raise ValidationError("omega must be > 0")
    x = rec.v_out if side == "out" else rec.v_in
    period = 2.0 * math.pi / omega
    n_periods = int(math.floor(rec.duration / period))
    if n_periods < 20:
        raise ValidationError(
            f"record holds {n_periods} periods of the tone; need >= 20"
        )
    n_samp = min(int(round(n_periods * period / rec.dt)) + 1, x.size)
    seg = x[:n_samp]
    w = flattop(n_samp)
    t = rec.t0 + rec.dt * np.arange(n_samp)
    xc = np.sum(w * seg * np.exp(-1j * omega * t))
    return complex(2.0 * xc / np.sum(w))


def extract_tone_power(rec: PortRecord, omega: float, z_ref: float) -> float:
    """Power of one tone (dBm into z_ref) from the output record."""
    amp = abs(tone_phasor(rec, omega, side="out"))
    return float(watts_to_dbm(amp**2 / (2.0 * z_ref)))


def spectrum(rec: PortRecord, side: str = "out", z_ref: float = 50.0):
    """Flat-top-windowed amplitude spectrum as (freq_hz, power_dbm) arrays."""
    x = rec.v_out if side == "out" else rec.v_in
    w = flattop(x.size)
    amps = 2.0 * np.abs(np.fft.rfft(w * x)) / np.sum(w)
    freqs = np.fft.rfftfreq(x.size, rec.dt)
    return freqs, watts_to_dbm(amps**2 / (2.0 * z_ref))


def _check_op(cfg: LadderConfig, op: cme.OperatingPoint) -> None:
    if op.n_cells != cfg.n_cells:
        raise ValidationError("operating point and ladder disagree on n_cells")
    if abs(cellmodel._fval(op.flux) - cellmodel._fval(cfg.flux)) > 1e-12:
        raise ValidationError("operating point and ladder disagree on flux")


def simulate_gain(
    cfg: LadderConfig,
    op: cme.OperatingPoint,
    signal_dbm: float,
    grid: dispersion.FrequencyGrid,
    *,
    pump_dbm: float | None = None,
    pump_state: cme.PumpState | None = None,
    convention: str = "corrected",
    progress=None,
) -> cme.GainProfile:
    """Pump-on/pump-off transient gain over a signal grid.

    For each signal frequency two transients run (with and without the
    pump tone); the gain is the output-tone power difference in dB, which
    cancels linear insertion loss to first order. The returned profile is
    annotated with the coupled-mode mismatch decomposition for the same
    operating point (pump_state, or the uncalibrated power map if omitted).
    """
    _check_op(cfg, op)
    p_pump = op.pump_power_dbm if pump_dbm is None else pump_dbm
    pump_on = p_pump != -math.inf
    if pump_on and signal_dbm > p_pump - 20.0:
        raise ValidationError("signal must stay at least 20 dB below the pump")
    if pump_on and np.any(grid.points == op.omega_p):
        raise ValidationError(
            "signal grid hits the pump frequency; the tones cannot be "
            "separated there"
        )
    gains = np.empty(len(grid))
    for i, w_s in enumerate(grid.points):
        on_tones = ((op.omega_p, p_pump, 0.0), (w_s, signal_dbm, 0.0)) \
            if pump_on else ((w_s, signal_dbm, 0.0),)
        on = run_transient(cfg, ToneSource(on_tones))
        off = run_transient(cfg, ToneSource(((w_s, signal_dbm, 0.0),)))
        gains[i] = extract_tone_power(on, w_s, cfg.z_load) - extract_tone_power(
            off, w_s, cfg.z_load
        )
        if progress is not None:
            progress(i + 1, len(grid))
    if pump_state is None:
        pump_state = cme.pump_amplitude_from_power(op, cfg.p, convention=convention)
    mt = cme.mismatch_terms(grid.points, op, pump_state, cfg.p, convention=convention)
    return cme.GainProfile(grid, gains, mt)


@dataclass(frozen=True)
class CompressionResult:
    """Gain versus signal drive and the 1-dB compression point.

    p1db_dbm is None when the gain never drops 1 dB below its small-signal
    value within the swept range ("not compressed")."""

    signal_dbm: np.ndarray
    gain_db: np.ndarray
    sig_out_dbm: np.ndarray
    pump_out_dbm: np.ndarray
    small_signal_gain_db: float
    p1db_dbm: float | None
    sig_out_at_p1db: float | None
    pump_out_at_p1db: float | None


def compression_sweep(
    cfg: LadderConfig,
    op: cme.OperatingPoint,
    omega_s: float,
    signal_powers,
    *,
    pump_dbm: float | None = None,
) -> CompressionResult:
    """Sweep signal power at fixed pump and locate the 1-dB compression
    point by linear interpolation between samples."""
    _check_op(cfg, op)
    powers = np.asarray(signal_powers, dtype=float)
    if powers.size < 2 or np.any(np.diff(powers) <= 0):
        raise ValidationError("signal powers must be ascending")
    if powers[-1] - powers[0] < 15.0:
        raise ValidationError("signal sweep must span at least 15 dB")
    p_pump = op.pump_power_dbm if pump_dbm is None else pump_dbm

    off = run_transient(cfg, ToneSource(((omega_s, powers[0], 0.0),)))
    il_db = extract_tone_power(off, omega_s, cfg.z_load) - powers[0]

    gain = np.empty(powers.size)
    sig_out = np.empty(powers.size)
    pump_out = np.empty(powers.size)
    for i, p_s in enumerate(powers):
        on = run_transient(
            cfg, ToneSource(((op.omega_p, p_pump, 0.0), (omega_s, p_s, 0.0)))
        )
        sig_out[i] = extract_tone_power(on, omega_s, cfg.z_load)
        pump_out[i] = extract_tone_power(on, op.omega_p, cfg.z_load)
        gain[i] = sig_out[i] - (p_s + il_db)

    g_ss = float(gain[0])
    threshold = g_ss - 1.0
    p1db = s_at = p_at = None
    for i in range(1, powers.size):
        if gain[i] <= threshold < gain[i - 1]:
            frac = (gain[i - 1] - threshold) / (gain[i - 1] - gain[i])
            p1db = float(powers[i - 1] + frac * (powers[i] - powers[i - 1]))
            s_at = float(sig_out[i - 1] + frac * (sig_out[i] - sig_out[i - 1]))
            p_at = float(pump_out[i - 1] + frac * (pump_out[i] - pump_out[i - 1]))
            break
    return CompressionResult(
        signal_dbm=powers, gain_db=gain, sig_out_dbm=sig_out,
        pump_out_dbm=pump_out, small_signal_gain_db=g_ss,
        p1db_dbm=p1db, sig_out_at_p1db=s_at, pump_out_at_p1db=p_at,
    )


@dataclass(frozen=True)
class CalibratedPump:
    """Result of anchoring the transient pump drive to a target theta_nl."""

    pump_dbm: float
    theta_nl: float
    runs: int


def calibrate_transient_pump(
    cfg: LadderConfig,
    op: cme.OperatingPoint,
    theta_target: float,
    *,
    tol: float = 0.02,
    max_iter: int = 8,
) -> CalibratedPump:
    """Find the source power that gives pump self-phase |theta_nl| =
    theta_target in the transient simulator.

    Measures the output pump phase against a near-linear reference run and
    walks the power up in steps small enough that each phase increment
    stays below pi (no unwrap ambiguity). The drive update is secant-based
    on theta versus pump watts, which converges even when theta grows
    sublinearly at strong drive.
    """
    if theta_target <= 0:
        raise ValidationError("theta_target must be > 0")
    _check_op(cfg, op)

    def pump_phase(p_dbm: float) -> float:
        rec = run_transient(cfg, ToneSource(((op.omega_p, p_dbm, 0.0),)))
        return float(np.angle(tone_phasor(rec, op.omega_p)))

    # model estimate of the power for ~1 rad of self-phase as a starting probe
    pump1 = cme.pump_state_from_theta_nl(1.0, op, cfg.p)
    v_line = PHI0_RED * op.omega_p * pump1.amp
    z0 = cellmodel.characteristic_impedance(op.omega_p, op.flux, cfg.p)
    p_probe = float(watts_to_dbm(v_line**2 / (2.0 * z0)))

    runs = 1
    ref_dbm = p_probe - 30.0
    prev_phase = pump_phase(ref_dbm)
    theta = 0.0
    history: list[tuple[float, float]] = [(float(dbm_to_watts(ref_dbm)), 0.0)]
    for _ in range(max_iter):
        ph = pump_phase(p_probe)
        runs += 1
        theta += math.remainder(ph - prev_phase, 2.0 * math.pi)
        prev_phase = ph
        watts = float(dbm_to_watts(p_probe))
        history.append((watts, abs(theta)))
        if abs(abs(theta) - theta_target) <= tol * theta_target:
            return CalibratedPump(pump_dbm=p_probe, theta_nl=abs(theta), runs=runs)
        if abs(theta) < 1e-6:
            raise SimulationError("pump produced no measurable self-phase")
        (w0, t0), (w1, t1) = history[-2], history[-1]
        if t1 > t0 and w1 > w0:
            slope = (t1 - t0) / (w1 - w0)
            w_next = w1 + (theta_target - t1) / slope
        else:
            w_next = w1 * theta_target / t1
        # keep each phase increment below pi for unambiguous unwrapping
        w_next = min(max(w_next, 0.25 * w1), w1 * (t1 + 2.4) / t1)
        p_probe = float(watts_to_dbm(w_next))
    raise SimulationError(
        f"pump calibration did not converge: theta = {abs(theta):.4g} rad "
        f"after {runs} runs (target {theta_target:.4g})"
    )
