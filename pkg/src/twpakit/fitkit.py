"""Parameter extraction and measurement analysis.

Covers the measurement workflow end to end: thru-line calibration of raw
transmission, phase unwrapping into k*l, nonlinear least-squares recovery
of cell parameters from the dispersion, pump self-phase slope fitting,
Y-factor noise fitting against the quantum source term, SNR-improvement
noise figures, and ripple-variance statistics of gain profiles.

Note on identifiability: at a single flux the dispersion determines only
two parameter combinations (L0*cgnd and L0*c0 against the same flux
factor), so a three-parameter fit is degenerate along a common scaling.
Fix cgnd (measured independently in practice, e.g. from test resonators)
via ``known`` to pin the scale; the covariance reports the degeneracy
honestly if everything is left free.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import least_squares

from . import cellmodel, dispersion
from .cellmodel import UnitCellParams
from .cme import GainProfile
from .constants import HBAR, KB, dbm_to_watts
from .dispersion import ComplexTrace, FrequencyGrid
from .errors import FitError, UnwrapError, ValidationError

__all__ = [
    "NoiseModel",
    "NoiseResult",
    "RippleStats",
    "FitResult",
    "calibrate_thru",
    "extract_kl",
    "fit_dispersion",
    "fit_theta_slope",
    "yfactor_fit",
    "noise_power",
    "snr_noise",
    "ripple_variance",
    "read_trace_csv",
    "read_noise_csv",
    "read_gains_csv",
    "synth_dispersion_trace",
    "synth_noise_data",
]


@dataclass(frozen=True)
class NoiseModel:
    """Per-frequency effective amplifier-chain noise temperature (K) and
    system gain-bandwidth scale G*B (W/K compatible), with the measurement
    bandwidth B (Hz). ``failures`` lists frequencies skipped during the
    fit, when skipping was requested."""

    grid: FrequencyGrid
    t_hemt: np.ndarray
    gb: np.ndarray
    b: float
    failures: tuple = ()


@dataclass(frozen=True)
class NoiseResult:
    """System / device-under-test noise in kelvin and photon units
    (N = kB*T / (hbar*omega)). ``flags`` marks nonphysical points where the
    measured noise gain fell below one."""

    grid: FrequencyGrid
    t_system: np.ndarray
    t_jtwpa: np.ndarray
    n_system: np.ndarray
    n_jtwpa: np.ndarray
    flags: np.ndarray


@dataclass(frozen=True)
class RippleStats:
    """Normalized gain-ripple statistic over a band: Var[G/mean(G)] with G
    in linear units."""

    band: tuple[float, float]
    mean_gain: float
    variance_normalized: float


@dataclass(frozen=True)
class FitResult:
    """Dispersion-fit output: recovered parameters, 1-sigma uncertainties
    of the free parameters, their covariance matrix, and fit diagnostics."""

    params: UnitCellParams
    sigma: dict
    cov: np.ndarray
    free: tuple
    cost: float
    nfev: int


def calibrate_thru(raw: ComplexTrace, thru: ComplexTrace) -> ComplexTrace:
    """Pointwise complex division raw/thru (on-chip thru-line reference)."""
    if len(raw.grid) != len(thru.grid) or not np.array_equal(
        raw.grid.points, thru.grid.points
    ):
        raise ValidationError("raw and thru traces must share a grid")
    small = np.abs(thru.values) < 1e-12
    if np.any(small):
        f_bad = raw.grid.hz[np.argmax(small)]
        raise ValidationError(f"thru null: |thru| < 1e-12 at {f_bad:.6g} Hz")
    return ComplexTrace(raw.grid, raw.values / thru.values)


def extract_kl(trace: ComplexTrace) -> tuple[FrequencyGrid, np.ndarray]:
    """Unwrap the transmission phase into k*l (rad).

    The continuous unwrap is anchored by extrapolating the low-frequency
    trend to zero phase at DC; the result is -unwrapped_phase so that a
    delay line yields positive, increasing k*l. Raises UnwrapError when a
    per-point step is ambiguous (>= ~pi or non-monotone), naming the first
    offending interval.
    """
    if len(trace.grid) < 3:
        raise ValidationError("need at least 3 points to unwrap")
    phase = np.unwrap(np.angle(trace.values))
    if np.ptp(phase) < 1e-6:
        raise ValidationError(
            "no dispersion in data (zero-phase trace); check the calibration "
            "inputs"
        )
    w = trace.grid.points
    slope = (phase[1] - phase[0]) / (w[1] - w[0])
    offset = phase[0] - slope * w[0]
    phase = phase - 2.0 * math.pi * round(offset / (2.0 * math.pi))
    kl = -phase
    steps = np.diff(kl)
    bad = (steps <= 0.0) | (steps >= 0.95 * math.pi)
    if np.any(bad):
        i = int(np.argmax(bad))
        f_hz = trace.grid.hz
        raise UnwrapError(
            f"ambiguous phase step between {f_hz[i]:.6g} Hz and "
            f"{f_hz[i + 1]:.6g} Hz (step = {steps[i]:.4g} rad)"
        )
    return trace.grid, kl


_FIT_NAMES = ("i0", "r", "c0", "cgnd")
_FIT_SCALES = {"i0": 1e-6, "r": 1.0, "c0": 1e-15, "cgnd": 1e-15}


def fit_dispersion(
    kl: tuple[FrequencyGrid, np.ndarray],
    l: int,
    known: dict,
    init: UnitCellParams,
    *,
    flux=0.5,
) -> FitResult:
    """Nonlinear least squares of the dispersion relation to measured k*l.

    ``known`` maps parameter names ("i0", "r", "c0", "cgnd") to fixed
    values; everything else is free, starting from ``init``. The flux of
    the measurement defaults to half a flux quantum (the impedance-matched
    calibration bias). Reports 1-sigma uncertainties from the Jacobian.
    """
    grid, kl_data = kl
    kl_data = np.asarray(kl_data, dtype=float)
    if kl_data.shape != (len(grid),):
        raise ValidationError("k*l data must match the grid length")
    if l < 1:
        raise ValidationError("device length must be >= 1 cell")
    unknown = set(known) - set(_FIT_NAMES)
    if unknown:
        raise ValidationError(f"unknown fixed parameters: {sorted(unknown)}")
    if np.max(np.abs(kl_data)) < 1e-6:
        raise ValidationError("no dispersion in data (zero-phase trace)")

    w = grid.points
    w_pl = dispersion.plasma_frequency(flux, init)
    if np.count_nonzero(w < 0.8 * w_pl) < 10:
        raise ValidationError(
            "need at least 10 points below 0.8x the plasma frequency"
        )

    free = tuple(n for n in _FIT_NAMES if n not in known)
    if not free:
        raise ValidationError("all parameters are fixed; nothing to fit")

    def build(x: np.ndarray) -> UnitCellParams:
        vals = dict(known)
        for name, xi in zip(free, x):
            vals[name] = xi * _FIT_SCALES[name]
        return replace(
            init,
            i0=vals.get("i0", init.i0),
            r=vals.get("r", init.r),
            c0=vals.get("c0", init.c0),
            cgnd=vals.get("cgnd", init.cgnd),
        )

    c1_of = lambda p: cellmodel.linear_coeff(flux, p)

    def residual(x: np.ndarray) -> np.ndarray:
        try:
            p = build(x)
        except ValidationError:
            return np.full(kl_data.size, 1e6)
        l0 = cellmodel.junction_inductance(p)
        ceff = cellmodel.effective_junction_capacitance(p)
        radicand = c1_of(p) - w**2 * l0 * ceff
        out = np.empty(kl_data.size)
        ok = radicand > 0
        out[ok] = l * w[ok] * math.sqrt(l0 * p.cgnd) / np.sqrt(radicand[ok]) - kl_data[ok]
        out[~ok] = 1e3 * (1.0 - radicand[~ok])
        return out

    x0 = np.array([getattr(init, n) / _FIT_SCALES[n] for n in free])
    res = least_squares(residual, x0, method="trf",
                        bounds=(1e-6, np.inf), x_scale="jac", max_nfev=2000)
    if not res.success:
        raise FitError(
            f"dispersion fit did not converge: {res.message} "
            f"(cost {res.cost:.3g}, nfev {res.nfev})"
        )
    m, n = kl_data.size, len(free)
    dof = max(m - n, 1)
    jtj = res.jac.T @ res.jac
    try:
        cov_scaled = np.linalg.inv(jtj) * (2.0 * res.cost / dof)
    except np.linalg.LinAlgError:
        cov_scaled = np.linalg.pinv(jtj) * (2.0 * res.cost / dof)
    scales = np.array([_FIT_SCALES[nm] for nm in free])
    cov = cov_scaled * np.outer(scales, scales)
    sigma = {nm: float(math.sqrt(max(cov[i, i], 0.0)))
             for i, nm in enumerate(free)}
    return FitResult(
        params=build(res.x), sigma=sigma, cov=cov, free=free,
        cost=float(res.cost), nfev=int(res.nfev),
    )


def fit_theta_slope(points) -> tuple[float, float | None]:
    """Fit the low-power affine region of theta_nl versus pump power.

    ``points`` holds (pump power dBm, theta_nl rad). The affine fit is
    trimmed from the top: largest-power points are removed until every
    in-fit residual is below 2% of the fit value. Returns
    (slope in rad/pW, departure power in dBm) where the departure is the
    first power whose residual against the final fit exceeds 5%
    (None when the data never depart).
    """
    pts = sorted(((float(p), abs(float(t))) for p, t in points), key=lambda x: x[0])
    if len(pts) < 4:
        raise ValidationError("need at least 4 (power, theta) points")
    p_dbm = np.array([x[0] for x in pts])
    theta = np.array([x[1] for x in pts])
    p_pw = dbm_to_watts(p_dbm) * 1e12

    def affine(x, y):
        a = np.vstack([x, np.ones_like(x)]).T
        coef, *_ = np.linalg.lstsq(a, y, rcond=None)
        return coef  # (slope, intercept)

    n_keep = len(pts)
    while True:
        if n_keep < 3:
            raise FitError("no linear region: fewer than 3 points remain")
        slope, icept = affine(p_pw[:n_keep], theta[:n_keep])
        fit = slope * p_pw[:n_keep] + icept
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.abs(theta[:n_keep] - fit) / np.abs(fit)
        if np.all(rel < 0.02):
            break
        n_keep -= 1

    fit_all = slope * p_pw + icept
    with np.errstate(divide="ignore", invalid="ignore"):
        rel_all = np.abs(theta - fit_all) / np.abs(fit_all)
    departure = None
    over = np.nonzero(rel_all > 0.05)[0]
    if over.size:
        departure = float(p_dbm[over[0]])
    return float(slope), departure


def noise_power(omega, t_source, t_hemt, gb):
    """Radiometer noise model: the quantum source term plus amplifier
    noise, scaled by gain-bandwidth:
    [ (hbar*w/2)*coth(hbar*w/(2*kB*T)) + kB*T_hemt ] * G*B."""
    omega = np.asarray(omega, dtype=float)
    t_source = np.asarray(t_source, dtype=float)
    x = HBAR * omega / (2.0 * KB * t_source)
    src = (HBAR * omega / 2.0) / np.tanh(x)
    return (src + KB * t_hemt) * gb


def yfactor_fit(data, b: float, *, on_error: str = "raise") -> NoiseModel:
    """Per-frequency least squares of noise power versus source temperature.

    ``data`` is an iterable of (omega rad/s, T kelvin, P watts) rows. Each
    frequency needs at least 3 temperatures spanning a factor >= 5 (the fit
    is ill-conditioned otherwise). ``on_error`` is "raise" (default) or
    "skip"; skipped frequencies are listed in NoiseModel.failures.
    """
    if on_error not in ("raise", "skip"):
        raise ValidationError("on_error must be 'raise' or 'skip'")
    rows = [(float(w), float(t), float(pw)) for w, t, pw in data]
    if not rows:
        raise ValidationError("no noise data rows")
    omegas = sorted({r[0] for r in rows})
    t_h, gb_out, kept, failures = [], [], [], []
    for w in omegas:
        temps = np.array([r[1] for r in rows if r[0] == w])
        powers = np.array([r[2] for r in rows if r[0] == w])
        try:
            if temps.size < 3:
                raise FitError(
                    f"{w / 2 / math.pi:.6g} Hz: need >= 3 temperatures"
                )
            if temps.max() / temps.min() < 5.0:
                raise FitError(
                    f"{w / 2 / math.pi:.6g} Hz: temperature span below 5x "
                    "(ill-conditioned)"
                )
            x = HBAR * w / (2.0 * KB * temps)
            # source term in kelvin-equivalent units keeps the two design
            # columns at comparable scale
            q_kelvin = (HBAR * w / (2.0 * KB)) / np.tanh(x)
            a = np.vstack([q_kelvin, np.ones_like(q_kelvin)]).T
            coef, *_ = np.linalg.lstsq(a, powers, rcond=None)
            gbk, gbk_t = coef  # G*B*kB and G*B*kB*T_hemt
            if gbk <= 0:
                raise FitError(f"{w / 2 / math.pi:.6g} Hz: nonphysical gain")
            t_h.append(gbk_t / gbk)
            gb_out.append(gbk / KB)
            kept.append(w)
        except FitError:
            if on_error == "raise":
                raise
            failures.append(w)
    if not kept:
        raise FitError("all frequencies failed the Y-factor fit")
    return NoiseModel(
        grid=FrequencyGrid(np.array(kept)),
        t_hemt=np.array(t_h),
        gb=np.array(gb_out),
        b=float(b),
        failures=tuple(failures),
    )


def snr_noise(g_noise, g_jtwpa, nm: NoiseModel) -> NoiseResult:
    """System and device noise from the SNR-improvement method:

        T_system = g_noise * T_hemt / g_jtwpa
        T_device = T_hemt * (g_noise - 1) / g_jtwpa

    with photon conversions N = kB*T/(hbar*omega). Gains are linear ratios,
    scalar or per-frequency. Points with g_noise < 1 are flagged as
    nonphysical (measurement artifact) rather than rejected.
    """
    n = len(nm.grid)
    g_n = np.broadcast_to(np.asarray(g_noise, dtype=float), (n,)).copy()
    g_j = np.broadcast_to(np.asarray(g_jtwpa, dtype=float), (n,)).copy()
    if np.any(g_j <= 0):
        raise ValidationError("g_jtwpa must be > 0")
    flags = g_n < 1.0
    t_sys = g_n * nm.t_hemt / g_j
    t_dev = nm.t_hemt * (g_n - 1.0) / g_j
    photons = KB / (HBAR * nm.grid.points)
    return NoiseResult(
        grid=nm.grid, t_system=t_sys, t_jtwpa=t_dev,
        n_system=t_sys * photons, n_jtwpa=t_dev * photons, flags=flags,
    )


def ripple_variance(gp: GainProfile, band: tuple[float, float]) -> RippleStats:
    """Variance of the normalized linear gain Var[G/mean(G)] over a band
    (f_lo, f_hi in Hz). Invariant under a global gain scale."""
    f_hz = gp.grid.hz
    sel = (f_hz >= band[0]) & (f_hz <= band[1])
    if np.count_nonzero(sel) < 20:
        raise ValidationError("band must contain at least 20 grid points")
    g_lin = 10.0 ** (gp.gain_db[sel] / 10.0)
    mean = float(np.mean(g_lin))
    return RippleStats(
        band=(float(band[0]), float(band[1])),
        mean_gain=mean,
        variance_normalized=float(np.var(g_lin / mean)),
    )


# ---------------------------------------------------------------------------
# measurement-file I/O (strict headers, line-numbered errors)

def _read_csv(path, columns: tuple[str, ...]) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: line 1: empty file") from None
        if tuple(h.strip() for h in header) != columns:
            raise ValidationError(
                f"{path}: line 1: expected header {','.join(columns)}, "
                f"got {','.join(header)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(columns):
                raise ValidationError(
                    f"{path}: line {lineno}: expected {len(columns)} columns, "
                    f"got {len(row)}"
                )
            try:
                rows.append([float(x) for x in row])
            except ValueError as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from None
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float)


def read_trace_csv(path) -> ComplexTrace:
    """Read a measured trace with columns freq_hz, re, im."""
    data = _read_csv(path, ("freq_hz", "re", "im"))
    grid = FrequencyGrid(2.0 * math.pi * data[:, 0])
    return ComplexTrace(grid, data[:, 1] + 1j * data[:, 2])


def read_noise_csv(path) -> list[tuple[float, float, float]]:
    """Read Y-factor rows with columns freq_hz, temp_k, p_watts; returns
    (omega, T, P) tuples."""
    data = _read_csv(path, ("freq_hz", "temp_k", "p_watts"))
    return [(2.0 * math.pi * f, t, pw) for f, t, pw in data]


def read_gains_csv(path):
    """Read per-frequency linear gains with columns freq_hz, g_noise,
    g_jtwpa; returns (omega array, g_noise array, g_jtwpa array)."""
    data = _read_csv(path, ("freq_hz", "g_noise", "g_jtwpa"))
    return 2.0 * math.pi * data[:, 0], data[:, 1], data[:, 2]


# ---------------------------------------------------------------------------
# synthetic measurement generators (testing and bundled examples)

def synth_dispersion_trace(
    p: UnitCellParams,
    flux,
    n_cells: int,
    grid: FrequencyGrid,
    *,
    noise: float = 0.0,
    seed: int | None = None,
    include_loss: bool = True,
) -> ComplexTrace:
    """Synthesize a calibrated transmission trace exp(-i*k*l) with the
    model's dielectric loss and optional multiplicative complex noise."""
    k = dispersion.wavenumber(grid.points, flux, p)
    values = np.exp(-1j * k * n_cells)
    if include_loss:
        values = values * np.exp(-0.5 * p.tan_delta * k * n_cells)
    if noise > 0.0:
        rng = np.random.default_rng(seed)
        values = values * (
            1.0 + noise * rng.standard_normal(len(grid))
            + 1j * noise * rng.standard_normal(len(grid))
        )
    return ComplexTrace(grid, values)


def synth_noise_data(
    grid: FrequencyGrid,
    t_hemt,
    gb,
    temps,
    *,
    noise: float = 0.0,
    seed: int | None = None,
) -> list[tuple[float, float, float]]:
    """Synthesize (omega, T, P) Y-factor rows from the noise model."""
    t_hemt = np.broadcast_to(np.asarray(t_hemt, dtype=float), (len(grid),))
    gb = np.broadcast_to(np.asarray(gb, dtype=float), (len(grid),))
    rng = np.random.default_rng(seed)
    rows = []
    for i, w in enumerate(grid.points):
        for t in temps:
            pw = float(noise_power(w, t, t_hemt[i], gb[i]))
            if noise > 0.0:
                pw *= 1.0 + noise * rng.standard_normal()
            rows.append((float(w), float(t), pw))
    return rows
