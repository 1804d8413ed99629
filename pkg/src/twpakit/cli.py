"""Config-driven batch front-end.

Subcommands compose the library modules into reproducible runs that emit
CSV artifacts, a summary JSON and a provenance sidecar per output file.
Configs are INI-style files with one section per concern; every physical
key carries an explicit unit suffix (pump_freq_ghz, pump_power_dbm, ...)
and unknown keys are rejected before any computation. Identical config and
seed produce byte-identical outputs.

    twpakit --config run.ini --out results/ gain
    twpakit --config run.ini --out results/ --convention as-printed matchpoint
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, cellmodel, cme, dispersion, fitkit, timedomain
from .cellmodel import FluxBias, UnitCellParams
from .constants import HBAR, KB, round_db
from .errors import TwpaError, ValidationError

_SCHEMAS = {
    "device": {
        "preset", "variant", "i0_ua", "r", "c0_ff", "cgnd_ff",
        "tan_delta", "pitch_um",
    },
    "operating_point": {
        "flux_phi0", "pump_freq_ghz", "pump_power_dbm", "n_cells",
        "theta_nl_rad",
    },
    "gain": {
        "pump_freq_ghz_list", "signal_min_ghz", "signal_max_ghz",
        "signal_points", "crosscheck_cme",
    },
    "timedomain": {
        "task", "dt_s", "t_total_s", "loss_mode", "z_source_ohm",
        "z_load_ohm", "signal_power_dbm", "signal_min_ghz", "signal_max_ghz",
        "signal_points", "signal_freq_ghz", "signal_powers_dbm",
        "calibrate_pump", "seed",
    },
    "fit": {
        "raw_csv", "thru_csv", "n_cells", "flux_phi0", "fix",
    },
    "noise": {
        "noise_csv", "gains_csv", "bandwidth_hz",
    },
    "matchpoint": {
        "flux_min_phi0", "flux_max_phi0", "flux_steps", "pump_freq_ghz_list",
        "theta_nl_rad", "theta_budget_rad", "signal_min_ghz",
        "signal_max_ghz", "signal_points",
    },
}


@dataclass
class RunContext:
    config: configparser.ConfigParser
    config_sha: str
    out: Path
    command: str
    preset_name: str
    variant: str
    convention: str
    workers: int
    params: UnitCellParams
    n_cells_default: int | None
    seed: int | None


def _load_config(path: Path) -> tuple[configparser.ConfigParser, str]:
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    raw = path.read_bytes()
    cfg = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cfg.read_string(raw.decode())
    except configparser.Error as exc:
        raise ValidationError(f"config parse error: {exc}") from None
    for section in cfg.sections():
        if section not in _SCHEMAS:
            raise ValidationError(f"unknown config section [{section}]")
        extra = set(cfg[section]) - _SCHEMAS[section]
        if extra:
            key = sorted(extra)[0]
            raise ValidationError(f"unknown config key {section}.{key}")
    return cfg, hashlib.sha256(raw).hexdigest()


def _get(cfg, section, key, conv=str, default=None, required=False):
    if not cfg.has_option(section, key):
        if required:
            raise ValidationError(f"missing config key {section}.{key}")
        return default
    raw = cfg.get(section, key)
    try:
        if conv is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return conv(raw)
    except ValueError:
        raise ValidationError(f"bad value for {section}.{key}: {raw!r}") from None


def _float_list(raw: str) -> list[float]:
    return [float(x) for x in raw.replace(",", " ").split()]


def _resolve_device(cfg, preset_flag: str | None):
    """Device parameters from preset/variant with optional field overrides."""
    name = preset_flag or _get(cfg, "device", "preset", default="jtwpa-a")
    variant = _get(cfg, "device", "variant", default="fitted")
    if variant not in ("fitted", "design"):
        raise ValidationError("device.variant must be 'fitted' or 'design'")
    preset = cellmodel.get_preset(name)
    p = preset.params(fitted=variant == "fitted")
    overrides = {}
    for key, attr, scale in (
        ("i0_ua", "i0", 1e-6), ("r", "r", 1.0), ("c0_ff", "c0", 1e-15),
        ("cgnd_ff", "cgnd", 1e-15), ("tan_delta", "tan_delta", 1.0),
        ("pitch_um", "a", 1e-6),
    ):
        val = _get(cfg, "device", key, conv=float)
        if val is not None:
            overrides[attr] = val * scale
    if overrides:
        p = UnitCellParams(
            i0=overrides.get("i0", p.i0), r=overrides.get("r", p.r),
            c0=overrides.get("c0", p.c0), cgnd=overrides.get("cgnd", p.cgnd),
            tan_delta=overrides.get("tan_delta", p.tan_delta),
            a=overrides.get("a", p.a),
        )
    return name, variant, p, preset.n_cells


def _operating_point(ctx: RunContext, omega_p: float | None = None) -> cme.OperatingPoint:
    cfg = ctx.config
    flux = _get(cfg, "operating_point", "flux_phi0", float, required=True)
    if omega_p is None:
        f_ghz = _get(cfg, "operating_point", "pump_freq_ghz", float, required=True)
        omega_p = 2.0 * math.pi * f_ghz * 1e9
    power = _get(cfg, "operating_point", "pump_power_dbm", float, default=-math.inf)
    n_cells = _get(cfg, "operating_point", "n_cells", int,
                   default=ctx.n_cells_default)
    if n_cells is None:
        raise ValidationError("operating_point.n_cells is required")
    return cme.OperatingPoint(FluxBias(flux), omega_p, power, n_cells)


def _pump_state(ctx: RunContext, op: cme.OperatingPoint) -> cme.PumpState:
    theta = _get(ctx.config, "operating_point", "theta_nl_rad", float)
    if theta is not None:
        return cme.pump_state_from_theta_nl(theta, op, ctx.params,
                                            convention=ctx.convention)
    return cme.pump_amplitude_from_power(op, ctx.params,
                                         convention=ctx.convention)


# ---------------------------------------------------------------------------
# output helpers

def _write_csv(ctx: RunContext, name: str, header, rows) -> Path:
    path = ctx.out / name
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{x:.17g}" if isinstance(x, float) else x for x in row])
    _write_provenance(ctx, path)
    return path


def _write_json(ctx: RunContext, name: str, obj) -> Path:
    path = ctx.out / name
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    _write_provenance(ctx, path)
    return path


def _write_provenance(ctx: RunContext, target: Path) -> None:
    prov = {
        "file": target.name,
        "command": ctx.command,
        "config_sha256": ctx.config_sha,
        "preset": ctx.preset_name,
        "variant": ctx.variant,
        "convention": ctx.convention,
        "seed": ctx.seed,
        "version": __version__,
    }
    Path(str(target) + ".prov.json").write_text(
        json.dumps(prov, indent=2, sort_keys=True) + "\n"
    )


def _gain_summary(profile: cme.GainProfile, roots: np.ndarray) -> dict:
    f_hz = profile.grid.hz
    i_pk = int(np.argmax(profile.gain_db))
    lobes = []
    for root in roots:
        lo, hi = cme.phase_match_band(profile, float(root))
        lobes.append({
            "root_ghz": round(float(root) / 2e9 / math.pi, 6),
            "band_lo_ghz": round(lo / 1e9, 6),
            "band_hi_ghz": round(hi / 1e9, 6),
            "width_ghz": round((hi - lo) / 1e9, 6),
        })
    return {
        "peak_gain_db": round_db(profile.gain_db[i_pk]),
        "peak_freq_ghz": round(f_hz[i_pk] / 1e9, 6),
        "kappa_roots_ghz": [round(r / 2e9 / math.pi, 6) for r in roots],
        "lobes": lobes,
        "lobe_width_total_ghz": round(sum(x["width_ghz"] for x in lobes), 6),
    }


# ---------------------------------------------------------------------------
# gain

def _gain_point(args):
    (params, flux, n_cells, power, theta, f_pump_ghz,
     f_lo, f_hi, n_pts, convention, crosscheck) = args
    omega_p = 2.0 * math.pi * f_pump_ghz * 1e9
    op = cme.OperatingPoint(FluxBias(flux), omega_p, power, n_cells)
    if theta is not None:
        pump = cme.pump_state_from_theta_nl(theta, op, params,
                                            convention=convention)
    else:
        pump = cme.pump_amplitude_from_power(op, params, convention=convention)
    # clip the requested band to the physical window for this pump: the
    # idler 2*w_p - w_s must stay positive and both tones below plasma
    f_pl = dispersion.plasma_frequency(flux, params) / (2.0 * math.pi)
    f_p = f_pump_ghz * 1e9
    lo = max(f_lo, 0.05 * f_p, 2.0 * f_p - 0.95 * f_pl)
    hi = min(f_hi, 1.95 * f_p, 0.95 * f_pl)
    if not lo < hi:
        raise ValidationError(
            f"empty signal window for pump at {f_pump_ghz:g} GHz"
        )
    grid = dispersion.FrequencyGrid.from_hz(lo, hi, n_pts)
    profile = cme.analytic_gain(grid, op, pump, params, convention=convention)
    roots = cme.phase_match_frequencies(op, pump, params, convention=convention)
    summary = _gain_summary(profile, roots)
    summary["pump_freq_ghz"] = f_pump_ghz
    summary["theta_nl_rad"] = round(abs(pump.theta_nl), 6)
    if crosscheck:
        idx = np.linspace(0, len(grid) - 1, 5).astype(int)
        dev = 0.0
        for i in idx:
            _, a_s, _ = cme.integrate_cme(
                float(grid.points[i]), op, pump, params, 1.0 + 0j, 0j,
                convention=convention,
            )
            g_ode = abs(a_s[-1]) ** 2
            g_cf = 10.0 ** (profile.gain_db[i] / 10.0)
            dev = max(dev, abs(g_ode - g_cf) / g_cf)
        summary["cme_crosscheck_max_rel_dev"] = float(dev)
    return f_pump_ghz, profile, summary


def cmd_gain(ctx: RunContext) -> dict:
    cfg = ctx.config
    pumps = _float_list(_get(cfg, "gain", "pump_freq_ghz_list", required=True))
    f_lo = _get(cfg, "gain", "signal_min_ghz", float, default=1.0) * 1e9
    f_hi = _get(cfg, "gain", "signal_max_ghz", float, default=11.0) * 1e9
    n_pts = _get(cfg, "gain", "signal_points", int, default=401)
    crosscheck = _get(cfg, "gain", "crosscheck_cme", bool, default=False)
    flux = _get(cfg, "operating_point", "flux_phi0", float, required=True)
    power = _get(cfg, "operating_point", "pump_power_dbm", float, default=-math.inf)
    theta = _get(cfg, "operating_point", "theta_nl_rad", float)
    n_cells = _get(cfg, "operating_point", "n_cells", int,
                   default=ctx.n_cells_default)

    tasks = [
        (ctx.params, flux, n_cells, power, theta, f, f_lo, f_hi, n_pts,
         ctx.convention, crosscheck)
        for f in pumps
    ]
    if ctx.workers > 1:
        with ProcessPoolExecutor(max_workers=ctx.workers) as pool:
            results = list(pool.map(_gain_point, tasks))
    else:
        results = [_gain_point(t) for t in tasks]

    per_pump = []
    for f_pump_ghz, profile, summary in results:
        name = f"gain_pump_{f_pump_ghz:g}ghz.csv"
        profile.to_csv(ctx.out / name)
        _write_provenance(ctx, ctx.out / name)
        per_pump.append(summary)
    spans = [
        (lobe["band_lo_ghz"], lobe["band_hi_ghz"])
        for s in per_pump for lobe in s["lobes"]
    ]
    union = 0.0
    for lo, hi in sorted(spans):
        union += max(0.0, hi - lo)  # lobes rarely overlap; report merged too
    merged = []
    for lo, hi in sorted(spans):
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    summary = {
        "per_pump": per_pump,
        "matched_lobe_union_ghz": round(sum(hi - lo for lo, hi in merged), 6),
    }
    _write_json(ctx, "gain_summary.json", summary)
    return summary


# ---------------------------------------------------------------------------
# timedomain

def _ladder_config(ctx: RunContext, op: cme.OperatingPoint) -> timedomain.LadderConfig:
    cfg = ctx.config
    return timedomain.LadderConfig(
        p=ctx.params,
        flux=op.flux,
        n_cells=op.n_cells,
        z_source=_get(cfg, "timedomain", "z_source_ohm", float, default=50.0),
        z_load=_get(cfg, "timedomain", "z_load_ohm", float, default=50.0),
        dt=_get(cfg, "timedomain", "dt_s", float),
        t_total=_get(cfg, "timedomain", "t_total_s", float),
        loss_mode=_get(cfg, "timedomain", "loss_mode", default="fixed-at-pump"),
        loss_anchor_omega=op.omega_p,
    )


def cmd_timedomain(ctx: RunContext) -> dict:
    cfg = ctx.config
    task = _get(cfg, "timedomain", "task", required=True)
    op = _operating_point(ctx)
    ladder = _ladder_config(ctx, op)
    theta = _get(cfg, "operating_point", "theta_nl_rad", float)
    calibrate = _get(cfg, "timedomain", "calibrate_pump", bool,
                     default=theta is not None)
    pump_dbm = op.pump_power_dbm
    theta_achieved = None
    if calibrate:
        if theta is None:
            raise ValidationError(
                "timedomain.calibrate_pump needs operating_point.theta_nl_rad"
            )
        cal = timedomain.calibrate_transient_pump(ladder, op, theta)
        pump_dbm = cal.pump_dbm
        theta_achieved = cal.theta_nl

    summary: dict = {
        "task": task,
        "pump_dbm": round_db(pump_dbm),
        "theta_nl_target": theta,
        "theta_nl_achieved": theta_achieved,
        "loss_mode": ladder.loss_mode,
        "dt_s": ladder.dt,
        "t_total_s": ladder.t_total,
    }
    if task == "gain":
        f_lo = _get(cfg, "timedomain", "signal_min_ghz", float, required=True) * 1e9
        f_hi = _get(cfg, "timedomain", "signal_max_ghz", float, required=True) * 1e9
        n_pts = _get(cfg, "timedomain", "signal_points", int, default=11)
        sig_dbm = _get(cfg, "timedomain", "signal_power_dbm", float,
                       default=pump_dbm - 30.0)
        grid = dispersion.FrequencyGrid.from_hz(f_lo, f_hi, n_pts)
        pump_state = (cme.pump_state_from_theta_nl(theta, op, ctx.params,
                                                   convention=ctx.convention)
                      if theta is not None else None)
        profile = timedomain.simulate_gain(
            ladder, op, sig_dbm, grid, pump_dbm=pump_dbm,
            pump_state=pump_state, convention=ctx.convention,
        )
        profile.to_csv(ctx.out / "timedomain_gain.csv")
        _write_provenance(ctx, ctx.out / "timedomain_gain.csv")
        i_pk = int(np.argmax(profile.gain_db))
        summary["peak_gain_db"] = round_db(profile.gain_db[i_pk])
        summary["peak_freq_ghz"] = round(grid.hz[i_pk] / 1e9, 6)
    elif task == "compression":
        f_sig = _get(cfg, "timedomain", "signal_freq_ghz", float, required=True)
        powers = _float_list(
            _get(cfg, "timedomain", "signal_powers_dbm", required=True)
        )
        res = timedomain.compression_sweep(
            ladder, op, 2.0 * math.pi * f_sig * 1e9, powers, pump_dbm=pump_dbm
        )
        _write_csv(
            ctx, "compression.csv",
            ("p_in_dbm", "gain_db", "sig_out_dbm", "pump_out_dbm"),
            zip(res.signal_dbm.tolist(), res.gain_db.tolist(),
                res.sig_out_dbm.tolist(), res.pump_out_dbm.tolist()),
        )
        summary["signal_freq_ghz"] = f_sig
        summary["small_signal_gain_db"] = round_db(res.small_signal_gain_db)
        summary["p1db_dbm"] = (
            round_db(res.p1db_dbm) if res.p1db_dbm is not None else None
        )
        summary["compressed"] = res.p1db_dbm is not None
        if res.p1db_dbm is not None:
            summary["sig_out_at_p1db_dbm"] = round_db(res.sig_out_at_p1db)
            summary["pump_out_at_p1db_dbm"] = round_db(res.pump_out_at_p1db)
    else:
        raise ValidationError("timedomain.task must be 'gain' or 'compression'")

    # full config echo per run for reproducibility
    echo = {s: dict(cfg[s]) for s in cfg.sections()}
    summary["config_echo"] = echo
    summary["version"] = __version__
    _write_json(ctx, "timedomain_summary.json", summary)
    return summary


# ---------------------------------------------------------------------------
# fit

def cmd_fit(ctx: RunContext) -> dict:
    cfg = ctx.config
    raw = fitkit.read_trace_csv(_get(cfg, "fit", "raw_csv", required=True))
    thru = fitkit.read_trace_csv(_get(cfg, "fit", "thru_csv", required=True))
    n_cells = _get(cfg, "fit", "n_cells", int, default=ctx.n_cells_default)
    flux = _get(cfg, "fit", "flux_phi0", float, default=0.5)
    fix_names = [
        s.strip() for s in _get(cfg, "fit", "fix", default="r,cgnd").split(",")
        if s.strip()
    ]
    init = ctx.params
    known = {name: getattr(init, name) for name in fix_names}

    calibrated = fitkit.calibrate_thru(raw, thru)
    grid, kl = fitkit.extract_kl(calibrated)
    result = fitkit.fit_dispersion((grid, kl), n_cells, known, init, flux=flux)

    k_fit = dispersion.wavenumber(grid.points, flux, result.params) * n_cells
    _write_csv(
        ctx, "fit_residuals.csv",
        ("freq_hz", "kl_data", "kl_fit", "residual"),
        zip(grid.hz.tolist(), kl.tolist(), k_fit.tolist(), (kl - k_fit).tolist()),
    )
    summary = {
        "fitted": {
            "i0_ua": result.params.i0 * 1e6,
            "r": result.params.r,
            "c0_ff": result.params.c0 * 1e15,
            "cgnd_ff": result.params.cgnd * 1e15,
        },
        "sigma": {
            k: (v / {"i0": 1e-6, "r": 1.0, "c0": 1e-15, "cgnd": 1e-15}[k])
            for k, v in result.sigma.items()
        },
        "free": list(result.free),
        "fixed": {k: v for k, v in known.items()},
        "cost": result.cost,
        "nfev": result.nfev,
        "n_cells": n_cells,
        "flux_phi0": flux,
    }
    _write_json(ctx, "fit_report.json", summary)
    return summary


# ---------------------------------------------------------------------------
# noise

def cmd_noise(ctx: RunContext) -> dict:
    cfg = ctx.config
    rows = fitkit.read_noise_csv(_get(cfg, "noise", "noise_csv", required=True))
    b = _get(cfg, "noise", "bandwidth_hz", float, required=True)
    nm = fitkit.yfactor_fit(rows, b, on_error="skip")
    w_g, g_noise, g_jtwpa = fitkit.read_gains_csv(
        _get(cfg, "noise", "gains_csv", required=True)
    )
    g_n = np.interp(nm.grid.points, w_g, g_noise)
    g_j = np.interp(nm.grid.points, w_g, g_jtwpa)
    res = fitkit.snr_noise(g_n, g_j, nm)
    photons = KB * nm.t_hemt / (HBAR * nm.grid.points)
    _write_csv(
        ctx, "noise_result.csv",
        ("freq_hz", "t_hemt_k", "t_system_k", "t_jtwpa_k",
         "n_hemt", "n_system", "n_jtwpa", "flagged"),
        zip(nm.grid.hz.tolist(), nm.t_hemt.tolist(), res.t_system.tolist(),
            res.t_jtwpa.tolist(), photons.tolist(), res.n_system.tolist(),
            res.n_jtwpa.tolist(), [int(x) for x in res.flags]),
    )
    summary = {
        "bandwidth_hz": b,
        "n_frequencies": len(nm.grid),
        "failed_frequencies_hz": [w / 2 / math.pi for w in nm.failures],
        "median_t_hemt_k": float(np.median(nm.t_hemt)),
        "median_n_jtwpa": float(np.median(res.n_jtwpa)),
    }
    _write_json(ctx, "noise_summary.json", summary)
    return summary


# ---------------------------------------------------------------------------
# matchpoint

def _rippled_gain(profile: cme.GainProfile, trace) -> cme.GainProfile:
    """Model-level analogue of mismatch-induced gain ripple: impose the
    detrended linear-transmission ripple on the smooth gain profile."""
    f = trace.grid.hz
    mag = trace.mag_db
    trend = np.polyval(np.polyfit(f / f[-1], mag, 3), f / f[-1])
    return cme.GainProfile(
        profile.grid, profile.gain_db + (mag - trend), profile.decomposition
    )


def cmd_matchpoint(ctx: RunContext) -> dict:
    cfg = ctx.config
    f_lo = _get(cfg, "matchpoint", "flux_min_phi0", float, required=True)
    f_hi = _get(cfg, "matchpoint", "flux_max_phi0", float, required=True)
    steps = _get(cfg, "matchpoint", "flux_steps", int, required=True)
    pumps = _float_list(_get(cfg, "matchpoint", "pump_freq_ghz_list", required=True))
    theta = _get(cfg, "matchpoint", "theta_nl_rad", float, required=True)
    budget = _get(cfg, "matchpoint", "theta_budget_rad", float, default=math.inf)
    s_lo = _get(cfg, "matchpoint", "signal_min_ghz", float, default=1.0) * 1e9
    s_hi = _get(cfg, "matchpoint", "signal_max_ghz", float, default=11.0) * 1e9
    n_pts = _get(cfg, "matchpoint", "signal_points", int, default=601)
    if steps < 1 or f_hi < f_lo:
        raise ValidationError("empty matchpoint scan range")
    n_cells = _get(cfg, "operating_point", "n_cells", int,
                   default=ctx.n_cells_default)

    fluxes = np.linspace(f_lo, f_hi, steps)
    grid = dispersion.FrequencyGrid.from_hz(s_lo, s_hi, n_pts)
    rows = []
    for f_pump_ghz in pumps:
        omega_p = 2.0 * math.pi * f_pump_ghz * 1e9
        best = None
        for flux in fluxes:
            entry = {
                "pump_freq_ghz": f_pump_ghz,
                "flux_phi0": round(float(flux), 6),
                "theta_nl_rad": theta,
                "flags": [],
            }
            if theta > budget:
                entry["flags"].append("theta_nl exceeds linearity budget")
            gamma = cellmodel.kerr_coefficient(flux, ctx.params)
            if gamma >= 0:
                entry["flags"].append("no phase matching (positive Kerr)")
                rows.append(entry)
                continue
            op = cme.OperatingPoint(FluxBias(float(flux)), omega_p, -math.inf,
                                    n_cells)
            try:
                pump = cme.pump_state_from_theta_nl(
                    theta, op, ctx.params, convention=ctx.convention
                )
                roots = cme.phase_match_frequencies(
                    op, pump, ctx.params, convention=ctx.convention
                )
            except TwpaError as exc:
                entry["flags"].append(str(exc))
                rows.append(entry)
                continue
            if roots.size == 0:
                entry["flags"].append("no phase matching (kappa has no root)")
                rows.append(entry)
                continue
            profile = cme.analytic_gain(grid, op, pump, ctx.params,
                                        convention=ctx.convention)
            trace = dispersion.linear_s21(grid, flux, ctx.params, n_cells,
                                          50.0, 50.0)
            rippled = _rippled_gain(profile, trace)
            lo, hi = cme.phase_match_band(profile, float(roots[0]))
            stats = fitkit.ripple_variance(rippled, (lo, hi))
            entry.update({
                "kappa_roots_ghz": [round(r / 2e9 / math.pi, 6) for r in roots],
                "peak_gain_db": round_db(float(np.max(profile.gain_db))),
                "ripple_variance_normalized": stats.variance_normalized,
                "z0_at_pump_ohm": round(
                    float(cellmodel.characteristic_impedance(
                        omega_p, flux, ctx.params)), 3,
                ),
            })
            rows.append(entry)
            if not entry["flags"]:
                key = (entry["peak_gain_db"], -stats.variance_normalized)
                if best is None or key > best[0]:
                    best = (key, entry)
        if best is not None:
            best[1]["selected"] = True

    summary = {"points": rows}
    _write_json(ctx, "matchpoint_report.json", summary)
    _write_csv(
        ctx, "matchpoint_scan.csv",
        ("pump_freq_ghz", "flux_phi0", "peak_gain_db",
         "ripple_variance_normalized", "z0_at_pump_ohm", "flags"),
        [
            (r["pump_freq_ghz"], r["flux_phi0"],
             r.get("peak_gain_db", float("nan")),
             r.get("ripple_variance_normalized", float("nan")),
             r.get("z0_at_pump_ohm", float("nan")),
             ";".join(r["flags"]))
            for r in rows
        ],
    )
    return summary


# ---------------------------------------------------------------------------

_COMMANDS = {
    "gain": cmd_gain,
    "timedomain": cmd_timedomain,
    "fit": cmd_fit,
    "noise": cmd_noise,
    "matchpoint": cmd_matchpoint,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="twpakit",
        description="Batch front-end for the traveling-wave amplifier toolkit",
    )
    parser.add_argument("--config", required=True, help="INI config file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--convention", choices=list(cme.CONVENTIONS),
                        default="corrected")
    parser.add_argument("--preset", choices=sorted(cellmodel.PRESETS),
                        default=None)
    parser.add_argument("command", choices=sorted(_COMMANDS))
    args = parser.parse_args(argv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        config, sha = _load_config(Path(args.config))
        preset_name, variant, params, n_default = _resolve_device(
            config, args.preset
        )
        ctx = RunContext(
            config=config, config_sha=sha, out=out, command=args.command,
            preset_name=preset_name, variant=variant,
            convention=args.convention, workers=max(1, args.workers),
            params=params, n_cells_default=n_default,
            seed=_get(config, "timedomain", "seed", int),
        )
        _COMMANDS[args.command](ctx)
    except TwpaError as exc:
        manifest = {"command": args.command, "error": str(exc),
                    "type": type(exc).__name__}
        (out / "failures.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        )
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
