"""Numba kernel for the nonlinear LC-ladder transient integrator.

State layout: per-branch superconducting phase differences phi[0..nb-1]
(branch j connects node j to node j+1) and node voltages v[0..nn-1] with
nn = nb + 1. The node capacitance matrix is tridiagonal and constant
(ground capacitance plus the junction shunt capacitance coupling
neighbors), so each RK4 stage does one Thomas solve with precomputed
factors. The optional RC loss mode adds one leg-voltage state per node.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _source_voltage(t, src_omega, src_amp, src_phase, t_ramp):
    s = 0.0
    for k in range(src_omega.size):
        s += src_amp[k] * math.cos(src_omega[k] * t + src_phase[k])
    if t < t_ramp and t_ramp > 0.0:
        s *= 0.5 * (1.0 - math.cos(math.pi * t / t_ramp))
    return s


@njit(cache=True)
def _rhs(
    t, phi, v, u,
    i0, c1, c3_3, inv_phi0red,
    z_source, z_load, g_node,
    w_fac, bprime, c_upper,
    rc_mode, inv_r_leg, inv_c_leg,
    src_omega, src_amp, src_phase, t_ramp,
    il, d, out_dphi, out_dv, out_du,
):
    nb = phi.size
    nn = v.size
    for j in range(nb):
        ph = phi[j]
        il[j] = i0 * (c1 * ph - c3_3 * ph * ph * ph)
    vs = _source_voltage(t, src_omega, src_amp, src_phase, t_ramp)
    d[0] = (vs - v[0]) / z_source - il[0] - g_node[0] * v[0]
    for j in range(1, nn - 1):
        d[j] = il[j - 1] - il[j] - g_node[j] * v[j]
    d[nn - 1] = il[nb - 1] - v[nn - 1] / z_load - g_node[nn - 1] * v[nn - 1]
    if rc_mode == 1:
        for j in range(nn):
            ileg = (v[j] - u[j]) * inv_r_leg[j]
            d[j] -= ileg
            out_du[j] = ileg * inv_c_leg[j]
    # Thomas solve (factors precomputed): C * dv = d
    out_dv[0] = d[0]
    for j in range(1, nn):
        out_dv[j] = d[j] - w_fac[j] * out_dv[j - 1]
    out_dv[nn - 1] = out_dv[nn - 1] / bprime[nn - 1]
    for j in range(nn - 2, -1, -1):
        out_dv[j] = (out_dv[j] - c_upper * out_dv[j + 1]) / bprime[j]
    for j in range(nb):
        out_dphi[j] = (v[j] - v[j + 1]) * inv_phi0red


@njit(cache=True)
def run_ladder(
    nsteps, dt,
    phi, v, u,
    i0, c1, c3_3, inv_phi0red,
    z_source, z_load, g_node,
    w_fac, bprime, c_upper,
    rc_mode, inv_r_leg, inv_c_leg,
    src_omega, src_amp, src_phase, t_ramp,
    vin, vout,
):
    """Fixed-step RK4 over nsteps. Records node-0 / node-N voltages at every
    step time (nsteps+1 samples). Returns -1 on success or the step index
    at which the state diverged (|v| > 1 kV or non-finite)."""
    nb = phi.size
    nn = v.size
    il = np.empty(nb)
    d = np.empty(nn)
    k1p = np.empty(nb); k2p = np.empty(nb); k3p = np.empty(nb); k4p = np.empty(nb)
    k1v = np.empty(nn); k2v = np.empty(nn); k3v = np.empty(nn); k4v = np.empty(nn)
    k1u = np.empty(nn); k2u = np.empty(nn); k3u = np.empty(nn); k4u = np.empty(nn)
    yp = np.empty(nb); yv = np.empty(nn); yu = np.empty(nn)
    for j in range(nn):
        k1u[j] = 0.0; k2u[j] = 0.0; k3u[j] = 0.0; k4u[j] = 0.0

    vin[0] = v[0]
    vout[0] = v[nn - 1]
    half = 0.5 * dt
    sixth = dt / 6.0
    for step in range(nsteps):
        t = step * dt
        _rhs(t, phi, v, u, i0, c1, c3_3, inv_phi0red, z_source, z_load,
             g_node, w_fac, bprime, c_upper, rc_mode, inv_r_leg, inv_c_leg,
             src_omega, src_amp, src_phase, t_ramp, il, d, k1p, k1v, k1u)
        for j in range(nb):
            yp[j] = phi[j] + half * k1p[j]
        for j in range(nn):
            yv[j] = v[j] + half * k1v[j]
            yu[j] = u[j] + half * k1u[j]
        _rhs(t + half, yp, yv, yu, i0, c1, c3_3, inv_phi0red, z_source, z_load,
             g_node, w_fac, bprime, c_upper, rc_mode, inv_r_leg, inv_c_leg,
             src_omega, src_amp, src_phase, t_ramp, il, d, k2p, k2v, k2u)
        for j in range(nb):
            yp[j] = phi[j] + half * k2p[j]
        for j in range(nn):
            yv[j] = v[j] + half * k2v[j]
            yu[j] = u[j] + half * k2u[j]
        _rhs(t + half, yp, yv, yu, i0, c1, c3_3, inv_phi0red, z_source, z_load,
             g_node, w_fac, bprime, c_upper, rc_mode, inv_r_leg, inv_c_leg,
             src_omega, src_amp, src_phase, t_ramp, il, d, k3p, k3v, k3u)
        for j in range(nb):
            yp[j] = phi[j] + dt * k3p[j]
        for j in range(nn):
            yv[j] = v[j] + dt * k3v[j]
            yu[j] = u[j] + dt * k3u[j]
        _rhs(t + dt, yp, yv, yu, i0, c1, c3_3, inv_phi0red, z_source, z_load,
             g_node, w_fac, bprime, c_upper, rc_mode, inv_r_leg, inv_c_leg,
             src_omega, src_amp, src_phase, t_ramp, il, d, k4p, k4v, k4u)
        for j in range(nb):
            phi[j] += sixth * (k1p[j] + 2.0 * (k2p[j] + k3p[j]) + k4p[j])
        for j in range(nn):
            v[j] += sixth * (k1v[j] + 2.0 * (k2v[j] + k3v[j]) + k4v[j])
        if rc_mode == 1:
            for j in range(nn):
                u[j] += sixth * (k1u[j] + 2.0 * (k2u[j] + k3u[j]) + k4u[j])
        vin[step + 1] = v[0]
        vout[step + 1] = v[nn - 1]
        if step % 256 == 0:
            for j in range(nn):
                x = v[j]
                if not (x == x) or abs(x) > 1.0e3:
                    return step
    return -1
