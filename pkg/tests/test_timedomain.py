import math

import numpy as np
import pytest

from twpakit import cellmodel as cm
from twpakit import cme
from twpakit import dispersion as dsp
from twpakit import timedomain as td
from twpakit.cellmodel import FluxBias
from twpakit.errors import SimulationError, ValidationError

WP = 2 * math.pi * 6e9


def small_ladder(p, flux, n=32, loss="off", anchor=WP, **kw):
    return td.LadderConfig(
        p=p, flux=FluxBias(flux), n_cells=n, loss_mode=loss,
        loss_anchor_omega=anchor if loss != "off" else None,
        t_total=kw.pop("t_total", 60e-9), **kw,
    )


def synth_record(amps, freqs, phases, dt=1e-12, n=200_000, t0=3e-9):
    t = t0 + dt * np.arange(n)
    v = np.zeros(n)
    for a, f, ph in zip(amps, freqs, phases):
        v += a * np.cos(2 * math.pi * f * t + ph)
    return td.PortRecord(t0=t0, dt=dt, v_in=v.copy(), v_out=v)


class TestConfigValidation:
    def test_dt_stability_bound(self, fitted_a):
        with pytest.raises(ValidationError):
            td.LadderConfig(p=fitted_a, flux=FluxBias(0.5), n_cells=16,
                            loss_mode="off", dt=1e-11, t_total=50e-9)

    def test_t_total_transit_bound(self, fitted_a):
        with pytest.raises(ValidationError):
            td.LadderConfig(p=fitted_a, flux=FluxBias(0.5), n_cells=865,
                            loss_mode="off", t_total=1e-9)

    def test_loss_anchor_required(self, fitted_a):
        with pytest.raises(ValidationError):
            td.LadderConfig(p=fitted_a, flux=FluxBias(0.5), n_cells=16,
                            loss_mode="fixed-at-pump")
        with pytest.raises(ValidationError):
            td.LadderConfig(p=fitted_a, flux=FluxBias(0.5), n_cells=16,
                            loss_mode="dielectric")

    def test_defaults(self, fitted_a):
        cfg = td.LadderConfig(p=fitted_a, flux=FluxBias(0.5), n_cells=350,
                              loss_mode="off")
        f_pl = dsp.plasma_frequency(0.5, fitted_a) / (2 * math.pi)
        assert cfg.dt == pytest.approx(1 / (64 * f_pl))
        assert cfg.t_total >= 250e-9

    def test_tone_validation(self):
        with pytest.raises(ValidationError):
            td.ToneSource(((WP, -80.0, 0.0), (WP, -90.0, 0.0)))
        with pytest.raises(ValidationError):
            td.ToneSource(((-WP, -80.0, 0.0),))


class TestRunTransient:
    def test_zero_sources(self, fitted_a):
        cfg = small_ladder(fitted_a, 0.5, n=16, t_total=20e-9)
        rec = td.run_transient(cfg, td.ToneSource(()))
        assert np.all(rec.v_in == 0.0)
        assert np.all(rec.v_out == 0.0)

    def test_matched_linear_transmission(self, fitted_b):
        # matched lossless line: output amplitude = input amplitude to 1%
        z0 = cm.characteristic_impedance(0.0, 0.5, fitted_b)
        cfg = td.LadderConfig(p=fitted_b, flux=FluxBias(0.5), n_cells=32,
                              z_source=z0, z_load=z0, loss_mode="off",
                              t_total=60e-9)
        w = 2 * math.pi * 3e9
        rec = td.run_transient(cfg, td.ToneSource(((w, -100.0, 0.0),)))
        a_in = abs(td.tone_phasor(rec, w, side="in"))
        a_out = abs(td.tone_phasor(rec, w, side="out"))
        assert a_out == pytest.approx(a_in, rel=0.01)

    def test_long_line_matches_network_model(self, fitted_a):
        # 865 cells with fixed-at-pump loss against the cascade solution
        cfg = td.LadderConfig(p=fitted_a, flux=FluxBias(0.5), n_cells=865,
                              loss_mode="fixed-at-pump",
                              loss_anchor_omega=WP, t_total=50e-9)
        rec = td.run_transient(cfg, td.ToneSource(((WP, -110.0, 0.0),)))
        s21_td = td.extract_tone_power(rec, WP, 50.0) - (-110.0)
        ref = dsp.linear_s21(
            dsp.FrequencyGrid(np.array([WP])), 0.5, fitted_a, 865, 50.0, 50.0,
            loss_model="fixed", loss_anchor_omega=WP,
        ).mag_db[0]
        assert s21_td == pytest.approx(ref, abs=1.0)
        assert ref == pytest.approx(-2.1, abs=0.3)

    def test_pump_off_band_matches_network_model(self, fitted_b):
        # reciprocity of the linear ladder across the band, loss consistent
        cfg = small_ladder(fitted_b, 0.45, n=32, loss="fixed-at-pump")
        for f_ghz in (3.0, 6.0, 9.0):
            w = 2 * math.pi * f_ghz * 1e9
            rec = td.run_transient(cfg, td.ToneSource(((w, -105.0, 0.0),)))
            s21_td = td.extract_tone_power(rec, w, 50.0) + 105.0
            ref = dsp.linear_s21(
                dsp.FrequencyGrid(np.array([w])), 0.45, fitted_b, 32,
                50.0, 50.0, loss_model="fixed", loss_anchor_omega=WP,
            ).mag_db[0]
            assert s21_td == pytest.approx(ref, abs=1.0)

    def test_rc_loss_mode_matches_network_model(self, fitted_b):
        cfg = small_ladder(fitted_b, 0.5, n=32, loss="per-cell-rc")
        rec = td.run_transient(cfg, td.ToneSource(((WP, -105.0, 0.0),)))
        ref = dsp.linear_s21(
            dsp.FrequencyGrid(np.array([WP])), 0.5, fitted_b, 32, 50.0, 50.0,
            loss_model="rc", loss_anchor_omega=WP,
        ).mag_db[0]
        assert td.extract_tone_power(rec, WP, 50.0) + 105.0 == pytest.approx(
            ref, abs=0.1
        )

    def test_energy_bound_pump_off(self, fitted_b):
        # lossless passive line: output tone power below available power
        cfg = small_ladder(fitted_b, 0.5, n=24, t_total=40e-9)
        w = 2 * math.pi * 4e9
        rec = td.run_transient(cfg, td.ToneSource(((w, -90.0, 0.0),)))
        assert td.extract_tone_power(rec, w, 50.0) <= -90.0 + 1e-3
        assert np.all(np.isfinite(rec.v_out))

    def test_step_halving_convergence(self, fitted_b):
        cfg = small_ladder(fitted_b, 0.45, n=24, t_total=40e-9)
        w = 2 * math.pi * 5e9
        src = td.ToneSource(((w, -95.0, 0.0),))
        p1 = td.extract_tone_power(td.run_transient(cfg, src), w, 50.0)
        cfg2 = td.LadderConfig(p=fitted_b, flux=FluxBias(0.45), n_cells=24,
                               loss_mode="off", dt=cfg.dt / 2,
                               t_total=40e-9)
        p2 = td.extract_tone_power(td.run_transient(cfg2, src), w, 50.0)
        assert abs(p1 - p2) < 0.02

    def test_blow_up_detection(self, fitted_a):
        cfg = small_ladder(fitted_a, 0.0, n=16, t_total=20e-9)
        with pytest.raises(SimulationError) as exc:
            td.run_transient(cfg, td.ToneSource(((WP, 20.0, 0.0),)))
        assert exc.value.step is not None and exc.value.step >= 0

    def test_record_csv(self, tmp_path, fitted_b):
        cfg = small_ladder(fitted_b, 0.5, n=16, t_total=20e-9)
        rec = td.run_transient(cfg, td.ToneSource(((WP, -100.0, 0.0),)))
        path = tmp_path / "rec.csv"
        rec.to_csv(path)
        assert path.read_text().splitlines()[0] == "t_s,v_in,v_out"


class TestTonePower:
    def test_pure_sinusoid_exact(self):
        amp = 2.4e-5
        rec = synth_record([amp], [4.07e9], [0.7])
        got = td.extract_tone_power(rec, 2 * math.pi * 4.07e9, 50.0)
        expected = 10 * math.log10(amp**2 / (2 * 50.0) / 1e-3)
        assert got == pytest.approx(expected, abs=0.01)

    def test_two_tones_independent(self):
        a1, a2 = 3e-5, 9e-6
        rec = synth_record([a1, a2], [4.0e9, 4.5e9], [0.0, 1.1])
        p1 = td.extract_tone_power(rec, 2 * math.pi * 4.0e9, 50.0)
        p2 = td.extract_tone_power(rec, 2 * math.pi * 4.5e9, 50.0)
        assert p1 == pytest.approx(
            10 * math.log10(a1**2 / 100.0 / 1e-3), abs=0.05
        )
        assert p2 == pytest.approx(
            10 * math.log10(a2**2 / 100.0 / 1e-3), abs=0.05
        )

    def test_dc_record(self):
        # no tone detected on a DC record: power at the window leakage
        # floor, far below any physical signal (a 1 V DC level is +10 dBm)
        rec = td.PortRecord(t0=0.0, dt=1e-12, v_in=np.ones(100_000),
                            v_out=np.ones(100_000))
        assert td.extract_tone_power(rec, 2 * math.pi * 5e9, 50.0) < -120.0
        rec0 = td.PortRecord(t0=0.0, dt=1e-12, v_in=np.zeros(100_000),
                             v_out=np.zeros(100_000))
        assert td.extract_tone_power(rec0, 2 * math.pi * 5e9, 50.0) == -math.inf

    def test_short_record_rejected(self):
        rec = synth_record([1e-5], [1e9], [0.0], n=5000)  # 5 periods
        with pytest.raises(ValidationError):
            td.extract_tone_power(rec, 2 * math.pi * 1e9, 50.0)


class TestSimulateGain:
    def test_zero_pump_gain(self, fitted_b):
        cfg = small_ladder(fitted_b, 0.45, n=24, t_total=50e-9)
        op = cme.OperatingPoint(FluxBias(0.45), WP, -math.inf, 24)
        grid = dsp.FrequencyGrid(2 * math.pi * np.array([3e9, 4.5e9]))
        gp = td.simulate_gain(cfg, op, -110.0, grid)
        assert np.max(np.abs(gp.gain_db)) < 0.05

    def test_signal_pump_separation_enforced(self, fitted_b):
        cfg = small_ladder(fitted_b, 0.45, n=24)
        op = cme.OperatingPoint(FluxBias(0.45), WP, -80.0, 24)
        grid = dsp.FrequencyGrid(np.array([2 * math.pi * 4e9]))
        with pytest.raises(ValidationError):
            td.simulate_gain(cfg, op, -85.0, grid)

    def test_mixing_products_are_odd_order(self, fitted_b):
        # strong pump + signal: idler 2wp-ws, image 2wp+ws and 3wp appear;
        # the uniform odd-symmetric line generates no tone at exactly 2wp
        flux = 0.45
        n = 64
        cfg = small_ladder(fitted_b, flux, n=n, t_total=80e-9)
        op = cme.OperatingPoint(FluxBias(flux), WP, -78.0, n)
        cal = td.calibrate_transient_pump(cfg, op, 1.5)
        ws = 2 * math.pi * 4.3e9
        rec = td.run_transient(
            cfg, td.ToneSource(((WP, cal.pump_dbm, 0.0), (ws, cal.pump_dbm - 25.0, 0.0)))
        )
        p_sig = td.extract_tone_power(rec, ws, 50.0)
        p_idler = td.extract_tone_power(rec, 2 * WP - ws, 50.0)
        p_image = td.extract_tone_power(rec, 2 * WP + ws, 50.0)
        p_3wp = td.extract_tone_power(rec, 3 * WP, 50.0)
        p_2wp = td.extract_tone_power(rec, 2 * WP, 50.0)
        assert p_idler > p_sig - 25.0
        assert p_image > -190.0
        assert p_3wp > -190.0
        assert p_2wp < p_3wp - 30.0


class TestCompression:
    def test_kerr_free_ladder_not_compressed(self, fitted_b):
        flux = cm.kerr_free_flux(fitted_b)
        n = 24
        cfg = small_ladder(fitted_b, flux, n=n, t_total=50e-9)
        op = cme.OperatingPoint(FluxBias(flux), WP, -70.0, n)
        res = td.compression_sweep(
            cfg, op, 2 * math.pi * 4e9,
            np.arange(-110.0, -89.0, 4.0), pump_dbm=-70.0,
        )
        assert res.p1db_dbm is None
        assert abs(res.small_signal_gain_db) < 0.2

    def test_power_grid_validation(self, fitted_b):
        cfg = small_ladder(fitted_b, 0.45, n=24)
        op = cme.OperatingPoint(FluxBias(0.45), WP, -70.0, 24)
        with pytest.raises(ValidationError):
            td.compression_sweep(cfg, op, 2 * math.pi * 4e9, [-100.0, -95.0])

    def test_p1db_rises_as_gain_drops(self, fitted_b):
        # two pump settings on a short ladder: the setting with the lower
        # small-signal gain compresses later (higher p1db)
        flux, n = 0.45, 96
        cfg = small_ladder(fitted_b, flux, n=n, t_total=60e-9)
        op = cme.OperatingPoint(FluxBias(flux), WP, -70.0, n)
        powers = np.arange(-105.0, -69.0, 5.0)
        w_s = 2 * math.pi * 4.5e9
        results = []
        for theta in (1.0, 1.6):
            cal = td.calibrate_transient_pump(cfg, op, theta)
            results.append(
                td.compression_sweep(cfg, op, w_s, powers,
                                     pump_dbm=cal.pump_dbm)
            )
        lo_gain, hi_gain = sorted(results, key=lambda r: r.small_signal_gain_db)
        assert hi_gain.small_signal_gain_db > lo_gain.small_signal_gain_db + 0.5
        assert hi_gain.p1db_dbm is not None and lo_gain.p1db_dbm is not None
        assert lo_gain.p1db_dbm > hi_gain.p1db_dbm


class TestCalibrateTransientPump:
    def test_reaches_target(self, fitted_b):
        cfg = small_ladder(fitted_b, 0.45, n=48, t_total=60e-9)
        op = cme.OperatingPoint(FluxBias(0.45), WP, -78.0, 48)
        cal = td.calibrate_transient_pump(cfg, op, 1.0)
        assert cal.theta_nl == pytest.approx(1.0, rel=0.02)
