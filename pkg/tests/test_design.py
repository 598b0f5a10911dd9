import math

import numpy as np
import pytest

import crcontrol.harmonics as hm
from crcontrol import closedloop as cl
from crcontrol import design as dg
from crcontrol.errors import DesignError
from crcontrol.lti import msd_plant


class TestDesignCglp:
    def test_vanishing_lead_is_the_linear_limit(self):
        d = dg.design_cglp(100.0, 0.01)
        assert d.gamma == pytest.approx(1.0, abs=1e-3)
        assert d.alpha == pytest.approx(1.0, abs=0.01)

    def test_reported_element_meets_the_target(self):
        d = dg.design_cglp(100.0, 15.0, wr_ratio=1.0, wf_ratio=15.0)
        pa = hm.phase_advantage(d.gamma, d.wr, 100.0)
        assert pa == pytest.approx(15.0, abs=0.5)
        # unit element gain at the design frequency
        h1 = hm.hosidf(d.reset_element(), 100.0, 1)
        assert abs(h1 * d.dlead().freq_response(100.0)) == pytest.approx(1.0, abs=1e-9)

    def test_tabulated_element_sits_near_its_published_coefficient(self):
        # the 15-degree design at matched corners lands close to 0.11
        d = dg.design_cglp(100.0, 16.4, wr_ratio=1.0, wf_ratio=15.0)
        assert d.gamma == pytest.approx(0.11, abs=0.05)

    def test_unachievable_lead_reports_ceiling(self):
        with pytest.raises(DesignError) as info:
            dg.design_cglp(100.0, 45.0, wr_ratio=1.2)
        assert info.value.max_achievable_pa == pytest.approx(28.7, abs=1.0)

    def test_full_reset_band_supports_thirty_degrees(self):
        for ratio in (1.0, 1.2):
            ceiling = hm.phase_advantage(-1.0, ratio * 100.0, 100.0)
            if ratio == 1.0:
                assert ceiling >= 30.0
        d = dg.design_cglp(100.0, 30.0, wr_ratio=1.0)
        assert -1.0 <= d.gamma <= 1.0

    def test_round_trip_through_the_loop(self):
        loop = dg.make_loop(100.0, "cr-cglp", pm=18.0)
        assert cl.phase_margin(loop) == pytest.approx(18.0, abs=0.5)

    def test_gamma_unique_over_the_range(self):
        pas = [hm.phase_advantage(g, 120.0, 100.0) for g in np.linspace(-1.0, 1.0, 81)]
        assert all(b < a for a, b in zip(pas, pas[1:]))


class TestGuidelinePreset:
    def test_band_midpoints(self):
        loop = dg.guideline_preset(100.0)
        assert loop.wl == pytest.approx(45.0)
        assert loop.wh == pytest.approx(2000.0)
        corners = sorted(abs(r) for r in np.polynomial.polynomial.polyroots(loop.dlead.den))
        assert corners[-1] == pytest.approx(2000.0)
        reset_pole = abs(np.linalg.eigvals(loop.reset_elem.base.A)[0])
        assert reset_pole == pytest.approx(120.0)
        assert cl.phase_margin(loop) == pytest.approx(20.0, abs=1e-6)

    def test_stability_verdicts(self):
        assert cl.hbeta_of_loop(dg.guideline_preset(100.0)).satisfied
        assert cl.hbeta_of_loop(dg.guideline_preset(300.0, plant=msd_plant())).satisfied

    def test_transient_beats_the_plain_loop(self):
        loop = dg.guideline_preset(100.0)
        _, metrics = cl.step_response(loop, 1.0)
        bls = dg.make_loop(100.0, "bls")
        _, base = cl.step_response(bls, 1.0)
        assert metrics.overshoot <= 0.05
        assert metrics.settling_time < base.settling_time


@pytest.fixture(scope="module")
def sweep():
    return dg.sweep_transient(
        100.0, [10.0, 14.0, 18.0, 22.0], list(np.geomspace(0.1, 1.0, 4))
    )


class TestTransientSweep:

    def test_reference_cell_is_the_plain_loop(self, sweep):
        assert sweep.reference["overshoot"] == pytest.approx(0.962, abs=0.02)
        assert sweep.reference["pm"] == pytest.approx(5.0, abs=0.4)

    def test_overshoot_monotonicity(self, sweep):
        tol = 0.01  # one percentage point
        by_pm = {}
        for row in sweep.rows:
            by_pm.setdefault(row["axis1"], []).append((row["axis2"], row["overshoot"]))
        for pm, cells in by_pm.items():
            cells.sort()
            os_vals = [v for _, v in cells]
            assert all(b >= a - tol for a, b in zip(os_vals, os_vals[1:]))
        by_wl = {}
        for row in sweep.rows:
            by_wl.setdefault(row["axis2"], []).append((row["axis1"], row["overshoot"]))
        for wl, cells in by_wl.items():
            cells.sort()
            os_vals = [v for _, v in cells]
            assert all(b <= a + tol for a, b in zip(os_vals, os_vals[1:]))

    def test_fitted_plane_recovers_published_coefficients(self, sweep):
        fit = dg.fit_overshoot_plane(sweep)
        assert fit["coef_log_wl"] == pytest.approx(0.95, rel=0.25)
        assert fit["coef_pm"] == pytest.approx(-0.04, rel=0.25)
        assert fit["intercept"] == pytest.approx(1.25, rel=0.25)
        assert fit["rms_residual"] <= 0.05

    def test_settling_minimum_in_the_recommended_band(self, sweep):
        ok = [r for r in sweep.rows if not r["failed"]]
        best = min(ok, key=lambda r: r["settling_s"])
        assert 0.3 <= best["axis2"] <= 0.6
        assert best["axis1"] >= 20.0

    def test_csv_export(self, sweep, tmp_path):
        path = tmp_path / "sweep.csv"
        sweep.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "axis1,axis2,overshoot,settling_s,failed"
        assert len(lines) == 1 + len(sweep.rows)

    def test_worker_pool_merge_is_deterministic(self):
        seq = dg.sweep_transient(100.0, [14.0, 20.0], [0.3, 0.6])
        par = dg.sweep_transient(100.0, [14.0, 20.0], [0.3, 0.6], workers=2)
        for a, b in zip(seq.rows, par.rows):
            assert a["axis1"] == b["axis1"] and a["axis2"] == b["axis2"]
            assert a["overshoot"] == pytest.approx(b["overshoot"], abs=1e-12)


class TestSettlingSweetSpot:
    def test_wrapped_settles_no_slower_than_bare_at_same_margin(self):
        for pm in (20.0, 24.0):
            wrapped = dg.make_loop(100.0, "cr-cglp", pm=pm, wl_ratio=0.45)
            bare = dg.make_loop(100.0, "cglp", pm=pm)
            _, mw = cl.step_response(wrapped, 1.0)
            _, mb = cl.step_response(bare, 1.0)
            assert mw.settling_time <= mb.settling_time


class TestHarmonicSweep:
    def test_trend_and_zero_row(self):
        ratios = np.linspace(0.5, 1.5, 5)
        sw = dg.sweep_harmonics(-1.0, ratios, 100.0)
        vals = [r["integral"] for r in sw.rows]
        assert all(b < a for a, b in zip(vals, vals[1:]))
        sw1 = dg.sweep_harmonics(1.0, ratios, 100.0)
        assert all(abs(r["integral"]) < 1e-12 for r in sw1.rows)

    def test_lead_ceiling_falls_past_the_crossover(self):
        pa1 = hm.phase_advantage(-1.0, 100.0, 100.0)
        pa2 = hm.phase_advantage(-1.0, 200.0, 100.0)
        assert pa1 >= pa2


class TestGainVariation:
    def test_directions(self):
        pid_loop = dg.make_loop(
            2.0 * math.pi * 100.0,
            "bls",
            plant=msd_plant(),
            pid_ratios=(0.1, 1.0 / 2.5, 2.5),
            wz_ratio=5.0,
        )
        cr_loop = dg.guideline_preset(2.0 * math.pi * 100.0, plant=msd_plant())
        rec_pid = dg.gain_variation_experiment(pid_loop, 5.0)
        rec_cr = dg.gain_variation_experiment(cr_loop, 5.0)
        assert rec_pid.pm_change < 0.0
        assert rec_cr.pm_change > 0.0
        # +5 dB moves the crossover of a near-inertia loop to about 1.5x
        assert rec_pid.wc_after / rec_pid.wc_before == pytest.approx(1.5, abs=0.15)

    def test_zero_delta_is_identity(self):
        loop = dg.guideline_preset(100.0)
        rec = dg.gain_variation_experiment(loop, 0.0)
        assert rec.pm_change == pytest.approx(0.0, abs=1e-9)
        assert rec.wc_after == pytest.approx(rec.wc_before, rel=1e-9)


@pytest.fixture(scope="module")
def loops():
    return dg.practical_controllers()


class TestPracticalControllers:

    def test_margins_match_reported_values(self, loops):
        assert cl.phase_margin(loops["pid1"]) == pytest.approx(15.0, abs=1.0)
        assert cl.phase_margin(loops["pid2"]) == pytest.approx(35.0, abs=2.0)
        assert cl.phase_margin(loops["cr-cglp"]) == pytest.approx(25.0, abs=1e-6)

    def test_overshoot_ordering(self, loops):
        os = {}
        for name, loop in loops.items():
            _, metrics = cl.step_response(loop, 0.15)
            os[name] = metrics.overshoot
        assert os["cr-cglp"] < os["cglp"] < os["pid2"] < os["pid1"]
        assert os["cr-cglp"] <= 0.10
        assert os["pid1"] >= 0.30
