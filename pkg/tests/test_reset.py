import math

import numpy as np
import pytest

from crcontrol import hybridsim, reset
from crcontrol.errors import RealizationError, SimConfigError
from crcontrol.hybridsim import HybridSimConfig
from crcontrol.lti import lead


def sin_drive(w=1.0):
    return lambda t: np.sin(w * np.asarray(t, dtype=float))


class TestElements:
    def test_gamma_range_enforced(self):
        with pytest.raises(RealizationError):
            reset.fore(100.0, 1.5)

    def test_wrapper_corner_order(self):
        with pytest.raises(RealizationError):
            reset.CrElement(reset.clegg(0.0), wl=100.0, wh=10.0)


class TestConfig:
    def test_invariants(self):
        with pytest.raises(SimConfigError):
            HybridSimConfig(step=-1.0, duration=1.0)
        with pytest.raises(SimConfigError):
            HybridSimConfig(step=1e-3, duration=1.0, min_reset_gap=0)

    def test_step_limit_against_fastest_corner(self):
        cfg = HybridSimConfig(step=1e-3, duration=1.0, substeps=1)
        with pytest.raises(SimConfigError):
            cfg.resolve_substeps(1e4)

    def test_auto_substeps_respect_limit(self):
        cfg = HybridSimConfig(step=1e-4, duration=1.0)
        m = cfg.resolve_substeps(50265.0)
        assert (1e-4 / m) <= 2.0 * math.pi / (50.0 * 50265.0)


class TestIdentityReset:
    def test_matches_exact_linear_simulation(self):
        # identity jump map: the hybrid path must reproduce the pure linear
        # simulator (independent first-order-hold discretization)
        elem = reset.fore(100.0, 1.0)
        plan = reset.open_plan(elem, post_tfs=(lead(120.0, 2000.0),))
        cfg = HybridSimConfig(step=2.0 * math.pi / (200.0 * 2000.0), duration=0.5)
        t, sig, resets, _ = hybridsim.run_plan(plan, sin_drive(50.0), cfg)
        t2, lin = hybridsim.linear_sim(plan, sin_drive(50.0), cfg)
        for name in ("u", "x2"):
            rms = np.sqrt(np.mean((sig[name] - lin[name]) ** 2))
            assert rms < 1e-6

    def test_step_input_matches_linear(self):
        elem = reset.fore(100.0, 1.0)
        plan = reset.open_plan(elem)
        cfg = HybridSimConfig(step=2.0 * math.pi / (200.0 * 100.0), duration=0.4)
        ref = lambda t: np.ones_like(np.asarray(t, dtype=float))
        _, sig, _, _ = hybridsim.run_plan(plan, ref, cfg)
        _, lin = hybridsim.linear_sim(plan, ref, cfg)
        assert np.sqrt(np.mean((sig["u"] - lin["u"]) ** 2)) < 1e-9


class TestCleggResponse:
    def test_piecewise_closed_form(self):
        ci = reset.clegg(0.0)
        cfg = HybridSimConfig(step=2.0 * math.pi / 4000.0, duration=6.5)
        tr = reset.simulate_reset_open(ci, sin_drive(), cfg)
        # resets at every drive zero crossing
        assert tr.reset_times == pytest.approx([math.pi, 2.0 * math.pi], abs=1e-5)
        first = tr.t < math.pi - 0.01
        assert np.max(np.abs(tr.u[first] - (1.0 - np.cos(tr.t[first])))) < 1e-7
        second = (tr.t > math.pi + 0.01) & (tr.t < 2.0 * math.pi - 0.01)
        assert np.max(np.abs(tr.u[second] - (-1.0 - np.cos(tr.t[second])))) < 1e-6

    def test_wrapped_output_is_continuous(self):
        cr = reset.CrElement(reset.clegg(0.0), wl=10.0, wh=1e4)
        cfg = HybridSimConfig(step=2.0 * math.pi / (200.0 * 1e4), duration=7.0)
        tr = reset.simulate_reset_open(cr, sin_drive(), cfg)
        ratio_u, jump_u = reset.reset_jump_ratio(tr, tr.u)
        ratio_x2, jump_x2 = reset.reset_jump_ratio(tr, tr.x2)
        assert ratio_u <= 3.0
        assert jump_x2 > 1.0  # bare element output jumps by (1-gamma)*state
        assert ratio_x2 > 100.0

    def test_wrapped_jump_vanishes_with_step(self):
        cr = reset.CrElement(reset.clegg(0.0), wl=10.0, wh=1e4)
        jumps = []
        for step in (2.0 * math.pi / (200.0 * 1e4), math.pi / (200.0 * 1e4)):
            cfg = HybridSimConfig(step=step, duration=7.0)
            tr = reset.simulate_reset_open(cr, sin_drive(), cfg)
            jumps.append(reset.reset_jump_ratio(tr, tr.u)[1])
        assert jumps[1] < 0.7 * jumps[0]


class TestResetInstants:
    def test_low_frequency_limit(self):
        # far below the lead zero the trigger crossings approach the drive zeros
        pred = reset.reset_instants_predicted(10.0, 0.01, 1000.0)
        zeros = np.arange(1, len(pred) + 1) * math.pi / 0.01
        assert np.max(np.abs(pred - zeros) * 0.01) < 2e-3  # phase error < 0.002 rad

    def test_quarter_period_advance_at_corner(self):
        pred = reset.reset_instants_predicted(10.0, 10.0, 2.0)
        zeros = np.arange(1, len(pred) + 1) * math.pi / 10.0
        assert np.max(np.abs((zeros - pred) * 10.0 - math.pi / 4.0)) < 1e-12

    def test_simulation_matches_prediction(self):
        cr = reset.CrElement(reset.clegg(0.0), wl=10.0, wh=1e3)
        w = 10.0
        cfg = HybridSimConfig(step=2.0 * math.pi / (200.0 * 1e3), duration=1.0)
        tr = reset.simulate_reset_open(cr, sin_drive(w), cfg)
        pred = reset.reset_instants_predicted(10.0, w, 1.0, wh=1e3)
        n = min(len(pred), len(tr.reset_times))
        assert n >= 3
        assert np.max(np.abs(tr.reset_times[:n] - pred[:n])) < 2.0 * cfg.bisect_tol


class TestConvergence:
    def test_halving_contracts_trace_error(self):
        ci = reset.clegg(0.0)
        traces = {}
        for n in (200, 400, 800):
            cfg = HybridSimConfig(step=2.0 * math.pi / n, duration=4.0 * math.pi)
            traces[n] = reset.simulate_reset_open(ci, sin_drive(), cfg)
        d1 = np.sqrt(np.mean((traces[400].u[::2] - traces[200].u) ** 2))
        d2 = np.sqrt(np.mean((traces[800].u[::2] - traces[400].u) ** 2))
        assert d2 <= 0.7 * d1


class TestChatteringGuard:
    def test_fast_crossings_suppressed_and_counted(self):
        ci = reset.clegg(0.0)
        cfg = HybridSimConfig(step=1e-3, duration=0.5, min_reset_gap=50)
        tr = reset.simulate_reset_open(ci, sin_drive(200.0), cfg)
        # ~31 crossings in the window; the guard admits one per 50 steps
        assert len(tr.reset_times) <= 11
        assert tr.n_suppressed >= 15
        gaps = np.diff(tr.reset_times)
        assert np.all(gaps >= 50 * cfg.step - 1e-12)


class TestTraceExport:
    def test_csv_and_sidecar(self, tmp_path):
        ci = reset.clegg(0.0)
        cfg = HybridSimConfig(step=2.0 * math.pi / 2000.0, duration=2.0 * math.pi)
        tr = reset.simulate_reset_open(ci, sin_drive(), cfg)
        path = tmp_path / "trace.csv"
        tr.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "t,e,x1,x2,u,y,uc"
        sidecar = (tmp_path / "trace.resets.csv").read_text().splitlines()
        assert sidecar[0] == "t_reset"
        assert len(sidecar) == 1 + len(tr.reset_times)


class TestBackendParity:
    def test_python_engine_matches_selected_backend(self):
        from crcontrol import _engine_py

        elem = reset.fore(100.0, 0.11)
        plan = reset.open_plan(elem, post_tfs=(lead(100.0, 1500.0),))
        cfg = HybridSimConfig(step=2.0 * math.pi / (200.0 * 1500.0), duration=0.3)
        n_steps = int(round(cfg.duration / cfg.step))
        m = cfg.resolve_substeps(plan.w_max)
        nf = n_steps * m
        hf = cfg.step / m
        r_half = np.sin(100.0 * np.arange(2 * nf + 1) * 0.5 * hf)
        args = lambda: (
            plan.A,
            plan.b_r,
            plan.b_v,
            np.zeros(plan.n),
            plan.sig_c,
            plan.sig_dr,
            plan.cz,
            plan.dz,
            plan.cu,
            plan.du,
            plan.jump,
            plan.detect,
            r_half,
            hf,
            nf,
            m,
            0.0,
            cfg.bisect_tol / hf,
            cfg.min_reset_gap * m,
            np.zeros((plan.sig_c.shape[0], n_steps + 1)),
            np.zeros(nf + 1),
            np.zeros(nf + 2),
        )
        a_py = args()
        _engine_py.run_hybrid(*a_py)
        a_sel = args()
        hybridsim._engine.run_hybrid(*a_sel)
        assert np.max(np.abs(a_py[-3] - a_sel[-3])) < 1e-9
