import numpy as np
import pytest

from crcontrol import closedloop as cl
from crcontrol import design as dg
from crcontrol import stability as st
from crcontrol.errors import BlsUnstableError
from crcontrol.lti import TransferFunction, lag, lead, mass_plant, msd_plant


def positive_combination_exists(report, betas=np.geomspace(1e-6, 1e6, 600)):
    """Independent check: some positive mix of the two projections stays
    strictly positive over the whole grid."""
    return any(np.all(report.nx + b * report.ny > 0.0) for b in betas)


@pytest.fixture(scope="module")
def guideline_loop():
    return dg.guideline_preset(100.0)


class TestVerdicts:
    def test_guideline_inertia_loop_satisfied(self, guideline_loop):
        report = cl.hbeta_of_loop(guideline_loop)
        assert report.satisfied
        assert positive_combination_exists(report)

    def test_guideline_stage_loop_satisfied(self):
        loop = dg.guideline_preset(300.0, plant=msd_plant())
        report = cl.hbeta_of_loop(loop)
        assert report.satisfied
        assert positive_combination_exists(report)

    def test_slow_reset_lag_violates(self):
        # reset corner far below crossover: stable base loop, failed test
        loop = dg.make_loop(100.0, "cglp", gamma=0.0, wr_ratio=0.3)
        report = cl.hbeta_of_loop(loop)
        assert not report.satisfied
        assert not positive_combination_exists(report)
        assert report.violating_omega.size > 0

    def test_identity_reset_linear_loop_matches_oracle(self):
        loop = dg.make_loop(100.0, "cglp", gamma=1.0, wr_ratio=1.2)
        report = cl.hbeta_of_loop(loop)
        assert report.satisfied == positive_combination_exists(report)

    def test_unstable_base_loop_rejected(self):
        # plain PI on a double integrator cannot be closed stably
        pid = TransferFunction((10.0, 1.0), (0.0, 1.0))

        def o_frf(w):
            return complex(pid.freq_response(w) * mass_plant().freq_response(w))

        grid = st.default_hbeta_grid(100.0)
        with pytest.raises(BlsUnstableError):
            st.hbeta_check(o_frf, lambda w: 1.0 + 0.0j, grid, integrators=3)


class TestReportProperties:
    def test_angle_scale_invariance(self, guideline_loop):
        report = cl.hbeta_of_loop(guideline_loop)
        doubled = np.degrees(np.arctan2(2.0 * report.ny, 2.0 * report.nx))
        assert np.max(np.abs(doubled - report.angles_deg)) == 0.0

    def test_nested_grid_only_widens(self, guideline_loop):
        o = cl.bls_open_loop_frf(guideline_loop)
        c = cl.reset_base_frf(guideline_loop)
        q = cl.loop_integrator_count(guideline_loop)
        coarse = st.default_hbeta_grid(100.0, points=400)
        fine = np.unique(np.concatenate([coarse, np.sqrt(coarse[:-1] * coarse[1:])]))
        ra = st.hbeta_check(o, c, coarse, integrators=q)
        rb = st.hbeta_check(o, c, fine, integrators=q)
        assert rb.theta1 <= ra.theta1 + 1e-12
        assert rb.theta2 >= ra.theta2 - 1e-12

    def test_wrapper_addition_barely_moves_angles(self, guideline_loop):
        loop = guideline_loop
        o = cl.bls_open_loop_frf(loop)
        c = cl.reset_base_frf(loop)
        q = cl.loop_integrator_count(loop)
        grid = st.default_hbeta_grid(100.0)
        base = st.hbeta_check(o, c, grid, integrators=q)
        wrap = lead(loop.wl, 1e8), lag(loop.wl)

        def o_wrapped(w):
            return o(w) * complex(wrap[0].freq_response(w) * wrap[1].freq_response(w))

        added = st.hbeta_check(o_wrapped, c, grid, integrators=q)
        assert abs(added.theta1 - base.theta1) < 0.1
        assert abs(added.theta2 - base.theta2) < 0.1

    def test_margins_and_csv(self, guideline_loop, tmp_path):
        report = cl.hbeta_of_loop(guideline_loop)
        assert report.margins["theta1_to_lower"] > 0.0
        assert report.margins["theta2_to_upper"] > 0.0
        assert report.margins["spread_to_limit"] > 0.0
        path = tmp_path / "stab.csv"
        report.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "omega,Nx,Ny,angle_deg"
        assert len(lines) == 1 + report.omega.size
        assert "satisfied" in report.summary()


class TestWindingCount:
    def test_agrees_with_eigenvalues_on_stable_loop(self):
        loop = dg.make_loop(100.0, "bls")
        frf = cl.bls_open_loop_frf(loop)
        grid = st.default_hbeta_grid(100.0)
        w = st.nyquist_winding(frf, grid, integrators=cl.loop_integrator_count(loop))
        assert round(w) == 0

    def test_flags_gain_flipped_loop(self):
        loop = dg.make_loop(100.0, "bls")
        frf = cl.bls_open_loop_frf(loop)
        grid = st.default_hbeta_grid(100.0)
        w = st.nyquist_winding(
            lambda om: -frf(om), grid, integrators=cl.loop_integrator_count(loop)
        )
        assert round(w) != 0
