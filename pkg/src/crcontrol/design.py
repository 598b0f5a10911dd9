"""Synthesis of constant-gain lead elements and the tuning studies built on
them: reset coefficient for a target phase advantage or loop phase margin,
corner-shift factor for unity gain, rule-of-thumb presets, transient and
harmonic sweeps, and the gain-variation comparison.
"""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import closedloop as cl
from .errors import BracketError, DesignError
from .harmonics import hosidf, phase_advantage, third_harmonic_integral
from .hybridsim import HybridSimConfig
from .lti import lag, lead, mass_plant, pid_preset
from .numerics import find_root
from .reset import fore

__all__ = [
    "CglpDesign",
    "design_cglp",
    "guideline_preset",
    "make_loop",
    "solve_gamma_for_pm",
    "SweepResult",
    "sweep_transient",
    "sweep_harmonics",
    "fit_overshoot_plane",
    "predicted_overshoot",
    "practical_controllers",
    "GainVariationRecord",
    "gain_variation_experiment",
]


@dataclass(frozen=True)
class CglpDesign:
    """Solved constant-gain lead element parameters.

    ``flatness_db`` reports the largest DF-gain deviation from unity over
    the octave on each side of ``wc``; the gain is exactly 1 at ``wc`` but
    drifts with reset strength (about 2 dB at full reset), so it is a
    diagnostic, not a constraint.
    """

    wc: float
    target_pa: float
    gamma: float
    wr: float
    alpha: float
    wf: float
    wl: float = None
    wh: float = None
    flatness_db: float = None

    @property
    def wra(self):
        return self.alpha * self.wr

    def reset_element(self):
        return fore(self.wr, self.gamma)

    def dlead(self):
        return lead(self.wra, self.wf)


def _solve_alpha(gamma, wr, wf, wc):
    """Corner-shift factor putting the element DF at exactly unit gain at wc."""
    h1 = hosidf(fore(wr, gamma), wc, 1)

    def gain_err(a):
        return abs(h1 * lead(a * wr, wf).freq_response(wc)) - 1.0

    return find_root(gain_err, 1e-3, 1e3, 1e-12)


def design_cglp(wc, pa, wr_ratio=1.2, wf_ratio=20.0, cr=None):
    """Reset lag + phase lead giving ``pa`` degrees of extra DF phase at ``wc``.

    The phase advantage is measured against the element's no-reset limit;
    the corner-shift factor is solved so the element DF has unit gain at
    ``wc`` for the solved reset coefficient. ``cr`` optionally carries
    ``(wl, wh)`` for the continuous-output wrapper (which leaves the DF
    untouched, so the solve is identical).
    """
    wr = wr_ratio * wc
    wf = wf_ratio * wc
    max_pa = phase_advantage(-1.0, wr, wc)
    if pa < 0.0 or pa >= max_pa:
        raise DesignError(
            f"phase advantage {pa:g} deg unachievable for wr/wc={wr_ratio:g}: "
            f"maximum is {max_pa:.2f} deg",
            max_achievable_pa=max_pa,
        )

    def pa_err(g):
        return phase_advantage(g, wr, wc) - pa

    gamma = find_root(pa_err, -1.0, 1.0, 1e-11)
    alpha = _solve_alpha(gamma, wr, wf, wc)
    band = np.geomspace(wc / 2.0, 2.0 * wc, 17)
    dlead_tf = lead(alpha * wr, wf)
    mags = np.array(
        [abs(hosidf(fore(wr, gamma), w, 1) * dlead_tf.freq_response(w)) for w in band]
    )
    flatness = float(np.max(np.abs(20.0 * np.log10(mags))))
    wl, wh = (cr if cr is not None else (None, None))
    return CglpDesign(
        wc=wc,
        target_pa=pa,
        gamma=gamma,
        wr=wr,
        alpha=alpha,
        wf=wf,
        wl=wl,
        wh=wh,
        flatness_db=flatness,
    )


def make_loop(
    wc,
    topology,
    *,
    plant=None,
    gamma=None,
    pm=None,
    wr_ratio=1.2,
    wl_ratio=0.45,
    wh_ratio=20.0,
    wf_ratio=20.0,
    wz_ratio=None,
    pid_ratios=None,
    sim=None,
):
    """Assemble a normalized loop around ``plant`` (inertia by default).

    Exactly one of ``gamma`` (direct reset coefficient) or ``pm`` (target
    loop phase margin, met by solving gamma with the element re-normalized
    at every candidate) must be given for reset topologies. ``pid_ratios``
    overrides the weak-differentiator preset as ``(wi, wd, wt)`` ratios of
    ``wc``.
    """
    plant = plant if plant is not None else mass_plant()
    if pid_ratios is None:
        pid = pid_preset(wc)
    else:
        from .lti import build_pid

        wi_r, wd_r, wt_r = pid_ratios
        if wt_r <= 1.0:
            raise DesignError(f"differentiation stop ratio must exceed 1, got {wt_r}")
        pid = build_pid(1.0, wi_r * wc, wd_r * wc, wt_r * wc)
    if wz_ratio is not None and wz_ratio <= 1.0:
        raise DesignError(f"noise filter corner ratio must exceed 1, got {wz_ratio}")
    if topology != "bls" and wf_ratio <= 1.0:
        raise DesignError(f"lead filter pole ratio must exceed 1, got {wf_ratio}")
    lpf = lag(wz_ratio * wc) if wz_ratio else None

    if topology == "bls":
        return cl.normalized(
            cl.LoopConfig(
                topology="bls", wc=wc, plant=plant, pid=pid, lpf=lpf, sim=sim
            )
        )

    wr = wr_ratio * wc
    wf = wf_ratio * wc
    # The lead corner is anchored in the element's linear limit; per-gamma
    # gain normalization happens in the loop gain instead. Re-solving the
    # corner shift for each candidate gamma costs most of the attainable
    # phase advantage and caps the reachable margins below the tuning bands.
    alpha = _solve_alpha(1.0, wr, wf, wc)

    def build(g):
        kwargs = dict(
            topology=topology,
            wc=wc,
            plant=plant,
            pid=pid,
            lpf=lpf,
            reset_elem=fore(wr, g),
            dlead=lead(alpha * wr, wf),
            sim=sim,
        )
        if topology == "cr-cglp":
            kwargs.update(wl=wl_ratio * wc, wh=wh_ratio * wc)
        return cl.normalized(cl.LoopConfig(**kwargs))

    if (gamma is None) == (pm is None):
        raise DesignError("give exactly one of gamma or pm")
    if gamma is None:
        gamma = solve_gamma_for_pm(build, pm)
    return build(gamma)


def solve_gamma_for_pm(build, pm_target):
    """Reset coefficient whose gain-normalized loop meets ``pm_target``."""

    def pm_err(g):
        return cl.phase_margin(build(g)) - pm_target

    try:
        return find_root(pm_err, -1.0, 1.0, 1e-10)
    except BracketError as exc:
        pm_lo = pm_err(-1.0) + pm_target
        raise DesignError(
            f"phase margin {pm_target:g} deg unreachable: gamma=-1 gives {pm_lo:.2f} deg",
            max_achievable_pa=pm_lo,
        ) from exc


def guideline_preset(wc, plant=None, topology="cr-cglp", sim=None):
    """Midpoints of the rule-of-thumb tuning bands: ``wr = 1.2 wc``,
    ``PM = 20 deg``, ``wl = 0.45 wc``, ``wh = wf = 20 wc``."""
    return make_loop(
        wc,
        topology,
        plant=plant,
        pm=20.0,
        wr_ratio=1.2,
        wl_ratio=0.45,
        wh_ratio=20.0,
        wf_ratio=20.0,
        sim=sim,
    )


@dataclass
class SweepResult:
    """Long-format sweep table plus the optional fitted-plane output."""

    axis1_name: str
    axis2_name: str
    rows: list  # dicts: axis1, axis2, overshoot, settling_s, failed
    reference: dict = None  # no-reset loop metrics, when computed
    fit: dict = None

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["axis1", "axis2", "overshoot", "settling_s", "failed"])
            for row in self.rows:
                writer.writerow(
                    [
                        format(row["axis1"], ".10g"),
                        format(row["axis2"], ".10g"),
                        format(row["overshoot"], ".10g"),
                        format(row["settling_s"], ".10g"),
                        int(row["failed"]),
                    ]
                )

    def cell(self, a1, a2):
        for row in self.rows:
            if row["axis1"] == a1 and row["axis2"] == a2:
                return row
        raise KeyError((a1, a2))


def _transient_cell(wc, plant, topology, pm, wl_ratio, duration, sim):
    try:
        loop = make_loop(
            wc, topology, plant=plant, pm=pm, wl_ratio=wl_ratio, sim=sim
        )
        _, metrics = cl.step_response(loop, 1.0, duration=duration)
        return {
            "axis1": pm,
            "axis2": wl_ratio,
            "overshoot": metrics.overshoot,
            "settling_s": metrics.settling_time,
            "failed": not metrics.settled,
        }
    except Exception:
        return {
            "axis1": pm,
            "axis2": wl_ratio,
            "overshoot": float("nan"),
            "settling_s": float("nan"),
            "failed": True,
        }


def sweep_transient(
    wc,
    pm_list,
    wl_ratio_list,
    plant=None,
    topology="cr-cglp",
    duration=None,
    sim=None,
    workers=1,
):
    """Step-response surfaces over (phase margin, lead corner ratio).

    Cells that diverge are marked failed and the sweep continues. The
    no-reset loop is evaluated once as the normalization reference.
    """
    plant = plant if plant is not None else mass_plant()
    duration = duration if duration is not None else 350.0 / wc
    cells = [(pm, wl) for pm in pm_list for wl in wl_ratio_list]
    args = [(wc, plant, topology, pm, wl, duration, sim) for pm, wl in cells]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda a: _transient_cell(*a), args))
    else:
        rows = [_transient_cell(*a) for a in args]

    bls = make_loop(wc, "bls", plant=plant, sim=sim)
    _, bm = cl.step_response(bls, 1.0, duration=duration)
    reference = {
        "overshoot": bm.overshoot,
        "settling_s": bm.settling_time,
        "pm": cl.phase_margin(bls),
    }
    return SweepResult(
        axis1_name="pm_deg", axis2_name="wl_ratio", rows=rows, reference=reference
    )


def fit_overshoot_plane(sweep):
    """Least-squares plane ``os = a*log10(wl/wc) + b*pm + c``.

    Overshoot saturates at zero outside the plane's validity region, so the
    regression keeps only cells where the published clamped plane is
    positive; fitting the saturated cells would drag the slopes toward
    zero. The fit dict reports coefficients, rms residual over the fitted
    cells, and the cell count.
    """
    rows = [
        r
        for r in sweep.rows
        if not r["failed"]
        and np.isfinite(r["overshoot"])
        and predicted_overshoot(r["axis2"], r["axis1"]) > 0.0
    ]
    if len(rows) < 3:
        raise DesignError("not enough unsaturated cells to fit the overshoot plane")
    a_mat = np.array([[math.log10(r["axis2"]), r["axis1"], 1.0] for r in rows])
    b_vec = np.array([r["overshoot"] for r in rows])
    coef, *_ = np.linalg.lstsq(a_mat, b_vec, rcond=None)
    resid = a_mat @ coef - b_vec
    fit = {
        "coef_log_wl": float(coef[0]),
        "coef_pm": float(coef[1]),
        "intercept": float(coef[2]),
        "rms_residual": float(np.sqrt(np.mean(resid**2))),
        "n_cells": len(rows),
    }
    sweep.fit = fit
    return fit


def predicted_overshoot(wl_ratio, pm):
    """Fitted-plane overshoot estimate, clamped at zero."""
    return max(0.0, 0.95 * math.log10(wl_ratio) - 0.04 * pm + 1.25)


def sweep_harmonics(gamma, wr_ratio_list, wc, wf_ratio=20.0):
    """Third-harmonic content and attainable phase advantage per corner ratio."""
    rows = []
    for ratio in wr_ratio_list:
        integral, max_pa = third_harmonic_integral(gamma, ratio, wc, wf_ratio)
        rows.append(
            {
                "axis1": ratio,
                "axis2": gamma,
                "integral": integral,
                "max_pa_deg": max_pa,
            }
        )
    return SweepResult(axis1_name="wr_ratio", axis2_name="gamma", rows=rows)


def practical_controllers(wc_hz=400.0, sample_rate_hz=10_000.0, duration=None):
    """The four positioning-stage controllers on the identified plant model.

    Two plain PID loops with increasingly wide differentiation bands, plus
    the constant-gain lead element (bare and wrapped) in front of the first
    PID. Reset coefficients are solved for a 25-degree loop margin; all
    loops run at the stage's sample rate so the one-sample plant delay is
    exact.
    """
    from .lti import msd_plant

    wc = 2.0 * math.pi * wc_hz
    plant = msd_plant()
    step = 1.0 / sample_rate_hz
    sim = HybridSimConfig(step=step, duration=duration or 400.0 / wc)
    common = dict(plant=plant, wz_ratio=5.0, sim=sim)
    pid1_ratios = (0.1, 1.0 / 2.5, 2.5)
    cr = make_loop(
        wc,
        "cr-cglp",
        pm=25.0,
        wr_ratio=1.0,
        wl_ratio=1.0 / 8.0,
        wh_ratio=5.0,
        wf_ratio=20.0,
        pid_ratios=pid1_ratios,
        **common,
    )
    # The bare constant-gain lead controller is the same element with the
    # wrapper removed (the loop regains margin because the wrapper lag is
    # gone, but the reset coefficient is shared).
    from dataclasses import replace

    cglp = cl.normalized(replace(cr, topology="cglp", wl=None, wh=None))
    return {
        "pid1": make_loop(wc, "bls", pid_ratios=pid1_ratios, **common),
        "pid2": make_loop(wc, "bls", pid_ratios=(0.1, 0.2, 5.0), **common),
        "cglp": cglp,
        "cr-cglp": cr,
    }


@dataclass
class GainVariationRecord:
    delta_db: float
    wc_before: float
    wc_after: float
    pm_before: float
    pm_after: float

    @property
    def pm_change(self):
        return self.pm_after - self.pm_before


def gain_variation_experiment(loop, delta_db, search_decades=1.5):
    """Crossover and margin before/after a loop-gain change of ``delta_db``.

    A rising margin under extra gain is the complex-order signature of the
    wrapped reset element; a plain PID loop loses margin instead.
    """
    factor = 10.0 ** (delta_db / 20.0)
    grid = np.geomspace(
        loop.wc / 10**search_decades, loop.wc * 10**search_decades, 400
    )

    def crossover(scale):
        mags = np.abs(cl.df_open_loop(loop, grid)) * scale
        sign = np.sign(np.log(mags))
        idx = np.nonzero(np.diff(sign) != 0)[0]
        if idx.size == 0:
            raise DesignError(f"no unit-gain crossing for scale {scale:g}")
        k = idx[-1]

        def err(w):
            return math.log(abs(cl.df_open_loop(loop, np.array([w]))[0]) * scale)

        return find_root(err, grid[k], grid[k + 1], 1e-9)

    def margin_at(w, scale):
        df = cl.df_open_loop(loop, np.array([w]))[0] * scale
        return (180.0 + math.degrees(np.angle(df)) + 180.0) % 360.0 - 180.0

    w0 = crossover(1.0)
    w1 = crossover(factor)
    return GainVariationRecord(
        delta_db=delta_db,
        wc_before=w0,
        wc_after=w1,
        pm_before=margin_at(w0, 1.0),
        pm_after=margin_at(w1, factor),
    )
