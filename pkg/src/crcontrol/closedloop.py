"""Closed-loop assembly and experiments: step transients, per-frequency
sensitivity, and the describing-function open loop.

The loop is reference -> error -> [lead -> reset -> phase-lead -> lag] ->
PID -> low-pass -> (pure delay) -> plant, with unity feedback. Topologies:

* ``bls``      -- no reset path at all (PID + plant loop)
* ``cglp``     -- reset lag + phase-lead filter, trigger on the error
* ``cr-cglp``  -- the same element inside the continuous-reset wrapper,
                  trigger on the wrapper lead output
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import hybridsim
from .errors import InstabilityError, NormalizationError, SimConfigError
from .harmonics import hosidf
from .hybridsim import HybridSimConfig
from .lti import TransferFunction, lag, lead, to_state_space
from .reset import ResetElement, SimTrace

__all__ = [
    "LoopConfig",
    "StepMetrics",
    "SensitivityCurve",
    "TOPOLOGIES",
    "step_response",
    "step_metrics",
    "sensitivity_scan",
    "df_open_loop",
    "phase_margin",
    "normalized",
    "loop_plan",
    "bls_open_loop_frf",
    "reset_base_frf",
    "loop_integrator_count",
    "hbeta_of_loop",
]

TOPOLOGIES = ("bls", "cglp", "cr-cglp")


@dataclass(frozen=True)
class LoopConfig:
    """One closed-loop experiment setup (immutable; share freely)."""

    topology: str
    wc: float
    plant: TransferFunction
    pid: TransferFunction
    lpf: TransferFunction = None
    reset_elem: ResetElement = None
    dlead: TransferFunction = None
    wl: float = None
    wh: float = None
    sim: HybridSimConfig = None

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise SimConfigError(f"unknown topology {self.topology!r}")
        if self.topology != "bls" and self.reset_elem is None:
            raise SimConfigError(f"topology {self.topology!r} needs a reset element")
        if self.topology == "cr-cglp" and (self.wl is None or self.wh is None):
            raise SimConfigError("continuous-reset wrapper needs wl and wh")

    @property
    def gamma(self):
        return self.reset_elem.gammas[0] if self.reset_elem is not None else 1.0

    def linear_tfs(self):
        """All linear blocks in loop order, reset base excluded."""
        tfs = []
        if self.topology == "cr-cglp":
            tfs.append(lead(self.wl, self.wh))
        if self.topology != "bls":
            if self.dlead is not None:
                tfs.append(self.dlead)
            if self.topology == "cr-cglp":
                tfs.append(lag(self.wl))
        tfs.append(self.pid)
        if self.lpf is not None:
            tfs.append(self.lpf)
        tfs.append(self.plant)
        return tfs

    def w_max(self):
        corners = [c for tf in self.linear_tfs() for c in tf.corner_frequencies()]
        if self.reset_elem is not None:
            corners.extend(np.abs(np.linalg.eigvals(self.reset_elem.base.A)).tolist())
        return max(corners) if corners else self.wc


def loop_plan(loop, step):
    """Assemble the simulation plan; ``step`` fixes the delay discretization."""
    rational_plant = TransferFunction(loop.plant.num, loop.plant.den)
    delay_steps = 0
    if loop.plant.delay > 0.0:
        delay_steps = int(round(loop.plant.delay / step))
        if delay_steps < 1:
            raise SimConfigError(
                f"step {step:g} cannot represent the plant delay {loop.plant.delay:g}"
            )

    tfs = []
    reset_idx = None
    if loop.topology == "cr-cglp":
        tfs.append(lead(loop.wl, loop.wh))
    if loop.topology != "bls":
        reset_idx = len(tfs)
        tfs.append(None)  # reset element slot
        if loop.dlead is not None:
            tfs.append(loop.dlead)
        if loop.topology == "cr-cglp":
            tfs.append(lag(loop.wl))
    pid_idx = len(tfs)
    tfs.append(loop.pid)
    if loop.lpf is not None:
        tfs.append(loop.lpf)
    plant_idx = len(tfs)
    tfs.append(rational_plant)

    blocks = []
    for i, tf in enumerate(tfs):
        blocks.append(loop.reset_elem.base if i == reset_idx else to_state_space(tf))

    taps = {
        "e": ("in", 0),
        "x1": ("in", reset_idx if reset_idx is not None else 0),
        "x2": ("out", reset_idx) if reset_idx is not None else ("in", 0),
        "u": ("in", pid_idx),
        "y": ("out", plant_idx),
    }
    if delay_steps == 0:
        taps["uc"] = ("in", plant_idx)

    return hybridsim.assemble(
        blocks,
        reset_index=reset_idx,
        gammas=loop.reset_elem.gammas if reset_idx is not None else None,
        closed=True,
        delay_split=plant_idx if delay_steps else None,
        delay_steps=delay_steps,
        taps=taps,
        w_max=loop.w_max(),
    )


def _default_cfg(loop, duration=None):
    if loop.sim is not None:
        cfg = loop.sim
        if duration is not None:
            cfg = replace(cfg, duration=duration)
        return cfg
    return hybridsim.default_sim_config(loop.w_max(), duration or 300.0 / loop.wc)


def _run(loop, reference, cfg, extra_w=0.0):
    plan = loop_plan(loop, cfg.step)
    t, sig, resets, n_supp = hybridsim.run_plan(plan, reference, cfg, extra_w=extra_w)
    return SimTrace(
        t=t,
        e=sig["e"],
        x1=sig["x1"],
        x2=sig["x2"],
        u=sig["u"],
        y=sig["y"],
        uc=sig["uc"],
        reset_times=resets,
        n_suppressed=n_supp,
    )


@dataclass
class StepMetrics:
    overshoot: float
    settling_time: float
    peak_time: float
    steady_state_error: float
    settled: bool


def step_metrics(t, y, amplitude, band=0.04):
    """Transient numbers against the reference value (zero tracking error
    in steady state is guaranteed by the loop integrator)."""
    final = amplitude
    peak_idx = int(np.argmax(y))
    overshoot = max(0.0, (float(y[peak_idx]) - final) / amplitude)
    outside = np.abs(y - final) > band * abs(amplitude)
    if outside[-1]:
        settling = float(t[-1])
        settled = False
    else:
        last_out = int(np.max(np.nonzero(outside)[0])) if outside.any() else -1
        settling = float(t[last_out + 1])
        settled = True
    tail = max(1, y.size // 20)
    ss_err = abs(float(np.mean(y[-tail:])) - final) / abs(amplitude)
    return StepMetrics(
        overshoot=overshoot,
        settling_time=settling,
        peak_time=float(t[peak_idx]),
        steady_state_error=ss_err,
        settled=settled,
    )


def step_response(loop, amplitude=1.0, duration=None):
    """Reference step from rest; returns the trace and its transient metrics."""
    cfg = _default_cfg(loop, duration)
    trace = _run(loop, lambda t: np.full_like(np.asarray(t, dtype=float), amplitude), cfg)
    peak = float(np.nanmax(np.abs(trace.y)))
    if not np.isfinite(peak) or peak > 100.0 * abs(amplitude):
        raise InstabilityError(
            f"step response diverged: max |y| = {peak:g} for amplitude {amplitude:g}"
        )
    return trace, step_metrics(trace.t, trace.y, amplitude)


@dataclass
class SensitivityCurve:
    omega: np.ndarray
    value: np.ndarray
    settled: np.ndarray
    peak_value: float
    peak_omega: float

    def value_db(self):
        return 20.0 * np.log10(self.value)


def sensitivity_scan(loop, omegas, amplitude=1.0, analysis_periods=10):
    """Per-frequency tracking-error ratio ``rms(e) / rms(r)``.

    Each frequency runs its own simulation with an integer number of periods
    per window; the first ten periods (more when a slow linear mode needs
    it) are discarded. Unsettled points are flagged, not dropped.
    """
    base_cfg = _default_cfg(loop)
    omegas = np.asarray(omegas, dtype=float)
    values = np.zeros(omegas.size)
    settled = np.ones(omegas.size, dtype=bool)

    plan_probe = loop_plan(loop, base_cfg.step)
    rates = -np.real(np.linalg.eigvals(plan_probe.A))
    rates = rates[rates > 1e-9]
    slow = rates.min() if rates.size else None

    for i, w in enumerate(omegas):
        period = 2.0 * math.pi / w
        s_per = max(32, int(round(period / base_cfg.step)))
        step = period / s_per
        discard = 10
        if slow is not None:
            discard = max(discard, math.ceil(14.0 / (slow * period)))
        n_periods = discard + analysis_periods
        cfg = HybridSimConfig(
            step=step,
            duration=n_periods * period,
            bisect_tol=base_cfg.bisect_tol,
            min_reset_gap=base_cfg.min_reset_gap,
        )
        trace = _run(loop, lambda t: amplitude * np.sin(w * t), cfg, extra_w=w)
        e = trace.e
        window = slice(discard * s_per, n_periods * s_per)
        r_win = amplitude * np.sin(w * trace.t[window])
        e_win = e[window]
        prev = e[(discard - 1) * s_per : (n_periods - 1) * s_per]
        scale = np.sqrt(np.mean(e_win**2))
        drift = np.sqrt(np.mean((e_win - prev) ** 2)) / (scale if scale > 0 else 1.0)
        settled[i] = drift <= 1e-4
        values[i] = scale / np.sqrt(np.mean(r_win**2))

    peak_idx = int(np.argmax(values))
    return SensitivityCurve(
        omega=omegas,
        value=values,
        settled=settled,
        peak_value=float(values[peak_idx]),
        peak_omega=float(omegas[peak_idx]),
    )


def df_open_loop(loop, omegas):
    """First-harmonic open-loop response over ``omegas`` (describing function
    for the reset path, exact response for the linear blocks)."""
    omegas = np.asarray(omegas, dtype=float)
    out = np.ones(omegas.size, dtype=complex)
    for tf in loop.linear_tfs():
        out *= tf.freq_response(omegas)
    if loop.reset_elem is not None:
        for i, w in enumerate(omegas):
            out[i] *= hosidf(loop.reset_elem, w, 1)
    return out


def phase_margin(loop):
    """180 deg plus the open-loop describing-function phase at crossover,
    wrapped into (-180, 180] so small negative margins stay negative."""
    df = df_open_loop(loop, np.array([loop.wc]))[0]
    pm = 180.0 + math.degrees(np.angle(df))
    return (pm + 180.0) % 360.0 - 180.0


def normalized(loop):
    """Scale the PID gain so the open-loop magnitude is exactly 1 at ``wc``."""
    mag = abs(df_open_loop(loop, np.array([loop.wc]))[0])
    if mag == 0.0 or not np.isfinite(mag):
        raise NormalizationError(f"open-loop magnitude {mag} at wc={loop.wc:g}")
    pid = TransferFunction(
        tuple(c / mag for c in loop.pid.num), loop.pid.den, loop.pid.delay
    )
    return replace(loop, pid=pid)


def bls_linear_tfs(loop, include_wrapper=False):
    """Linear blocks of the base-linear open loop.

    By default the wrapper lead/lag pair is dropped: it cancels in the
    linear domain, which is the reading under which wrapping a reset
    element leaves the stability test unchanged. That reading needs the
    lead's high corner well above the crossover and the reset corner,
    which is linted here.
    """
    if loop.topology != "cr-cglp" or include_wrapper:
        return loop.linear_tfs()
    import warnings

    reset_corner = (
        float(np.max(np.abs(np.linalg.eigvals(loop.reset_elem.base.A))))
        if loop.reset_elem is not None
        else 0.0
    )
    if loop.wh < 10.0 * max(loop.wc, reset_corner):
        warnings.warn(
            f"wrapper high corner wh={loop.wh:g} is not well above the "
            f"crossover/reset corners; dropping the wrapper from the "
            f"base-linear loop is then a poor approximation",
            stacklevel=2,
        )
    tfs = []
    if loop.dlead is not None:
        tfs.append(loop.dlead)
    tfs.append(loop.pid)
    if loop.lpf is not None:
        tfs.append(loop.lpf)
    tfs.append(loop.plant)
    return tfs


def loop_integrator_count(loop):
    """Open-loop poles at the origin (needed by the encirclement count)."""
    count = 0
    for tf in loop.linear_tfs():
        den_zeros = next(i for i, c in enumerate(tf.den) if c != 0.0)
        num_zeros = next(i for i, c in enumerate(tf.num) if c != 0.0)
        count += den_zeros - num_zeros
    if loop.reset_elem is not None:
        count += int(np.sum(np.abs(np.linalg.eigvals(loop.reset_elem.base.A)) < 1e-12))
    return count


def bls_open_loop_frf(loop, include_wrapper=False):
    """Callable ``omega -> complex`` for the base-linear open loop."""
    tfs = bls_linear_tfs(loop, include_wrapper)

    def frf(w):
        v = 1.0 + 0.0j
        for tf in tfs:
            v *= tf.freq_response(w)
        if loop.reset_elem is not None:
            v *= loop.reset_elem.base.freq_response(w)
        return complex(v)

    return frf


def reset_base_frf(loop):
    return lambda w: complex(loop.reset_elem.base.freq_response(w))


def hbeta_of_loop(loop, grid=None, include_wrapper=False):
    """Frequency-domain stability report for a reset loop."""
    from .stability import default_hbeta_grid, hbeta_check

    if loop.reset_elem is None:
        raise SimConfigError("the stability test needs a reset element in the loop")
    if grid is None:
        grid = default_hbeta_grid(loop.wc)
    return hbeta_check(
        bls_open_loop_frf(loop, include_wrapper),
        reset_base_frf(loop),
        grid,
        integrators=loop_integrator_count(loop),
    )
