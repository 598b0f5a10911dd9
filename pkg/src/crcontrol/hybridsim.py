"""Series-chain assembly and the driver for the hybrid integrator.

A simulation is described by a list of state-space blocks in series, an
optional reset block (whose input is the jump trigger), an optional unity
feedback closure, and an optional pure-delay insertion point. All recorded
signals are linear functionals of the stacked state and the reference, so
one engine call covers open-loop element studies and full closed loops
alike.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import RealizationError, SimConfigError

try:
    from . import _engine_cy as _engine

    BACKEND = "compiled"
except ImportError:  # pragma: no cover - depends on build environment
    from . import _engine_py as _engine

    BACKEND = "python"

__all__ = [
    "BACKEND",
    "ChainPlan",
    "HybridSimConfig",
    "assemble",
    "default_sim_config",
    "run_plan",
    "linear_sim",
]

# Fine-step targets: the engine subdivides the requested output step so that
# (fastest corner) * (integration step) stays below _WMAX_HF_TARGET; the
# configuration invariant itself only demands _WMAX_HF_LIMIT.
_WMAX_HF_LIMIT = 2.0 * math.pi / 50.0
_WMAX_HF_TARGET = 2.0 * math.pi / 120.0


@dataclass(frozen=True)
class HybridSimConfig:
    """Fixed-step hybrid simulation settings.

    ``step`` is the output/reset-check grid; the integrator may subdivide it
    internally (``substeps``, auto-chosen when None) to keep the fine step
    below ``2*pi/(50*w_max)``. ``bisect_tol`` defaults to ``1e-3*step``.
    """

    step: float
    duration: float
    bisect_tol: float = None
    min_reset_gap: int = 1
    substeps: int = None

    def __post_init__(self):
        if self.step <= 0.0:
            raise SimConfigError(f"step must be positive, got {self.step}")
        if self.duration <= 0.0:
            raise SimConfigError(f"duration must be positive, got {self.duration}")
        if self.min_reset_gap < 1:
            raise SimConfigError("minimum inter-reset interval must be >= 1 step")
        if self.bisect_tol is None:
            object.__setattr__(self, "bisect_tol", 1e-3 * self.step)
        if self.bisect_tol <= 0.0:
            raise SimConfigError("bisection tolerance must be positive")

    def resolve_substeps(self, w_max):
        """Substep count for the loop's fastest corner frequency ``w_max``."""
        if self.substeps is not None:
            if self.substeps < 1:
                raise SimConfigError("substeps must be >= 1")
            m = self.substeps
            if w_max > 0.0 and self.step / m > _WMAX_HF_LIMIT / w_max:
                raise SimConfigError(
                    f"step {self.step:g}/{m} violates h <= 2*pi/(50*w_max) "
                    f"for w_max={w_max:g}"
                )
            return m
        if w_max <= 0.0:
            return 1
        return max(1, math.ceil(self.step * w_max / _WMAX_HF_TARGET))


def default_sim_config(w_max, duration, **kwargs):
    """Step at 200 points per period of the fastest corner frequency."""
    step = 2.0 * math.pi / (200.0 * w_max) if w_max > 0.0 else duration / 2000.0
    return HybridSimConfig(step=step, duration=duration, **kwargs)


@dataclass
class ChainPlan:
    """Composite flow matrices plus signal functionals for one experiment."""

    A: np.ndarray
    b_r: np.ndarray
    b_v: np.ndarray
    sig_c: np.ndarray  # (p, n) rows in the order of `signal_names`
    sig_dr: np.ndarray
    signal_names: tuple
    cz: np.ndarray
    dz: float
    cu: np.ndarray
    du: float
    jump: np.ndarray
    detect: bool
    delay_steps: int  # in output-grid steps
    uc_from_history: bool
    w_max: float
    x0: np.ndarray = None

    @property
    def n(self):
        return self.A.shape[0]


def _series_section(blocks, n_total, offset0):
    """Cascade ``blocks`` into preallocated composite coordinates.

    Returns (A, B, input_funcs, output_funcs, final_out) where every
    functional is an ``(c, d)`` pair against (stacked state, section input).
    """
    A = np.zeros((n_total, n_total))
    B = np.zeros(n_total)
    c_in = np.zeros(n_total)
    d_in = 1.0
    inputs = []
    outputs = []
    off = offset0
    for blk in blocks:
        sl = slice(off, off + blk.n)
        inputs.append((c_in.copy(), d_in))
        A[sl, sl] += blk.A
        A[sl, :] += np.outer(blk.B, c_in)
        B[sl] = blk.B * d_in
        c_out = c_in * blk.D
        c_out[sl] += blk.C
        d_out = d_in * blk.D
        outputs.append((c_out.copy(), d_out))
        c_in, d_in = c_out, d_out
        off += blk.n
    return A, B, inputs, outputs, (c_in, d_in)


def assemble(
    blocks,
    *,
    reset_index=None,
    gammas=None,
    closed=False,
    delay_split=None,
    delay_steps=0,
    taps=None,
    w_max=0.0,
):
    """Build a :class:`ChainPlan` from state-space ``blocks`` in series.

    ``reset_index`` marks the block whose states jump (trigger = its input).
    ``delay_split``/``delay_steps`` insert a pure delay of that many output
    steps before block ``delay_split``; requires ``closed`` loops whose
    post-delay section has no feedthrough. ``taps`` maps signal names to
    ``("in"|"out", block_index)``.
    """
    sizes = [blk.n for blk in blocks]
    offsets = np.concatenate(([0], np.cumsum(sizes)))[:-1]
    n = int(sum(sizes))
    taps = taps or {}

    has_delay = delay_split is not None and delay_steps > 0
    if not has_delay:
        A, B, ins, outs, (c_y, d_y) = _series_section(blocks, n, 0)
        b_v = np.zeros(n)
        if closed:
            # e = (r - c_y.x) / (1 + d_y); feedthrough d_y vanishes for a
            # strictly proper plant but is handled in general.
            denom = 1.0 + d_y
            if denom == 0.0:
                raise RealizationError("algebraic loop: 1 + feedthrough == 0")

            def convert(c, d):
                return c - (d / denom) * c_y, d / denom

            A = A - np.outer(B, c_y) / denom
            b_r = B / denom
        else:

            def convert(c, d):
                return c, d

            b_r = B
        funcs_in = [convert(*f) for f in ins]
        funcs_out = [convert(*f) for f in outs]
        uc_from_history = False
        cu = np.zeros(n)
        du = 0.0
    else:
        if not closed:
            raise RealizationError("delay insertion is only wired for closed loops")
        pre = blocks[:delay_split]
        post = blocks[delay_split:]
        n_pre = int(sum(b.n for b in pre))
        A1, B1, ins1, outs1, (c_u, d_u) = _series_section(pre, n, 0)
        A2, B2, ins2, outs2, (c_y, d_y) = _series_section(post, n, n_pre)
        if d_y != 0.0:
            raise RealizationError("post-delay section must be strictly proper")
        # e = r - y couples the pre section to the post states; the post
        # section reads the delayed pre output from the history buffer.
        A = A1 + A2 - np.outer(B1, c_y)
        b_r = B1
        b_v = B2

        def convert(c, d):
            # functionals built against e -> against (x, r)
            return c - d * c_y, d

        # post-section feedthrough rides on the delayed signal, which the
        # recorded (x, r) functionals cannot express; mark it so tapping such
        # a signal fails loudly instead of silently reading zero
        funcs_in = [convert(*f) for f in ins1] + [(c, 0.0 if d == 0.0 else None) for c, d in ins2]
        funcs_out = [convert(*f) for f in outs1] + [(c, 0.0 if d == 0.0 else None) for c, d in outs2]
        cu, du = convert(c_u, d_u)
        uc_from_history = True

    sig_names = []
    sig_c = []
    sig_dr = []
    for name, (kind, idx) in taps.items():
        c, d = funcs_in[idx] if kind == "in" else funcs_out[idx]
        if d is None:
            raise RealizationError(
                f"signal {name!r} feeds through the delayed path; reconstruct "
                f"it from the pre-delay history instead of tapping it"
            )
        sig_names.append(name)
        sig_c.append(c)
        sig_dr.append(d)

    jump = np.ones(n)
    detect = False
    cz = np.zeros(n)
    dz = 0.0
    if reset_index is not None:
        if gammas is None:
            raise RealizationError("reset block needs its jump coefficients")
        off = offsets[reset_index]
        blk = blocks[reset_index]
        if len(gammas) != blk.n:
            raise RealizationError(
                f"{len(gammas)} jump coefficients for a {blk.n}-state block"
            )
        jump[off : off + blk.n] = gammas
        cz, dz = funcs_in[reset_index]
        detect = True

    return ChainPlan(
        A=np.ascontiguousarray(A),
        b_r=b_r.copy(),
        b_v=b_v.copy() if has_delay else np.zeros(n),
        sig_c=np.ascontiguousarray(np.array(sig_c) if sig_c else np.zeros((0, n))),
        sig_dr=np.array(sig_dr),
        signal_names=tuple(sig_names),
        cz=cz.copy(),
        dz=float(dz),
        cu=cu.copy(),
        du=float(du),
        jump=jump,
        detect=detect,
        delay_steps=int(delay_steps) if has_delay else 0,
        uc_from_history=uc_from_history,
        w_max=float(w_max),
    )


def run_plan(plan, reference, cfg, extra_w=0.0):
    """Run ``plan`` against ``reference`` (callable of t, or samples at cfg.step).

    Returns ``(t, signals, reset_times, n_suppressed)`` with one signal row
    per plan tap plus ``uc`` appended when the plan routes it through the
    delay history. ``extra_w`` folds the excitation frequency into the
    substep choice.
    """
    w_max = max(plan.w_max, extra_w)
    m = cfg.resolve_substeps(w_max)
    n_steps = max(1, int(round(cfg.duration / cfg.step)))
    nf = n_steps * m
    hf = cfg.step / m

    if callable(reference):
        r_half = reference(np.arange(2 * nf + 1) * (0.5 * hf))
        r_half = np.asarray(r_half, dtype=float)
    else:
        samples = np.asarray(reference, dtype=float)
        if samples.size < n_steps + 1:
            raise SimConfigError(
                f"need {n_steps + 1} input samples at the output step, got {samples.size}"
            )
        # linear interpolation onto the half-fine grid
        pos = np.arange(2 * nf + 1) * (0.5 / m)
        r_half = np.interp(pos, np.arange(samples.size), samples)

    p = plan.sig_c.shape[0]
    out = np.zeros((p, n_steps + 1))
    u_hist = np.zeros(nf + 1)
    cap = nf // max(1, cfg.min_reset_gap * m) + 2 if plan.detect else 1
    reset_buf = np.zeros(cap)
    x0 = plan.x0 if plan.x0 is not None else np.zeros(plan.n)

    n_resets, n_supp = _engine.run_hybrid(
        plan.A,
        plan.b_r,
        plan.b_v,
        np.asarray(x0, dtype=float),
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
        float(plan.delay_steps * m),
        cfg.bisect_tol / hf,
        cfg.min_reset_gap * m,
        out,
        u_hist,
        reset_buf,
    )

    t = np.arange(n_steps + 1) * cfg.step
    signals = {name: out[i] for i, name in enumerate(plan.signal_names)}
    if plan.uc_from_history:
        d = plan.delay_steps * m
        idx = np.arange(n_steps + 1) * m - d
        uc = np.where(idx >= 0, u_hist[np.clip(idx, 0, nf)], 0.0)
        signals["uc"] = uc
    return t, signals, reset_buf[:n_resets].copy(), n_supp


def linear_sim(plan, reference, cfg):
    """Exact-discretization simulator for the linear (no-jump) flow.

    Independent cross-check path for the RK4 engine: first-order-hold
    stepping built from an augmented matrix exponential. Ignores resets and
    the delay path.
    """
    from .numerics import mat_exp

    if plan.delay_steps:
        raise SimConfigError("linear_sim does not support the delay path")
    n_steps = max(1, int(round(cfg.duration / cfg.step)))
    h = cfg.step
    n = plan.n
    if callable(reference):
        r = np.asarray(reference(np.arange(n_steps + 1) * h), dtype=float)
    else:
        r = np.asarray(reference, dtype=float)[: n_steps + 1]

    # Block exponential yields the state transition plus the step and ramp
    # input convolutions needed for first-order-hold inputs.
    aug = np.zeros((n + 2, n + 2))
    aug[:n, :n] = plan.A
    aug[:n, n] = plan.b_r
    aug[n, n + 1] = 1.0
    big = mat_exp(aug, h)
    phi = big[:n, :n]
    g0 = big[:n, n]  # step response over one interval
    g1 = big[:n, n + 1]  # ramp response over one interval

    x = np.zeros(n)
    p = plan.sig_c.shape[0]
    out = np.zeros((p, n_steps + 1))
    out[:, 0] = plan.sig_c @ x + plan.sig_dr * r[0]
    for k in range(n_steps):
        slope = (r[k + 1] - r[k]) / h
        x = phi @ x + g0 * r[k] + g1 * slope
        out[:, k + 1] = plan.sig_c @ x + plan.sig_dr * r[k + 1]
    t = np.arange(n_steps + 1) * h
    return t, {name: out[i] for i, name in enumerate(plan.signal_names)}
