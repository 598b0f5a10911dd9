"""Reset elements, the continuous-output wrapper, and open-loop simulation.

A reset element is a linear filter whose states jump to ``diag(gammas) @ x``
whenever its input crosses zero. The continuous-reset (CR) wrapper places a
lead ``(s/wl+1)/(s/wh+1)`` before the element and its inverse lag
``1/(s/wl+1)`` after it, and moves the trigger to the lead output, which
makes the wrapper output continuous across jumps.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import hybridsim
from .hybridsim import HybridSimConfig, default_sim_config
from .lti import StateSpace, lag, lead, to_state_space
from .errors import RealizationError

__all__ = [
    "ResetElement",
    "CrElement",
    "SimTrace",
    "fore",
    "clegg",
    "open_plan",
    "simulate_reset_open",
    "reset_instants_predicted",
    "reset_jump_ratio",
    "HybridSimConfig",
    "default_sim_config",
]


@dataclass(frozen=True)
class ResetElement:
    """Base linear dynamics plus the diagonal jump map applied at triggers."""

    base: StateSpace
    gammas: tuple

    def __post_init__(self):
        g = tuple(float(v) for v in np.atleast_1d(self.gammas))
        if len(g) != self.base.n:
            raise RealizationError(
                f"{len(g)} jump coefficients for a {self.base.n}-state element"
            )
        if any(abs(v) > 1.0 for v in g):
            raise RealizationError(f"jump coefficients must lie in [-1, 1], got {g}")
        object.__setattr__(self, "gammas", g)

    @property
    def n(self):
        return self.base.n


def fore(wr, gamma):
    """First-order reset lag ``1/(s/wr + 1)`` resetting to ``gamma * state``."""
    return ResetElement(StateSpace([[-wr]], [wr], [1.0], 0.0), (gamma,))


def clegg(gamma=0.0):
    """Resetting integrator (state jumps to ``gamma * state`` at input zeros)."""
    return ResetElement(StateSpace([[0.0]], [1.0], [1.0], 0.0), (gamma,))


@dataclass(frozen=True)
class CrElement:
    """Reset element wrapped for a continuous output.

    The trigger is the lead output (the element input), so with a sinusoidal
    drive the jumps fire at zeros of ``e + de/dt / wl`` rather than of ``e``.
    """

    inner: ResetElement
    wl: float
    wh: float

    def __post_init__(self):
        if not (0.0 < self.wl < self.wh):
            raise RealizationError(f"need 0 < wl < wh, got wl={self.wl}, wh={self.wh}")

    @property
    def lead_tf(self):
        return lead(self.wl, self.wh)

    @property
    def lag_tf(self):
        return lag(self.wl)


@dataclass
class SimTrace:
    """Uniformly sampled signals of one simulation run."""

    t: np.ndarray
    e: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    u: np.ndarray
    y: np.ndarray
    uc: np.ndarray
    reset_times: np.ndarray
    n_suppressed: int = 0

    def to_csv(self, path):
        """Write the trace plus a ``<path stem>.resets.csv`` sidecar."""
        path = str(path)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "e", "x1", "x2", "u", "y", "uc"])
            for k in range(self.t.size):
                writer.writerow(
                    [
                        format(v, ".12g")
                        for v in (
                            self.t[k],
                            self.e[k],
                            self.x1[k],
                            self.x2[k],
                            self.u[k],
                            self.y[k],
                            self.uc[k],
                        )
                    ]
                )
        stem = path[:-4] if path.endswith(".csv") else path
        with open(stem + ".resets.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_reset"])
            for tk in self.reset_times:
                writer.writerow([format(tk, ".12g")])


def _open_chain(elem, post_tfs=()):
    """Transfer blocks, reset position and taps for an open element chain."""
    tfs = []
    reset_idx = None
    if isinstance(elem, CrElement):
        tfs.append(elem.lead_tf)
        reset_idx = 1
        inner = elem.inner
        tail = list(post_tfs) + [elem.lag_tf]
    elif isinstance(elem, ResetElement):
        reset_idx = 0
        inner = elem
        tail = list(post_tfs)
    else:
        raise RealizationError(f"cannot simulate {type(elem).__name__} as a reset chain")

    blocks = [to_state_space(tf) for tf in tfs]
    blocks.append(inner.base)
    blocks.extend(to_state_space(tf) for tf in tail)
    corners = [c for tf in tfs + tail for c in tf.corner_frequencies()]
    corners.extend(np.abs(np.linalg.eigvals(inner.base.A)).tolist())
    w_max = max(corners) if corners else 0.0

    last = len(blocks) - 1
    taps = {
        "e": ("in", 0),
        "x1": ("in", reset_idx),
        "x2": ("out", reset_idx),
        "u": ("out", last),
        "y": ("out", last),
        "uc": ("out", last),
    }
    return blocks, reset_idx, inner.gammas, taps, w_max


def open_plan(elem, post_tfs=()):
    """Assemble the open-loop simulation plan for a (wrapped) reset element."""
    blocks, reset_idx, gammas, taps, w_max = _open_chain(elem, post_tfs)
    return hybridsim.assemble(
        blocks, reset_index=reset_idx, gammas=gammas, taps=taps, w_max=w_max
    )


def simulate_reset_open(elem, reference, cfg, post_tfs=(), detect=True):
    """Drive an element (or its CR wrapper) open loop and record the trace.

    ``reference`` is a callable of time or an array sampled at ``cfg.step``.
    ``post_tfs`` appends linear blocks after the reset element (before the
    wrapper lag), e.g. the phase-lead filter that completes a constant-gain
    lead element.
    """
    plan = open_plan(elem, post_tfs)
    if not detect:
        plan.detect = False
    t, sig, resets, n_supp = hybridsim.run_plan(plan, reference, cfg)
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


def reset_jump_ratio(trace, signal):
    """How much larger the sample increment straddling a reset is than the
    largest increment elsewhere on the trace.

    A continuous output relaxes smoothly after a jump upstream, so its
    reset-straddling increments look like any other steep section (ratio
    near 1); a discontinuous signal shows a step-size-independent jump and
    the ratio diverges as the step shrinks. Returns ``(ratio, jump)``.
    """
    inc = np.abs(np.diff(signal))
    at_reset = np.zeros(inc.size, dtype=bool)
    for tk in trace.reset_times:
        k = int(np.searchsorted(trace.t, tk))
        if 0 < k <= inc.size:
            at_reset[k - 1] = True
    if not at_reset.any():
        return 0.0, 0.0
    jump = float(inc[at_reset].max())
    smooth = float(inc[~at_reset].max()) if (~at_reset).any() else 0.0
    return (jump / smooth if smooth > 0.0 else np.inf), jump


def reset_instants_predicted(wl, omega, duration, amplitude=1.0, wh=math.inf):
    """Trigger instants for a sinusoidal drive under the wrapper lead.

    With ``e = A sin(w t)`` the trigger ``e + de/dt / wl`` vanishes where
    ``w t + atan(w / wl) = k pi``, i.e. the crossings lead the drive zeros.
    Passing the lead's high corner ``wh`` includes its phase lag instead of
    the ideal-lead limit.
    """
    phase = math.atan2(omega, wl)
    if math.isfinite(wh):
        phase -= math.atan2(omega, wh)
    out = []
    k = 1
    while True:
        tk = (k * math.pi - phase) / omega
        if tk > duration:
            break
        if tk > 0.0:
            out.append(tk)
        k += 1
    return np.array(out)
