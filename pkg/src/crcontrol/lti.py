"""Linear time-invariant blocks: rational transfer functions with optional
pure delay, state-space realizations, and builders for the loop-shaping
blocks used throughout the package.

Coefficients are stored in ascending powers of s and normalized so the
denominator constant term is 1 where possible, matching the ``(s/w + 1)``
factor style of the loop-shaping blocks.
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import NormalizationError, PoleError, RealizationError

__all__ = [
    "TransferFunction",
    "StateSpace",
    "to_state_space",
    "series",
    "ONE",
    "lag",
    "lead",
    "integrator",
    "mass_plant",
    "msd_plant",
    "build_pid",
    "pid_preset",
    "normalize_gain",
    "format_tf",
    "parse_tf",
]


def _trim(coeffs):
    c = list(float(v) for v in coeffs)
    while len(c) > 1 and c[-1] == 0.0:
        c.pop()
    return tuple(c)


@dataclass(frozen=True)
class TransferFunction:
    """Rational SISO block ``num(s)/den(s) * exp(-delay*s)``.

    ``num`` and ``den`` hold coefficients in ascending powers of s.
    """

    num: tuple
    den: tuple
    delay: float = 0.0

    def __post_init__(self):
        num = _trim(self.num)
        den = _trim(self.den)
        if not any(den):
            raise RealizationError("denominator is identically zero")
        if self.delay < 0.0:
            raise RealizationError(f"delay must be nonnegative, got {self.delay}")
        # Normalize: unit constant term when possible, else monic leading term.
        scale = den[0] if den[0] != 0.0 else den[-1]
        num = tuple(c / scale for c in num)
        den = tuple(c / scale for c in den)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)
        object.__setattr__(self, "delay", float(self.delay))

    @property
    def order(self):
        return len(self.den) - 1

    @property
    def is_proper(self):
        return len(self.num) <= len(self.den)

    def freq_response(self, omega):
        """Complex response at ``omega`` rad/s (scalar or array)."""
        w = np.asarray(omega, dtype=float)
        s = 1j * w
        numv = npoly.polyval(s, self.num)
        denv = npoly.polyval(s, self.den)
        bad = denv == 0.0
        if np.any(bad):
            w_bad = float(np.atleast_1d(w)[np.atleast_1d(bad)][0])
            raise PoleError(f"evaluation at a pole, omega={w_bad:g}", omega=w_bad)
        resp = numv / denv
        if self.delay:
            resp = resp * np.exp(-s * self.delay)
        return complex(resp) if np.isscalar(omega) else resp

    def __mul__(self, other):
        if isinstance(other, TransferFunction):
            return series(self, other)
        return TransferFunction(
            tuple(float(other) * c for c in self.num), self.den, self.delay
        )

    __rmul__ = __mul__

    def corner_frequencies(self):
        """Magnitudes of all finite poles and zeros (rad/s)."""
        corners = []
        for coeffs in (self.num, self.den):
            if len(coeffs) > 1:
                roots = npoly.polyroots(coeffs)
                corners.extend(abs(r) for r in roots if abs(r) > 0.0)
        return corners


ONE = TransferFunction((1.0,), (1.0,))


def series(*tfs):
    """Series interconnection; delays add, polynomials multiply."""
    num = np.array([1.0])
    den = np.array([1.0])
    delay = 0.0
    for tf in tfs:
        num = npoly.polymul(num, np.array(tf.num))
        den = npoly.polymul(den, np.array(tf.den))
        delay += tf.delay
    return TransferFunction(tuple(num), tuple(den), delay)


@dataclass(frozen=True)
class StateSpace:
    """State-space realization ``dx = A x + B u``, ``y = C x + D u``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.B, dtype=float).reshape(-1)
        c = np.asarray(self.C, dtype=float).reshape(-1)
        if a.shape[0] != a.shape[1] or a.shape[0] != b.size or a.shape[0] != c.size:
            raise RealizationError(
                f"inconsistent dimensions: A {a.shape}, B {b.shape}, C {c.shape}"
            )
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)
        object.__setattr__(self, "C", c)
        object.__setattr__(self, "D", float(self.D))

    @property
    def n(self):
        return self.A.shape[0]

    def freq_response(self, omega):
        s = 1j * float(omega)
        x = np.linalg.solve(s * np.eye(self.n) - self.A, self.B.astype(complex))
        return complex(self.C @ x + self.D)


def to_state_space(tf):
    """Controllable canonical realization of a proper, delay-free block."""
    if not tf.is_proper:
        raise RealizationError(
            f"improper transfer function (num degree {len(tf.num) - 1} > "
            f"den degree {len(tf.den) - 1})"
        )
    if tf.delay != 0.0:
        raise RealizationError("delay is handled outside the realization")
    n = len(tf.den) - 1
    if n == 0:
        raise RealizationError("static gain has no state-space realization")
    lead_coeff = tf.den[-1]
    den = np.array(tf.den, dtype=float) / lead_coeff
    num = np.zeros(n + 1)
    num[: len(tf.num)] = tf.num
    num = num / lead_coeff
    d = num[n]
    cvec = num[:n] - d * den[:n]
    a = np.zeros((n, n))
    if n > 1:
        a[:-1, 1:] = np.eye(n - 1)
    a[-1, :] = -den[:n]
    b = np.zeros(n)
    b[-1] = 1.0
    return StateSpace(a, b, cvec, d)


def lag(wc):
    """First-order low-pass ``1/(s/wc + 1)``."""
    return TransferFunction((1.0,), (1.0, 1.0 / wc))


def lead(w_zero, w_pole):
    """Biproper lead ``(s/w_zero + 1)/(s/w_pole + 1)``."""
    return TransferFunction((1.0, 1.0 / w_zero), (1.0, 1.0 / w_pole))


def integrator():
    return TransferFunction((1.0,), (0.0, 1.0))


def mass_plant():
    """Pure inertia ``1/s^2``."""
    return TransferFunction((1.0,), (0.0, 0.0, 1.0))


def msd_plant(gain=9836.0, damping=8.737, stiffness=7376.0, delay=1e-4):
    """Mass-spring-damper stage ``gain*exp(-delay*s)/(s^2 + damping*s + stiffness)``."""
    return TransferFunction((gain,), (stiffness, damping, 1.0), delay)


def build_pid(kp, wi, wd, wt):
    """Series PID ``kp*(1 + wi/s)*((s/wd + 1)/(s/wt + 1))``."""
    if min(wi, wd, wt) <= 0.0:
        raise NormalizationError("PID corner frequencies must be positive")
    pi = TransferFunction((wi, 1.0), (0.0, 1.0))
    return kp * series(pi, lead(wd, wt))


def pid_preset(wc, kp=1.0):
    """Weak-differentiator tuning: ``wi = wc/10``, ``wd = wc/1.2``, ``wt = 1.2*wc``."""
    return build_pid(kp, wc / 10.0, wc / 1.2, 1.2 * wc)


def normalize_gain(frfs, wc):
    """Gain that brings the open-loop magnitude to exactly 1 at ``wc``.

    ``frfs`` is an iterable of callables ``omega -> complex`` covering every
    block (and describing-function factor) in the loop.
    """
    total = 1.0 + 0.0j
    for frf in frfs:
        total *= frf(wc)
    mag = abs(total)
    if mag == 0.0 or not np.isfinite(mag):
        raise NormalizationError(f"open loop magnitude {mag} at omega={wc:g}")
    return 1.0 / mag


def format_tf(tf):
    num = ",".join(repr(c) for c in tf.num)
    den = ",".join(repr(c) for c in tf.den)
    return f"num = [{num}]; den = [{den}]; delay = {tf.delay!r}"


def parse_tf(text):
    """Parse the ``num = [...]; den = [...]; delay = T`` text form."""
    fields = {}
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        key, _, value = part.partition("=")
        fields[key.strip()] = value.strip()
    try:
        num = tuple(float(v) for v in fields["num"].strip("[] ").split(",") if v.strip())
        den = tuple(float(v) for v in fields["den"].strip("[] ").split(",") if v.strip())
        delay = float(fields.get("delay", "0"))
    except (KeyError, ValueError) as exc:
        raise RealizationError(f"malformed transfer function text: {text!r}") from exc
    return TransferFunction(num, den, delay)
