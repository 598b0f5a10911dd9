"""Small dense matrix numerics used by the frequency- and time-domain code.

Everything here operates on matrices of at most a few dozen entries (reset
elements have 1-3 states), so dense O(n^3) algorithms are used throughout.
"""

import numpy as np
from scipy.optimize import brentq

from .errors import BracketError, DimensionError, LengthError, SingularMatrixError

__all__ = ["mat_exp", "solve_complex", "find_root", "fft_spectrum", "fft_reconstruct"]

# Order-13 Pade numerator coefficients for the exponential.
_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_PADE13_THETA = 4.25


def mat_exp(a, t=1.0):
    """Matrix exponential ``exp(a*t)`` by scaling-and-squaring with a Pade core.

    Accurate to better than 1e-12 relative error for ``norm(a*t) <= 50``,
    which covers every inter-reset propagation this package evaluates.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"mat_exp needs a square matrix, got shape {a.shape}")
    m = a * float(t)
    norm = np.linalg.norm(m, 1)
    if not np.isfinite(norm):
        raise DimensionError("mat_exp argument has non-finite entries")
    squarings = 0
    if norm > _PADE13_THETA:
        squarings = int(np.ceil(np.log2(norm / _PADE13_THETA)))
        m = m / (2.0**squarings)

    b = _PADE13
    ident = np.eye(m.shape[0])
    m2 = m @ m
    m4 = m2 @ m2
    m6 = m4 @ m2
    u = m @ (
        m6 @ (b[13] * m6 + b[11] * m4 + b[9] * m2)
        + b[7] * m6
        + b[5] * m4
        + b[3] * m2
        + b[1] * ident
    )
    v = (
        m6 @ (b[12] * m6 + b[10] * m4 + b[8] * m2)
        + b[6] * m6
        + b[4] * m4
        + b[2] * m2
        + b[0] * ident
    )
    x = np.linalg.solve(v - u, v + u)
    for _ in range(squarings):
        x = x @ x
    return x


def solve_complex(a, b, pivot_rtol=1e-12):
    """Solve ``a @ x = b`` for complex square ``a`` by LU with partial pivoting.

    Raises :class:`SingularMatrixError` carrying the failing pivot magnitude
    when the relative pivot drops below ``pivot_rtol``.
    """
    a = np.array(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"solve_complex needs a square matrix, got {a.shape}")
    n = a.shape[0]
    vector = b.ndim == 1
    x = b.reshape(n, -1).astype(complex).copy()
    if x.shape[0] != n:
        raise DimensionError(f"rhs rows {x.shape[0]} do not match matrix order {n}")

    scale = np.max(np.abs(a)) or 1.0
    threshold = pivot_rtol * scale
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        pivot = abs(a[p, k])
        if pivot <= threshold:
            raise SingularMatrixError(
                f"singular matrix: pivot {pivot:.3e} at column {k}", pivot=pivot
            )
        if p != k:
            a[[k, p]] = a[[p, k]]
            x[[k, p]] = x[[p, k]]
        for i in range(k + 1, n):
            f = a[i, k] / a[k, k]
            a[i, k + 1 :] -= f * a[k, k + 1 :]
            x[i] -= f * x[k]
    for k in range(n - 1, -1, -1):
        x[k] -= a[k, k + 1 :] @ x[k + 1 :]
        x[k] /= a[k, k]
    return x[:, 0] if vector else x


def find_root(f, lo, hi, tol=1e-12):
    """Root of ``f`` on the bracket ``[lo, hi]``.

    Bracketed hybrid solve (Brent); bisection steps guarantee convergence for
    any continuous ``f`` with a sign change on the bracket.
    """
    flo = f(lo)
    fhi = f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0.0:
        raise BracketError(
            f"no sign change on [{lo:g}, {hi:g}]: f(lo)={flo:g}, f(hi)={fhi:g}"
        )
    return brentq(f, lo, hi, xtol=tol, maxiter=200)


def fft_spectrum(samples, sample_rate):
    """Single-sided spectrum of a real, uniformly sampled signal.

    Scaled so a unit sinusoid that lands exactly on bin ``k`` shows up with
    amplitude 1 there (``sin`` maps to ``1 at -90 degrees``); bin 0 carries the
    mean. Returns ``(frequencies_hz, complex_amplitudes)``.
    """
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 2 or (n & (n - 1)) != 0:
        raise LengthError(f"sample count must be a power of two, got {n}")
    spec = np.fft.rfft(x)
    amps = spec * (2.0 / n)
    amps[0] = spec[0] / n
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    return freqs, amps


def fft_reconstruct(amps, n):
    """Invert :func:`fft_spectrum` scaling back to ``n`` time samples."""
    spec = np.asarray(amps, dtype=complex).copy()
    spec[0] *= n
    spec[1:] *= n / 2.0
    return np.fft.irfft(spec, n)
