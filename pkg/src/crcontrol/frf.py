"""Measured frequency-response ingest and second-order-plus-delay fitting.

The plant model is ``k * exp(-T s) / (s^2 + 2 zeta wn s + wn^2)``; the fit
minimizes summed squared log-magnitude plus phase error. The delay comes
from the high-frequency phase slope first and stays frozen, the gain is
eliminated in closed form, and ``(wn, zeta)`` go through a coarse grid
search with local refinement.
"""

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import FitQualityWarning, FrfParseError
from .lti import TransferFunction

__all__ = ["FrfData", "load_frf", "fit_second_order_delay"]


@dataclass(frozen=True)
class FrfData:
    freq_hz: np.ndarray
    response: np.ndarray
    source: str = ""

    def __post_init__(self):
        f = np.asarray(self.freq_hz, dtype=float)
        r = np.asarray(self.response, dtype=complex)
        object.__setattr__(self, "freq_hz", f)
        object.__setattr__(self, "response", r)

    @property
    def omega(self):
        return 2.0 * math.pi * self.freq_hz

    def __len__(self):
        return self.freq_hz.size


def load_frf(path, fmt=None, min_rows=10):
    """Read measured response rows from CSV.

    Accepted headers: ``freq_hz,re,im`` or ``freq_hz,mag_db,phase_deg``
    (``fmt`` may force ``"reim"``/``"magphase"``). Frequencies must be
    strictly increasing.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FrfParseError(f"{path}: empty file", row=0)
        header = [h.strip().lower() for h in header]
        if fmt is None:
            if header == ["freq_hz", "re", "im"]:
                fmt = "reim"
            elif header == ["freq_hz", "mag_db", "phase_deg"]:
                fmt = "magphase"
            else:
                raise FrfParseError(f"{path}: unrecognized header {header}", row=1)
        for i, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise FrfParseError(f"{path}: row {i} has {len(row)} fields", row=i)
            try:
                a, b, c = (float(v) for v in row)
            except ValueError as exc:
                raise FrfParseError(f"{path}: row {i}: {exc}", row=i) from exc
            rows.append((a, b, c))

    if len(rows) < min_rows:
        raise FrfParseError(
            f"{path}: need at least {min_rows} rows for fitting, got {len(rows)}",
            row=len(rows) + 1,
        )
    freq = np.array([r[0] for r in rows])
    bad = np.nonzero(np.diff(freq) <= 0.0)[0]
    if bad.size:
        raise FrfParseError(
            f"{path}: frequencies not strictly increasing at row {bad[0] + 3}",
            row=int(bad[0]) + 3,
        )
    if fmt == "reim":
        resp = np.array([complex(r[1], r[2]) for r in rows])
    else:
        resp = np.array(
            [10.0 ** (r[1] / 20.0) * np.exp(1j * math.radians(r[2])) for r in rows]
        )
    return FrfData(freq_hz=freq, response=resp, source=str(path))


def _model_response(omega, k, wn, zeta, delay):
    s = 1j * omega
    return k * np.exp(-s * delay) / (s**2 + 2.0 * zeta * wn * s + wn**2)


def _cost(data, k, wn, zeta, delay, weights):
    model = _model_response(data.omega, k, wn, zeta, delay)
    dlog = np.log(np.abs(model)) - np.log(np.abs(data.response))
    dphase = np.angle(model / data.response)
    return float(np.sum(weights * (dlog**2 + dphase**2)))


def _best_gain(data, wn, zeta, delay, weights):
    # log-gain enters the magnitude error linearly, so it has a closed form
    bare = _model_response(data.omega, 1.0, wn, zeta, delay)
    logk = np.sum(weights * (np.log(np.abs(data.response)) - np.log(np.abs(bare))))
    logk /= np.sum(weights)
    return float(np.exp(logk))


def _delay_from_phase_slope(data):
    """Excess phase slope of the top frequency decade gives the delay."""
    w = data.omega
    top = w >= w[-1] / 10.0
    if np.count_nonzero(top) < 3:
        top = np.zeros_like(w, dtype=bool)
        top[-3:] = True
    phase = np.unwrap(np.angle(data.response))
    # remove the rational part's asymptotic -180 deg; its residual slope
    # ~ 2*zeta*wn/w^2 is negligible a decade above the resonance
    slope = np.polyfit(w[top], phase[top], 1)[0]
    return max(0.0, -float(slope))


def fit_second_order_delay(data, weight="uniform"):
    """Fit the mass-spring-damper-plus-delay model to measured data.

    ``weight="low-freq-emphasis"`` multiplies errors by ``1/sqrt(f)``
    normalized to the lowest measured frequency. Falls back to a pure
    double-integrator model when the fitted natural frequency collapses
    below the measured band. Returns ``(model, report)`` where ``report``
    carries the residual and the fitted parameters.
    """
    if len(data) < 10:
        raise FrfParseError(f"need at least 10 rows, got {len(data)}")
    if weight == "uniform":
        weights = np.ones(len(data))
    elif weight == "low-freq-emphasis":
        weights = np.sqrt(data.freq_hz[0] / data.freq_hz)
    else:
        raise FrfParseError(f"unknown weighting {weight!r}")

    delay = _delay_from_phase_slope(data)
    w = data.omega

    # coarse grid over (wn, zeta), gain eliminated per node
    wn_grid = np.geomspace(w[0] / 3.0, w[-1], 40)
    zeta_grid = np.geomspace(1e-3, 2.0, 25)
    best = None
    for wn in wn_grid:
        for zeta in zeta_grid:
            k = _best_gain(data, wn, zeta, delay, weights)
            c = _cost(data, k, wn, zeta, delay, weights)
            if best is None or c < best[0]:
                best = (c, wn, zeta)
    cost0, wn0, zeta0 = best

    def objective(x):
        wn, zeta = np.exp(x)
        k = _best_gain(data, wn, zeta, delay, weights)
        return _cost(data, k, wn, zeta, delay, weights)

    res = minimize(
        objective,
        np.log([wn0, zeta0]),
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 2000},
    )
    wn, zeta = np.exp(res.x)
    k = _best_gain(data, wn, zeta, delay, weights)
    cost = _cost(data, k, wn, zeta, delay, weights)
    if cost > cost0 + 1e-15:
        warnings.warn(
            "local refinement stalled without improving on the grid optimum; "
            "returning the best point found",
            FitQualityWarning,
            stacklevel=2,
        )
        wn, zeta = wn0, zeta0
        k = _best_gain(data, wn, zeta, delay, weights)
        cost = cost0

    if wn < w[0] / 2.9:
        # spring line sits below the measured band: degenerate mass model
        k = _best_gain(data, 0.0, 0.0, delay, weights)
        cost = _cost(data, k, 0.0, 0.0, delay, weights)
        model = TransferFunction((k,), (0.0, 0.0, 1.0), delay)
        report = {
            "cost": cost,
            "delay": delay,
            "wn": 0.0,
            "zeta": 0.0,
            "gain": k,
            "degenerate_mass": True,
        }
        return model, report

    model = TransferFunction((k,), (wn**2, 2.0 * zeta * wn, 1.0), delay)
    report = {
        "cost": cost,
        "delay": delay,
        "wn": float(wn),
        "zeta": float(zeta),
        "gain": k,
        "degenerate_mass": False,
    }
    return model, report
