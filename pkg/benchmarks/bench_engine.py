#!/usr/bin/env python3
"""Benchmark the hybrid integrator backends on a representative closed loop.

Runs the guideline loop step response with the compiled core (when built)
and the pure-python fallback, and reports steps/second for each.
"""

import time

import numpy as np

from crcontrol import closedloop as cl
from crcontrol import design as dg
from crcontrol import hybridsim
from crcontrol import _engine_py


def run_once(engine, loop, duration=1.0):
    cfg = hybridsim.default_sim_config(loop.w_max(), duration)
    plan = cl.loop_plan(loop, cfg.step)
    n_steps = int(round(cfg.duration / cfg.step))
    m = cfg.resolve_substeps(loop.w_max())
    nf = n_steps * m
    hf = cfg.step / m
    r_half = np.ones(2 * nf + 1)
    out = np.zeros((plan.sig_c.shape[0], n_steps + 1))
    u_hist = np.zeros(nf + 1)
    reset_buf = np.zeros(nf + 2)
    t0 = time.perf_counter()
    engine.run_hybrid(
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
        out,
        u_hist,
        reset_buf,
    )
    dt = time.perf_counter() - t0
    return nf, dt, out


def main():
    loop = dg.guideline_preset(100.0)
    engines = [("python", _engine_py)]
    try:
        from crcontrol import _engine_cy

        engines.insert(0, ("compiled", _engine_cy))
    except ImportError:
        print("compiled core not built; benchmarking the fallback only")

    results = {}
    for name, engine in engines:
        nf, dt, out = run_once(engine, loop)
        results[name] = (nf, dt, out)
        print(f"{name:9s}: {nf} fine steps in {dt:.3f} s  ({nf / dt / 1e6:.2f} M steps/s)")

    if len(results) == 2:
        (_, t_c, out_c), (_, t_p, out_p) = results["compiled"], results["python"]
        rms = float(np.sqrt(np.mean((out_c - out_p) ** 2)))
        print(f"speedup: {t_p / t_c:.1f}x   backend output rms difference: {rms:.3e}")


if __name__ == "__main__":
    main()
