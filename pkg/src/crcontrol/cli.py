"""Command-line front end.

Every experiment reads a flat key=value config (INI sections) and/or flags,
runs deterministically, and writes plot-ready CSV files plus a summary.txt
with the headline numbers. Exit codes: 0 ok, 2 bad configuration, 3
numerical failure.
"""

import argparse
import configparser
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import closedloop as cl
from . import design as dg
from .harmonics import compute_hosidf_grid, default_grid
from .errors import ConfigError, CrControlError, NumericalError
from .frf import fit_second_order_delay, load_frf
from .lti import format_tf, mass_plant, msd_plant, parse_tf
from .hybridsim import HybridSimConfig
from .reset import CrElement, clegg, fore

EXPERIMENTS = (
    "step",
    "sens",
    "dfloop",
    "hosidf",
    "stability",
    "sweep",
    "design",
    "fit",
    "gainvar",
)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="crcontrol",
        description="Reset-control loop experiments: simulation, harmonic "
        "analysis, stability checks, and tuning sweeps.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value config file with [loop]/[sim] sections")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--wc", type=float, help="crossover frequency, rad/s")
        p.add_argument("--pm", type=float, help="target phase margin, degrees")
        p.add_argument("--gamma", type=float, help="reset coefficient in [-1, 1]")
        p.add_argument("--wl", type=float, help="wrapper lead zero, rad/s")
        p.add_argument("--wh", type=float, help="wrapper lead pole, rad/s")
        p.add_argument("--wr", type=float, help="reset lag corner, rad/s")
        p.add_argument("--wf", type=float, help="phase-lead filter pole, rad/s")
        p.add_argument("--plant", help="mass | msd | path to a model text file")
        p.add_argument("--topology", choices=cl.TOPOLOGIES)
        if name == "hosidf":
            p.add_argument("--element", default="clegg", choices=["clegg", "fore", "cglp", "cr-cglp"])
            p.add_argument("--n", type=int, default=9, help="highest harmonic order")
        if name == "sweep":
            p.add_argument("--workers", type=int, default=1, help="parallel sweep cells")
        if name == "design":
            p.add_argument("--pa", type=float, default=15.0, help="target phase advantage, deg")
        if name == "fit":
            p.add_argument("--frf", required=True, help="measured response CSV")
            p.add_argument("--weight", default="uniform", choices=["uniform", "low-freq-emphasis"])
        if name == "gainvar":
            p.add_argument("--delta-db", type=float, default=5.0)
    return parser


def _load_config(path):
    cfg = configparser.ConfigParser()
    read = cfg.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    return cfg


def _settings(args):
    """Merge config-file sections and flag overrides into one dict."""
    merged = {
        "wc": 100.0,
        "topology": "cr-cglp",
        "pm": None,
        "gamma": None,
        "wr_ratio": 1.2,
        "wl_ratio": 0.45,
        "wh_ratio": 20.0,
        "wf_ratio": 20.0,
        "wz_ratio": None,
        "plant": "mass",
        "amplitude": 1.0,
        "step": None,
        "duration": None,
        "fmin": None,
        "fmax": None,
        "points": 15,
        "pm_list": "10,14,18,22",
        "wl_list": "0.1,0.2154,0.4642,1.0",
    }
    if args.config:
        cfg = _load_config(args.config)
        for section in cfg.sections():
            for key, value in cfg.items(section):
                if key not in merged:
                    raise ConfigError(f"{args.config}: unknown key {key!r} in [{section}]")
                merged[key] = value
        for key in (
            "wc",
            "pm",
            "gamma",
            "wr_ratio",
            "wl_ratio",
            "wh_ratio",
            "wf_ratio",
            "wz_ratio",
            "amplitude",
            "step",
            "duration",
            "fmin",
            "fmax",
        ):
            if isinstance(merged[key], str):
                merged[key] = float(merged[key])
        merged["points"] = int(merged["points"])

    wc_flag = getattr(args, "wc", None)
    if wc_flag is not None:
        merged["wc"] = wc_flag
    wc = merged["wc"]
    if wc is None or wc <= 0.0:
        raise ConfigError(f"crossover frequency must be positive, got {wc}")
    for flag, key in (("wl", "wl_ratio"), ("wh", "wh_ratio"), ("wr", "wr_ratio"), ("wf", "wf_ratio")):
        value = getattr(args, flag, None)
        if value is not None:
            if value <= 0.0:
                raise ConfigError(f"--{flag} must be positive, got {value}")
            merged[key] = value / wc
    for flag in ("pm", "gamma", "topology", "plant"):
        value = getattr(args, flag, None)
        if value is not None:
            merged[flag] = value
    if merged["gamma"] is not None and abs(merged["gamma"]) > 1.0:
        raise ConfigError(f"gamma must lie in [-1, 1], got {merged['gamma']}")
    if merged["gamma"] is None and merged["pm"] is None:
        merged["pm"] = 20.0
    return merged


def _plant_from(settings):
    name = settings["plant"]
    if name == "mass":
        return mass_plant()
    if name == "msd":
        return msd_plant()
    path = Path(name)
    if not path.exists():
        raise ConfigError(f"plant must be mass, msd, or an existing model file; got {name!r}")
    return parse_tf(path.read_text())


def _loop_from(settings):
    plant = _plant_from(settings)
    sim = None
    if settings["step"] is not None:
        sim = HybridSimConfig(
            step=settings["step"],
            duration=settings["duration"] or 300.0 / settings["wc"],
        )
    kwargs = dict(
        plant=plant,
        wr_ratio=settings["wr_ratio"],
        wl_ratio=settings["wl_ratio"],
        wh_ratio=settings["wh_ratio"],
        wf_ratio=settings["wf_ratio"],
        wz_ratio=settings["wz_ratio"],
        sim=sim,
    )
    if settings["topology"] == "bls":
        kwargs = {"plant": plant, "wz_ratio": settings["wz_ratio"], "sim": sim}
        return dg.make_loop(settings["wc"], "bls", **kwargs)
    if settings["gamma"] is not None:
        return dg.make_loop(settings["wc"], settings["topology"], gamma=settings["gamma"], **kwargs)
    return dg.make_loop(settings["wc"], settings["topology"], pm=settings["pm"], **kwargs)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, (str, int)) else format(v, ".12g") for v in row])


def _write_summary(outdir, lines):
    with open(outdir / "summary.txt", "w") as fh:
        for key, value in lines:
            fh.write(f"{key} = {value}\n")


def _fmt(value, spec=".6g"):
    return format(value, spec)


def _run_step(args, settings, outdir):
    loop = _loop_from(settings)
    trace, metrics = cl.step_response(loop, settings["amplitude"], duration=settings["duration"])
    trace.to_csv(outdir / "step_trace.csv")
    _write_summary(
        outdir,
        [
            ("experiment", "step"),
            ("topology", loop.topology),
            ("gamma", _fmt(loop.gamma)),
            ("phase_margin_deg", _fmt(cl.phase_margin(loop)) if loop.reset_elem or loop.topology == "bls" else ""),
            ("overshoot", _fmt(metrics.overshoot)),
            ("settling_s", _fmt(metrics.settling_time)),
            ("peak_time_s", _fmt(metrics.peak_time)),
            ("steady_state_error", _fmt(metrics.steady_state_error)),
            ("settled", metrics.settled),
            ("resets", trace.reset_times.size),
            ("suppressed_resets", trace.n_suppressed),
        ],
    )
    return 0


def _run_sens(args, settings, outdir):
    loop = _loop_from(settings)
    wc = settings["wc"]
    fmin = settings["fmin"] or wc / 10.0
    fmax = settings["fmax"] or 4.0 * wc
    omegas = np.geomspace(fmin, fmax, settings["points"])
    curve = cl.sensitivity_scan(loop, omegas, settings["amplitude"])
    _write_csv(
        outdir / "sens_curve.csv",
        ["omega", "sensitivity", "sensitivity_db", "settled"],
        [
            (curve.omega[i], curve.value[i], 20.0 * math.log10(curve.value[i]), int(curve.settled[i]))
            for i in range(curve.omega.size)
        ],
    )
    _write_summary(
        outdir,
        [
            ("experiment", "sens"),
            ("peak_sensitivity", _fmt(curve.peak_value)),
            ("peak_sensitivity_db", _fmt(20.0 * math.log10(curve.peak_value))),
            ("peak_omega", _fmt(curve.peak_omega)),
        ],
    )
    return 0


def _run_dfloop(args, settings, outdir):
    loop = _loop_from(settings)
    omegas = np.geomspace(settings["wc"] / 100.0, 100.0 * settings["wc"], 200)
    resp = cl.df_open_loop(loop, omegas)
    _write_csv(
        outdir / "dfloop.csv",
        ["omega", "mag_db", "phase_deg"],
        [
            (omegas[i], 20.0 * math.log10(abs(resp[i])), math.degrees(np.angle(resp[i])))
            for i in range(omegas.size)
        ],
    )
    _write_summary(
        outdir,
        [
            ("experiment", "dfloop"),
            ("phase_margin_deg", _fmt(cl.phase_margin(loop))),
            ("crossover_mag", _fmt(abs(cl.df_open_loop(loop, np.array([loop.wc]))[0]))),
        ],
    )
    return 0


def _element_from(args, settings):
    wc = settings["wc"]
    wr = settings["wr_ratio"] * wc
    gamma = settings["gamma"] if settings["gamma"] is not None else 0.0
    kind = args.element
    if kind == "clegg":
        return clegg(gamma), ()
    if kind == "fore":
        return fore(wr, gamma), ()
    alpha = dg._solve_alpha(1.0, wr, settings["wf_ratio"] * wc, wc)
    dlead = dg.lead(alpha * wr, settings["wf_ratio"] * wc)
    if kind == "cglp":
        return fore(wr, gamma), (dlead,)
    return (
        CrElement(fore(wr, gamma), wl=settings["wl_ratio"] * wc, wh=settings["wh_ratio"] * wc),
        (dlead,),
    )


def _run_hosidf(args, settings, outdir):
    elem, post = _element_from(args, settings)
    omegas = default_grid(settings["wc"], points=120)
    result = compute_hosidf_grid(elem, omegas, n_max=args.n, post_tfs=post)
    result.to_csv(outdir / f"hosidf_{args.element}.csv")
    h1c = result.harmonics[1][omegas.size // 2]
    _write_summary(
        outdir,
        [
            ("experiment", "hosidf"),
            ("element", args.element),
            ("n_max", args.n),
            ("df_mag_mid", _fmt(abs(h1c))),
            ("df_phase_mid_deg", _fmt(math.degrees(np.angle(h1c)))),
        ],
    )
    return 0


def _run_stability(args, settings, outdir):
    loop = _loop_from(settings)
    report = cl.hbeta_of_loop(loop)
    report.to_csv(outdir / "stability.csv")
    print(report.summary())
    _write_summary(
        outdir,
        [
            ("experiment", "stability"),
            ("verdict", "satisfied" if report.satisfied else "violated"),
            ("theta1_deg", _fmt(report.theta1)),
            ("theta2_deg", _fmt(report.theta2)),
            ("margin_theta1_deg", _fmt(report.margins["theta1_to_lower"])),
            ("margin_theta2_deg", _fmt(report.margins["theta2_to_upper"])),
            ("margin_spread_deg", _fmt(report.margins["spread_to_limit"])),
        ],
    )
    return 0


def _run_sweep(args, settings, outdir):
    pm_list = [float(v) for v in str(settings["pm_list"]).split(",")]
    wl_list = [float(v) for v in str(settings["wl_list"]).split(",")]
    sweep = dg.sweep_transient(
        settings["wc"], pm_list, wl_list, plant=_plant_from(settings), workers=args.workers
    )
    sweep.to_csv(outdir / "sweep_transient.csv")
    fit = dg.fit_overshoot_plane(sweep)
    _write_summary(
        outdir,
        [
            ("experiment", "sweep"),
            ("bls_overshoot", _fmt(sweep.reference["overshoot"])),
            ("bls_settling_s", _fmt(sweep.reference["settling_s"])),
            ("fit_coef_log_wl", _fmt(fit["coef_log_wl"])),
            ("fit_coef_pm", _fmt(fit["coef_pm"])),
            ("fit_intercept", _fmt(fit["intercept"])),
            ("fit_rms_residual", _fmt(fit["rms_residual"])),
        ],
    )
    return 0


def _run_design(args, settings, outdir):
    design = dg.design_cglp(
        settings["wc"],
        args.pa,
        wr_ratio=settings["wr_ratio"],
        wf_ratio=settings["wf_ratio"],
    )
    _write_summary(
        outdir,
        [
            ("experiment", "design"),
            ("target_pa_deg", _fmt(design.target_pa)),
            ("gamma", _fmt(design.gamma, ".8g")),
            ("alpha", _fmt(design.alpha, ".8g")),
            ("wr", _fmt(design.wr)),
            ("wf", _fmt(design.wf)),
            ("flatness_db", _fmt(design.flatness_db)),
        ],
    )
    return 0


def _run_fit(args, settings, outdir):
    data = load_frf(args.frf)
    model, report = fit_second_order_delay(data, weight=args.weight)
    (outdir / "fitted_model.txt").write_text(format_tf(model) + "\n")
    _write_summary(
        outdir,
        [
            ("experiment", "fit"),
            ("model", format_tf(model)),
            ("gain", _fmt(report["gain"], ".8g")),
            ("wn", _fmt(report["wn"], ".8g")),
            ("zeta", _fmt(report["zeta"], ".8g")),
            ("delay_s", _fmt(report["delay"], ".8g")),
            ("residual", _fmt(report["cost"], ".8g")),
            ("degenerate_mass", report["degenerate_mass"]),
        ],
    )
    return 0


def _run_gainvar(args, settings, outdir):
    plant = _plant_from(settings)
    wc = settings["wc"]
    pid_loop = dg.make_loop(wc, "bls", plant=plant, pid_ratios=(0.1, 1.0 / 2.5, 2.5), wz_ratio=5.0)
    cr_loop = dg.guideline_preset(wc, plant=plant)
    rows = []
    for name, loop in (("pid", pid_loop), ("cr-cglp", cr_loop)):
        rec = dg.gain_variation_experiment(loop, args.delta_db)
        rows.append((name, rec.wc_before, rec.wc_after, rec.pm_before, rec.pm_after, rec.pm_change))
    _write_csv(
        outdir / "gainvar.csv",
        ["loop", "wc_before", "wc_after", "pm_before_deg", "pm_after_deg", "pm_change_deg"],
        rows,
    )
    _write_summary(
        outdir,
        [
            ("experiment", "gainvar"),
            ("delta_db", _fmt(args.delta_db)),
            ("pid_pm_change_deg", _fmt(rows[0][5])),
            ("cr_pm_change_deg", _fmt(rows[1][5])),
        ],
    )
    return 0


_RUNNERS = {
    "step": _run_step,
    "sens": _run_sens,
    "dfloop": _run_dfloop,
    "hosidf": _run_hosidf,
    "stability": _run_stability,
    "sweep": _run_sweep,
    "design": _run_design,
    "fit": _run_fit,
    "gainvar": _run_gainvar,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = _settings(args)
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        return _RUNNERS[args.experiment](args, settings, outdir)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, CrControlError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
