"""Command-line entry point: ``npswab {calibrate,trial,experiment,figures}``."""

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import engine as en
from . import force_filter as ff
from . import harness as hx
from . import loadcell as lc
from . import phantom as ph
from . import plots
from .config import RunConfig
from .errors import (CalibrationDegenerateError, ConfigError, NpSwabError,
                     UnreachableWaypointError)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_UNREACHABLE = 4
EXIT_DEGENERATE = 5
EXIT_ERROR = 1

log = logging.getLogger("npswab")


def _config(args):
    cfg = RunConfig.load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def cmd_calibrate(args):
    cfg = _config(args)
    if args.noise_free:
        cfg = cfg.override(sensor={"noise_sigma": 0.0})
    truth = cfg.truth_model()
    rng = en._seed_streams(cfg["engine"]["seed"])[0]
    model = en._calibrate(cfg, truth, rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "calibration.toml")
    lines = ["axis R^2 residual_rms_N max_abs_A_error abs_Z_error"]
    for i, axis in enumerate(lc.AXES):
        dA = float(np.max(np.abs(model.A[i] - truth.A[i])))
        dZ = float(abs(model.Z[i] - truth.Z[i]))
        lines.append(f"{axis} {float(model.r2[i])!r} {float(model.residual_rms[i])!r} "
                     f"{dA!r} {dZ!r}")
    text = "\n".join(lines) + "\n"
    (out / "calibration.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def _perturbation(args):
    if args.rpy is None and args.shift is None:
        return None
    rpy = args.rpy or [0.0, 0.0, 0.0]
    shift = [v * 1e-3 for v in (args.shift or [0.0, 0.0, 0.0])]
    return rpy, shift


def cmd_trial(args):
    cfg = _config(args)
    mode = args.mode or cfg["gains"]["mode"]
    res = en.run_trial(cfg, mode, perturbation=_perturbation(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.dump(out / "config.toml")
    rec = en.write_trial(res, out, "trial")
    plots.trial_figure(out / "trial.svg", [res.log], [mode],
                       title=f"{mode}: {rec.outcome}")
    print(f"{mode}: {rec.outcome} ({rec.stop_reason}) after {rec.duration:.3f} s, "
          f"mean force {rec.mean_force_mN:.3f} mN, peak {rec.peak_force_mN:.3f} mN")
    return EXIT_DIVERGED if rec.outcome == ph.DIVERGED else EXIT_OK


def _read_log(path, stride):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return en.TickLog(data, stride)


def cmd_experiment(args):
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.dump(out / "config.toml")
    plan = hx.ExperimentPlan.from_config(cfg)
    jobs = args.jobs or os.cpu_count() or 1
    records = hx.run_experiment(cfg, plan, jobs=jobs, out_dir=out)
    report = hx.summarize(records)
    hx.write_report(report, records, out)
    fig_dir = out / "plots"
    fig_dir.mkdir(exist_ok=True)
    for pair in range(plan.pairs):
        logs = [_read_log(out / "trials" / f"pair{pair:03d}_{m}.csv", plan.log_stride)
                for m in hx.MODES]
        plots.trial_figure(fig_dir / f"pair{pair:03d}.svg", logs, list(hx.MODES),
                           title=f"pair {pair}")
    print(report.text(), end="")
    return EXIT_OK


def cmd_figures(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    alphas = tuple(args.alpha) if args.alpha else ff.ALPHA_PRESETS
    plots.step_response_figure(out / "step_response.svg", alphas)
    cfg = _config(args)
    plots.sigmoid_figure(out / "sigmoids.svg", cfg["planner"], cfg.observer())
    print(f"wrote {out / 'step_response.svg'} and {out / 'sigmoids.svg'}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="npswab", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out):
        sp.add_argument("--config", type=Path, help="TOML file merged over the defaults")
        sp.add_argument("--seed", type=int, help="master seed (engine and plan)")
        sp.add_argument("--out", type=Path, default=Path(out), help="output directory")

    sp = sub.add_parser("calibrate", help="synthetic nine-orientation loadcell calibration")
    common(sp, "calibration")
    sp.add_argument("--noise-free", action="store_true", help="zero sensor noise")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("trial", help="one insertion")
    common(sp, "trial")
    sp.add_argument("--mode", choices=("feedback", "baseline"))
    sp.add_argument("--rpy", type=float, nargs=3, metavar="DEG",
                    help="phantom rotation (roll pitch yaw, degrees)")
    sp.add_argument("--shift", type=float, nargs=3, metavar="MM",
                    help="phantom translation (mm)")
    sp.set_defaults(func=cmd_trial)

    sp = sub.add_parser("experiment", help="paired experiment over the configured plan")
    common(sp, "experiment")
    sp.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("figures", help="filter step response and sigmoid profiles")
    common(sp, "figures")
    sp.add_argument("--alpha", type=float, nargs="+", help="filter rates to plot")
    sp.set_defaults(func=cmd_figures)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CalibrationDegenerateError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except UnreachableWaypointError as exc:
        print(f"start-up failed: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    except ConfigError as exc:
        print(f"bad configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NpSwabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
