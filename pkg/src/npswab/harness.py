"""Paired experiment: one phantom pose per pair, run in both controller modes."""

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import engine as en
from . import phantom as ph
from . import stats
from .config import RunConfig
from .controller import BASELINE, FEEDBACK
from .errors import ConfigError, DegenerateTestError, UndefinedTestError

log = logging.getLogger(__name__)

MODES = (FEEDBACK, BASELINE)


@dataclass(frozen=True)
class ExperimentPlan:
    pairs: int = 41
    translation_mm: float = 4.0
    rotation_deg: float = 5.0
    seed: int = 2024
    log_stride: int = 10

    def __post_init__(self):
        if self.pairs < 1:
            raise ConfigError("an experiment needs at least one pair")
        bounds = (self.translation_mm, self.rotation_deg)
        if not all(np.isfinite(b) and b >= 0 for b in bounds):
            raise ConfigError("perturbation bounds must be finite and non-negative")

    @classmethod
    def from_config(cls, cfg):
        p = cfg["plan"]
        return cls(pairs=p["pairs"], translation_mm=p["translation_mm"],
                   rotation_deg=p["rotation_deg"], seed=p["seed"], log_stride=p["log_stride"])

    def pair_draws(self):
        """[(rpy_deg, translation_m, trial_seed)] for every pair, from the master seed."""
        out = []
        for child in np.random.SeedSequence(self.seed).spawn(self.pairs):
            rng = np.random.default_rng(child)
            rpy = rng.uniform(-self.rotation_deg, self.rotation_deg, 3)
            t = rng.uniform(-self.translation_mm, self.translation_mm, 3) * 1e-3
            trial_seed = int(rng.integers(0, 2**31 - 1))
            out.append((rpy.tolist(), t.tolist(), trial_seed))
        return out


def _run_pair(args):
    tree, pair_id, rpy, t, seed, stride, out_dir = args
    cfg = RunConfig(tree)
    records = []
    for mode in MODES:
        res = en.run_trial(cfg, mode, seed=seed, perturbation=(rpy, t), pair_id=pair_id,
                           log_stride=stride)
        if out_dir is not None:
            en.write_trial(res, Path(out_dir) / "trials", f"pair{pair_id:03d}_{mode}")
        records.append(res.record)
    return records


def run_experiment(cfg, plan=None, jobs=None, out_dir=None):
    """All pairs of ``plan`` (default: from ``cfg``); records sorted by (pair, mode)."""
    plan = plan or ExperimentPlan.from_config(cfg)
    jobs = jobs or os.cpu_count() or 1
    tasks = [(cfg.tree, i, rpy, t, seed, plan.log_stride,
              None if out_dir is None else str(out_dir))
             for i, (rpy, t, seed) in enumerate(plan.pair_draws())]
    if jobs == 1 or len(tasks) == 1:
        chunks = [_run_pair(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            chunks = list(pool.map(_run_pair, tasks))
    return [r for chunk in chunks for r in chunk]


# ---------------------------------------------------------------------------
# summary
# ---------------------------------------------------------------------------

@dataclass
class Report:
    table: stats.ContingencyTable
    chi_square: object                 # TestResult or None
    chi_square_note: str
    force: dict                        # mode -> {"mean": (mu, sd), "peak": (mu, sd)}
    t_tests: dict                      # "mean"/"peak" -> TestResult or None
    displacement: dict                 # mode -> (mm mean, deg mean)
    failures: dict                     # mode -> {label: count}
    pairs: list                        # per-pair rows

    @property
    def rates(self):
        return dict(zip(self.table.rows, self.table.rates))

    def text(self):
        lines = ["Success (contingency)", "mode        success  failure  rate"]
        for name, (s, f), rate in zip(self.table.rows, self.table.counts, self.table.rates):
            lines.append(f"{name:<10} {s:8d} {f:8d}  {100 * rate:.1f}%")
        if self.chi_square is not None:
            lines.append(f"chi-square = {self.chi_square.statistic:.4f}, "
                         f"p = {self.chi_square.p_value:.4g}")
        else:
            lines.append(f"chi-square: not applicable ({self.chi_square_note})")
        lines += ["", "Force (mN), mean +- sd"]
        for mode, f in self.force.items():
            lines.append(f"{mode:<10} average {f['mean'][0]:.3f} +- {f['mean'][1]:.3f}   "
                         f"peak {f['peak'][0]:.3f} +- {f['peak'][1]:.3f}")
        for key, res in self.t_tests.items():
            if res is None:
                lines.append(f"paired t ({key}): not applicable")
            else:
                lines.append(f"paired t ({key}): t = {res.statistic:.4f}, p = {res.p_value:.4g}")
        lines += ["", "Final end-effector offset from nominal (mean)"]
        for mode, (mm, deg) in self.displacement.items():
            lines.append(f"{mode:<10} {mm:.3f} mm  {deg:.3f} deg")
        lines += ["", "Outcomes"]
        for mode, counts in self.failures.items():
            body = ", ".join(f"{k} {v}" for k, v in counts.items())
            lines.append(f"{mode:<10} {body}")
        return "\n".join(lines) + "\n"


def _by_mode(records):
    out = {m: [] for m in MODES}
    for r in sorted(records, key=lambda r: (r.pair_id, MODES.index(r.mode))):
        out[r.mode].append(r)
    return out


def _mean_sd(x):
    x = np.asarray(x, float)
    return (float(np.mean(x)), float(np.std(x, ddof=1)) if len(x) > 1 else 0.0)


def summarize(records):
    by = _by_mode(records)
    fb, bl = by[FEEDBACK], by[BASELINE]
    if not fb or len(fb) != len(bl):
        raise ValueError("summary needs complete pairs")
    for a, b in zip(fb, bl):
        if a.pair_id != b.pair_id or a.config_hash != b.config_hash:
            raise ValueError(f"pair {a.pair_id} is not a matched pair")
    counts = [sum(r.outcome == ph.SUCCESS for r in by[m]) for m in MODES]
    table = stats.ContingencyTable.from_counts(counts[0], len(fb) - counts[0],
                                               counts[1], len(bl) - counts[1])
    chi, note = None, ""
    try:
        chi = stats.chi_square_2x2(table)
    except UndefinedTestError as exc:
        note = str(exc)
    force = {m: {"mean": _mean_sd([r.mean_force_mN for r in by[m]]),
                 "peak": _mean_sd([r.peak_force_mN for r in by[m]])} for m in MODES}
    tt = {}
    for key, attr in (("mean", "mean_force_mN"), ("peak", "peak_force_mN")):
        try:
            tt[key] = stats.paired_t_test([getattr(r, attr) for r in fb],
                                          [getattr(r, attr) for r in bl])
        except DegenerateTestError:
            tt[key] = None
    disp = {m: (float(np.nanmean([r.ee_displacement_mm for r in by[m]])),
                float(np.nanmean([r.ee_rotation_deg for r in by[m]]))) for m in MODES}
    fails = {m: {label: sum(r.outcome == label for r in by[m]) for label in ph.OUTCOMES
                 if label != ph.FREE_SPACE} for m in MODES}
    pairs = [{"pair": a.pair_id,
              "rx_deg": a.perturbation[0], "ry_deg": a.perturbation[1],
              "rz_deg": a.perturbation[2], "tx_mm": a.perturbation[3] * 1e3,
              "ty_mm": a.perturbation[4] * 1e3, "tz_mm": a.perturbation[5] * 1e3,
              "feedback": a.outcome, "baseline": b.outcome,
              "feedback_mean_mN": a.mean_force_mN, "baseline_mean_mN": b.mean_force_mN,
              "feedback_peak_mN": a.peak_force_mN, "baseline_peak_mN": b.peak_force_mN,
              "feedback_disp_mm": a.ee_displacement_mm, "baseline_disp_mm": b.ee_displacement_mm,
              "feedback_rot_deg": a.ee_rotation_deg, "baseline_rot_deg": b.ee_rotation_deg}
             for a, b in zip(fb, bl)]
    return Report(table, chi, note, force, tt, disp, fails, pairs)


def write_report(report, records, directory):
    """summary.txt, pairs.csv and trials.csv (all floats at full precision)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "summary.txt").write_text(report.text())
    _write_csv(directory / "pairs.csv", report.pairs)
    rows = []
    for r in sorted(records, key=lambda r: (r.pair_id, MODES.index(r.mode))):
        d = r.to_dict()
        d["perturbation"] = " ".join(repr(float(v)) for v in d["perturbation"])
        d["tip"] = " ".join(repr(float(v)) for v in d["tip"])
        rows.append(d)
    _write_csv(directory / "trials.csv", rows)


def _write_csv(path, rows):
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
