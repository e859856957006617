import numpy as np
import pytest

from npswab import harness as hx
from npswab import phantom as ph
from npswab import stats
from npswab.config import RunConfig
from npswab.engine import TrialRecord
from npswab.errors import ConfigError

SMALL = hx.ExperimentPlan(pairs=3, translation_mm=4.0, rotation_deg=5.0, seed=7, log_stride=50)


def fake(pair, mode, outcome, mean=1.0, peak=2.0):
    return TrialRecord(pair_id=pair, mode=mode, perturbation=[0.0] * 6, outcome=outcome,
                       stop_reason="terminated", mean_force_mN=mean, peak_force_mN=peak,
                       duration=1.0, ticks=1000, termination_tick=999, final_eps=0.1,
                       final_s=30.0, tip=[0.0] * 3, tip_depth=0.1, tip_to_target=0.0,
                       ee_displacement_mm=0.0, ee_rotation_deg=0.0, saturated_ticks=0,
                       clamped_ticks=0, stale_relaxations=0, overload_samples=0,
                       config_hash="x", seed=0)


def test_reference_counts_in_report():
    tab = stats.ContingencyTable.from_counts(33, 9, 16, 25)
    rep = hx.Report(tab, stats.chi_square_2x2(tab), "", {}, {}, {}, {}, [])
    text = rep.text()
    assert "78.6%" in text and "39.0%" in text
    assert "p = 0.000249" in text
    assert rep.rates["feedback"] == pytest.approx(33 / 42)


def test_summary_counts_and_direction():
    recs = []
    for i in range(10):
        recs.append(fake(i, "feedback", ph.SUCCESS if i < 8 else ph.WEDGED, mean=1.0 + 0.1 * i))
        recs.append(fake(i, "baseline", ph.SUCCESS if i < 4 else ph.MISTRACKED,
                         mean=1.5 + 0.1 * i + 0.01 * (i % 3)))
    rep = hx.summarize(recs)
    assert list(rep.table.counts.ravel()) == [8, 2, 4, 6]
    assert rep.failures["baseline"][ph.MISTRACKED] == 6
    assert rep.failures["feedback"][ph.WEDGED] == 2
    assert rep.t_tests["mean"].statistic < 0
    assert len(rep.pairs) == 10


def test_unmatched_pairs_rejected():
    recs = []
    for i in range(42):
        recs.append(fake(i, "feedback", ph.SUCCESS if i < 33 else ph.WEDGED, mean=1 + i))
        if i < 41:
            recs.append(fake(i, "baseline", ph.SUCCESS if i < 16 else ph.MISTRACKED,
                             mean=2 + i * 1.1))
    with pytest.raises(ValueError):
        hx.summarize(recs)        # unmatched pair 41


def test_undefined_chi_square_is_reported():
    recs = [r for i in range(3) for r in (fake(i, "feedback", ph.SUCCESS, mean=1 + i),
                                          fake(i, "baseline", ph.SUCCESS, mean=2 + i * i))]
    rep = hx.summarize(recs)
    assert rep.chi_square is None
    assert "not applicable" in rep.text()


def test_pair_draws_are_seeded_and_bounded():
    a = SMALL.pair_draws()
    assert a == SMALL.pair_draws()
    for rpy, t, seed in a:
        assert np.all(np.abs(rpy) <= 5.0) and np.all(np.abs(t) <= 4e-3)
    other = hx.ExperimentPlan(pairs=3, seed=8).pair_draws()
    assert other != a


def test_plan_validation():
    with pytest.raises(ConfigError):
        hx.ExperimentPlan(pairs=0)
    with pytest.raises(ConfigError):
        hx.ExperimentPlan(translation_mm=-1.0)


def test_parallelism_does_not_change_results(tmp_path):
    cfg = RunConfig.load()
    serial = hx.run_experiment(cfg, SMALL, jobs=1, out_dir=tmp_path / "a")
    parallel = hx.run_experiment(cfg, SMALL, jobs=2, out_dir=tmp_path / "b")
    strip = lambda rs: [{k: v for k, v in r.to_dict().items()} for r in rs]
    assert strip(serial) == strip(parallel)
    for name in sorted(p.name for p in (tmp_path / "a" / "trials").iterdir()):
        assert (tmp_path / "a" / "trials" / name).read_bytes() == \
            (tmp_path / "b" / "trials" / name).read_bytes()
    rep = hx.summarize(serial)
    hx.write_report(rep, serial, tmp_path / "a")
    hx.write_report(hx.summarize(parallel), parallel, tmp_path / "b")
    for name in ("summary.txt", "pairs.csv", "trials.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert [r.mode for r in serial] == ["feedback", "baseline"] * 3
