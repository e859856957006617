import pytest

from npswab.config import RunConfig
from npswab.errors import ConfigError


def test_round_trip(tmp_path):
    cfg = RunConfig.load().override(gains={"mode": "baseline"}, plan={"pairs": 3})
    cfg.dump(tmp_path / "c.toml")
    back = RunConfig.load(tmp_path / "c.toml")
    assert back.tree == cfg.tree
    assert back.digest() == cfg.digest()
    assert back.dumps() == cfg.dumps()


def test_partial_file_merges_over_defaults(tmp_path):
    (tmp_path / "p.toml").write_text("[filter]\nalpha = 3.0\n")
    cfg = RunConfig.load(tmp_path / "p.toml")
    assert cfg["filter"]["alpha"] == 3.0
    assert cfg["planner"]["waypoints"] == 32


@pytest.mark.parametrize("text", ["[filter]\nalfa = 3.0\n", "[nonsense]\nx = 1\n",
                                  "[filter\nalpha = 3\n"])
def test_bad_files(tmp_path, text):
    (tmp_path / "bad.toml").write_text(text)
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "bad.toml")


def test_digest_ignores_mode_on_request():
    a = RunConfig.load()
    b = a.override(gains={"mode": "baseline"})
    assert a.digest() != b.digest()
    assert a.digest(exclude_mode=True) == b.digest(exclude_mode=True)


def test_with_seed():
    cfg = RunConfig.load().with_seed(9)
    assert cfg["engine"]["seed"] == 9 and cfg["plan"]["seed"] == 9


@pytest.mark.parametrize("section, values", [
    ("filter", {"method": "rk4"}),
    ("filter", {"method": "euler", "alpha": 2000.0}),
    ("sensor", {"rate": 5000.0}),
    ("plan", {"pairs": 0}),
    ("gains", {"mode": "impedance"}),
    ("observer", {"threshold": 0.0}),
])
def test_validation(section, values):
    with pytest.raises(ConfigError):
        RunConfig.load().override(**{section: values})
