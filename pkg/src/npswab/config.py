"""Run configuration: TOML defaults merged with a user file, strictly validated."""

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from . import controller as ctl
from . import dynamics as dyn
from . import loadcell as lc
from . import observer as obs
from . import phantom as ph
from . import planner as pl
from .errors import ConfigError

DEFAULT_FILE = Path(__file__).parent / "data" / "default.toml"
SECTIONS = ("chain", "sensor", "filter", "planner", "gains", "observer", "scene",
            "swab", "engine", "plan")


def defaults():
    with open(DEFAULT_FILE, "rb") as fh:
        return tomli.load(fh)


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where} must be a table")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass(frozen=True)
class RunConfig:
    tree: dict

    def __post_init__(self):
        self.validate()

    # construction -------------------------------------------------------
    @classmethod
    def from_dict(cls, data=None):
        return cls(_merge(defaults(), data or {}))

    @classmethod
    def load(cls, path=None):
        if path is None:
            return cls.from_dict({})
        with open(path, "rb") as fh:
            try:
                data = tomli.load(fh)
            except tomli.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def dumps(self):
        return tomli_w.dumps(self.tree)

    def dump(self, path):
        Path(path).write_text(self.dumps())

    def override(self, **sections):
        """Copy with per-section overrides, e.g. ``override(gains={"mode": "baseline"})``."""
        return RunConfig(_merge(self.tree, sections))

    def with_seed(self, seed):
        return self.override(engine={"seed": int(seed)}, plan={"seed": int(seed)})

    def __getitem__(self, section):
        return self.tree[section]

    def digest(self, exclude_mode=False):
        """Stable hash of the resolved tree (optionally ignoring gains.mode)."""
        tree = copy.deepcopy(self.tree)
        if exclude_mode:
            tree["gains"].pop("mode")
        blob = json.dumps(tree, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    # validation -----------------------------------------------------------
    def validate(self):
        missing = [s for s in SECTIONS if s not in self.tree]
        if missing:
            raise ConfigError(f"missing config sections: {missing}")
        e = self.tree["engine"]
        if e["rate"] <= 0 or e["timeout"] <= 0 or e["substeps"] < 1:
            raise ConfigError("engine rate, timeout and substeps must be positive")
        if self.tree["sensor"]["rate"] <= 0 or self.tree["sensor"]["rate"] > e["rate"]:
            raise ConfigError("sensor rate must be positive and not above the control rate")
        if e["log_stride"] < 1 or self.tree["plan"]["log_stride"] < 1:
            raise ConfigError("log strides must be >= 1")
        f = self.tree["filter"]
        if f["method"] not in ("exact", "euler"):
            raise ConfigError(f"unknown filter method {f['method']!r}")
        if f["alpha"] < 0:
            raise ConfigError("filter alpha must be non-negative")
        if f["method"] == "euler" and f["alpha"] / e["rate"] >= 1.0:
            raise ConfigError("alpha*dt >= 1 is unstable for the explicit filter")
        p = self.tree["plan"]
        if p["pairs"] < 1 or p["translation_mm"] < 0 or p["rotation_deg"] < 0:
            raise ConfigError("plan needs pairs >= 1 and non-negative bounds")
        # building the objects runs their own invariant checks
        self.gains()
        self.observer()
        self.swab()
        self.line()
        if self.tree["scene"]["enabled"]:
            self.scene_local()

    # builders -------------------------------------------------------------
    def chain(self):
        name = self.tree["chain"]["file"]
        if name == "panda":
            return dyn.KinematicChain.panda()
        return dyn.KinematicChain.from_file(name)

    def gains(self, mode=None):
        g = self.tree["gains"]
        return ctl.ControllerGains(kp=np.array(g["kp"], float), kd=np.array(g["kd"], float),
                                   lam=np.array(g["lambda"], float),
                                   mode=mode or g["mode"])

    def observer(self):
        return obs.ObserverParams(**self.tree["observer"])

    def swab(self):
        return ph.SwabModel(**self.tree["swab"])

    def line(self):
        p = self.tree["planner"]
        return pl.TaskLine.from_angles(p["start"], p["decline_deg"], p["heading_deg"],
                                       p["length"], p["roll_deg"])

    def truth_model(self):
        s = self.tree["sensor"]
        return lc.CalibrationModel(A=np.array(s["truth_A"], float),
                                   Z=np.array(s["truth_Z"], float))

    def scene_local(self):
        s = self.tree["scene"]
        keys = ("main_vertices", "main_radii", "branch", "branch_vertices",
                "branch_radii", "k_end")
        try:
            channels = ph.default_channels({k: s[k] for k in keys})
        except ValueError as exc:
            raise ConfigError(f"scene: {exc}") from exc
        return ph.PhantomScene(channels, k_wall=s["k_wall"], face=s["face"])

    def scene(self, rpy_deg=None, translation=None):
        """Scene aligned to the task line, then moved by the configured pose."""
        s = self.tree["scene"]
        if not s["enabled"]:
            return None
        line = self.line()
        scene = ph.align_to_line(self.scene_local(), line.start, line.direction,
                                 self.swab().length, s["gap"])
        rpy = s["pose_rpy_deg"] if rpy_deg is None else rpy_deg
        t = s["pose_translation"] if translation is None else translation
        return scene.perturbed(rpy, t)
