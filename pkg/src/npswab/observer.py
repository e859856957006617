"""Fuzzy termination: product of force and displacement sigmoid memberships."""

from dataclasses import dataclass
from typing import NamedTuple

import numba as nb
import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class ObserverParams:
    f_bar: float = 0.167       # N
    nu_f: float = 30.0
    eps_bar: float = 0.085     # m
    nu_eps: float = 40.0
    threshold: float = 0.5

    def __post_init__(self):
        for name in ("f_bar", "nu_f", "eps_bar", "nu_eps", "threshold"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"observer {name} must be positive")


class Observation(NamedTuple):
    p_f: float
    p_eps: float
    p_term: float
    eps: float
    terminate: bool


@nb.njit(cache=True)
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@nb.njit(cache=True)
def observe_kernel(f_z, eps, f_bar, nu_f, eps_bar, nu_eps):
    p_f = _sigmoid(nu_f * (f_z - f_bar))
    p_e = _sigmoid(nu_eps * (eps - eps_bar))
    return p_f, p_e, p_f * p_e


@dataclass
class ObserverState:
    """Start position plus the latched decision of one trial."""

    start: np.ndarray
    params: ObserverParams = ObserverParams()
    p_f: float = 0.0
    p_eps: float = 0.0
    p_term: float = 0.0
    terminated: bool = False

    def update(self, f_z, position):
        obs = observe(self.params, f_z, position, self.start)
        self.p_f, self.p_eps, self.p_term = obs.p_f, obs.p_eps, obs.p_term
        self.terminated = self.terminated or obs.terminate
        return obs


def observe(params, f_z, position, start):
    """Memberships and decision for filtered f_z (N) and the current position."""
    position = np.asarray(position, float)
    start = np.asarray(start, float)
    if not (np.isfinite(f_z) and np.all(np.isfinite(position)) and np.all(np.isfinite(start))):
        raise ValueError("observer inputs must be finite")
    eps = float(np.linalg.norm(position - start))
    p_f, p_e, p_t = observe_kernel(float(f_z), eps, params.f_bar, params.nu_f,
                                   params.eps_bar, params.nu_eps)
    return Observation(p_f, p_e, p_t, eps, bool(p_t > params.threshold))
