"""First-order low-pass of the compensated force, fdot = alpha (F - f)."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

ALPHA_PRESETS = (1.0, 3.0, 5.0)


@dataclass(frozen=True)
class FilterState:
    f: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError("filter alpha must be non-negative")
        object.__setattr__(self, "f", np.asarray(self.f, float))


def gain(alpha, dt):
    """Exact zero-order-hold blend factor 1 - exp(-alpha dt)."""
    return -np.expm1(-alpha * dt)


def check_explicit(alpha, dt):
    """Stability condition of the explicit Euler variant (alpha dt < 1)."""
    if alpha * dt >= 1.0:
        raise ConfigError(f"alpha*dt = {alpha * dt:.3g} >= 1 is unstable for the explicit filter")


def filter_step(state, F, dt, method="exact"):
    if dt <= 0:
        raise ConfigError("dt must be positive")
    if method == "exact":
        k = gain(state.alpha, dt)
    elif method == "euler":
        check_explicit(state.alpha, dt)
        k = state.alpha * dt
    else:
        raise ConfigError(f"unknown filter method {method!r}")
    f = state.f + k * (np.asarray(F, float) - state.f)
    return FilterState(f=f, alpha=state.alpha)


def step_response(alpha, t, amplitude=0.5, dt=1e-3):
    """Discrete filter driven by a step of ``amplitude`` starting at t=0."""
    t = np.asarray(t, float)
    n = int(np.ceil(t.max() / dt - 1e-9))   # grid must cover t.max()
    k = gain(alpha, dt)
    y = np.empty(n + 1)
    y[0] = 0.0
    f = 0.0
    for i in range(1, n + 1):
        f += k * (amplitude - f)
        y[i] = f
    return np.interp(t, np.arange(n + 1) * dt, y)
