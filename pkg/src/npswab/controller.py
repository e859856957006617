"""Computed-torque law with an admittance term on the filtered tool force.

    tau = M (qdd_d + Kp (q_d - q) + Kd (qd_d - qd)) + C qd + g + J^T Lambda f

J is the sensor-frame positional Jacobian, so ``Lambda`` acts per sensor axis
(z along the swab). The baseline controller is the same law with Lambda = 0.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numba as nb
import numpy as np

from . import dynamics as dyn
from .errors import ConfigError, ControllerFault

FEEDBACK = "feedback"
BASELINE = "baseline"
MODES = (FEEDBACK, BASELINE)


@dataclass(frozen=True)
class ControllerGains:
    kp: np.ndarray = field(default_factory=lambda: np.array([600.0] * 6 + [50.0]))
    kd: np.ndarray = field(default_factory=lambda: np.array([30.0] * 6 + [5.0]))
    lam: np.ndarray = field(default_factory=lambda: np.array([450.0, 450.0, 45.0]))
    mode: str = FEEDBACK

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"controller mode must be one of {MODES}, got {self.mode!r}")
        kp = np.asarray(self.kp, float)
        kd = np.asarray(self.kd, float)
        lam = np.asarray(self.lam, float)
        if kp.shape != (dyn.NJ,) or kd.shape != (dyn.NJ,) or lam.shape != (3,):
            raise ConfigError("kp, kd need 7 entries and lambda 3")
        if np.any(kp < 0) or np.any(kd < 0) or np.any(lam < 0):
            raise ConfigError("gains must be non-negative")
        object.__setattr__(self, "kp", kp)
        object.__setattr__(self, "kd", kd)
        object.__setattr__(self, "lam", lam)

    @property
    def effective_lambda(self):
        """Lambda as applied: zero in baseline mode whatever is configured."""
        return self.lam if self.mode == FEEDBACK else np.zeros(3)


class ControlOutput(NamedTuple):
    tau: np.ndarray
    saturated: bool


@nb.njit(cache=True)
def control_kernel(M, b, Js, q, qd, q_d, qd_d, qdd_d, f, kp, kd, lam, tau_limit, tau):
    """Fill tau with the saturated control torque; returns the saturation flag."""
    n = q.shape[0]
    v = np.empty(n)
    for j in range(n):
        v[j] = qdd_d[j] + kp[j] * (q_d[j] - q[j]) + kd[j] * (qd_d[j] - qd[j])
    lf0 = lam[0] * f[0]
    lf1 = lam[1] * f[1]
    lf2 = lam[2] * f[2]
    saturated = False
    for i in range(n):
        s = b[i] + Js[0, i] * lf0 + Js[1, i] * lf1 + Js[2, i] * lf2
        for j in range(n):
            s += M[i, j] * v[j]
        if s > tau_limit[i]:
            s = tau_limit[i]
            saturated = True
        elif s < -tau_limit[i]:
            s = -tau_limit[i]
            saturated = True
        tau[i] = s
    return saturated


def _finite(*arrays):
    return all(np.all(np.isfinite(np.asarray(a, float))) for a in arrays)


def force_to_joint_torque(chain, q, lam, f):
    """J^T diag(lam) f with J the sensor-frame positional Jacobian."""
    J = dyn.jacobian(chain, q, frame="sensor")
    return J.T @ (np.asarray(lam, float) * np.asarray(f, float))


def control_tick(chain, gains, q, qd, q_d, qd_d, qdd_d, f, torque_limit=None,
                 saturate=True):
    """Joint torque for one control tick (see module docstring)."""
    if not _finite(q, qd, q_d, qd_d, qdd_d, f):
        raise ControllerFault("non-finite controller input")
    q = np.ascontiguousarray(q, dtype=float)
    qd = np.ascontiguousarray(qd, dtype=float)
    M, b, Jw, Rs, _ = dyn.terms_kernel(*chain.kernel_args, q, qd)
    Js = np.ascontiguousarray(Rs.T @ Jw)
    if torque_limit is None:
        torque_limit = chain.torque_limit
    limit = np.asarray(torque_limit, float) if saturate else np.full(dyn.NJ, np.inf)
    tau = np.empty(dyn.NJ)
    sat = control_kernel(M, b, Js, q, qd, np.asarray(q_d, float), np.asarray(qd_d, float),
                         np.asarray(qdd_d, float), np.asarray(f, float), gains.kp, gains.kd,
                         gains.effective_lambda, limit, tau)
    return ControlOutput(tau, bool(sat))
