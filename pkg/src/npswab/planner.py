"""Nominal insertion trajectory and force-modulated path progression.

The task-space insertion is a straight line at a fixed decline angle with a
fixed tool orientation. It is sampled at ``n`` points, each solved by damped
least-squares IK seeded from the previous solution, and the joint waypoints
are interpolated per joint by cubic splines over the path parameter ``s``
(one unit of ``s`` per segment).
"""

import csv
from dataclasses import dataclass, replace
from typing import NamedTuple

import numba as nb
import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial.transform import Rotation
from scipy.special import expit

from . import dynamics as dyn
from .errors import DegenerateKnotError, UnreachableWaypointError


@dataclass(frozen=True)
class TaskLine:
    start: np.ndarray          # sensor-frame origin at s = 0 (m)
    direction: np.ndarray      # unit insertion direction
    length: float = 0.20
    orientation: np.ndarray = None  # sensor-frame rotation held along the line

    def __post_init__(self):
        d = np.asarray(self.direction, float)
        n = np.linalg.norm(d)
        if n == 0 or self.length <= 0:
            raise ValueError("line needs a nonzero direction and positive length")
        object.__setattr__(self, "direction", d / n)
        object.__setattr__(self, "start", np.asarray(self.start, float))
        if self.orientation is None:
            object.__setattr__(self, "orientation", tool_orientation(self.direction))

    @classmethod
    def from_angles(cls, start, decline_deg=28.0, heading_deg=0.0, length=0.20,
                    roll_deg=0.0):
        dec = np.radians(decline_deg)
        head = np.radians(heading_deg)
        d = np.array([np.cos(dec) * np.cos(head), np.cos(dec) * np.sin(head), -np.sin(dec)])
        return cls(start=start, direction=d, length=length,
                   orientation=tool_orientation(d, roll_deg))

    @property
    def decline(self):
        return float(np.arcsin(-self.direction[2]))

    def point(self, u):
        """Point at fraction u in [0, 1] of the line."""
        return self.start + u * self.length * self.direction


def tool_orientation(direction, roll_deg=0.0):
    """Sensor rotation whose -z axis points along ``direction``.

    The sensor x axis is horizontal (left of the insertion direction) before
    the roll about the sensor z axis is applied.
    """
    a = np.asarray(direction, float)
    a = a / np.linalg.norm(a)
    lateral = np.cross([0.0, 0.0, 1.0], a)
    if np.linalg.norm(lateral) < 1e-9:
        lateral = np.array([0.0, 1.0, 0.0])
    lateral /= np.linalg.norm(lateral)
    up = np.cross(a, lateral)
    R = np.column_stack([lateral, -up, -a])
    if roll_deg:
        R = R @ Rotation.from_euler("z", roll_deg, degrees=True).as_matrix()
    return R


def orientation_error(R_target, R):
    """Rotation vector taking R to R_target, world coordinates."""
    return Rotation.from_matrix(R_target @ R.T).as_rotvec()


def solve_ik(chain, position, rotation, seed, q_nominal=None, damping=1e-3,
             max_iter=200, tol=1e-8, nullspace_gain=0.1):
    """Damped least-squares IK with a nullspace pull toward ``q_nominal``.

    Returns ``(q, residual)`` where residual is the final max(|dp|, |drot|).
    """
    q = np.array(seed, float)
    if q_nominal is None:
        q_nominal = q.copy()
    lam2 = damping * damping
    residual = np.inf
    for _ in range(max_iter):
        Rs, ps = dyn.sensor_frame(chain, q)
        err = np.concatenate([position - ps, orientation_error(rotation, Rs)])
        residual = max(np.linalg.norm(err[:3]), np.linalg.norm(err[3:]))
        if residual < tol:
            break
        J = dyn.geometric_jacobian(chain, q)
        JJt = J @ J.T
        dq = J.T @ np.linalg.solve(JJt + lam2 * np.eye(6), err)
        pinv = J.T @ np.linalg.inv(JJt)
        null = np.eye(dyn.NJ) - pinv @ J
        dq += null @ (nullspace_gain * (q_nominal - q))
        q = np.clip(q + dq, chain.lower, chain.upper)
    return q, residual


def solve_waypoints(chain, line, n=32, seed=None, q_nominal=None, **ik):
    """Joint configurations at ``n`` evenly spaced points along ``line``."""
    if n < 2:
        raise ValueError("need at least two waypoints")
    if seed is None:
        seed = np.zeros(dyn.NJ) if q_nominal is None else q_nominal
    q_nominal = np.array(seed if q_nominal is None else q_nominal, float)
    out = []
    q = np.array(seed, float)
    for i, u in enumerate(np.linspace(0.0, 1.0, n)):
        q, res = solve_ik(chain, line.point(u), line.orientation, q, q_nominal, **ik)
        if not res < ik.get("tol", 1e-8):
            raise UnreachableWaypointError(i, res)
        out.append(q.copy())
    return out


class Nominal(NamedTuple):
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    clamped: bool


@dataclass(frozen=True)
class SplinePath:
    knots: np.ndarray        # (n,) values of s at the waypoints
    coeffs: np.ndarray       # (n-1, 4, 7): c0..c3 per segment in local s - s_i
    duration: float = 15.0   # seconds for a full traversal at sdot = 1

    @property
    def s_max(self):
        return float(self.knots[-1])

    @property
    def rate_scale(self):
        """Path units per second at unit progression rate."""
        return (self.knots[-1] - self.knots[0]) / self.duration

    @property
    def n_segments(self):
        return len(self.coeffs)


def fit_splines(waypoints, knot_spacing=1.0, duration=15.0, bc="natural"):
    """Per-joint cubic splines through the waypoints (natural by default)."""
    W = np.asarray(waypoints, float)
    if len(W) < 3:
        raise ValueError("need at least three waypoints")
    spacing = np.broadcast_to(np.asarray(knot_spacing, float), (len(W) - 1,))
    if np.any(spacing <= 0):
        raise DegenerateKnotError("knot spacing must be positive")
    knots = np.concatenate([[0.0], np.cumsum(spacing)])
    if np.any(np.diff(knots) <= 0):
        raise DegenerateKnotError("duplicate consecutive knots")
    cs = CubicSpline(knots, W, axis=0, bc_type=bc)
    # scipy stores descending powers; flip to c0..c3
    coeffs = np.ascontiguousarray(np.transpose(cs.c[::-1], (1, 0, 2)))
    return SplinePath(knots=knots, coeffs=coeffs, duration=duration)


@nb.njit(cache=True)
def eval_kernel(knots, coeffs, s, rate, q, qd, qdd):
    """In-place spline evaluation at a clamped s; rate multiplies d/ds."""
    n_seg = coeffs.shape[0]
    i = np.searchsorted(knots, s, side="right") - 1
    if i < 0:
        i = 0
    elif i > n_seg - 1:
        i = n_seg - 1
    u = s - knots[i]
    for j in range(coeffs.shape[2]):
        c0 = coeffs[i, 0, j]
        c1 = coeffs[i, 1, j]
        c2 = coeffs[i, 2, j]
        c3 = coeffs[i, 3, j]
        q[j] = ((c3 * u + c2) * u + c1) * u + c0
        qd[j] = ((3.0 * c3 * u + 2.0 * c2) * u + c1) * rate
        qdd[j] = (6.0 * c3 * u + 2.0 * c2) * rate * rate


def eval_nominal(path, s, s_rate=1.0):
    """Desired q, qd, qdd at path parameter s.

    Velocities and accelerations are in rad/s and rad/s^2: the s-derivatives
    of the active cubic are scaled by ``rate_scale * s_rate`` (and its square).
    """
    clamped = False
    if s < 0.0 or s > path.s_max:
        s = min(max(s, 0.0), path.s_max)
        clamped = True
    i = int(np.searchsorted(path.knots, s, side="right")) - 1
    i = min(max(i, 0), path.n_segments - 1)
    u = s - path.knots[i]
    c0, c1, c2, c3 = path.coeffs[i]
    q = ((c3 * u + c2) * u + c1) * u + c0
    dq = (3.0 * c3 * u + 2.0 * c2) * u + c1
    ddq = 6.0 * c3 * u + 2.0 * c2
    rate = path.rate_scale * s_rate
    return Nominal(q, dq * rate, ddq * rate * rate, clamped)


@dataclass(frozen=True)
class ProgressState:
    s: float = 0.0
    nu: float = 12.0
    s_bar: float = 0.33
    s_max: float = np.inf
    rate_scale: float = 1.0
    force_modulated: bool = True
    rate: float = 1.0           # last unit-free sdot


def progression_rate(f_z, nu=12.0, s_bar=0.33):
    """sdot = 1 - sigmoid(nu (f_z - s_bar)), evaluated as sigmoid(-x)."""
    return float(expit(-nu * (f_z - s_bar)))


def advance_s(state, f_z, dt):
    if dt <= 0:
        raise ValueError("dt must be positive")
    rate = progression_rate(f_z, state.nu, state.s_bar) if state.force_modulated else 1.0
    s = min(state.s + dt * state.rate_scale * rate, state.s_max)
    return replace(state, s=s, rate=rate)


def export_trajectory_csv(spline, filename, samples=None):
    """Write (s, q_d[7], qd_d[7], qdd_d[7]) rows for offline inspection."""
    if samples is None:
        samples = np.linspace(0.0, spline.s_max, 10 * spline.n_segments + 1)
    with open(filename, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s"] + [f"q_d{j}" for j in range(7)] + [f"qd_d{j}" for j in range(7)]
                   + [f"qdd_d{j}" for j in range(7)])
        for s in samples:
            nom = eval_nominal(spline, float(s))
            w.writerow([repr(float(s))] + [repr(float(v)) for v in
                                           np.concatenate([nom.q, nom.qd, nom.qdd])])
