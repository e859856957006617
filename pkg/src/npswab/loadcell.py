"""Tri-axial loadcell: raw reading synthesis and gravity/bias calibration.

The raw reading is ``F_net = F + A @ phi(o) + Z + noise`` with
``phi(o) = [o_x, o_y, o_z, o_y * o_z]`` and ``o`` the unit gravity direction
expressed in the sensor frame. Calibration fits ``A`` (with a fixed sparsity
pattern) and ``Z`` by per-axis least squares on readings taken with no
external force.
"""

import csv
from dataclasses import dataclass, field

import numba as nb
import numpy as np
import tomli
import tomli_w
from scipy.spatial.transform import Rotation

from .errors import CalibrationDegenerateError, RejectedInputError

CAPACITY = 10.0          # N
NOISE_SIGMA = 1e-3       # N, per axis

# Regressor columns used by each output axis; the remaining entries of A are 0.
ACTIVE = (
    (0, 1, 2),        # x: o_x, o_y, o_z
    (0, 1, 2, 3),     # y: o_x, o_y, o_z, o_y*o_z
    (2,),             # z: o_z
)
REGRESSOR_NAMES = ("o_x", "o_y", "o_z", "o_y*o_z")
AXES = "xyz"


def features(o):
    """phi(o) = [o_x, o_y, o_z, o_y o_z]; accepts (3,) or (n, 3)."""
    o = np.asarray(o, float)
    return np.concatenate([o, o[..., 1:2] * o[..., 2:3]], axis=-1)


def gravity_direction(sensor_rotation, gravity=(0.0, 0.0, -9.81)):
    """Unit gravity direction in the sensor frame (the orientation encoding)."""
    g = np.asarray(gravity, float)
    return sensor_rotation.T @ (g / np.linalg.norm(g))


def _check_orientation(o):
    o = np.asarray(o, float)
    if abs(np.linalg.norm(o) - 1.0) > 1e-9:
        raise RejectedInputError("orientation encoding must be a unit vector")
    return o


def enforce_pattern(A):
    A = np.array(A, float)
    mask = np.zeros((3, 4), bool)
    for axis, cols in enumerate(ACTIVE):
        mask[axis, list(cols)] = True
    A[~mask] = 0.0
    return A


@dataclass(frozen=True)
class CalibrationModel:
    A: np.ndarray
    Z: np.ndarray
    r2: np.ndarray = field(default_factory=lambda: np.ones(3))
    residual_rms: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "A", enforce_pattern(self.A))
        object.__setattr__(self, "Z", np.asarray(self.Z, float))
        object.__setattr__(self, "r2", np.asarray(self.r2, float))
        object.__setattr__(self, "residual_rms", np.asarray(self.residual_rms, float))

    def gravity_artifact(self, o):
        return self.A @ features(o)

    def to_dict(self):
        return {
            "A": [list(map(float, row)) for row in self.A],
            "Z": list(map(float, self.Z)),
            "r2": list(map(float, self.r2)),
            "residual_rms": list(map(float, self.residual_rms)),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(A=np.array(data["A"]), Z=np.array(data["Z"]),
                   r2=np.array(data.get("r2", [1.0, 1.0, 1.0])),
                   residual_rms=np.array(data.get("residual_rms", [0.0, 0.0, 0.0])))

    def save(self, path):
        with open(path, "wb") as fh:
            tomli_w.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_dict(tomli.load(fh))


def sense_raw(true_force, orientation, model, rng=None, noise_sigma=NOISE_SIGMA):
    """Raw loadcell reading for a true external force.

    Returns ``(reading, overload)``. Readings whose magnitude exceeds the
    10 N capacity are scaled back onto the capacity sphere and flagged.
    ``rng=None`` disables the noise.
    """
    o = _check_orientation(orientation)
    F = np.asarray(true_force, float)
    reading = F + model.A @ features(o) + model.Z
    if rng is not None and noise_sigma > 0:
        reading = reading + rng.normal(0.0, noise_sigma, 3)
    mag = np.linalg.norm(reading)
    if mag > CAPACITY:
        return reading * (CAPACITY / mag), True
    return reading, False


@nb.njit(cache=True)
def sense_kernel(F, o, A_true, Z_true, noise, capacity, A_cal, Z_cal, raw, comp):
    """Raw reading (with overload clip) and its compensated value, in place."""
    phi = (o[0], o[1], o[2], o[1] * o[2])
    mag = 0.0
    for i in range(3):
        v = F[i] + Z_true[i] + noise[i]
        for k in range(4):
            v += A_true[i, k] * phi[k]
        raw[i] = v
        mag += v * v
    mag = np.sqrt(mag)
    overload = mag > capacity
    if overload:
        for i in range(3):
            raw[i] *= capacity / mag
    for i in range(3):
        v = raw[i] - Z_cal[i]
        for k in range(4):
            v -= A_cal[i, k] * phi[k]
        comp[i] = v
    return overload


def compensate(model, raw, orientation):
    """External-force estimate: raw minus the fitted gravity artifact and bias."""
    return np.asarray(raw, float) - model.A @ features(orientation) - model.Z


def calibrate(orientations, mean_readings):
    """Least-squares fit of (A, Z) from zero-force readings.

    ``orientations`` is (n, 3) gravity directions in the sensor frame and
    ``mean_readings`` is (n, 3).
    """
    O = np.asarray(orientations, float)
    Y = np.asarray(mean_readings, float)
    if O.ndim != 2 or O.shape[1] != 3 or Y.shape != O.shape:
        raise RejectedInputError("orientations and readings must both be (n, 3)")
    if len(O) < 9:
        raise CalibrationDegenerateError(
            f"need at least 9 orientation samples, got {len(O)}")
    Phi = features(O)
    A = np.zeros((3, 4))
    Z = np.zeros(3)
    r2 = np.zeros(3)
    rms = np.zeros(3)
    for axis, cols in enumerate(ACTIVE):
        X = np.column_stack([Phi[:, cols], np.ones(len(O))])
        _, sv, vt = np.linalg.svd(X, full_matrices=False)
        tol = sv[0] * max(X.shape) * np.finfo(float).eps * 1e3
        if sv[-1] <= tol:
            null = vt[-1]
            names = [REGRESSOR_NAMES[c] for c in cols] + ["1"]
            combo = " + ".join(f"{w:+.3f}*{n}" for w, n in zip(null, names)
                               if abs(w) > 1e-6)
            raise CalibrationDegenerateError(
                f"rank-deficient design for axis {AXES[axis]}: "
                f"orientations do not excite {combo}")
        coef, *_ = np.linalg.lstsq(X, Y[:, axis], rcond=None)
        A[axis, list(cols)] = coef[:-1]
        Z[axis] = coef[-1]
        resid = Y[:, axis] - X @ coef
        ss_res = float(resid @ resid)
        dev = Y[:, axis] - Y[:, axis].mean()
        ss_tot = float(dev @ dev)
        r2[axis] = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        rms[axis] = np.sqrt(ss_res / len(O))
    return CalibrationModel(A=A, Z=Z, r2=r2, residual_rms=rms)


def default_orientations(tilt_deg=30.0):
    """Nine sensor orientations: identity, +-tilt about x and y, four combined."""
    t = tilt_deg
    eulers = [(0, 0), (t, 0), (-t, 0), (0, t), (0, -t),
              (t, t), (t, -t), (-t, t), (-t, -t)]
    return [Rotation.from_euler("xy", e, degrees=True).as_matrix() for e in eulers]


@dataclass
class CalibrationRun:
    orientations: np.ndarray     # (n, 3) gravity directions in sensor frame
    mean_readings: np.ndarray    # (n, 3)
    counts: np.ndarray           # (n,)


def collect_samples(truth, rotations, rng=None, samples_per_pose=100,
                    gravity=(0.0, 0.0, -9.81), noise_sigma=NOISE_SIGMA):
    """Zero-force readings averaged at each sensor rotation."""
    O, Y = [], []
    for R in rotations:
        o = gravity_direction(R, gravity)
        reads = [sense_raw(np.zeros(3), o, truth, rng, noise_sigma)[0]
                 for _ in range(samples_per_pose)]
        O.append(o)
        Y.append(np.mean(reads, axis=0))
    return CalibrationRun(np.array(O), np.array(Y),
                          np.full(len(O), samples_per_pose))


def write_samples_csv(run, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["o_x", "o_y", "o_z", "Fnet_x", "Fnet_y", "Fnet_z", "count"])
        for o, y, n in zip(run.orientations, run.mean_readings, run.counts):
            w.writerow([repr(float(v)) for v in (*o, *y)] + [int(n)])


def read_samples_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    O = np.array([[float(r["o_x"]), float(r["o_y"]), float(r["o_z"])] for r in rows])
    Y = np.array([[float(r["Fnet_x"]), float(r["Fnet_y"]), float(r["Fnet_z"])] for r in rows])
    n = np.array([int(r["count"]) for r in rows])
    return CalibrationRun(O, Y, n)
