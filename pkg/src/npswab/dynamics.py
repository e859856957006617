"""Rigid-body model of a 7-DOF revolute arm described by modified DH parameters.

All quantities are expressed in the world (base) frame unless noted. The
numba kernels work on plain arrays so that the simulation loop can call them
without Python overhead; the public functions validate inputs and unpack a
:class:`KinematicChain`.

Spatial vectors use Plucker ordering ``[angular; linear]`` about the world
origin.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numba as nb
import numpy as np
import tomli
from scipy.spatial.transform import Rotation

from .errors import ConfigError, RejectedInputError

log = logging.getLogger(__name__)

NJ = 7
DATA_DIR = Path(__file__).parent / "data"


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@nb.njit(cache=True)
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@nb.njit(cache=True)
def _mcross(u, v):
    """Spatial motion cross product u x v."""
    out = np.empty(6)
    out[0] = u[1] * v[2] - u[2] * v[1]
    out[1] = u[2] * v[0] - u[0] * v[2]
    out[2] = u[0] * v[1] - u[1] * v[0]
    out[3] = u[1] * v[5] - u[2] * v[4] + u[4] * v[2] - u[5] * v[1]
    out[4] = u[2] * v[3] - u[0] * v[5] + u[5] * v[0] - u[3] * v[2]
    out[5] = u[0] * v[4] - u[1] * v[3] + u[3] * v[1] - u[4] * v[0]
    return out


@nb.njit(cache=True)
def _fcross(u, f):
    """Spatial force cross product u x* f."""
    out = np.empty(6)
    out[0] = u[1] * f[2] - u[2] * f[1] + u[4] * f[5] - u[5] * f[4]
    out[1] = u[2] * f[0] - u[0] * f[2] + u[5] * f[3] - u[3] * f[5]
    out[2] = u[0] * f[1] - u[1] * f[0] + u[3] * f[4] - u[4] * f[3]
    out[3] = u[1] * f[5] - u[2] * f[4]
    out[4] = u[2] * f[3] - u[0] * f[5]
    out[5] = u[0] * f[4] - u[1] * f[3]
    return out


@nb.njit(cache=True)
def _matvec(A, x, out):
    n, m = A.shape
    for i in range(n):
        s = 0.0
        for j in range(m):
            s += A[i, j] * x[j]
        out[i] = s


@nb.njit(cache=True)
def _dot(a, b):
    s = 0.0
    for i in range(a.shape[0]):
        s += a[i] * b[i]
    return s


@nb.njit(cache=True)
def _frames(dh, q):
    """Joint frame rotations and origins, R[i], o[i] for joints 1..7."""
    R = np.empty((NJ, 3, 3))
    o = np.empty((NJ, 3))
    Rc = np.eye(3)
    pc = np.zeros(3)
    Rl = np.empty((3, 3))
    Rn = np.empty((3, 3))
    for i in range(NJ):
        a = dh[i, 0]
        d = dh[i, 1]
        ca = np.cos(dh[i, 2])
        sa = np.sin(dh[i, 2])
        th = q[i] + dh[i, 3]
        ct = np.cos(th)
        st = np.sin(th)
        # Rx(alpha) Tx(a) Rz(theta) Tz(d)
        Rl[0, 0] = ct
        Rl[0, 1] = -st
        Rl[0, 2] = 0.0
        Rl[1, 0] = ca * st
        Rl[1, 1] = ca * ct
        Rl[1, 2] = -sa
        Rl[2, 0] = sa * st
        Rl[2, 1] = sa * ct
        Rl[2, 2] = ca
        t1 = -sa * d
        t2 = ca * d
        for r in range(3):
            pc[r] += Rc[r, 0] * a + Rc[r, 1] * t1 + Rc[r, 2] * t2
            for c in range(3):
                Rn[r, c] = Rc[r, 0] * Rl[0, c] + Rc[r, 1] * Rl[1, c] + Rc[r, 2] * Rl[2, c]
        for r in range(3):
            o[i, r] = pc[r]
            for c in range(3):
                Rc[r, c] = Rn[r, c]
                R[i, r, c] = Rn[r, c]
    return R, o


@nb.njit(cache=True)
def _sensor_pose(R, o, Rm, tm):
    Rs = np.empty((3, 3))
    ps = np.empty(3)
    R7 = R[NJ - 1]
    for r in range(3):
        ps[r] = o[NJ - 1, r] + R7[r, 0] * tm[0] + R7[r, 1] * tm[1] + R7[r, 2] * tm[2]
        for c in range(3):
            Rs[r, c] = R7[r, 0] * Rm[0, c] + R7[r, 1] * Rm[1, c] + R7[r, 2] * Rm[2, c]
    return Rs, ps


@nb.njit(cache=True)
def _link_quantities(dh, mass, com, inertia, q):
    """Frames, world joint axes S[i] and spatial inertias Iw[i] about the origin."""
    R, o = _frames(dh, q)
    S = np.empty((NJ, 6))
    Iw = np.zeros((NJ, 6, 6))
    p = np.empty(3)
    RI = np.empty((3, 3))
    for i in range(NJ):
        Ri = R[i]
        z0 = Ri[0, 2]
        z1 = Ri[1, 2]
        z2 = Ri[2, 2]
        S[i, 0] = z0
        S[i, 1] = z1
        S[i, 2] = z2
        S[i, 3] = o[i, 1] * z2 - o[i, 2] * z1
        S[i, 4] = o[i, 2] * z0 - o[i, 0] * z2
        S[i, 5] = o[i, 0] * z1 - o[i, 1] * z0
        m = mass[i]
        for r in range(3):
            p[r] = o[i, r] + Ri[r, 0] * com[i, 0] + Ri[r, 1] * com[i, 1] + Ri[r, 2] * com[i, 2]
            for c in range(3):
                RI[r, c] = (Ri[r, 0] * inertia[i, 0, c] + Ri[r, 1] * inertia[i, 1, c]
                            + Ri[r, 2] * inertia[i, 2, c])
        # rotational block: R I R^T + m (|p|^2 E - p p^T)
        pp = p[0] * p[0] + p[1] * p[1] + p[2] * p[2]
        for r in range(3):
            for c in range(3):
                v = RI[r, 0] * Ri[c, 0] + RI[r, 1] * Ri[c, 1] + RI[r, 2] * Ri[c, 2]
                v -= m * p[r] * p[c]
                if r == c:
                    v += m * pp
                Iw[i, r, c] = v
        # m [p]x and its transpose
        Iw[i, 0, 4] = -m * p[2]
        Iw[i, 0, 5] = m * p[1]
        Iw[i, 1, 3] = m * p[2]
        Iw[i, 1, 5] = -m * p[0]
        Iw[i, 2, 3] = -m * p[1]
        Iw[i, 2, 4] = m * p[0]
        for r in range(3):
            for c in range(3):
                Iw[i, 3 + c, r] = Iw[i, r, 3 + c]
            Iw[i, 3 + r, 3 + r] = m
    return R, o, S, Iw


@nb.njit(cache=True)
def _composite(Iw):
    Ic = Iw.copy()
    for i in range(NJ - 2, -1, -1):
        for r in range(6):
            for c in range(6):
                Ic[i, r, c] += Ic[i + 1, r, c]
    return Ic


@nb.njit(cache=True)
def _crba(S, Ic):
    M = np.empty((NJ, NJ))
    F = np.empty(6)
    for j in range(NJ):
        _matvec(Ic[j], S[j], F)
        for i in range(j + 1):
            v = _dot(S[i], F)
            M[i, j] = v
            M[j, i] = v
    return M


@nb.njit(cache=True)
def _rnea_bias(S, Iw, qd, gravity):
    """C(q, qd) qd + g(q) by a recursive Newton-Euler pass with zero qdd."""
    v = np.zeros(6)
    a = np.zeros(6)
    for r in range(3):
        a[3 + r] = -gravity[r]
    vj = np.empty(6)
    Ia = np.empty(6)
    Iv = np.empty(6)
    f = np.empty((NJ, 6))
    for i in range(NJ):
        for r in range(6):
            vj[r] = S[i, r] * qd[i]
            v[r] += vj[r]
        a += _mcross(v, vj)
        _matvec(Iw[i], a, Ia)
        _matvec(Iw[i], v, Iv)
        f[i] = Ia + _fcross(v, Iv)
    tau = np.empty(NJ)
    fc = np.zeros(6)
    for i in range(NJ - 1, -1, -1):
        for r in range(6):
            fc[r] += f[i, r]
        tau[i] = _dot(S[i], fc)
    return tau


@nb.njit(cache=True)
def _mass_matrix_derivative(S, Ic):
    """dM[k, i, j] = partial M_ij / partial q_k for a revolute chain."""
    X = np.empty((NJ, NJ, 6))  # X[k, m] = S_k x S_m
    Y = np.empty((NJ, NJ, 6))  # Y[k, m] = Ic_k S_m
    tmp = np.empty(6)
    for k in range(NJ):
        for m in range(NJ):
            X[k, m] = _mcross(S[k], S[m])
            _matvec(Ic[k], S[m], tmp)
            Y[k, m] = tmp
    dM = np.zeros((NJ, NJ, NJ))
    for j in range(NJ):
        for i in range(j + 1):
            for k in range(i + 1, NJ):
                if k <= j:
                    v = -_dot(X[k, i], Y[j, j])
                else:
                    v = -_dot(X[k, i], Y[k, j]) - _dot(Y[k, i], X[k, j])
                dM[k, i, j] = v
                dM[k, j, i] = v
    return dM


@nb.njit(cache=True)
def _christoffel_c(dM, qd):
    C = np.zeros((NJ, NJ))
    for i in range(NJ):
        for j in range(NJ):
            acc = 0.0
            for k in range(NJ):
                acc += 0.5 * (dM[k, i, j] + dM[j, i, k] - dM[i, j, k]) * qd[k]
            C[i, j] = acc
    return C


@nb.njit(cache=True)
def _gravity(dh, mass, com, gravity, q):
    R, o = _frames(dh, q)
    g = np.empty(NJ)
    mc = 0.0
    mp = np.zeros(3)
    arm = np.empty(3)
    for j in range(NJ - 1, -1, -1):
        Rj = R[j]
        mc += mass[j]
        for r in range(3):
            mp[r] += mass[j] * (o[j, r] + Rj[r, 0] * com[j, 0] + Rj[r, 1] * com[j, 1]
                                + Rj[r, 2] * com[j, 2])
            arm[r] = mp[r] - mc * o[j, r]
        z = np.array([Rj[0, 2], Rj[1, 2], Rj[2, 2]])
        g[j] = -_dot(gravity, _cross(z, arm))
    return g


@nb.njit(cache=True)
def _pos_jacobian(R, o, p):
    J = np.empty((3, NJ))
    for j in range(NJ):
        z0 = R[j, 0, 2]
        z1 = R[j, 1, 2]
        z2 = R[j, 2, 2]
        d0 = p[0] - o[j, 0]
        d1 = p[1] - o[j, 1]
        d2 = p[2] - o[j, 2]
        J[0, j] = z1 * d2 - z2 * d1
        J[1, j] = z2 * d0 - z0 * d2
        J[2, j] = z0 * d1 - z1 * d0
    return J


@nb.njit(cache=True)
def terms_kernel(dh, mass, com, inertia, armature, gravity, Rm, tm, q, qd):
    """M, C qd + g, world positional Jacobian, sensor rotation and origin."""
    R, o, S, Iw = _link_quantities(dh, mass, com, inertia, q)
    Ic = _composite(Iw)
    M = _crba(S, Ic)
    for j in range(NJ):
        M[j, j] += armature[j]
    b = _rnea_bias(S, Iw, qd, gravity)
    Rs, ps = _sensor_pose(R, o, Rm, tm)
    J = _pos_jacobian(R, o, ps)
    return M, b, J, Rs, ps


@nb.njit(cache=True)
def _cholesky_solve(M, rhs):
    n = M.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        s = M[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        L[j, j] = np.sqrt(s)
        for i in range(j + 1, n):
            s = M[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
    y = np.empty(n)
    for i in range(n):
        s = rhs[i]
        for k in range(i):
            s -= L[i, k] * y[k]
        y[i] = s / L[i, i]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return x


@nb.njit(cache=True)
def integrate_kernel(dh, mass, com, inertia, armature, gravity, Rm, tm,
                     q, qd, tau, force_world, h, nsub):
    """Semi-implicit Euler substeps under constant torque and tool force."""
    q = q.copy()
    qd = qd.copy()
    rhs = np.empty(NJ)
    for _ in range(nsub):
        M, b, J, Rs, ps = terms_kernel(dh, mass, com, inertia, armature, gravity,
                                       Rm, tm, q, qd)
        for j in range(NJ):
            rhs[j] = (tau[j] - b[j] + J[0, j] * force_world[0]
                      + J[1, j] * force_world[1] + J[2, j] * force_world[2])
        qdd = _cholesky_solve(M, rhs)
        for j in range(NJ):
            qd[j] += h * qdd[j]
            q[j] += h * qd[j]
    return q, qd


# ---------------------------------------------------------------------------
# chain definition
# ---------------------------------------------------------------------------

def capsule_inertia(mass, p0, p1, radius):
    """COM and rotational inertia (about the COM) of a uniform capsule."""
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    axis = p1 - p0
    length = float(np.linalg.norm(axis))
    r = float(radius)
    v_cyl = np.pi * r * r * length
    v_sph = 4.0 / 3.0 * np.pi * r ** 3
    m_cyl = mass * v_cyl / (v_cyl + v_sph)
    m_hemi = 0.5 * (mass - m_cyl)
    i_axial = 0.5 * m_cyl * r * r + 2.0 * m_hemi * 0.4 * r * r
    i_cyl = m_cyl * (length ** 2 / 12.0 + r * r / 4.0)
    off = 0.5 * length + 3.0 * r / 8.0
    i_hemi = m_hemi * (0.4 * r * r - (3.0 * r / 8.0) ** 2) + m_hemi * off * off
    i_trans = i_cyl + 2.0 * i_hemi
    local = np.diag([i_trans, i_trans, i_axial])
    if length > 0:
        z = axis / length
        helper = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        x = np.cross(helper, z)
        x /= np.linalg.norm(x)
        rot = np.column_stack([x, np.cross(z, x), z])
    else:
        rot = np.eye(3)
    inertia = rot @ local @ rot.T
    return 0.5 * (p0 + p1), 0.5 * (inertia + inertia.T)


@dataclass(frozen=True, eq=False)
class KinematicChain:
    """Seven revolute joints with modified-DH geometry and link inertias."""

    dh: np.ndarray                  # (7, 4): a, d, alpha, theta_offset
    mass: np.ndarray                # (7,)
    com: np.ndarray                 # (7, 3), link frame
    inertia: np.ndarray             # (7, 3, 3), about COM, link frame
    lower: np.ndarray
    upper: np.ndarray
    torque_limit: np.ndarray
    armature: np.ndarray = field(default_factory=lambda: np.zeros(NJ))   # reflected rotor inertia
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    sensor_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    sensor_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    name: str = "chain"

    def __post_init__(self):
        for attr in ("dh", "mass", "com", "inertia", "lower", "upper",
                     "torque_limit", "armature", "gravity", "sensor_rotation",
                     "sensor_translation"):
            object.__setattr__(self, attr,
                               np.ascontiguousarray(getattr(self, attr), dtype=float))
        if self.dh.shape != (NJ, 4):
            raise ConfigError(f"chain must have exactly {NJ} revolute joints")
        if self.armature.shape != (NJ,) or np.any(self.armature < 0):
            raise ConfigError("armature needs one non-negative entry per joint")
        if np.any(self.mass <= 0):
            raise ConfigError("every link mass must be positive")
        for i, I in enumerate(self.inertia):
            if not np.allclose(I, I.T, atol=1e-12):
                raise ConfigError(f"inertia of link {i + 1} is not symmetric")
            if np.linalg.eigvalsh(I).min() <= 0:
                raise ConfigError(f"inertia of link {i + 1} is not positive definite")
        if np.any(self.lower >= self.upper):
            raise ConfigError("joint limits require lower < upper")
        R = self.sensor_rotation
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9):
            raise ConfigError("sensor rotation is not orthonormal")

    @property
    def kernel_args(self):
        """Positional arrays consumed by the numba kernels."""
        return (self.dh, self.mass, self.com, self.inertia, self.armature, self.gravity,
                self.sensor_rotation, self.sensor_translation)

    @classmethod
    def from_dict(cls, data):
        known = {"name", "gravity", "link", "sensor_mount"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown chain keys: {sorted(unknown)}")
        links = data.get("link", [])
        if len(links) != NJ:
            raise ConfigError(f"chain must define exactly {NJ} links, got {len(links)}")
        dh, mass, com, inertia, lo, hi, tl, arm = [], [], [], [], [], [], [], []
        link_keys = {"a", "d", "alpha", "theta_offset", "lower", "upper",
                     "torque_limit", "mass", "capsule", "com", "inertia",
                     "armature", "joint_type"}
        for i, link in enumerate(links):
            bad = set(link) - link_keys
            if bad:
                raise ConfigError(f"unknown keys in link {i + 1}: {sorted(bad)}")
            if link.get("joint_type", "revolute") != "revolute":
                raise ConfigError("only revolute joints are supported")
            dh.append([link["a"], link["d"], link["alpha"], link.get("theta_offset", 0.0)])
            m = float(link["mass"])
            mass.append(m)
            if "capsule" in link:
                cap = link["capsule"]
                c, I = capsule_inertia(m, cap["p0"], cap["p1"], cap["radius"])
            else:
                c = np.asarray(link["com"], float)
                I = np.asarray(link["inertia"], float)
            com.append(c)
            inertia.append(I)
            lo.append(link["lower"])
            hi.append(link["upper"])
            tl.append(link.get("torque_limit", np.inf))
            arm.append(link.get("armature", 0.0))
        mount = data.get("sensor_mount", {})
        rot = Rotation.from_euler("xyz", mount.get("rpy", [0.0, 0.0, 0.0])).as_matrix()
        return cls(dh=np.array(dh), mass=np.array(mass), com=np.array(com),
                   inertia=np.array(inertia), lower=np.array(lo), upper=np.array(hi),
                   torque_limit=np.array(tl), armature=np.array(arm, float),
                   gravity=np.array(data.get("gravity", [0.0, 0.0, -9.81])),
                   sensor_rotation=rot,
                   sensor_translation=np.array(mount.get("translation", [0.0, 0.0, 0.0])),
                   name=data.get("name", "chain"))

    @classmethod
    def from_file(cls, path):
        with open(path, "rb") as fh:
            return cls.from_dict(tomli.load(fh))

    @classmethod
    def panda(cls):
        return cls.from_file(DATA_DIR / "panda.toml")

    def with_gravity(self, gravity):
        return replace(self, gravity=np.asarray(gravity, float))

    def perturbed(self, rng, rel=0.1):
        """Copy with masses and COM offsets scaled by up to +-rel."""
        scale = 1.0 + rng.uniform(-rel, rel, NJ)
        com = self.com * (1.0 + rng.uniform(-rel, rel, (NJ, 3)))
        return replace(self, mass=self.mass * scale, com=com,
                       inertia=self.inertia * scale[:, None, None])

    def clamp(self, q):
        """Clip q to the joint limits; returns (q, clamped)."""
        qc = np.clip(q, self.lower, self.upper)
        clamped = bool(np.any(qc != q))
        if clamped:
            log.warning("joint position clamped to limits")
        return qc, clamped

    def within_limits(self, q):
        return bool(np.all(q >= self.lower) and np.all(q <= self.upper))


@dataclass(frozen=True)
class EePose:
    position: np.ndarray
    quaternion: np.ndarray  # scalar-last (x, y, z, w)

    def __post_init__(self):
        qn = np.asarray(self.quaternion, float)
        n = np.linalg.norm(qn)
        if abs(n - 1.0) > 1e-9:
            qn = qn / n
        object.__setattr__(self, "quaternion", qn)
        object.__setattr__(self, "position", np.asarray(self.position, float))

    @classmethod
    def from_matrix(cls, rotation, position):
        return cls(position=np.array(position, float),
                   quaternion=Rotation.from_matrix(rotation).as_quat())

    @property
    def rotation(self):
        return Rotation.from_quat(self.quaternion).as_matrix()


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def _check(*arrays):
    out = []
    for a in arrays:
        a = np.ascontiguousarray(a, dtype=float)
        if a.shape != (NJ,):
            raise RejectedInputError(f"expected a {NJ}-vector, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise RejectedInputError("non-finite joint vector")
        out.append(a)
    return out


def mass_matrix(chain, q):
    """Joint-space inertia M(q) by the composite-rigid-body algorithm."""
    (q,) = _check(q)
    _, _, S, Iw = _link_quantities(chain.dh, chain.mass, chain.com, chain.inertia, q)
    return _crba(S, _composite(Iw)) + np.diag(chain.armature)


def mass_matrix_derivative(chain, q):
    """Array dM with dM[k] = dM/dq_k."""
    (q,) = _check(q)
    _, _, S, Iw = _link_quantities(chain.dh, chain.mass, chain.com, chain.inertia, q)
    return _mass_matrix_derivative(S, _composite(Iw))


def coriolis_matrix(chain, q, qd):
    """Coriolis matrix from Christoffel symbols of M; Mdot - 2C is skew."""
    q, qd = _check(q, qd)
    return _christoffel_c(mass_matrix_derivative(chain, q), qd)


def gravity_vector(chain, q):
    """Gradient of the potential energy with respect to q."""
    (q,) = _check(q)
    return _gravity(chain.dh, chain.mass, chain.com, chain.gravity, q)


def bias_torques(chain, q, qd):
    """C(q, qd) qd + g(q) via recursive Newton-Euler (fast path)."""
    q, qd = _check(q, qd)
    _, _, S, Iw = _link_quantities(chain.dh, chain.mass, chain.com, chain.inertia, q)
    return _rnea_bias(S, Iw, qd, chain.gravity)


def potential_energy(chain, q):
    (q,) = _check(q)
    R, o = _frames(chain.dh, q)
    p = o + np.einsum("nij,nj->ni", R, chain.com)
    return float(-np.sum(chain.mass * (p @ chain.gravity)))


def sensor_frame(chain, q):
    """Rotation and origin of the sensor / swab-mount frame."""
    (q,) = _check(q)
    R, o = _frames(chain.dh, q)
    return _sensor_pose(R, o, chain.sensor_rotation, chain.sensor_translation)


def forward_kinematics(chain, q):
    Rs, ps = sensor_frame(chain, q)
    return EePose.from_matrix(Rs, ps)


def jacobian(chain, q, frame="world"):
    """3x7 linear-velocity Jacobian of the sensor-frame origin.

    ``frame="world"`` gives rows in base coordinates (J qd is the origin
    velocity). ``frame="sensor"`` gives rows along the sensor axes, so that
    ``J.T @ f`` maps a sensor-frame force to joint torques.
    """
    (q,) = _check(q)
    R, o = _frames(chain.dh, q)
    Rs, ps = _sensor_pose(R, o, chain.sensor_rotation, chain.sensor_translation)
    J = _pos_jacobian(R, o, ps)
    if frame == "world":
        return J
    if frame == "sensor":
        return Rs.T @ J
    raise ValueError(f"unknown frame {frame!r}")


def geometric_jacobian(chain, q):
    """6x7 Jacobian [linear; angular] of the sensor frame, world coordinates."""
    (q,) = _check(q)
    R, o = _frames(chain.dh, q)
    _, ps = _sensor_pose(R, o, chain.sensor_rotation, chain.sensor_translation)
    J = np.empty((6, NJ))
    J[:3] = _pos_jacobian(R, o, ps)
    J[3:] = R[:, :, 2].T
    return J


def kinetic_energy(chain, q, qd):
    q, qd = _check(q, qd)
    return 0.5 * float(qd @ mass_matrix(chain, q) @ qd)
