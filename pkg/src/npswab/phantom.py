"""Synthetic nasal phantom: tube channels behind a face plane, a flexible swab.

The cavity is the union of free regions: the half-space in front of the face
plus one capsule chain per channel (polyline centerline with per-vertex radius,
the first vertices forming the nostril funnel). A swab node pays the penalty
of the *closest* free region, so it is pushed back into whichever region it is
least outside of. A channel may end in a stiff wall (nasopharynx, blind
branch) or stay open.

The swab is an inextensible chain of ``N`` segments clamped to the sensor
frame. Its unknowns are the segment directions, so lengths and the clamp are
exact by construction; bending springs ``k_b (1 - cos theta)`` act between
neighbouring segments and between the first segment and the clamp axis. The
quasi-static equilibrium is found by a damped Newton iteration in the tangent
space of the directions, warm-started from the previous tick.

All geometry here is invented (placeholders for the printed phantom); only the
control-relevant features are kept: funnel entry, a tapering bent channel and
a stiff terminal wall. A blind superior branch can be switched on.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numba as nb
import numpy as np
import tomli
from scipy.spatial.transform import Rotation

log = logging.getLogger(__name__)

SUCCESS = "SUCCESS"
WEDGED = "WEDGED"
MISTRACKED = "MISTRACKED"
DIVERGED = "DIVERGED"
FREE_SPACE = "FREE_SPACE"
OUTCOMES = (SUCCESS, WEDGED, MISTRACKED, DIVERGED, FREE_SPACE)

SUCCESS_RADIUS = 0.005
WEDGE_DEPTH = 0.015
WEDGE_DISPLACEMENT = 0.030


# ---------------------------------------------------------------------------
# scene
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Channel:
    vertices: np.ndarray        # (m, 3), phantom frame (m)
    radii: np.ndarray           # (m,)
    end_stiffness: float = 0.0  # N/m behind the last vertex; 0 leaves it open
    name: str = "channel"
    open_start: bool = False    # extend the first segment backwards (entry side)

    def __post_init__(self):
        v = np.asarray(self.vertices, float)
        r = np.asarray(self.radii, float)
        if v.ndim != 2 or v.shape[1] != 3 or len(v) < 2:
            raise ValueError(f"{self.name}: need at least two 3-D vertices")
        if r.shape != (len(v),):
            raise ValueError(f"{self.name}: one radius per vertex")
        if np.any(np.linalg.norm(np.diff(v, axis=0), axis=1) <= 0):
            raise ValueError(f"{self.name}: repeated vertex")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "radii", r)

    @property
    def length(self):
        return float(np.sum(np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)))


@dataclass(frozen=True)
class PhantomScene:
    """Channels and face in the phantom frame, placed in the world by a pose.

    Phantom frame: origin at the nostril on the face plane, +x into the head
    along the entry axis, +z up. ``placement`` (R, t) maps it into the world
    for the nominal alignment and ``perturbation`` (R, t) is an extra rigid
    motion about the nostril, expressed in the phantom frame.
    """

    channels: tuple
    k_wall: float = 300.0
    face: bool = True
    placement_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    placement_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    perturbation_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    perturbation_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not self.channels:
            raise ValueError("scene needs at least one channel")
        if self.k_wall <= 0:
            raise ValueError("wall stiffness must be positive")
        for name in ("placement_rotation", "perturbation_rotation"):
            R = np.asarray(getattr(self, name), float)
            if R.shape != (3, 3) or not np.allclose(R.T @ R, np.eye(3), atol=1e-9) \
                    or np.linalg.det(R) < 0:
                raise ValueError(f"{name} is not a rotation")
            object.__setattr__(self, name, R)
        for name in ("placement_translation", "perturbation_translation"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), float))
        object.__setattr__(self, "channels", tuple(self.channels))

    # pose ---------------------------------------------------------------
    @property
    def rotation(self):
        return self.placement_rotation @ self.perturbation_rotation

    @property
    def translation(self):
        return self.placement_translation + self.placement_rotation @ self.perturbation_translation

    def to_world(self, p):
        return np.asarray(p, float) @ self.rotation.T + self.translation

    def to_local(self, x):
        return (np.asarray(x, float) - self.translation) @ self.rotation

    def placed(self, rotation, translation):
        return replace(self, placement_rotation=rotation, placement_translation=translation)

    def perturbed(self, rotvec_deg=(0.0, 0.0, 0.0), translation=(0.0, 0.0, 0.0)):
        """Copy moved by XYZ Euler angles (deg) and a translation (m) about the nostril."""
        R = Rotation.from_euler("xyz", rotvec_deg, degrees=True).as_matrix()
        return replace(self, perturbation_rotation=R,
                       perturbation_translation=np.asarray(translation, float))

    # landmarks ------------------------------------------------------------
    @property
    def nostril(self):
        return self.translation.copy()

    @property
    def entry_axis(self):
        return self.rotation[:, 0].copy()

    @property
    def target(self):
        """Nasopharynx target: last vertex of the first (main) channel."""
        return self.to_world(self.channels[0].vertices[-1])

    def depth(self, x):
        """Distance of a point past the face plane along the entry axis."""
        return float((np.asarray(x, float) - self.nostril) @ self.entry_axis)

    # kernel arrays ----------------------------------------------------------
    def arrays(self):
        verts = np.concatenate([self.to_world(c.vertices) for c in self.channels])
        radii = np.concatenate([c.radii for c in self.channels])
        counts = np.array([len(c.vertices) for c in self.channels], np.int64)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
        kend = np.array([c.end_stiffness for c in self.channels], float)
        open_start = np.array([c.open_start for c in self.channels], np.bool_)
        face = np.concatenate([self.nostril, -self.entry_axis]) if self.face \
            else np.zeros(6)
        return (np.ascontiguousarray(verts), radii, starts, counts, kend,
                open_start, face, bool(self.face), float(self.k_wall))


def straight_channel(length, radius, end_stiffness=0.0, start=-0.01):
    """Single straight tube along +x of the phantom frame (test fixture)."""
    v = np.array([[start, 0.0, 0.0], [length, 0.0, 0.0]])
    return Channel(v, np.array([radius, radius]), end_stiffness, "straight", True)


def default_channels(params=None):
    """Main channel with funnel and bends; the blind branch only if ``branch``."""
    p = dict(DEFAULT_GEOMETRY)
    if params:
        unknown = set(params) - set(p)
        if unknown:
            raise ValueError(f"unknown scene geometry keys: {sorted(unknown)}")
        p.update(params)
    main = Channel(np.array(p["main_vertices"], float) * 1e-3,
                   np.array(p["main_radii"], float) * 1e-3,
                   p["k_end"], "main", True)
    chans = [main]
    if p["branch"]:
        chans.append(Channel(np.array(p["branch_vertices"], float) * 1e-3,
                             np.array(p["branch_radii"], float) * 1e-3,
                             p["k_end"], "branch"))
    return tuple(chans)


def _geometry_defaults():
    with open(Path(__file__).parent / "data" / "default.toml", "rb") as fh:
        scene = tomli.load(fh)["scene"]
    keys = ("main_vertices", "main_radii", "branch", "branch_vertices",
            "branch_radii", "k_end")
    return {k: scene[k] for k in keys}


# Millimetres, phantom frame; the main channel runs ~100 mm from the nostril.
DEFAULT_GEOMETRY = _geometry_defaults()


def align_to_line(scene, start, direction, swab_length, gap=0.010):
    """Place the scene so its entry axis lies on the task line.

    The nostril sits ``gap`` beyond the swab tip at the start of the line, and
    the phantom +z axis is the world-up component orthogonal to the line.
    """
    a = np.asarray(direction, float)
    a = a / np.linalg.norm(a)
    up = np.array([0.0, 0.0, 1.0]) - a[2] * a
    if np.linalg.norm(up) < 1e-9:
        up = np.array([1.0, 0.0, 0.0]) - a[0] * a
    up /= np.linalg.norm(up)
    R = np.column_stack([a, np.cross(up, a), up])
    t = np.asarray(start, float) + (swab_length + gap) * a
    return scene.placed(R, t)


# ---------------------------------------------------------------------------
# swab
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SwabModel:
    segments: int = 24
    length: float = 0.15
    flexural_rigidity: float = 4.0e-3   # E I (N m^2): 1.2 mm rod, E ~ 40 GPa
    radius: float = 0.6e-3
    max_iter: int = 500
    tol: float = 1e-7
    tick_iter: int = 25                 # Newton cap per control tick (warm-started)

    def __post_init__(self):
        if self.segments < 1 or self.length <= 0 or self.flexural_rigidity <= 0:
            raise ValueError("swab needs segments >= 1, positive length and stiffness")
        if self.radius < 0:
            raise ValueError("swab radius must be non-negative")
        if self.max_iter < 1 or self.tick_iter < 1:
            raise ValueError("iteration caps must be >= 1")

    @property
    def segment_length(self):
        return self.length / self.segments

    @property
    def k_bend(self):
        """Joint spring (N m/rad) of the discrete chain, EI / l."""
        return self.flexural_rigidity / self.segment_length


@dataclass
class SwabState:
    directions: np.ndarray       # (N, 3) unit segment directions
    nodes: np.ndarray            # (N+1, 3)
    iterations: int = 0
    converged: bool = True

    @property
    def tip(self):
        return self.nodes[-1]

    def copy(self):
        return SwabState(self.directions.copy(), self.nodes.copy(),
                         self.iterations, self.converged)


def straight_state(swab, base, axis):
    a = np.asarray(axis, float)
    a = a / np.linalg.norm(a)
    dirs = np.tile(a, (swab.segments, 1))
    nodes = np.asarray(base, float) + swab.segment_length * np.arange(swab.segments + 1)[:, None] * a
    return SwabState(dirs, nodes)


@dataclass(frozen=True)
class ContactResult:
    node_forces: np.ndarray      # (N+1, 3) wall forces on the swab nodes, world
    reaction: np.ndarray         # force of the swab on the sensor, sensor frame
    reaction_world: np.ndarray
    tip: np.ndarray
    end_force: float             # axial terminal-wall force on the tip (N)
    in_contact: bool
    at_target: bool

    @property
    def wall_loads(self):
        """Forces the swab applies to the walls (third-law partners)."""
        return -self.node_forces


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

@nb.njit(cache=True)
def _segment_penalty(x, a, b, ra, rb, rs, extend_back, extend_front, k_wall, k_end,
                     grad, hess):
    """Energy of node x against one capsule segment; fills grad and GN hess."""
    e0 = b[0] - a[0]
    e1 = b[1] - a[1]
    e2 = b[2] - a[2]
    ee = e0 * e0 + e1 * e1 + e2 * e2
    w0 = x[0] - a[0]
    w1 = x[1] - a[1]
    w2 = x[2] - a[2]
    t = (w0 * e0 + w1 * e1 + w2 * e2) / ee
    interior = True
    axial = 0.0
    if t < 0.0:
        if not extend_back:
            t = 0.0
        interior = False
    elif t > 1.0:
        axial = (t - 1.0) * np.sqrt(ee)
        if not extend_front:
            t = 1.0
        interior = False
    tr = min(max(t, 0.0), 1.0)
    r = ra + (rb - ra) * tr
    n0 = w0 - t * e0
    n1 = w1 - t * e1
    n2 = w2 - t * e2
    d = np.sqrt(n0 * n0 + n1 * n1 + n2 * n2)
    pen = d - (r - rs)
    energy = 0.0
    for i in range(3):
        grad[i] = 0.0
        for j in range(3):
            hess[i, j] = 0.0
    if pen > 0.0 and d > 0.0:
        g0 = n0 / d
        g1 = n1 / d
        g2 = n2 / d
        if interior:
            c = (rb - ra) / ee
            g0 -= c * e0
            g1 -= c * e1
            g2 -= c * e2
        energy += 0.5 * k_wall * pen * pen
        gv = (g0, g1, g2)
        for i in range(3):
            grad[i] += k_wall * pen * gv[i]
            for j in range(3):
                hess[i, j] += k_wall * gv[i] * gv[j]
    if k_end > 0.0 and axial > 0.0:
        L = np.sqrt(ee)
        u = (e0 / L, e1 / L, e2 / L)
        energy += 0.5 * k_end * axial * axial
        for i in range(3):
            grad[i] += k_end * axial * u[i]
            for j in range(3):
                hess[i, j] += k_end * u[i] * u[j]
    return energy


@nb.njit(cache=True)
def node_penalty(x, verts, radii, starts, counts, kend, open_start, face, has_face,
                 k_wall, rs, grad, hess):
    """Penalty of the least-violated free region; returns (energy, region).

    region is -1 for the face half-space, else the channel index; -2 means
    the node is free (zero energy).
    """
    best = np.inf
    region = -2
    g = np.empty(3)
    h = np.empty((3, 3))
    for i in range(3):
        grad[i] = 0.0
        for j in range(3):
            hess[i, j] = 0.0
    if has_face:
        sd = ((x[0] - face[0]) * face[3] + (x[1] - face[1]) * face[4]
              + (x[2] - face[2]) * face[5])
        pen = rs - sd
        if pen <= 0.0:
            return 0.0, -2
        best = 0.5 * k_wall * pen * pen
        region = -1
        for i in range(3):
            grad[i] = -k_wall * pen * face[3 + i]
            for j in range(3):
                hess[i, j] = k_wall * face[3 + i] * face[3 + j]
    for c in range(len(starts)):
        s0 = starts[c]
        m = counts[c]
        for k in range(m - 1):
            last = k == m - 2
            ke = kend[c] if last else 0.0
            e = _segment_penalty(x, verts[s0 + k], verts[s0 + k + 1],
                                 radii[s0 + k], radii[s0 + k + 1], rs,
                                 k == 0 and open_start[c], last, k_wall, ke, g, h)
            if e < best:
                best = e
                region = c
                for i in range(3):
                    grad[i] = g[i]
                    for j in range(3):
                        hess[i, j] = h[i, j]
                if e == 0.0:
                    return 0.0, -2
    return best, region


@nb.njit(cache=True)
def _tangents(d, t1, t2):
    if abs(d[0]) < 0.9:
        h0, h1, h2 = 1.0, 0.0, 0.0
    else:
        h0, h1, h2 = 0.0, 1.0, 0.0
    # t1 = normalize(h x d), t2 = d x t1
    a0 = h1 * d[2] - h2 * d[1]
    a1 = h2 * d[0] - h0 * d[2]
    a2 = h0 * d[1] - h1 * d[0]
    n = np.sqrt(a0 * a0 + a1 * a1 + a2 * a2)
    t1[0] = a0 / n
    t1[1] = a1 / n
    t1[2] = a2 / n
    t2[0] = d[1] * t1[2] - d[2] * t1[1]
    t2[1] = d[2] * t1[0] - d[0] * t1[2]
    t2[2] = d[0] * t1[1] - d[1] * t1[0]


@nb.njit(cache=True)
def _nodes_from(base, dirs, l, nodes):
    nodes[0, :] = base
    for i in range(dirs.shape[0]):
        for k in range(3):
            nodes[i + 1, k] = nodes[i, k] + l * dirs[i, k]


@nb.njit(cache=True)
def _energy(base, axis, dirs, l, kb, nodes, verts, radii, starts, counts, kend,
            open_start, face, has_face, k_wall, rs, G, H):
    """Total energy; fills per-node gradients G (N+1,3) and GN blocks H."""
    n = dirs.shape[0]
    _nodes_from(base, dirs, l, nodes)
    E = 0.0
    g = np.empty(3)
    h = np.empty((3, 3))
    G[0, :] = 0.0
    H[0, :, :] = 0.0
    for j in range(1, n + 1):
        e, _ = node_penalty(nodes[j], verts, radii, starts, counts, kend,
                            open_start, face, has_face, k_wall, rs, g, h)
        E += e
        G[j, :] = g
        H[j, :, :] = h
    prev0, prev1, prev2 = axis[0], axis[1], axis[2]
    for i in range(n):
        E += kb * (1.0 - (prev0 * dirs[i, 0] + prev1 * dirs[i, 1] + prev2 * dirs[i, 2]))
        prev0, prev1, prev2 = dirs[i, 0], dirs[i, 1], dirs[i, 2]
    return E


@nb.njit(cache=True)
def _chol_inplace(A):
    n = A.shape[0]
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= A[j, k] * A[j, k]
        if s <= 0.0:
            return False
        A[j, j] = np.sqrt(s)
        for i in range(j + 1, n):
            s = A[i, j]
            for k in range(j):
                s -= A[i, k] * A[j, k]
            A[i, j] = s / A[j, j]
    return True


@nb.njit(cache=True)
def _chol_solve(L, b, x):
    n = L.shape[0]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * x[k]
        x[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, n):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]


@nb.njit(cache=True)
def relax_kernel(base, axis, dirs, l, kb, verts, radii, starts, counts, kend,
                 open_start, face, has_face, k_wall, rs, max_iter, tol):
    """Quasi-static swab equilibrium. Returns (dirs, nodes, forces, iters, converged)."""
    n = dirs.shape[0]
    m = 2 * n
    dirs = dirs.copy()
    nodes = np.empty((n + 1, 3))
    trial_nodes = np.empty((n + 1, 3))
    G = np.empty((n + 1, 3))
    H = np.empty((n + 1, 3, 3))
    Gt = np.empty((n + 1, 3))
    Ht = np.empty((n + 1, 3, 3))
    T = np.empty((n, 2, 3))
    S = np.empty((n + 2, 3, 3))
    Gs = np.empty((n + 2, 3))
    grad = np.empty(m)
    A = np.empty((m, m))
    L = np.empty((m, m))
    step = np.empty(m)
    rhs = np.empty(m)
    U = np.empty((n, 2, 3))
    trial = np.empty((n, 3))
    t1 = np.empty(3)
    t2 = np.empty(3)
    E = _energy(base, axis, dirs, l, kb, nodes, verts, radii, starts, counts,
                kend, open_start, face, has_face, k_wall, rs, G, H)
    converged = False
    it = 0
    mu = 0.0
    while it < max_iter:
        it += 1
        for i in range(n):
            _tangents(dirs[i], t1, t2)
            T[i, 0, :] = t1
            T[i, 1, :] = t2
        # suffix sums over nodes i+1..n of gradients and GN blocks
        Gs[n + 1, :] = 0.0
        S[n + 1, :, :] = 0.0
        for j in range(n, 0, -1):
            Gs[j, :] = Gs[j + 1, :] + G[j, :]
            S[j, :, :] = S[j + 1, :, :] + H[j, :, :]
        for i in range(n):
            di = dirs[i]
            for a in range(2):
                ta = T[i, a]
                v = 0.0
                for k in range(3):
                    v += ta[k] * Gs[i + 1, k]
                v *= l
                if i == 0:
                    v -= kb * (axis[0] * ta[0] + axis[1] * ta[1] + axis[2] * ta[2])
                else:
                    v -= kb * (dirs[i - 1, 0] * ta[0] + dirs[i - 1, 1] * ta[1]
                               + dirs[i - 1, 2] * ta[2])
                if i + 1 < n:
                    v -= kb * (dirs[i + 1, 0] * ta[0] + dirs[i + 1, 1] * ta[1]
                               + dirs[i + 1, 2] * ta[2])
                grad[2 * i + a] = v
                # U[i, a] = S_{i+1} t_{i,a}
                for r in range(3):
                    U[i, a, r] = (S[i + 1, r, 0] * ta[0] + S[i + 1, r, 1] * ta[1]
                                  + S[i + 1, r, 2] * ta[2])
        # Hessian: penalty GN + its curvature term + exact bending
        for i in range(n):
            for a in range(2):
                row = 2 * i + a
                for k in range(i + 1):
                    for b in range(2):
                        col = 2 * k + b
                        # max(i, k) = i, so the block uses S_{i+1}
                        v = l * l * (T[k, b, 0] * U[i, a, 0] + T[k, b, 1] * U[i, a, 1]
                                     + T[k, b, 2] * U[i, a, 2])
                        A[row, col] = v
        for i in range(n):
            di = dirs[i]
            prev = axis if i == 0 else dirs[i - 1]
            c = prev[0] * di[0] + prev[1] * di[1] + prev[2] * di[2]
            if i + 1 < n:
                c += dirs[i + 1, 0] * di[0] + dirs[i + 1, 1] * di[1] + dirs[i + 1, 2] * di[2]
            curv = -l * (di[0] * Gs[i + 1, 0] + di[1] * Gs[i + 1, 1] + di[2] * Gs[i + 1, 2])
            for a in range(2):
                A[2 * i + a, 2 * i + a] += kb * c + curv
            if i > 0:
                for a in range(2):
                    for b in range(2):
                        A[2 * i + a, 2 * (i - 1) + b] -= kb * (
                            T[i, a, 0] * T[i - 1, b, 0] + T[i, a, 1] * T[i - 1, b, 1]
                            + T[i, a, 2] * T[i - 1, b, 2])
        gnorm = 0.0
        for r in range(m):
            gnorm = max(gnorm, abs(grad[r]))
        # Levenberg damping until the factorization succeeds
        mu = max(mu * 0.1, 0.0)
        while True:
            for r in range(m):
                for q in range(r + 1):
                    L[r, q] = A[r, q]
                L[r, r] += mu
            if _chol_inplace(L):
                break
            mu = max(10.0 * mu, 1e-9 * kb + 1e-12)
        for r in range(m):
            rhs[r] = -grad[r]
        _chol_solve(L, rhs, step)
        slope = 0.0
        smax = 0.0
        for r in range(m):
            slope += step[r] * grad[r]
            smax = max(smax, abs(step[r]))
        # backtracking line search on the true energy
        alpha = 1.0
        accepted = False
        for _ in range(40):
            for i in range(n):
                nn = 0.0
                for k in range(3):
                    trial[i, k] = dirs[i, k] + alpha * (step[2 * i] * T[i, 0, k]
                                                        + step[2 * i + 1] * T[i, 1, k])
                    nn += trial[i, k] * trial[i, k]
                nn = np.sqrt(nn)
                for k in range(3):
                    trial[i, k] /= nn
            Et = _energy(base, axis, trial, l, kb, trial_nodes, verts, radii, starts,
                         counts, kend, open_start, face, has_face, k_wall, rs, Gt, Ht)
            if Et <= E + 1e-4 * alpha * slope or alpha * smax * l < 1e-15:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        dirs[:, :] = trial
        nodes[:, :] = trial_nodes
        G[:, :] = Gt
        H[:, :, :] = Ht
        E = Et
        if alpha * smax * l * n < tol or gnorm < 1e-12:
            converged = True
            break
    forces = np.empty((n + 1, 3))
    for j in range(n + 1):
        for k in range(3):
            forces[j, k] = -G[j, k]
    return dirs, nodes, forces, it, converged


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def relax_swab(scene, swab, base_rotation, base_position, state=None):
    """Equilibrium swab shape and wall forces for a sensor pose.

    ``base_rotation`` is the sensor frame; the swab leaves along its -z axis.
    ``state`` (if given) warm-starts the solve. Returns (SwabState, ContactResult).
    """
    Rs = np.asarray(base_rotation, float)
    base = np.ascontiguousarray(base_position, dtype=float)
    if not (np.all(np.isfinite(Rs)) and np.all(np.isfinite(base))):
        raise ValueError("base pose must be finite")
    axis = np.ascontiguousarray(-Rs[:, 2])
    if state is None:
        state = straight_state(swab, base, axis)
    verts, radii, starts, counts, kend, open_start, face, has_face, k_wall = scene.arrays()
    dirs, nodes, forces, iters, ok = relax_kernel(
        base, axis, np.ascontiguousarray(state.directions), swab.segment_length,
        swab.k_bend, verts, radii, starts, counts, kend, open_start, face, has_face, k_wall,
        swab.radius, swab.max_iter, swab.tol)
    if not ok:
        log.warning("swab relaxation hit %d iterations; using last iterate", iters)
    new = SwabState(dirs, nodes, int(iters), bool(ok))
    return new, contact_result(scene, new, forces, Rs)


def contact_result(scene, state, forces, sensor_rotation):
    total = forces.sum(axis=0)
    tip = state.nodes[-1]
    return ContactResult(
        node_forces=forces,
        reaction=sensor_rotation.T @ total,
        reaction_world=total,
        tip=tip.copy(),
        end_force=nasopharynx_contact(scene, tip),
        in_contact=bool(np.any(forces != 0.0)),
        at_target=bool(np.linalg.norm(tip - scene.target) <= SUCCESS_RADIUS),
    )


def nasopharynx_contact(scene, tip):
    """Axial resistance of the terminal wall behind the main channel's last vertex."""
    main = scene.channels[0]
    v = scene.to_world(main.vertices[-2:])
    e = v[1] - v[0]
    e = e / np.linalg.norm(e)
    pen = float((np.asarray(tip, float) - v[1]) @ e)
    return main.end_stiffness * max(pen, 0.0)


def classify_outcome(scene, tip, terminated, displacement):
    """Outcome label from the final tip position and end-effector displacement."""
    del terminated  # the rule is geometric; kept for call-site clarity
    tip = np.asarray(tip, float)
    if not np.all(np.isfinite(tip)):
        return DIVERGED
    if np.linalg.norm(tip - scene.target) <= SUCCESS_RADIUS:
        return SUCCESS
    if scene.depth(tip) < WEDGE_DEPTH and displacement > WEDGE_DISPLACEMENT:
        return WEDGED
    return MISTRACKED
