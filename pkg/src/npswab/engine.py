"""Closed-loop trial: plant, swab contact, loadcell, filter, planner, controller, observer.

One call to :func:`run_trial` builds every input on the Python side (chain,
spline, calibrated loadcell, scene arrays, pre-drawn sensor noise) and then
runs the whole fixed-step loop inside a single numba kernel. Per control tick:

1. relax the swab at the current sensor pose and sum the wall forces;
2. on a sensor tick (sample-and-hold at the sensor rate) read the loadcell;
3. compensate gravity and bias with the calibrated model;
4. low-pass the compensated force;
5. advance the path parameter (force-modulated in feedback mode);
6. evaluate the nominal spline;
7. compute the control torque;
8. integrate the plant with the swab force applied at the sensor origin;
9. update the termination observer.
"""

import functools
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numba as nb
import numpy as np
import tomli_w

from . import controller as ctl
from . import dynamics as dyn
from . import loadcell as lc
from . import observer as obs
from . import phantom as ph
from . import planner as pl
from .errors import ConfigError, UnreachableWaypointError

log = logging.getLogger(__name__)

RUNNING, TERMINATED, PATH_END, TIMEOUT, DIVERGED, FAULT = range(6)
STOP_REASONS = {RUNNING: "running", TERMINATED: "terminated", PATH_END: "path_end",
                TIMEOUT: "timeout", DIVERGED: "diverged", FAULT: "fault"}

COLUMNS = (["t"] + [f"q{j}" for j in range(7)] + [f"qd{j}" for j in range(7)]
           + [f"tau{j}" for j in range(7)]
           + ["raw_x", "raw_y", "raw_z", "comp_x", "comp_y", "comp_z",
              "f_x", "f_y", "f_z", "s", "sdot", "eps", "p_f", "p_eps", "p_term",
              "tip_x", "tip_y", "tip_z", "contact", "overload", "saturated", "end_force"])
COL = {name: i for i, name in enumerate(COLUMNS)}

# counters returned by the kernel
N_COUNTERS = 4
SATURATED_TICKS, CLAMPED_TICKS, STALE_RELAX, OVERLOAD_SAMPLES = range(N_COUNTERS)


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------

@nb.njit(cache=True)
def _sensor_position(dh, Rm, tm, q):
    R, o = dyn._frames(dh, q)
    _, ps = dyn._sensor_pose(R, o, Rm, tm)
    return ps


@nb.njit(cache=True)
def trial_kernel(p_dh, p_mass, p_com, p_inertia, p_arm, p_gravity, Rm, tm,
                 c_mass, c_com, c_inertia, c_arm, lower, upper,
                 q0, qd0, kp, kd, lam, tau_limit,
                 knots, coeffs, rate_scale, s_max, modulated, nu, s_bar,
                 fgain, obs_params,
                 A_true, Z_true, A_cal, Z_cal, capacity, gdir, noise,
                 sensor_rate, control_rate,
                 has_scene, verts, radii, starts, counts, kend, open_start, face,
                 has_face, k_wall, dirs0, seg_len, kb, r_swab, relax_iter, relax_tol,
                 nsub, n_max, settle_ticks, qd_limit, stride, logbuf):
    dt = 1.0 / control_rate
    h = dt / nsub
    q = q0.copy()
    qd = qd0.copy()
    dirs = dirs0.copy()
    nseg = dirs.shape[0]
    nodes = np.zeros((nseg + 1, 3))
    W = np.zeros(3)
    Fs = np.zeros(3)
    o = np.zeros(3)
    raw = np.zeros(3)
    comp = np.zeros(3)
    filt = np.zeros(3)
    q_d = np.empty(7)
    qd_d = np.empty(7)
    qdd_d = np.empty(7)
    tau = np.zeros(7)
    Js = np.empty((3, 7))
    counters = np.zeros(N_COUNTERS, np.int64)
    f_bar, nu_f, eps_bar, nu_eps, threshold = (obs_params[0], obs_params[1], obs_params[2],
                                               obs_params[3], obs_params[4])
    p_start = _sensor_position(p_dh, Rm, tm, q)
    s = 0.0
    sdot = 1.0
    sample = -1
    overload = False
    settle = 0
    status = RUNNING
    rows = 0
    sum_f = 0.0
    peak_f = 0.0
    eps = 0.0
    p_f = 0.0
    p_e = 0.0
    p_t = 0.0
    end_force = 0.0
    k = 0
    while status == RUNNING:
        # (1) pose and contact
        M, b, Jw, Rs, ps = dyn.terms_kernel(p_dh, c_mass, c_com, c_inertia, c_arm, p_gravity,
                                            Rm, tm, q, qd)
        contact = False
        end_force = 0.0
        W[:] = 0.0
        if has_scene:
            axis = np.empty(3)
            for i in range(3):
                axis[i] = -Rs[i, 2]
            dirs, nodes, forces, iters, ok = ph.relax_kernel(
                ps, axis, dirs, seg_len, kb, verts, radii, starts, counts, kend,
                open_start, face, has_face, k_wall, r_swab, relax_iter, relax_tol)
            if not ok:
                counters[STALE_RELAX] += 1
            for j in range(nseg + 1):
                for i in range(3):
                    if forces[j, i] != 0.0:
                        contact = True
                    W[i] += forces[j, i]
            # axial load of the terminal wall on the tip
            m0 = starts[0] + counts[0] - 2
            e0 = verts[m0 + 1, 0] - verts[m0, 0]
            e1 = verts[m0 + 1, 1] - verts[m0, 1]
            e2 = verts[m0 + 1, 2] - verts[m0, 2]
            el = np.sqrt(e0 * e0 + e1 * e1 + e2 * e2)
            pen = ((nodes[nseg, 0] - verts[m0 + 1, 0]) * e0
                   + (nodes[nseg, 1] - verts[m0 + 1, 1]) * e1
                   + (nodes[nseg, 2] - verts[m0 + 1, 2]) * e2) / el
            if pen > 0.0:
                end_force = kend[0] * pen
        else:
            for i in range(3):
                nodes[nseg, i] = ps[i] - Rs[i, 2] * seg_len * nseg
        # (2-3) sensor sample-and-hold, compensation at the sample instant
        idx = (k * sensor_rate) // control_rate
        if idx != sample:
            sample = idx
            for i in range(3):
                Fs[i] = Rs[0, i] * W[0] + Rs[1, i] * W[1] + Rs[2, i] * W[2]
                o[i] = Rs[0, i] * gdir[0] + Rs[1, i] * gdir[1] + Rs[2, i] * gdir[2]
            overload = lc.sense_kernel(Fs, o, A_true, Z_true, noise[idx], capacity,
                                       A_cal, Z_cal, raw, comp)
            if overload:
                counters[OVERLOAD_SAMPLES] += 1
        # (4) filter
        for i in range(3):
            filt[i] += fgain * (comp[i] - filt[i])
        fn = np.sqrt(filt[0] ** 2 + filt[1] ** 2 + filt[2] ** 2)
        sum_f += fn
        if fn > peak_f:
            peak_f = fn
        # (5-6) progression and nominal
        if modulated:
            x = -nu * (filt[2] - s_bar)
            if x >= 0:
                sdot = 1.0 / (1.0 + np.exp(-x))
            else:
                ex = np.exp(x)
                sdot = ex / (1.0 + ex)
        else:
            sdot = 1.0
        # reference at the current s (it stops dead at the path end), then advance
        ref_rate = rate_scale * sdot if s < s_max else 0.0
        pl.eval_kernel(knots, coeffs, s, ref_rate, q_d, qd_d, qdd_d)
        s_next = min(s + dt * rate_scale * sdot, s_max)
        # (7) control
        for r in range(3):
            for j in range(7):
                Js[r, j] = Rs[0, r] * Jw[0, j] + Rs[1, r] * Jw[1, j] + Rs[2, r] * Jw[2, j]
        saturated = ctl.control_kernel(M, b, Js, q, qd, q_d, qd_d, qdd_d, filt, kp, kd,
                                       lam, tau_limit, tau)
        if saturated:
            counters[SATURATED_TICKS] += 1
        if k % stride == 0:
            _log_row(logbuf, rows, k / control_rate, q, qd, tau, raw, comp, filt, s, sdot,
                     eps, p_f, p_e, p_t, nodes[nseg], contact, overload, saturated,
                     end_force)
            rows += 1
        # (8) plant
        qn, qdn = dyn.integrate_kernel(p_dh, p_mass, p_com, p_inertia, p_arm, p_gravity, Rm, tm,
                                       q, qd, tau, W, h, nsub)
        clamped = False
        for j in range(7):
            if qn[j] < lower[j]:
                qn[j] = lower[j]
                clamped = True
            elif qn[j] > upper[j]:
                qn[j] = upper[j]
                clamped = True
        if clamped:
            counters[CLAMPED_TICKS] += 1
        finite = True
        vmax = 0.0
        for j in range(7):
            if not (np.isfinite(qn[j]) and np.isfinite(qdn[j])):
                finite = False
            vmax = max(vmax, abs(qdn[j]))
        k += 1
        s = s_next
        if not finite:
            status = FAULT
            break
        q = qn
        qd = qdn
        if vmax > qd_limit:
            status = DIVERGED
        # (9) observer on the new pose
        pn = _sensor_position(p_dh, Rm, tm, q)
        eps = np.sqrt((pn[0] - p_start[0]) ** 2 + (pn[1] - p_start[1]) ** 2
                      + (pn[2] - p_start[2]) ** 2)
        p_f, p_e, p_t = obs.observe_kernel(filt[2], eps, f_bar, nu_f, eps_bar, nu_eps)
        if status == RUNNING:
            if p_t > threshold:
                status = TERMINATED
            elif s >= s_max:
                settle += 1
                if settle > settle_ticks:
                    status = PATH_END
            if status == RUNNING and k >= n_max:
                status = TIMEOUT
    stats = np.array([sum_f / max(k, 1), peak_f, eps, p_f, p_e, p_t, s, sdot])
    return status, k, rows, q, qd, dirs, counters, stats


@nb.njit(cache=True)
def _log_row(buf, r, t, q, qd, tau, raw, comp, filt, s, sdot, eps, p_f, p_e, p_t, tip,
             contact, overload, saturated, end_force):
    buf[r, 0] = t
    for j in range(7):
        buf[r, 1 + j] = q[j]
        buf[r, 8 + j] = qd[j]
        buf[r, 15 + j] = tau[j]
    for i in range(3):
        buf[r, 22 + i] = raw[i]
        buf[r, 25 + i] = comp[i]
        buf[r, 28 + i] = filt[i]
        buf[r, 37 + i] = tip[i]
    buf[r, 31] = s
    buf[r, 32] = sdot
    buf[r, 33] = eps
    buf[r, 34] = p_f
    buf[r, 35] = p_e
    buf[r, 36] = p_t
    buf[r, 40] = 1.0 if contact else 0.0
    buf[r, 41] = 1.0 if overload else 0.0
    buf[r, 42] = 1.0 if saturated else 0.0
    buf[r, 43] = end_force


# ---------------------------------------------------------------------------
# Python side
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EngineConfig:
    rate: float = 1000.0
    substeps: int = 4
    sensor_rate: float = 80.0
    timeout: float = 60.0
    settle: float = 1.0
    qd_limit: float = 10.0
    log_stride: int = 1
    seed: int = 0
    start_moving: bool = False

    def __post_init__(self):
        if self.rate <= 0 or self.sensor_rate <= 0 or self.timeout <= 0:
            raise ConfigError("rates and timeout must be positive")
        if self.substeps < 1 or self.log_stride < 1:
            raise ConfigError("substeps and log stride must be >= 1")
        if self.rate != int(self.rate) or self.sensor_rate != int(self.sensor_rate):
            raise ConfigError("control and sensor rates must be whole numbers of Hz")

    @classmethod
    def from_config(cls, cfg):
        e = cfg["engine"]
        return cls(rate=e["rate"], substeps=e["substeps"], sensor_rate=cfg["sensor"]["rate"],
                   timeout=e["timeout"], settle=e["settle"], qd_limit=e["qd_limit"],
                   log_stride=e["log_stride"], seed=e["seed"],
                   start_moving=e["start_moving"])


@dataclass
class TickLog:
    data: np.ndarray            # (rows, len(COLUMNS))
    stride: int = 1

    def __getitem__(self, name):
        return self.data[:, COL[name]]

    def __len__(self):
        return len(self.data)

    def block(self, prefix, n):
        i = COL[f"{prefix}0"] if f"{prefix}0" in COL else COL[f"{prefix}_x"]
        return self.data[:, i:i + n]

    def to_csv(self, path):
        np.savetxt(path, self.data, delimiter=",", header=",".join(COLUMNS),
                   comments="", fmt="%.17g")


@dataclass
class TrialRecord:
    pair_id: int
    mode: str
    perturbation: list          # [rx, ry, rz (deg), tx, ty, tz (m)]
    outcome: str
    stop_reason: str
    mean_force_mN: float
    peak_force_mN: float
    duration: float
    ticks: int
    termination_tick: int       # -1 when the observer never fired
    final_eps: float
    final_s: float
    tip: list
    tip_depth: float
    tip_to_target: float
    ee_displacement_mm: float   # final sensor origin vs the nominal pose at the same s
    ee_rotation_deg: float
    saturated_ticks: int
    clamped_ticks: int
    stale_relaxations: int
    overload_samples: int
    config_hash: str
    seed: int
    log_path: str = ""

    def to_dict(self):
        return asdict(self)

    def save(self, path):
        with open(path, "wb") as fh:
            tomli_w.dump(self.to_dict(), fh)


@dataclass
class TrialResult:
    record: TrialRecord
    log: TickLog
    swab: object = None
    contact: object = None
    final_q: np.ndarray = field(default=None)


@functools.lru_cache(maxsize=8)
def _nominal_path(chain_file, planner_items):
    p = dict(planner_items)
    chain = dyn.KinematicChain.panda() if chain_file == "panda" \
        else dyn.KinematicChain.from_file(chain_file)
    line = pl.TaskLine.from_angles(p["start"], p["decline_deg"], p["heading_deg"],
                                   p["length"], p["roll_deg"])
    ik = dict(damping=p["ik_damping"], max_iter=p["ik_max_iter"], tol=p["ik_tol"],
              nullspace_gain=p["nullspace_gain"])
    seed = np.array(p["ik_seed"], float)
    q0, res = pl.solve_ik(chain, line.point(0.0), line.orientation, seed, seed,
                          **dict(ik, max_iter=max(ik["max_iter"], 500)))
    if not res < ik["tol"]:
        raise UnreachableWaypointError(0, res)
    waypoints = pl.solve_waypoints(chain, line, p["waypoints"], seed=q0, q_nominal=q0, **ik)
    spline = pl.fit_splines(waypoints, p["knot_spacing"], p["duration"], p["boundary"])
    return np.array(waypoints), spline


def _freeze(value):
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


def nominal_path(cfg):
    """(waypoints, SplinePath) for the configured line, cached per planner config."""
    items = tuple(sorted((k, _freeze(v)) for k, v in cfg["planner"].items()))
    return _nominal_path(cfg["chain"]["file"], items)


def _calibrate(cfg, truth, rng):
    s = cfg["sensor"]
    rotations = lc.default_orientations(s["calibration_tilt_deg"])
    run = lc.collect_samples(truth, rotations, rng, s["samples_per_pose"],
                             noise_sigma=s["noise_sigma"])
    return lc.calibrate(run.orientations, run.mean_readings)


def _seed_streams(seed):
    ss = np.random.SeedSequence(int(seed))
    return [np.random.default_rng(c) for c in ss.spawn(3)]


def run_trial(cfg, mode=None, seed=None, scene="config", perturbation=None,
              pair_id=0, log_stride=None):
    """Run one insertion and return a :class:`TrialResult`.

    ``scene="config"`` builds the configured phantom (moved by
    ``perturbation = (rpy_deg, translation_m)`` if given); ``scene=None`` runs
    in free space; a :class:`~npswab.phantom.PhantomScene` is used as is.
    """
    mode = mode or cfg["gains"]["mode"]
    ecfg = EngineConfig.from_config(cfg)
    seed = ecfg.seed if seed is None else int(seed)
    stride = ecfg.log_stride if log_stride is None else int(log_stride)
    gains = cfg.gains(mode)
    chain = cfg.chain()
    rng_cal, rng_noise, rng_model = _seed_streams(seed)
    model_err = cfg["chain"]["model_error"]
    ctrl_chain = chain.perturbed(rng_model, model_err) if model_err > 0 else chain
    waypoints, spline = nominal_path(cfg)

    pert = [0.0] * 6
    if isinstance(scene, str) and scene == "config":
        if perturbation is not None:
            rpy, trans = perturbation
            scene = cfg.scene(list(rpy), list(trans))
            pert = [float(v) for v in (*rpy, *trans)]
        else:
            scene = cfg.scene()
            pert = [float(v) for v in (*cfg["scene"]["pose_rpy_deg"],
                                       *cfg["scene"]["pose_translation"])]
    swab = cfg.swab()
    truth = cfg.truth_model()
    sensor = cfg["sensor"]
    calib = _calibrate(cfg, truth, rng_cal)

    n_max = int(round(ecfg.timeout * ecfg.rate))
    n_samples = n_max * int(ecfg.sensor_rate) // int(ecfg.rate) + 2
    noise = rng_noise.normal(0.0, sensor["noise_sigma"], (n_samples, 3))
    g = chain.gravity
    gdir = g / np.linalg.norm(g) if np.linalg.norm(g) > 0 else np.array([0.0, 0.0, -1.0])

    fcfg = cfg["filter"]
    dt = 1.0 / ecfg.rate
    fgain = float(-np.expm1(-fcfg["alpha"] * dt)) if fcfg["method"] == "exact" \
        else fcfg["alpha"] * dt
    o = cfg.observer()
    obs_params = np.array([o.f_bar, o.nu_f, o.eps_bar, o.nu_eps, o.threshold])
    pcfg = cfg["planner"]
    tau_limit = chain.torque_limit if cfg["gains"]["saturate"] else np.full(7, np.inf)

    q0 = np.ascontiguousarray(waypoints[0])
    # at rest by default; start_moving puts the plant on the path velocity
    qd0 = np.zeros(7)
    if ecfg.start_moving:
        rate0 = pl.progression_rate(0.0, pcfg["nu"], pcfg["s_bar"]) \
            if mode == ctl.FEEDBACK else 1.0
        qd0 = pl.eval_nominal(spline, 0.0, rate0).qd
    Rs0, ps0 = dyn.sensor_frame(chain, q0)
    if scene is not None:
        arrays = scene.arrays()
    else:
        arrays = (np.zeros((2, 3)), np.ones(2), np.zeros(1, np.int64),
                  np.full(1, 2, np.int64), np.zeros(1), np.zeros(1, np.bool_),
                  np.zeros(6), False, 1.0)
    state0 = ph.straight_state(swab, ps0, -Rs0[:, 2])
    rows_max = (n_max + stride - 1) // stride + 1
    logbuf = np.zeros((rows_max, len(COLUMNS)))

    status, ticks, rows, q, qd, dirs, counters, stats = trial_kernel(
        chain.dh, chain.mass, chain.com, chain.inertia, chain.armature, chain.gravity,
        chain.sensor_rotation, chain.sensor_translation,
        ctrl_chain.mass, ctrl_chain.com, ctrl_chain.inertia, ctrl_chain.armature,
        chain.lower, chain.upper,
        q0, np.ascontiguousarray(qd0), gains.kp, gains.kd, gains.effective_lambda,
        np.ascontiguousarray(tau_limit, dtype=float),
        spline.knots, spline.coeffs, spline.rate_scale, spline.s_max,
        mode == ctl.FEEDBACK, float(pcfg["nu"]), float(pcfg["s_bar"]),
        fgain, obs_params,
        truth.A, truth.Z, calib.A, calib.Z, float(sensor["capacity"]), gdir, noise,
        int(ecfg.sensor_rate), int(ecfg.rate),
        scene is not None, *arrays, np.ascontiguousarray(state0.directions),
        swab.segment_length, swab.k_bend, swab.radius, swab.tick_iter, swab.tol,
        ecfg.substeps, n_max, int(round(ecfg.settle * ecfg.rate)), ecfg.qd_limit,
        stride, logbuf)

    if counters[CLAMPED_TICKS]:
        log.warning("joint limits clamped on %d ticks", counters[CLAMPED_TICKS])
    if counters[STALE_RELAX]:
        log.warning("swab relaxation did not converge on %d ticks", counters[STALE_RELAX])
    if counters[SATURATED_TICKS]:
        log.info("torque saturated on %d ticks", counters[SATURATED_TICKS])

    tick_log = TickLog(logbuf[:rows].copy(), stride)
    final_ok = np.all(np.isfinite(q))
    contact = swab_state = None
    if final_ok:
        Rs, ps = dyn.sensor_frame(chain, q)
        if scene is not None:
            swab_state, contact = ph.relax_swab(scene, swab, Rs, ps,
                                                ph.SwabState(dirs, state0.nodes.copy()))
            tip = contact.tip
        else:
            tip = ps - Rs[:, 2] * swab.length
        nom = pl.eval_nominal(spline, float(stats[6]))
        Rn, pn = dyn.sensor_frame(chain, nom.q)
        disp = float(np.linalg.norm(ps - pn)) * 1e3
        rot = float(np.degrees(np.linalg.norm(pl.orientation_error(Rn, Rs))))
    else:
        tip = np.full(3, np.nan)
        disp = rot = float("nan")

    if status in (DIVERGED, FAULT):
        outcome = ph.DIVERGED
    elif scene is None:
        outcome = ph.FREE_SPACE
    else:
        outcome = ph.classify_outcome(scene, tip, status == TERMINATED, float(stats[2]))
    depth = scene.depth(tip) if (scene is not None and final_ok) else float("nan")
    to_target = float(np.linalg.norm(tip - scene.target)) if (scene is not None and final_ok) \
        else float("nan")
    record = TrialRecord(
        pair_id=int(pair_id), mode=mode, perturbation=pert, outcome=outcome,
        stop_reason=STOP_REASONS[status],
        mean_force_mN=float(stats[0]) * 1e3, peak_force_mN=float(stats[1]) * 1e3,
        duration=ticks / ecfg.rate, ticks=int(ticks),
        termination_tick=int(ticks - 1) if status == TERMINATED else -1,
        final_eps=float(stats[2]), final_s=float(stats[6]),
        tip=[float(v) for v in tip], tip_depth=float(depth), tip_to_target=to_target,
        ee_displacement_mm=disp, ee_rotation_deg=rot,
        saturated_ticks=int(counters[SATURATED_TICKS]),
        clamped_ticks=int(counters[CLAMPED_TICKS]),
        stale_relaxations=int(counters[STALE_RELAX]),
        overload_samples=int(counters[OVERLOAD_SAMPLES]),
        config_hash=cfg.override(gains={"mode": mode}).digest(exclude_mode=True),
        seed=seed)
    return TrialResult(record, tick_log, swab_state, contact, q)


def write_trial(result, directory, stem="trial"):
    """TickLog CSV plus TOML record; returns the record with the log path set."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / f"{stem}.csv"
    result.log.to_csv(csv_path)
    result.record.log_path = csv_path.name
    result.record.save(directory / f"{stem}.toml")
    return result.record
