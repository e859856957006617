"""SVG figures. Output is byte-stable: fixed hash salt, no date metadata."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy.special import expit  # noqa: E402

from . import force_filter as ff  # noqa: E402
from . import observer as obs  # noqa: E402

SVG_META = {"Date": None, "Creator": None}


def _save(fig, path):
    with matplotlib.rc_context({"svg.hashsalt": "npswab", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata=SVG_META)
    plt.close(fig)


def step_response_figure(path, alphas=ff.ALPHA_PRESETS, amplitude=0.5, t_end=5.0, dt=1e-3):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for a in alphas:
        t = np.arange(0.0, t_end + dt / 2, dt)
        y = ff.step_response(a, t, amplitude, dt)
        ax.plot(t, y, label=f"alpha = {a:g}")
    ax.axhline(amplitude, color="0.6", lw=0.8, ls="--")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("filtered force (N)")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def sigmoid_figure(path, planner_cfg=None, observer=obs.ObserverParams()):
    p = planner_cfg or {"nu": 12.0, "s_bar": 0.33}
    f = np.linspace(-0.2, 1.0, 400)
    eps = np.linspace(0.0, 0.2, 400)
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    a1.plot(f, expit(-p["nu"] * (f - p["s_bar"])), label="path rate")
    a1.plot(f, expit(observer.nu_f * (f - observer.f_bar)), label="force membership")
    a1.set_xlabel("filtered axial force (N)")
    a1.legend()
    a2.plot(eps, expit(observer.nu_eps * (eps - observer.eps_bar)))
    a2.set_xlabel("displacement from start (m)")
    a2.set_ylabel("displacement membership")
    fig.tight_layout()
    _save(fig, path)


def trial_figure(path, logs, labels=None, title=None):
    """Axial force and displacement traces for one or more TickLogs."""
    labels = labels or [str(i) for i in range(len(logs))]
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    for lg, lab in zip(logs, labels):
        a1.plot(lg["t"], lg["f_z"] * 1e3, label=lab)
        a2.plot(lg["t"], lg["eps"] * 1e3, label=lab)
    a1.set_ylabel("filtered f_z (mN)")
    a2.set_ylabel("displacement (mm)")
    a2.set_xlabel("time (s)")
    a1.legend()
    if title:
        a1.set_title(title)
    fig.tight_layout()
    _save(fig, path)
