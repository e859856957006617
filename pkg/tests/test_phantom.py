import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from npswab import phantom as ph
from npswab import planner as pl
from npswab.config import RunConfig
from tests.oracles import swab_two_segment as oracle

R_TUBE = 0.004
R_SWAB = 0.0006


def tube_scene(k_wall=300.0, end=0.0):
    return ph.PhantomScene((ph.straight_channel(0.2, R_TUBE, end),), k_wall=k_wall, face=False)


def planar_base(beta):
    d = np.array([np.cos(beta), np.sin(beta), 0.0])
    return pl.tool_orientation(d)


@pytest.mark.parametrize("beta_deg, EI", [(5, 4e-3), (8, 4e-3), (5, 1e-3), (6, 2e-3)])
def test_two_segment_against_moment_balance(beta_deg, EI):
    l, b = 0.02, 0.001
    beta = np.radians(beta_deg)
    swab = ph.SwabModel(segments=2, length=2 * l, flexural_rigidity=EI, radius=R_SWAB,
                        tol=1e-13)
    state, contact = ph.relax_swab(tube_scene(), swab, planar_base(beta), np.array([0, b, 0]))
    ref = oracle.solve(l, b, beta, swab.k_bend, 300.0, R_TUBE - R_SWAB)
    assert state.converged
    assert np.allclose(state.nodes[2, :2], ref["tip"], atol=1e-10)
    assert np.allclose(state.nodes[1, :2], ref["node1"], atol=1e-10)
    assert contact.node_forces[2, 1] == pytest.approx(-ref["force"], rel=1e-6)
    assert np.allclose(contact.node_forces[1], 0.0)


def test_free_swab_is_straight_and_unloaded():
    swab = ph.SwabModel()
    Rs = planar_base(0.0)
    state, contact = ph.relax_swab(tube_scene(), swab, Rs, np.zeros(3))
    assert not contact.in_contact
    assert np.allclose(contact.reaction, 0.0)
    assert np.allclose(state.tip, [swab.length, 0, 0], atol=1e-15)


def moment_residual(state, contact, swab, Rs):
    base = state.nodes[0]
    a = -Rs[:, 2]
    m = swab.k_bend * np.cross(state.directions[0], a)
    for x, f in zip(state.nodes, contact.node_forces):
        m += np.cross(x - base, f)
    return np.linalg.norm(m)


@pytest.mark.parametrize("shift, rpy", [((0.0, 0.0, 0.0), (0.0, 0.0, 0.0)),
                                        ((0.0, 0.002, -0.001), (0.0, 3.0, -2.0)),
                                        ((0.003, -0.002, 0.002), (2.0, -4.0, 4.0))])
def test_equilibrium_in_default_scene(shift, rpy):
    cfg = RunConfig.load()
    swab = cfg.swab()
    line = cfg.line()
    scene = cfg.scene(list(rpy), [0.0, 0.0, 0.0])
    # push the base 60 mm down the line so the swab is well inside the channel
    base = line.point(0.3) + np.asarray(shift)
    state, contact = ph.relax_swab(scene, swab, line.orientation, base)
    assert state.converged
    scale = swab.k_bend * 1e-6 + np.abs(contact.node_forces).max() * swab.length * 1e-6
    assert moment_residual(state, contact, swab, line.orientation) <= max(scale, 1e-9)
    # inextensible by construction
    seg = np.linalg.norm(np.diff(state.nodes, axis=0), axis=1)
    assert np.allclose(seg, swab.segment_length, rtol=1e-12)


def test_reaction_frames():
    l, b = 0.02, 0.001
    swab = ph.SwabModel(segments=2, length=2 * l, radius=R_SWAB)
    Rs = planar_base(np.radians(6))
    _, c = ph.relax_swab(tube_scene(), swab, Rs, np.array([0, b, 0]))
    assert np.allclose(c.reaction_world, c.node_forces.sum(axis=0))
    assert np.allclose(c.reaction, Rs.T @ c.reaction_world)
    assert np.array_equal(c.wall_loads, -c.node_forces)


def test_terminal_wall_pushes_back():
    swab = ph.SwabModel(segments=4, length=0.05, radius=R_SWAB)
    scene = ph.PhantomScene((ph.straight_channel(0.04, R_TUBE, 800.0),), face=False)
    _, c = ph.relax_swab(scene, swab, planar_base(0.0), np.zeros(3))
    assert c.end_force == pytest.approx(800.0 * 0.01, rel=1e-6)
    assert c.reaction_world[0] == pytest.approx(-c.end_force, rel=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.floats(-0.02, 0.12), st.floats(-0.008, 0.008), st.floats(-0.008, 0.008))
def test_penalty_gradient(x, y, z):
    cfg = RunConfig.load()
    scene = cfg.scene_local()
    # the penalty has kinks where neighbouring capsules meet
    assume(all(abs(x - v[0]) > 1e-4 for c in scene.channels for v in c.vertices))
    verts, radii, starts, counts, kend, open_start, face, has_face, k_wall = scene.arrays()
    p = np.array([x, y, z])
    g = np.empty(3)
    h = np.empty((3, 3))
    e, region = ph.node_penalty(p, verts, radii, starts, counts, kend, open_start, face,
                                has_face, k_wall, R_SWAB, g, h)
    assert e >= 0
    if region == -2:
        assert e == 0 and np.all(g == 0)
        return
    num = np.empty(3)
    step = 1e-8
    for i in range(3):
        dp = np.zeros(3)
        dp[i] = step
        ep, rp = ph.node_penalty(p + dp, verts, radii, starts, counts, kend, open_start,
                                 face, has_face, k_wall, R_SWAB, np.empty(3), np.empty((3, 3)))
        em, rm = ph.node_penalty(p - dp, verts, radii, starts, counts, kend, open_start,
                                 face, has_face, k_wall, R_SWAB, np.empty(3), np.empty((3, 3)))
        if rp != region or rm != region:
            return          # straddles a region switch
        num[i] = (ep - em) / (2 * step)
    assert np.allclose(g, num, atol=1e-6 * max(1.0, np.abs(g).max()))


def test_pose_round_trip():
    cfg = RunConfig.load()
    scene = cfg.scene([2.0, -3.0, 4.0], [0.001, -0.002, 0.003])
    p = np.array([[0.01, 0.002, -0.001], [0.05, 0.0, 0.0]])
    assert np.allclose(scene.to_local(scene.to_world(p)), p, atol=1e-15)
    nominal = cfg.scene([0.0, 0.0, 0.0], [0.0, 0.0, 0.0])
    moved = nominal.rotation @ np.array([0.001, -0.002, 0.003])
    assert np.allclose(scene.nostril - nominal.nostril, moved)


def test_nominal_scene_alignment():
    cfg = RunConfig.load()
    scene = cfg.scene()
    line = cfg.line()
    assert np.allclose(scene.entry_axis, line.direction)
    tip0 = line.point(0.0) + cfg.swab().length * line.direction
    assert scene.depth(tip0) == pytest.approx(-cfg["scene"]["gap"])


def test_classify_rules():
    scene = RunConfig.load().scene()
    assert ph.classify_outcome(scene, scene.target, True, 0.11) == ph.SUCCESS
    near = scene.target + np.array([0.0, 0.0, 0.0049])
    assert ph.classify_outcome(scene, near, True, 0.11) == ph.SUCCESS
    shallow = scene.nostril + 0.005 * scene.entry_axis
    assert ph.classify_outcome(scene, shallow, True, 0.085) == ph.WEDGED
    assert ph.classify_outcome(scene, shallow, True, 0.010) == ph.MISTRACKED
    off = scene.target + np.array([0.0, 0.0, 0.02])
    assert ph.classify_outcome(scene, off, False, 0.12) == ph.MISTRACKED
    assert ph.classify_outcome(scene, np.full(3, np.nan), False, 0.0) == ph.DIVERGED


def test_scene_validation():
    with pytest.raises(ValueError):
        ph.PhantomScene(())
    with pytest.raises(ValueError):
        ph.PhantomScene((ph.straight_channel(0.1, 0.004),), k_wall=0.0)
    with pytest.raises(ValueError):
        ph.SwabModel(segments=0)
    with pytest.raises(ValueError):
        ph.default_channels({"nope": 1})


def test_branch_is_optional():
    assert len(ph.default_channels({"branch": False})) == 1
    chans = ph.default_channels({"branch": True})
    assert [c.name for c in chans] == ["main", "branch"]
