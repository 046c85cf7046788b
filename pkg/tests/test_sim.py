"""Simulator: kinematics, collision, SDF and the integrator."""
import numpy as np
import pytest

from hoilab.geometry import quat_to_mat, expmap_to_mat
from hoilab.sim import World
from hoilab.sim.collision import detect_contacts, sdf
from hoilab.sim.kinematics import forward_kinematics
from hoilab.sim.model import (Joint, HandModel, HandState, ObjectModel, WorldConfig, Scene,
                              SceneError)
from hoilab.sim.world import forward_dynamics, inverse_dynamics, SimulationFault
from hoilab.sim.presets import two_finger_box

from conftest import chain_hand, far_scene, hand_far, obj_at


def sphere_hand(radius=0.01):
    """A lone root body shaped as a sphere (zero-length capsule)."""
    root = Joint("tip", -1, "free", "capsule", (radius, 0.0), 0.05, np.full(6, 10.0),
                 np.full(6, 1.0), np.full(6, 10.0))
    return HandModel([root])


# ------------------------------------------------------------------ kinematics

def test_fk_identity_chain():
    fk = forward_kinematics(chain_hand(), np.zeros(7))
    assert np.allclose(fk.joint_positions[1], [0.1, 0.0, 0.0], atol=1e-15)


def test_fk_translation_equivariance():
    m = chain_hand()
    q = np.zeros(7)
    q[6] = 0.3
    base = forward_kinematics(m, q)
    q[:3] = [1.0, 2.0, 3.0]
    moved = forward_kinematics(m, q)
    assert np.allclose(moved.joint_positions - base.joint_positions, [1.0, 2.0, 3.0], atol=1e-14)
    assert np.allclose(moved.centers - base.centers, [1.0, 2.0, 3.0], atol=1e-14)


def test_fk_quarter_turn():
    m = chain_hand()
    q = np.zeros(7)
    q[6] = np.pi / 2
    fk = forward_kinematics(m, q)
    # the child's joint frame turns; its link body now points along +y
    assert np.allclose(fk.rotations[1] @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-12)
    assert np.allclose(fk.centers[1], [0.1, 0.05, 0.0], atol=1e-12)


def test_fk_dimension_mismatch():
    with pytest.raises(ValueError):
        forward_kinematics(chain_hand(), np.zeros(5))


def test_hand_model_validation():
    good = chain_hand()
    j = good.joints
    with pytest.raises(SceneError):
        HandModel([j[1]])
    bad = Joint("x", 0, "hinge", "capsule", (0.01, 0.02), -1.0, np.array([1.0]),
                np.array([1.0]), np.array([1.0]))
    with pytest.raises(SceneError):
        HandModel([j[0], bad])


# ------------------------------------------------------------------ SDF

@pytest.mark.parametrize("point, expected", [
    ((0.0, 0.0, 0.0), -0.5),
    ((0.5, 0.0, 0.0), 0.0),
    ((1.0, 1.0, 1.0), np.sqrt(0.75)),
])
def test_sdf_unit_box(point, expected):
    assert sdf(ObjectModel("box", (0.5, 0.5, 0.5), 1.0), point) == pytest.approx(expected, abs=1e-15)


def test_sdf_other_primitives():
    s = ObjectModel("sphere", (0.2,), 1.0)
    assert sdf(s, (0.0, 0.0, 0.5)) == pytest.approx(0.3)
    c = ObjectModel("capsule", (0.1, 0.3), 1.0)
    assert sdf(c, (0.0, 0.0, 0.6)) == pytest.approx(0.2)
    assert sdf(c, (0.05, 0.0, 0.0)) == pytest.approx(-0.05)
    y = ObjectModel("cylinder", (0.1, 0.3), 1.0)
    assert sdf(y, (0.0, 0.0, 0.35)) == pytest.approx(0.05)
    assert sdf(y, (0.2, 0.0, 0.4)) == pytest.approx(np.hypot(0.1, 0.1))
    assert sdf(y, (0.0, 0.0, 0.0)) == pytest.approx(-0.1)


def test_sdf_world_pose():
    box = ObjectModel("box", (0.5, 0.1, 0.1), 1.0)
    q = np.array([np.cos(np.pi / 4), 0.0, 0.0, np.sin(np.pi / 4)])  # 90 deg about z
    # the long axis now lies along world y
    assert sdf(box, (0.0, 0.5, 0.0), pos=(0, 0, 0), quat=q) == pytest.approx(0.0, abs=1e-12)
    assert sdf(box, (0.5, 0.0, 0.0), pos=(0, 0, 0), quat=q) == pytest.approx(0.4, abs=1e-12)


def test_unsupported_primitive():
    with pytest.raises(SceneError):
        ObjectModel("torus", (1.0,), 1.0)


# ------------------------------------------------------------------ collision

def test_sphere_on_box_top_face():
    hand = sphere_hand(0.01)
    box = ObjectModel("box", (0.5, 0.5, 0.5), 1.0)
    q = np.zeros(6)
    q[:3] = [0.1, -0.2, 0.505]
    cs = detect_contacts(hand, HandState(q, np.zeros(6)), box, obj_at())
    assert len(cs) == 1
    assert cs.depths[0] == pytest.approx(0.005, abs=1e-12)
    # oriented from the hand body into the object
    assert np.allclose(cs.normals[0], [0.0, 0.0, -1.0])
    assert np.allclose(cs.points[0], [0.1, -0.2, 0.495], atol=1e-12)


def test_separated_bodies_have_no_contacts():
    hand = sphere_hand(0.01)
    box = ObjectModel("box", (0.5, 0.5, 0.5), 1.0)
    q = np.zeros(6)
    q[2] = 1.5
    assert len(detect_contacts(hand, HandState(q, np.zeros(6)), box, obj_at())) == 0


def test_resting_capsule_has_zero_relative_velocity():
    sc = two_finger_box(squeeze=0.002)
    g = sc.grasp
    cs = detect_contacts(sc.hand, HandState(g.q, np.zeros(sc.hand.nq)), sc.obj,
                         obj_at(g.obj_pos))
    assert len(cs) == 2
    assert np.all(cs.vrel == 0.0)
    assert np.allclose(np.linalg.norm(cs.normals, axis=1), 1.0, atol=1e-12)


def test_relative_velocity_is_tangential(rng):
    sc = two_finger_box(squeeze=0.002)
    g = sc.grasp
    for _ in range(10):
        cs = detect_contacts(sc.hand, HandState(g.q, rng.normal(0, 0.3, sc.hand.nq)), sc.obj,
                             obj_at(g.obj_pos, vel=rng.normal(0, 0.2, 3),
                                    angvel=rng.normal(0, 1.0, 3)))
        assert len(cs) == 2
        assert np.all(np.abs(np.einsum("ij,ij->i", cs.vrel, cs.normals)) < 1e-9)


# ------------------------------------------------------------------ dynamics

def test_ballistic_drop():
    sc = far_scene()
    w = World(sc)
    hs, os_ = hand_far(sc.hand), obj_at()
    for _ in range(30):
        hs, os_ = w.step(hs, os_, np.zeros(sc.hand.nq))
    assert os_.pos[2] == pytest.approx(-4.905, abs=1e-3)


def test_compensation_cancels_gravity():
    sc = far_scene()
    w = World(sc)
    hs, os_ = hand_far(sc.hand), obj_at((0.3, 0.2, 0.1))
    fc = -sc.obj.mass * sc.world.gravity
    for _ in range(30):
        hs, os_ = w.step(hs, os_, np.zeros(sc.hand.nq), f_comp=fc)
    assert np.allclose(os_.pos, [0.3, 0.2, 0.1], atol=1e-9)


def _angular_momentum(obj, os_):
    R = quat_to_mat(os_.quat)
    return R @ obj.inertia @ R.T @ os_.angvel


def _tumble(substeps, sim_hz):
    obj = ObjectModel("box", (0.1, 0.05, 0.02), 1.0)
    cfg = WorldConfig(gravity=np.zeros(3), sim_hz=sim_hz, substeps=substeps)
    sc = Scene(chain_hand(), obj, cfg)
    w = World(sc)
    hs, os_ = hand_far(sc.hand), obj_at(angvel=(0.3, 5.0, 0.2))
    L0 = _angular_momentum(obj, os_)
    for _ in range(30):
        hs, os_ = w.step(hs, os_, np.zeros(sc.hand.nq))
    return os_, L0, obj


def test_torque_free_angular_momentum():
    os_, L0, obj = _tumble(15, 450.0)
    L1 = _angular_momentum(obj, os_)
    assert np.linalg.norm(L1 - L0) / np.linalg.norm(L0) <= 1e-4


def _angle(qa, qb):
    R = quat_to_mat(qa).T @ quat_to_mat(qb)
    return np.arccos(np.clip((np.trace(R) - 1) / 2, -1, 1))


def test_torque_free_matches_fine_step_reference():
    coarse, L0, obj = _tumble(15, 450.0)
    mid, _, _ = _tumble(30, 900.0)
    fine, _, _ = _tumble(150, 4500.0)
    Lc, Lf = _angular_momentum(obj, coarse), _angular_momentum(obj, fine)
    assert np.linalg.norm(Lc - Lf) / np.linalg.norm(Lf) <= 1e-4
    # the attitude converges toward the fine solution as the substep shrinks
    e1, e2 = _angle(coarse.quat, fine.quat), _angle(mid.quat, fine.quat)
    assert e1 < 0.05
    assert e2 < 0.6 * e1


def test_substep_halving_consistency():
    def run(sim_hz, sub):
        sc = far_scene()
        sc.world = WorldConfig(sim_hz=sim_hz, substeps=sub)
        w = World(sc)
        hs = hand_far(sc.hand)
        hs.dq[:] = [0.1, 0.0, 0.2, 0.0, 0.3, 0.0, 1.0]
        os_ = obj_at(vel=(0.5, 0.0, 1.0), angvel=(0.0, 2.0, 1.0))
        tau = np.zeros(sc.hand.nq)
        for _ in range(30):
            hs, os_ = w.step(hs, os_, tau)
        fk = forward_kinematics(sc.hand, hs.q)
        return os_.pos, fk.centers
    p1, c1 = run(450.0, 15)
    p2, c2 = run(900.0, 30)
    assert np.linalg.norm(p1 - p2) < 1e-4
    assert np.max(np.linalg.norm(c1 - c2, axis=1)) < 1e-4


def test_object_momentum_conserved_without_gravity_or_contacts():
    sc = far_scene(gravity=(0, 0, 0))
    w = World(sc)
    hs, os_ = hand_far(sc.hand), obj_at(vel=(0.3, -0.2, 0.1), angvel=(1.0, 2.0, 3.0))
    p0 = sc.obj.mass * os_.vel.copy()
    for _ in range(10):
        hs, os_ = w.step(hs, os_, np.zeros(sc.hand.nq))
        assert np.allclose(sc.obj.mass * os_.vel, p0, rtol=0, atol=1e-10)


def test_hand_momentum_rate_vanishes_without_external_forces(rng):
    # internal joint torques cannot change the total linear momentum of the tree
    m = chain_hand()
    for _ in range(5):
        q = rng.normal(0, 0.5, m.nq)
        dq = rng.normal(0, 1.0, m.nq)
        tau = np.concatenate([np.zeros(6), rng.normal(0, 1.0, m.nq - 6)])
        qdd = forward_dynamics(m, q, dq, tau)
        h = 1e-6
        def momentum(q_, dq_):
            from hoilab import _kernels_py as K
            hp = m.packed()
            R, p = K.fk(hp, q_)
            G, c = K.body_frames(hp, R, p)
            V, _ = K.body_velocities(hp, R, p, dq_)
            return sum(hp.mass[i] * (V[i, 3:] + np.cross(V[i, :3], c[i])) for i in range(m.nb))
        # advance along the exact flow to first order (root rotation via the world angular velocity)
        q2 = q.copy()
        q2[:3] += h * dq[:3]
        from hoilab.geometry import mat_to_expmap
        q2[3:6] = mat_to_expmap(expmap_to_mat(h * dq[3:6]) @ expmap_to_mat(q[3:6]))
        q2[6:] += h * dq[6:]
        dP = (momentum(q2, dq + h * qdd) - momentum(q, dq)) / h
        assert np.linalg.norm(dP) < 1e-4 * (1 + np.linalg.norm(momentum(q, dq)))


def test_forward_and_inverse_dynamics_agree(rng):
    sc = two_finger_box()
    m = sc.hand
    for _ in range(5):
        q = rng.normal(0, 0.3, m.nq)
        dq = rng.normal(0, 1.0, m.nq)
        tau = rng.normal(0, 1.0, m.nq)
        fext = rng.normal(0, 0.5, (m.nb, 6))
        qdd = forward_dynamics(m, q, dq, tau, fext, sc.world.gravity)
        back = inverse_dynamics(m, q, dq, qdd, fext, sc.world.gravity)
        assert np.allclose(back, tau, atol=1e-9)


def test_accelerations_are_twist_differences():
    sc = two_finger_box()
    w = World(sc)
    hs = HandState(sc.grasp.q.copy(), np.zeros(sc.hand.nq))
    os_ = obj_at(sc.grasp.obj_pos)
    for _ in range(3):
        nh, no = w.step_pd(hs, os_, sc.grasp.q)
        dt = sc.world.control_dt
        assert np.array_equal(no.acc, (no.vel - os_.vel) / dt)
        assert np.array_equal(no.angacc, (no.angvel - os_.angvel) / dt)
        hs, os_ = nh, no


def test_replay_is_bit_exact(rng):
    sc = two_finger_box()
    acts = [sc.grasp.q + rng.normal(0, 0.02, sc.hand.nq) for _ in range(20)]
    comps = [rng.normal(0, 0.2, 3) for _ in range(20)]

    def run():
        w = World(sc)
        hs = HandState(sc.grasp.q.copy(), np.zeros(sc.hand.nq))
        os_ = obj_at(sc.grasp.obj_pos)
        out = []
        for a, f in zip(acts, comps):
            hs, os_ = w.step_pd(hs, os_, a, f)
            out.append(np.concatenate([hs.q, hs.dq, os_.pos, os_.quat, os_.vel, os_.angvel]))
        return np.array(out)
    a, b = run(), run()
    assert a.tobytes() == b.tobytes()


def test_contact_reciprocity_and_penalty_law():
    sc = two_finger_box(squeeze=0.002)
    w = World(sc)
    hs = HandState(sc.grasp.q.copy(), np.zeros(sc.hand.nq))
    cs, forces = w.contact_forces(hs, obj_at(sc.grasp.obj_pos))
    assert len(cs) == 2
    # static, no anchors: pure normal springs kn * depth along n
    kn = sc.world.contact_stiffness
    assert np.allclose(forces, kn * cs.depths[:, None] * cs.normals, atol=1e-12)
    # the two fingers push in opposite directions with equal magnitude
    assert np.allclose(forces.sum(axis=0), 0.0, atol=1e-9)


def test_contact_forces_leave_total_momentum_rate_zero():
    # gravity-free pinch: contact forces act on the cube and, reversed, on the fingers
    from hoilab import _kernels_py as K
    sc = two_finger_box(squeeze=0.003)
    hp = sc.hand.packed()
    wp = sc.world.packed()
    wp[0:3] = 0.0
    q = sc.grasp.q.copy()
    dq = np.zeros(sc.hand.nq)
    dq[6:] = [0.4, -0.2]
    o = obj_at(sc.grasp.obj_pos, vel=(0.01, 0.0, 0.02), angvel=(0.0, 0.3, 0.0))
    state = K._Sys(hp, q, dq, o.pos, o.quat, o.vel, o.angvel, sc.obj.inertia,
                   np.zeros((sc.hand.nb, 7)))
    qdd, oacc, _, info = K._accel(hp, sc.obj.code, sc.obj.dims(), sc.obj.mass, sc.obj.inertia,
                                  sc.obj.friction, wp, state, 0, np.zeros(sc.hand.nq),
                                  np.zeros(3), np.zeros(3))
    assert len(info[0]) == 2

    def hand_momentum(q_, dq_):
        R, p = K.fk(hp, q_)
        G, c = K.body_frames(hp, R, p)
        V, _ = K.body_velocities(hp, R, p, dq_)
        return sum(hp.mass[i] * (V[i, 3:] + np.cross(V[i, :3], c[i])) for i in range(sc.hand.nb))

    h = 1e-7
    q2 = q + h * dq
    dP_hand = (hand_momentum(q2, dq + h * qdd) - hand_momentum(q, dq)) / h
    dP_obj = sc.obj.mass * oacc
    assert np.linalg.norm(dP_obj) > 0.1
    assert np.linalg.norm(dP_hand + dP_obj) < 1e-5 * np.linalg.norm(dP_obj)


def test_non_finite_state_faults(tmp_path):
    sc = far_scene()
    w = World(sc)
    hs = hand_far(sc.hand)
    hs.dq[0] = np.nan
    with pytest.raises(SimulationFault) as info:
        w.step(hs, obj_at(), np.zeros(sc.hand.nq))
    info.value.dump(tmp_path / "frame.json")
    assert (tmp_path / "frame.json").read_text().startswith("{")


def test_scene_round_trip(tmp_path):
    sc = two_finger_box()
    sc.save(tmp_path / "s.json")
    back = Scene.load(tmp_path / "s.json")
    assert back.to_dict() == sc.to_dict()
    with pytest.raises(SceneError):
        Scene.from_dict({"format_version": 2, "hand": {}, "object": {}})
