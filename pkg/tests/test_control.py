"""PD control, action mapping, observations and rewards."""
import math
from dataclasses import asdict

import numpy as np
import pytest

from hoilab.control import (ActionMap, RewardConfig, build_observation, compute_reward,
                            hand_reward, object_reward, observation_size, pd_torques,
                            rotation_distance, total_reward, ObservationLayout)
from hoilab.episode.reference import ReferenceFrame
from hoilab.geometry import expmap_to_mat, mat_to_expmap, mat_to_quat, quat_to_mat
from hoilab.sim.model import HandModel, HandState, Joint, ObjectModel, ObjectState

from conftest import chain_hand, obj_at
from oracles import random_rotation

TABLE = {"w_pose": 0.25, "w_joint": 0.45, "w_orient": 0.2, "w_vel": 0.1, "w_opose": 0.9,
         "w_ovel": 0.1, "w_torque": 100.0, "k_pose": 6.0, "k_joint": 12.0, "k_orient": 3.0,
         "k_vel": 0.05, "k_otrans": 1.0, "k_ovel": 0.05, "k_phys": 1.0}


def frame(q, obj=None, dq=None):
    obj = obj or obj_at()
    q = np.asarray(q, float)
    return ReferenceFrame(0, q, np.zeros_like(q) if dq is None else np.asarray(dq, float),
                          obj.pos.copy(), obj.quat.copy(), obj.vel.copy(), obj.angvel.copy())


def one_hinge(kp=10.0, kd=2.0, limit=np.inf):
    root = Joint("root", -1, "free", "box", (0.02, 0.02, 0.02), 0.5, np.full(6, kp),
                 np.full(6, kd), np.full(6, limit))
    hinge = Joint("h", 0, "hinge", "capsule", (0.01, 0.03), 0.1, np.array([kp]), np.array([kd]),
                  np.array([limit]), pos=np.array([0.05, 0, 0]), limits=(-1.0, 1.0))
    return HandModel([root, hinge])


# ------------------------------------------------------------ PD

def test_pd_fixed_point():
    m = chain_hand()
    q = np.linspace(-0.3, 0.3, 7)
    assert np.array_equal(pd_torques(m, q, np.zeros(7), q), np.zeros(7))


def test_pd_substitution():
    m = one_hinge()
    q = np.zeros(7)
    tgt = q.copy()
    tgt[6] = 0.5
    dq = np.zeros(7)
    dq[6] = 1.0
    assert pd_torques(m, q, dq, tgt)[6] == 3.0


def test_pd_linear_before_clamp(rng):
    m = chain_hand()
    q, dq, tgt = rng.normal(size=(3, 7))
    a = pd_torques(m, q, dq, tgt, clamp=False)
    b = pd_torques(m, q, -dq, q - (tgt - q), clamp=False)
    assert np.allclose(a, -b, atol=1e-12)
    c = pd_torques(m, q, 2 * dq, q + 2 * (tgt - q), clamp=False)
    assert np.allclose(c, 2 * a, atol=1e-12)


def test_pd_clamps_to_limits():
    m = one_hinge(limit=1.0)
    tau = pd_torques(m, np.zeros(7), np.zeros(7), np.full(7, 5.0))
    assert np.array_equal(tau, np.ones(7))


def test_pd_dimension_mismatch():
    with pytest.raises(ValueError):
        pd_torques(chain_hand(), np.zeros(6), np.zeros(7), np.zeros(7))


# ------------------------------------------------------------ action mapping

def test_action_scaling_and_clip():
    m = chain_hand()
    am = ActionMap(m, force_scale=2.0, torque_scale=0.1)
    assert am.size == 13
    raw = np.zeros(13)
    raw[0] = 3.0          # 3 units of 0.005 m
    raw[6] = 50.0         # clipped at 0.5 rad
    raw[7] = 4.0          # 8 N
    raw[10] = -100.0      # clipped at -2 N m
    act = am(raw, np.zeros(7))
    assert math.isclose(act.q_target[0], 0.015)
    assert act.q_target[6] == 0.5
    assert np.allclose(act.f_comp, [8.0, 0, 0]) and np.allclose(act.tau_comp, [-2.0, 0, 0])


def test_action_offsets_next_reference_and_respects_hinge_limits():
    m = one_hinge()
    am = ActionMap(m)
    ref = np.zeros(7)
    ref[6] = 0.9
    act = am(np.full(13, 10.0), ref)
    assert act.q_target[6] == 1.0                 # hinge limit
    assert np.allclose(act.q_target[:3], 0.05)    # translation bound


def test_action_for_object_scales():
    obj = ObjectModel("box", (0.025, 0.025, 0.025), 0.1)
    am = ActionMap.for_object(chain_hand(), obj, [0, 0, -9.81])
    assert math.isclose(am.force_scale, 0.981)
    assert math.isclose(am.torque_scale, 0.981 * 0.025)


def test_action_without_compensation():
    am = ActionMap(chain_hand(), compensation=False)
    assert am.size == 7
    act = am(np.ones(7), np.zeros(7))
    assert np.array_equal(act.f_comp, np.zeros(3)) and np.array_equal(act.tau_comp, np.zeros(3))
    with pytest.raises(ValueError):
        am(np.ones(13), np.zeros(7))


# ------------------------------------------------------------ observation

def test_observation_size_layout():
    lay = ObservationLayout(7, 5)
    assert observation_size(7, 5) == lay.size == 4 + 7 + 13 + 5 * 14
    sl = lay.slices()
    assert sl["ref_obj_quat_5"].stop == lay.size


def test_observation_identity_root_is_concatenation(rng):
    m = chain_hand()
    q = rng.normal(size=7)
    q[3:6] = 0.0
    dq = rng.normal(size=7)
    ob = obj_at(rng.normal(size=3), [1, 0, 0, 0], rng.normal(size=3), rng.normal(size=3))
    refq = rng.normal(size=7)
    refq[3:6] = 0.0
    ref = frame(refq, obj_at([0.1, 0.2, 0.3]))
    o = build_observation(m, HandState(q, dq), ob, [ref], 1)
    want = np.concatenate([q[3:], dq, ob.pos - q[:3], ob.quat, ob.vel, ob.angvel,
                           refq[:3] - q[:3], refq[3:], ref.obj_pos - q[:3], ref.obj_quat])
    assert np.allclose(o, want, atol=1e-14)


def _scene_obs(m, q, dq, ob, refs, shift=np.zeros(3), R=np.eye(3)):
    """Observation after moving the world rigidly by ``R`` then ``shift``."""
    q = q.copy()
    q[:3] = R @ q[:3] + shift
    q[3:6] = mat_to_expmap(R @ expmap_to_mat(q[3:6]))
    dq = dq.copy()
    dq[:3] = R @ dq[:3]
    dq[3:6] = R @ dq[3:6]
    o = ObjectState(R @ ob.pos + shift, mat_to_quat(R @ quat_to_mat(ob.quat)), R @ ob.vel,
                    R @ ob.angvel)
    moved = []
    for f in refs:
        fq = f.q.copy()
        fq[:3] = R @ fq[:3] + shift
        fq[3:6] = mat_to_expmap(R @ expmap_to_mat(fq[3:6]))
        moved.append(frame(fq, ObjectState(R @ f.obj_pos + shift,
                                           mat_to_quat(R @ quat_to_mat(f.obj_quat)),
                                           np.zeros(3), np.zeros(3))))
    return build_observation(m, HandState(q, dq), o, moved, 3)


def _random_setup(rng):
    m = chain_hand()
    q = rng.normal(size=7) * 0.5
    dq = rng.normal(size=7)
    ob = obj_at(rng.normal(size=3), mat_to_quat(random_rotation(rng)), rng.normal(size=3),
                rng.normal(size=3))
    refs = [frame(rng.normal(size=7) * 0.5, obj_at(rng.normal(size=3),
                                                   mat_to_quat(random_rotation(rng))))
            for _ in range(3)]
    return m, q, dq, ob, refs


def test_observation_translation_invariant(rng):
    m, q, dq, ob, refs = _random_setup(rng)
    a = _scene_obs(m, q, dq, ob, refs)
    b = _scene_obs(m, q, dq, ob, refs, shift=np.array([3.0, -2.0, 1.0]))
    assert np.allclose(a, b, atol=1e-12)


def test_observation_rotation_moves_only_world_root_rotation(rng):
    m, q, dq, ob, refs = _random_setup(rng)
    a = _scene_obs(m, q, dq, ob, refs)
    b = _scene_obs(m, q, dq, ob, refs, R=random_rotation(rng))
    assert np.allclose(a[3:], b[3:], atol=1e-9)


def test_observation_pads_short_window(rng):
    m, q, dq, ob, refs = _random_setup(rng)
    st = HandState(q, dq)
    padded = build_observation(m, st, ob, refs + [refs[-1]] * 2, 5)
    assert np.array_equal(build_observation(m, st, ob, refs, 5), padded)


def test_observation_empty_window():
    with pytest.raises(ValueError):
        build_observation(chain_hand(), HandState(np.zeros(7), np.zeros(7)), obj_at(), [], 5)


# ------------------------------------------------------------ rewards

def test_golden_reward_config():
    assert asdict(RewardConfig()) == TABLE


@pytest.mark.parametrize("bad", [{"w_pose": 0.3}, {"k_vel": 0.0}, {"w_ovel": -0.1},
                                 {"k_phys": float("nan")}])
def test_reward_config_rejects(bad):
    with pytest.raises(ValueError):
        RewardConfig(**{**TABLE, **bad})


def test_reward_config_errors_are_exhaustive():
    errs = RewardConfig.errors_for({"w_pose": 0.5, "k_joint": -1, "w_opose": 0.5, "bogus": 1})
    text = "\n".join(errs)
    assert "bogus" in text and "k_joint" in text
    assert "hand reward weights" in text and "object reward weights" in text
    assert RewardConfig.errors_for({}) == []


def test_rotation_distance():
    R = random_rotation(np.random.default_rng(3))
    assert rotation_distance(R, R) < 1e-7
    Rz = expmap_to_mat([0, 0, math.pi / 2])
    assert math.isclose(rotation_distance(np.eye(3), Rz), math.pi / 2, rel_tol=1e-12)
    S = random_rotation(np.random.default_rng(4))
    assert math.isclose(rotation_distance(R, S), rotation_distance(S, R), rel_tol=1e-12)
    assert 0.0 <= rotation_distance(R, S) <= math.pi


def test_perfect_match_is_one():
    m = chain_hand()
    q = np.linspace(0, 0.3, 7)
    ob = obj_at([0.1, 0, 0])
    rb = compute_reward(m, HandState(q, np.zeros(7)), ob, frame(q, ob), RewardConfig())
    assert np.allclose(list(rb.to_dict().values()), 1.0, rtol=0, atol=1e-7)


def test_pose_reward_substitution():
    m = chain_hand()
    q = np.zeros(7)
    qr = q.copy()
    qr[6] = 0.1
    r = hand_reward(m, HandState(q, np.zeros(7)), frame(qr), RewardConfig())
    assert math.isclose(r[0], math.exp(-0.6), rel_tol=1e-12)
    assert math.isclose(r[0], 0.5488, abs_tol=1e-4)


def test_object_reward_substitution():
    r = object_reward(obj_at([0.5, 0, 0]), frame(np.zeros(7)), RewardConfig())
    assert math.isclose(r[0], math.exp(-0.5), rel_tol=1e-12)
    assert r[1] == 1.0
    assert math.isclose(r[2], 0.9 * math.exp(-0.5) + 0.1)


def test_total_is_product():
    rb = total_reward((1, 1, 1, 1, 0.9), (1, 1, 0.8), 1.0)
    assert math.isclose(rb.r_total, 0.72)
    rb = total_reward((1, 1, 1, 1, 0.7), (1, 1, 0.6), 0.5)
    assert rb.r_total <= min(0.7, 0.6, 0.5)


def test_rewards_bounded_and_decreasing(rng):
    m = chain_hand()
    cfg = RewardConfig()
    ref = frame(np.zeros(7), obj_at())
    prev = None
    for s in np.linspace(0.0, 0.5, 6):
        q = np.full(7, s)
        ob = obj_at([s, 0, 0], vel=[s, 0, 0])
        rb = compute_reward(m, HandState(q, np.full(7, s)), ob, ref, cfg)
        vals = np.array([rb.r_pose, rb.r_joint, rb.r_orient, rb.r_vel, rb.r_opose, rb.r_ovel])
        assert np.all(vals > 0) and np.all(vals <= 1)
        if prev is not None:
            assert np.all(vals < prev)
        prev = vals


def test_reward_translation_invariant(rng):
    m = chain_hand()
    cfg = RewardConfig()
    q = rng.normal(size=7) * 0.3
    qr = rng.normal(size=7) * 0.3
    ob = obj_at(rng.normal(size=3), mat_to_quat(random_rotation(rng)), rng.normal(size=3))
    ref_ob = obj_at(rng.normal(size=3), mat_to_quat(random_rotation(rng)))
    a = compute_reward(m, HandState(q, np.zeros(7)), ob, frame(qr, ref_ob), cfg)
    d = np.array([1.0, -2.0, 0.5])
    q2, qr2 = q.copy(), qr.copy()
    q2[:3] += d
    qr2[:3] += d
    ob2 = obj_at(ob.pos + d, ob.quat, ob.vel)
    ref2 = obj_at(ref_ob.pos + d, ref_ob.quat)
    b = compute_reward(m, HandState(q2, np.zeros(7)), ob2, frame(qr2, ref2), cfg)
    assert np.allclose(list(a.to_dict().values()), list(b.to_dict().values()), atol=1e-12)
