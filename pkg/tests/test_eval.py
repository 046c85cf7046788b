"""Plausibility metrics: Phys. ratio, penetration and smoothness."""
import math

import numpy as np
import pytest

from hoilab.episode.reference import ReferenceFrame, ReferenceSequence
from hoilab.eval import MetricError, evaluate, penetration, phys_ratio, smoothness
from hoilab.sim.model import HandModel, Joint, ObjectModel, Scene, WorldConfig

FPS = 30.0
G = np.array([0.0, 0.0, -9.81])
HALF = 0.05


def sphere_hand(radius=0.01):
    root = Joint("tip", -1, "free", "capsule", (radius, 0.0), 0.05, np.full(6, 10.0),
                 np.full(6, 1.0), np.full(6, 10.0))
    return HandModel([root])


def scene(radius=0.01):
    return Scene(sphere_hand(radius), ObjectModel("box", (HALF,) * 3, 1.0), WorldConfig(gravity=G))


def trajectory(hand_pos, obj_pos, obj_vel=None, fps=FPS):
    n = len(obj_pos)
    obj_vel = np.zeros((n, 3)) if obj_vel is None else obj_vel
    frames = []
    for i in range(n):
        q = np.zeros(6)
        q[:3] = hand_pos[i]
        frames.append(ReferenceFrame(i, q, np.zeros(6), np.asarray(obj_pos[i], float),
                                     np.array([1.0, 0, 0, 0]), np.asarray(obj_vel[i], float),
                                     np.zeros(3)))
    return ReferenceSequence(frames, fps, {}, "trajectory")


def far(n):
    return np.tile([0.0, 0.0, 10.0], (n, 1))


def free_fall(n=30):
    t = np.arange(n) / FPS
    pos = 0.5 * np.outer(t * t, G)
    return trajectory(far(n), pos, np.outer(t, G))


def supported(n=20, radius=0.01, depth=0.0005):
    """Box at rest on a sphere touching the centre of its bottom face."""
    hand = np.tile([0.0, 0.0, -HALF - radius + depth], (n, 1))
    return trajectory(hand, np.zeros((n, 3)))


# ------------------------------------------------------------ Phys. ratio

def test_free_fall_is_plausible():
    ratio, f, tau = phys_ratio(free_fall(), scene())
    assert ratio == 1.0
    assert np.max(f) < 1e-9 and np.max(tau) < 1e-12


def test_hover_is_implausible():
    ratio, f, _ = phys_ratio(trajectory(far(10), np.zeros((10, 3))), scene())
    assert ratio == 0.0
    assert np.allclose(f, 9.81, atol=1e-12)


def test_static_supported_box_is_plausible():
    ratio, f, tau = phys_ratio(supported(), scene())
    assert ratio == 1.0
    assert np.max(f + tau) < 1e-6


def test_ratio_monotone_in_threshold():
    n = 61
    t = np.arange(n) / FPS
    pos = np.zeros((n, 3))
    pos[:, 2] = 0.5 * 9.81 * (-t * t) * 0.5           # falls at half of g
    vel = np.zeros((n, 3))
    vel[:, 2] = -9.81 * t * 0.5
    seq = trajectory(far(n), pos, vel)
    seq.frames[30].obj_vel = seq.frames[30].obj_vel + [0.0, 0.0, 0.3]
    prev = 1.0
    for th in (100.0, 4.9, 4.0, 0.01):
        r = phys_ratio(seq, scene(), th)[0]
        assert r <= prev
        prev = r
    assert phys_ratio(seq, scene(), 100.0)[0] == 1.0 and prev == 0.0


def test_single_frame_is_too_short():
    with pytest.raises(MetricError):
        phys_ratio(trajectory(far(1), np.zeros((1, 3))), scene())


# ------------------------------------------------------------ penetration

def sunk(depth, n=5, radius=0.01):
    hand = np.tile([0.0, 0.0, HALF + radius - depth], (n, 1))
    return trajectory(hand, np.zeros((n, 3)))


def test_separated_is_zero():
    assert penetration(trajectory(far(5), np.zeros((5, 3))), scene()) == (0.0, 0.0)


def test_sphere_sunk_three_millimetres():
    mean, peak = penetration(sunk(0.003), scene())
    assert math.isclose(mean, 0.003, abs_tol=1e-9) and math.isclose(peak, 0.003, abs_tol=1e-9)


def test_doubling_offsets_doubles_depth():
    a = penetration(sunk(0.002), scene())[0]
    b = penetration(sunk(0.004), scene())[0]
    assert abs(b / a - 2.0) < 0.05


# ------------------------------------------------------------ smoothness

def sinusoid(n=61, amp=0.01, f=1.0, axis=0, offset=(0.0, 0.0, 0.0)):
    t = np.arange(n) / FPS
    pos = np.tile(offset, (n, 1)).astype(float)
    pos[:, axis] += amp * np.sin(2 * np.pi * f * t)
    return pos


def test_sinusoid_object_smoothness():
    _, obj = smoothness(trajectory(far(61), sinusoid()), sphere_hand())
    expect = 0.01 * (2 * np.pi) ** 2 * (2 / np.pi) * 100.0
    assert math.isclose(expect, 25.13, abs_tol=0.01)
    assert abs(obj - expect) < 0.02 * expect


def test_sinusoid_hand_smoothness():
    hand, _ = smoothness(trajectory(far(61) + sinusoid(), np.zeros((61, 3))), sphere_hand())
    assert abs(hand - 25.13) < 0.02 * 25.13


def test_constant_velocity_is_zero():
    n = 20
    pos = np.outer(np.arange(n) / FPS, [0.3, -0.2, 0.1])
    hand, obj = smoothness(trajectory(far(n) + pos, pos), sphere_hand())
    assert hand < 1e-9 and obj < 1e-9


def test_offset_invariance():
    a = smoothness(trajectory(far(61), sinusoid()), sphere_hand())
    b = smoothness(trajectory(far(61) + 1.0, sinusoid(offset=(1.0, -2.0, 3.0))), sphere_hand())
    assert np.allclose(a, b, rtol=1e-9)


def test_smoothness_too_short():
    with pytest.raises(MetricError):
        smoothness(trajectory(far(2), np.zeros((2, 3))), sphere_hand())


# ------------------------------------------------------------ report

def test_report_is_deterministic_and_consistent():
    seq = supported(12)
    a = evaluate(seq, scene(), meta={"source": "test"}).to_json()
    b = evaluate(seq, scene(), meta={"source": "test"}).to_json()
    assert a == b
    rep = evaluate(seq, scene())
    rows = rep.frames
    assert rep.aggregates["phys_ratio"] == 100.0 * np.mean([r["plausible"] for r in rows])
    assert math.isclose(rep.aggregates["mean_penetration"], np.mean([r["penetration"] for r in rows]))
    assert rows[0]["obj_acc"] is None and rows[1]["obj_acc"] is not None
    assert rep.to_dict()["format_version"] == 1
