"""Physical-plausibility metrics over simulated or reconstructed trajectories.

A trajectory is a :class:`~hoilab.episode.reference.ReferenceSequence`
(hand coordinates plus object pose and twist per frame at a fixed rate).
Accelerations are central differences of the stored velocities (metrics)
or second differences of positions (smoothness), one-sided at the ends
where a metric needs every frame.
"""
from dataclasses import dataclass, field
import json

import numpy as np

from ..contact.surface import audit
from ..sim.collision import detect_contacts, sdf
from ..sim.kinematics import forward_kinematics
from ..sim.model import HandState, ObjectState

REPORT_FORMAT_VERSION = 1
DEFAULT_THRESHOLD = 0.01


class MetricError(ValueError):
    pass


def _central(v, dt):
    v = np.asarray(v, float)
    out = np.zeros_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2.0 * dt)
    out[0] = (v[1] - v[0]) / dt
    out[-1] = (v[-1] - v[-2]) / dt
    return out


def _states(seq, i, acc=None, angacc=None):
    f = seq[i]
    hs = HandState(np.asarray(f.q, float), np.asarray(f.dq, float))
    os_ = ObjectState(f.obj_pos, f.obj_quat, f.obj_vel, f.obj_angvel,
                      np.zeros(3) if acc is None else acc[i],
                      np.zeros(3) if angacc is None else angacc[i])
    return hs, os_


def object_accelerations(seq):
    """Linear and angular object accelerations by central differences of the velocities."""
    if len(seq) < 2:
        raise MetricError("trajectory too short: accelerations need at least 2 frames")
    dt = 1.0 / seq.fps
    vel = np.array([f.obj_vel for f in seq.frames])
    ang = np.array([f.obj_angvel for f in seq.frames])
    return _central(vel, dt), _central(ang, dt)


def phys_ratio(seq, scene, threshold=DEFAULT_THRESHOLD):
    """Fraction of frames whose audited ``|f_res| + |tau_res|`` is below ``threshold``.

    Returns ``(ratio, f_res, tau_res)`` with per-frame residual norms.
    """
    acc, angacc = object_accelerations(seq)
    f_res = np.zeros(len(seq))
    tau_res = np.zeros(len(seq))
    for i in range(len(seq)):
        hs, os_ = _states(seq, i, acc, angacc)
        sol = audit(detect_contacts(scene.hand, hs, scene.obj, os_), scene.obj, os_,
                    scene.world.gravity)
        f_res[i] = np.linalg.norm(sol.f_res)
        tau_res[i] = np.linalg.norm(sol.tau_res)
    plausible = (f_res + tau_res) < threshold
    return float(np.mean(plausible)), f_res, tau_res


def frame_penetration(seq, scene):
    """Deepest penetration per frame: ``max(0, -sdf)`` over the contact points."""
    out = np.zeros(len(seq))
    for i in range(len(seq)):
        hs, os_ = _states(seq, i)
        cs = detect_contacts(scene.hand, hs, scene.obj, os_)
        for p in cs.points:
            out[i] = max(out[i], -sdf(scene.obj, p, os_.pos, os_.quat))
    return out


def penetration(seq, scene):
    """``(mean, max)`` per-frame penetration depth in metres."""
    d = frame_penetration(seq, scene)
    return float(d.mean()), float(d.max())


def _second_difference(x, dt):
    return (x[2:] - 2.0 * x[1:-1] + x[:-2]) / (dt * dt)


def keypoint_track(seq, model):
    """``(frames, keypoints, 3)`` hand joint and fingertip positions."""
    return np.array([forward_kinematics(model, np.asarray(f.q, float)).keypoints
                     for f in seq.frames])


def smoothness(seq, model):
    """Mean acceleration magnitude of hand keypoints and object COM, in cm/s^2.

    Second central differences over interior frames; the hand value averages
    jointly over every keypoint-frame sample. Returns ``(hand, object)``.
    """
    if len(seq) < 3:
        raise MetricError("trajectory too short: smoothness needs at least 3 frames")
    dt = 1.0 / seq.fps
    kp = keypoint_track(seq, model)
    obj = np.array([f.obj_pos for f in seq.frames])
    hand_acc = np.linalg.norm(_second_difference(kp, dt), axis=-1)
    obj_acc = np.linalg.norm(_second_difference(obj, dt), axis=-1)
    return float(100.0 * hand_acc.mean()), float(100.0 * obj_acc.mean())


@dataclass
class MetricReport:
    frames: list
    aggregates: dict
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {"format_version": REPORT_FORMAT_VERSION, "meta": self.meta,
                "aggregates": self.aggregates, "frames": self.frames}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, allow_nan=False)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")


def evaluate(seq, scene, threshold=DEFAULT_THRESHOLD, meta=None):
    """Every metric for one trajectory as a :class:`MetricReport`.

    Per-frame rows carry the plausibility flag, residual norms, penetration,
    keypoint acceleration magnitudes (m/s^2) and object COM acceleration
    (m/s^2); endpoint frames have no second difference and report ``None``.
    """
    n = len(seq)
    if n < 3:
        raise MetricError("trajectory too short: evaluation needs at least 3 frames")
    ratio, f_res, tau_res = phys_ratio(seq, scene, threshold)
    pen = frame_penetration(seq, scene)
    hand_s, obj_s = smoothness(seq, scene.hand)
    dt = 1.0 / seq.fps
    kp_acc = np.linalg.norm(_second_difference(keypoint_track(seq, scene.hand), dt), axis=-1)
    obj_acc = np.linalg.norm(_second_difference(np.array([f.obj_pos for f in seq.frames]), dt),
                             axis=-1)
    rows = []
    for i in range(n):
        inner = 0 < i < n - 1
        rows.append({
            "t": int(seq[i].t),
            "plausible": bool(f_res[i] + tau_res[i] < threshold),
            "f_res": float(f_res[i]), "tau_res": float(tau_res[i]),
            "penetration": float(pen[i]),
            "hand_acc": kp_acc[i - 1].tolist() if inner else None,
            "obj_acc": float(obj_acc[i - 1]) if inner else None,
        })
    agg = {"frames": n, "threshold": float(threshold), "phys_ratio": 100.0 * ratio,
           "mean_penetration": float(pen.mean()), "max_penetration": float(pen.max()),
           "hand_smoothness": hand_s, "object_smoothness": obj_s,
           "mean_f_res": float(f_res.mean()), "mean_tau_res": float(tau_res.mean())}
    return MetricReport(rows, agg, dict(meta or {}))
