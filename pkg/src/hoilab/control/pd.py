"""PD torques and the mapping from raw policy outputs to bounded actions."""
from dataclasses import dataclass

import numpy as np


def pd_torques(model, q, dq, q_target, clamp=True):
    """``kp * (q_target - q) - kd * dq``, elementwise, then clipped to the torque limits."""
    q = np.asarray(q, dtype=float)
    dq = np.asarray(dq, dtype=float)
    q_target = np.asarray(q_target, dtype=float)
    for name, v in (("q", q), ("dq", dq), ("q_target", q_target)):
        if v.shape != (model.nq,):
            raise ValueError(f"pd_torques: {name} has shape {v.shape}, expected ({model.nq},)")
    tau = model.kp * (q_target - q) - model.kd * dq
    if clamp:
        tau = np.clip(tau, -model.torque_limit, model.torque_limit)
    return tau


@dataclass
class Action:
    q_target: np.ndarray
    f_comp: np.ndarray
    tau_comp: np.ndarray


class ActionMap:
    """Turns a raw policy vector into a PD target and a compensation wrench.

    Raw layout: ``nq`` pose entries, then 3 force and 3 torque entries (the
    wrench part is absent when compensation is disabled). Each entry is
    multiplied by its per-unit scale and then clamped: pose entries become
    an offset on the next reference pose, bounded by ``trans_bound`` metres
    (root translation) or ``rot_bound`` radians (everything else); wrench
    entries become newtons and newton-metres bounded by ``force_bound`` and
    ``torque_bound``.

    The scales set how far the fixed exploration noise of the policy moves
    the system. By default one raw unit is a tenth of the pose bound, the
    object's weight for the force and weight times ``length`` for the torque.
    """

    def __init__(self, model, compensation=True, rot_bound=0.5, trans_bound=0.05,
                 force_bound=20.0, torque_bound=2.0, pose_unit=0.1, force_scale=1.0,
                 torque_scale=0.025):
        self.model = model
        self.compensation = compensation
        self.bound = np.full(model.nq, float(rot_bound))
        self.bound[0:3] = trans_bound
        self.scale = pose_unit * self.bound
        self.force_bound = float(force_bound)
        self.torque_bound = float(torque_bound)
        self.force_scale = float(force_scale)
        self.torque_scale = float(torque_scale)

    @classmethod
    def for_object(cls, model, obj, gravity, compensation=True, length=None, **kw):
        """Wrench scales from the object's weight and half-extent."""
        weight = obj.mass * float(np.linalg.norm(gravity))
        if length is None:
            length = obj.half_extent()
        return cls(model, compensation, force_scale=weight, torque_scale=weight * length, **kw)

    @property
    def size(self):
        return self.model.nq + (6 if self.compensation else 0)

    def __call__(self, raw, q_ref_next):
        raw = np.asarray(raw, dtype=float)
        if raw.shape != (self.size,):
            raise ValueError(f"action has shape {raw.shape}, expected ({self.size},)")
        nq = self.model.nq
        offset = np.clip(self.scale * raw[:nq], -self.bound, self.bound)
        q_target = self.model.clamp_targets(np.asarray(q_ref_next, float) + offset)
        if self.compensation:
            f = np.clip(self.force_scale * raw[nq:nq + 3], -self.force_bound, self.force_bound)
            t = np.clip(self.torque_scale * raw[nq + 3:nq + 6], -self.torque_bound,
                        self.torque_bound)
        else:
            f = np.zeros(3)
            t = np.zeros(3)
        return Action(q_target, f, t)
