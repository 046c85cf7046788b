"""Imitation and physics rewards.

Every sub-reward has the form ``exp(-k * error)`` and lies in ``(0, 1]``.
The hand and object rewards are weighted sums of their parts, and the
per-step reward is the product ``r_hand * r_object * r_phys``.
"""
from dataclasses import dataclass, fields, asdict

import numpy as np

from ..geometry import rotation_angle, quat_angle
from ..sim.kinematics import forward_kinematics


@dataclass
class RewardConfig:
    w_pose: float = 0.25
    w_joint: float = 0.45
    w_orient: float = 0.2
    w_vel: float = 0.1
    k_pose: float = 6.0
    k_joint: float = 12.0
    k_orient: float = 3.0
    k_vel: float = 0.05
    w_opose: float = 0.9
    w_ovel: float = 0.1
    k_otrans: float = 1.0
    k_ovel: float = 0.05
    w_torque: float = 100.0
    k_phys: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and np.isfinite(v) and v > 0):
                raise ValueError(f"RewardConfig.{f.name} must be a positive number, got {v!r}")
            setattr(self, f.name, float(v))
        hand = self.w_pose + self.w_joint + self.w_orient + self.w_vel
        if abs(hand - 1.0) > 1e-9:
            raise ValueError(f"hand reward weights must sum to 1 (got {hand})")
        obj = self.w_opose + self.w_ovel
        if abs(obj - 1.0) > 1e-9:
            raise ValueError(f"object reward weights must sum to 1 (got {obj})")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def errors_for(cls, d):
        """Every problem with a partial override dictionary ``d``."""
        out = [f"unknown reward key {k!r}" for k in sorted(set(d) - {f.name for f in fields(cls)})]
        merged = asdict(cls())
        for k, v in d.items():
            if k not in merged:
                continue
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v) \
                    or v <= 0:
                out.append(f"reward.{k} must be a positive number, got {v!r}")
            else:
                merged[k] = float(v)
        hand = merged["w_pose"] + merged["w_joint"] + merged["w_orient"] + merged["w_vel"]
        if abs(hand - 1.0) > 1e-9:
            out.append(f"hand reward weights must sum to 1 (got {hand})")
        if abs(merged["w_opose"] + merged["w_ovel"] - 1.0) > 1e-9:
            out.append(f"object reward weights must sum to 1 (got {merged['w_opose'] + merged['w_ovel']})")
        return out

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown reward keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class RewardBreakdown:
    r_pose: float
    r_joint: float
    r_orient: float
    r_vel: float
    r_hand: float
    r_opose: float
    r_ovel: float
    r_object: float
    r_phys: float
    r_total: float

    def to_dict(self):
        return asdict(self)


def rotation_distance(Ra, Rb):
    """Geodesic angle of ``Ra^T Rb`` in ``[0, pi]``."""
    return rotation_angle(np.asarray(Ra).T @ np.asarray(Rb))


def hand_reward(model, hand_state, ref_frame, config, fk_sim=None, fk_ref=None):
    """``(r_pose, r_joint, r_orient, r_vel, r_hand)``.

    Joint positions are the joint origins plus fingertips; orientations are
    the joint frames, one per bone. ``fk_sim`` / ``fk_ref`` may be passed to
    reuse kinematics already computed.
    """
    q = np.asarray(hand_state.q, float)
    qr = np.asarray(ref_frame.q, float)
    fk_sim = fk_sim or forward_kinematics(model, q)
    fk_ref = fk_ref or forward_kinematics(model, qr)
    e_pose = np.linalg.norm(q - qr)
    e_joint = np.linalg.norm(fk_sim.keypoints - fk_ref.keypoints)
    e_orient = sum(rotation_distance(a, b) for a, b in zip(fk_sim.rotations, fk_ref.rotations))
    e_vel = np.linalg.norm(np.asarray(hand_state.dq, float) - np.asarray(ref_frame.dq, float))
    c = config
    r_pose = float(np.exp(-c.k_pose * e_pose))
    r_joint = float(np.exp(-c.k_joint * e_joint))
    r_orient = float(np.exp(-c.k_orient * e_orient))
    r_vel = float(np.exp(-c.k_vel * e_vel))
    r_hand = c.w_pose * r_pose + c.w_joint * r_joint + c.w_orient * r_orient + c.w_vel * r_vel
    return r_pose, r_joint, r_orient, r_vel, r_hand


def object_reward(obj_state, ref_frame, config):
    """``(r_opose, r_ovel, r_object)``.

    The pose error is ``k_otrans * |dp| + angle`` (metres plus radians),
    and the velocity error is the norm of the stacked twist difference.
    """
    e_trans = np.linalg.norm(obj_state.pos - np.asarray(ref_frame.obj_pos, float))
    e_rot = quat_angle(obj_state.quat, ref_frame.obj_quat)
    dv = np.concatenate([obj_state.vel - np.asarray(ref_frame.obj_vel, float),
                         obj_state.angvel - np.asarray(ref_frame.obj_angvel, float)])
    r_opose = float(np.exp(-(config.k_otrans * e_trans + e_rot)))
    r_ovel = float(np.exp(-config.k_ovel * np.linalg.norm(dv)))
    return r_opose, r_ovel, config.w_opose * r_opose + config.w_ovel * r_ovel


def total_reward(hand, obj, phys):
    """Combine ``hand_reward`` and ``object_reward`` tuples with ``r_phys``."""
    r_pose, r_joint, r_orient, r_vel, r_hand = hand
    r_opose, r_ovel, r_object = obj
    return RewardBreakdown(r_pose, r_joint, r_orient, r_vel, r_hand, r_opose, r_ovel,
                           r_object, float(phys), r_hand * r_object * float(phys))


def compute_reward(model, hand_state, obj_state, ref_frame, config, r_phys=1.0):
    return total_reward(hand_reward(model, hand_state, ref_frame, config),
                        object_reward(obj_state, ref_frame, config), r_phys)
