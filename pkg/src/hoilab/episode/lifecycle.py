"""Episode start (random reference frame) and early termination."""
from dataclasses import dataclass, field, asdict, fields

import numpy as np

from ..geometry import quat_angle
from ..sim.model import HandState, ObjectState
from ..sim.kinematics import forward_kinematics

CONTINUE = "continue"
EARLY_STOP = "early_stop"
SEQUENCE_END = "sequence_end"


@dataclass
class Thresholds:
    """Early-stop limits: mean keypoint error (m), object position (m), object rotation (rad)."""
    joint_error: float = 0.10
    obj_pos_error: float = 0.10
    obj_rot_error: float = 1.0

    def errors(self):
        return [f"{f.name} must be positive, got {getattr(self, f.name)}"
                for f in fields(self) if not getattr(self, f.name) > 0]

    def to_dict(self):
        return asdict(self)


@dataclass
class EpisodeSpec:
    ref_index: int
    start: int
    max_len: int = 300
    thresholds: Thresholds = field(default_factory=Thresholds)

    def __post_init__(self):
        errs = self.thresholds.errors()
        if errs:
            raise ValueError("; ".join(errs))
        if self.max_len < 1:
            raise ValueError("max_len must be at least 1")


def initial_state(frame):
    """Simulator state equal to a reference frame (pose and velocity)."""
    return (HandState(np.array(frame.q, float), np.array(frame.dq, float)),
            ObjectState(np.array(frame.obj_pos, float), np.array(frame.obj_quat, float),
                        np.array(frame.obj_vel, float), np.array(frame.obj_angvel, float)))


def start_episode(dataset, rng, max_len=300, thresholds=None):
    """Draw ``(sequence, start frame)`` uniformly over all valid pairs.

    Every frame but the last is a valid start (a one-frame sequence starts
    at 0). Returns ``(spec, hand_state, obj_state)``.
    """
    if not dataset:
        raise ValueError("start_episode: empty dataset")
    counts = np.array([max(len(s) - 1, 1) for s in dataset])
    k = int(rng.integers(int(counts.sum())))
    idx = int(np.searchsorted(np.cumsum(counts), k, side="right"))
    start = k - int(counts[:idx].sum())
    spec = EpisodeSpec(idx, start, max_len, thresholds or Thresholds())
    hs, os_ = initial_state(dataset[idx][start])
    return spec, hs, os_


def tracking_errors(model, hand_state, obj_state, frame, fk_sim=None, fk_ref=None):
    """``(mean keypoint error, object position error, object rotation error)``."""
    fk_sim = fk_sim or forward_kinematics(model, np.asarray(hand_state.q, float))
    fk_ref = fk_ref or forward_kinematics(model, np.asarray(frame.q, float))
    e_joint = float(np.mean(np.linalg.norm(fk_sim.keypoints - fk_ref.keypoints, axis=1)))
    e_pos = float(np.linalg.norm(obj_state.pos - np.asarray(frame.obj_pos, float)))
    e_rot = quat_angle(obj_state.quat, frame.obj_quat)
    return e_joint, e_pos, e_rot


def check_termination(model, hand_state, obj_state, sequence, index, spec, steps=None,
                      fk_sim=None, fk_ref=None):
    """Compare the state against ``sequence[index]``.

    Early stop wins over the end of the sequence; ``steps`` (control steps
    taken) also ends the episode at ``spec.max_len``.
    """
    e_joint, e_pos, e_rot = tracking_errors(model, hand_state, obj_state, sequence[index],
                                            fk_sim, fk_ref)
    th = spec.thresholds
    if e_joint > th.joint_error or e_pos > th.obj_pos_error or e_rot > th.obj_rot_error:
        return EARLY_STOP
    if index >= len(sequence) - 1 or (steps is not None and steps >= spec.max_len):
        return SEQUENCE_END
    return CONTINUE
