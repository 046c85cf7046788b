"""Policy observation expressed in the current hand-root frame.

Layout for a hand with ``nq`` coordinates and ``N`` future frames::

    q[3:nq]                     root rotation (world exp-map) and hinge angles
    dq (nq)                     root linear / angular velocity in the root frame, hinge rates
    obj_pos (3), obj_quat (4)   object pose relative to the root, quaternion with w >= 0
    obj_vel (3), obj_angvel (3) object twist in the root frame
    N x [ref_q (nq), ref_obj_pos (3), ref_obj_quat (4)]

A reference ``ref_q`` stores the root translation and rotation relative to
the current root, followed by the hinge angles. The root rotation inside
``q`` is the only quantity left in world coordinates. The current root
translation does not appear at all.
"""
from dataclasses import dataclass

import numpy as np

from ..geometry import expmap_to_mat, mat_to_expmap, mat_to_quat, quat_to_mat


@dataclass(frozen=True)
class ObservationLayout:
    nq: int
    n_future: int

    @property
    def size(self):
        return (self.nq - 3) + self.nq + 13 + self.n_future * (self.nq + 7)

    def slices(self):
        nq = self.nq
        out = {}
        k = 0
        for name, n in (("q", nq - 3), ("dq", nq), ("obj_pos", 3), ("obj_quat", 4),
                        ("obj_vel", 3), ("obj_angvel", 3)):
            out[name] = slice(k, k + n)
            k += n
        for i in range(self.n_future):
            for name, n in (("ref_q", nq), ("ref_obj_pos", 3), ("ref_obj_quat", 4)):
                out[f"{name}_{i + 1}"] = slice(k, k + n)
                k += n
        return out


def observation_size(nq, n_future=5):
    return ObservationLayout(nq, n_future).size


def _quat_local(R0, quat):
    q = mat_to_quat(R0.T @ quat_to_mat(quat))
    return q if q[0] >= 0.0 else -q


def pad_window(frames, n_future):
    """First ``n_future`` frames, repeating the last one when fewer remain."""
    frames = list(frames)
    if not frames:
        raise ValueError("build_observation: empty reference window")
    frames = frames[:n_future]
    return frames + [frames[-1]] * (n_future - len(frames))


def build_observation(model, hand_state, obj_state, future, n_future=5):
    """Flat observation vector (see the module docstring for the layout).

    ``future`` holds the reference frames ``t+1, t+2, ...``; objects with
    ``q``, ``obj_pos`` and ``obj_quat`` attributes. A short window is padded
    by repeating its final frame.
    """
    q = np.asarray(hand_state.q, dtype=float)
    dq = np.asarray(hand_state.dq, dtype=float)
    if q.shape != (model.nq,) or dq.shape != (model.nq,):
        raise ValueError(f"build_observation: hand state must have {model.nq} coordinates")
    frames = pad_window(future, n_future)
    p0 = q[0:3]
    R0 = expmap_to_mat(q[3:6])
    RT = R0.T
    parts = [q[3:], RT @ dq[0:3], RT @ dq[3:6], dq[6:],
             RT @ (obj_state.pos - p0), _quat_local(R0, obj_state.quat),
             RT @ obj_state.vel, RT @ obj_state.angvel]
    for f in frames:
        fq = np.asarray(f.q, dtype=float)
        parts += [RT @ (fq[0:3] - p0), mat_to_expmap(RT @ expmap_to_mat(fq[3:6])), fq[6:],
                  RT @ (np.asarray(f.obj_pos, float) - p0), _quat_local(R0, f.obj_quat)]
    return np.concatenate(parts)
