from dataclasses import dataclass

import numpy as np

from .. import _backend
from .model import CAPSULE


@dataclass
class FKResult:
    """World poses produced by :func:`forward_kinematics`.

    ``rotations[i]`` / ``joint_positions[i]`` give the frame of joint ``i``
    (the bone orientation used by the orientation reward). ``centers`` and
    ``body_rotations`` locate each body's collision primitive, whose center
    is also its center of mass. ``tips`` holds the distal capsule end of
    every leaf body.
    """
    rotations: np.ndarray
    joint_positions: np.ndarray
    centers: np.ndarray
    body_rotations: np.ndarray
    tips: np.ndarray

    @property
    def keypoints(self):
        """Joint positions followed by fingertips."""
        return np.vstack([self.joint_positions, self.tips])


def forward_kinematics(model, q):
    q = np.asarray(q, dtype=float)
    if q.shape != (model.nq,):
        raise ValueError(f"forward_kinematics: expected q of length {model.nq}, got {q.shape}")
    h = model.packed()
    R, p = _backend.kernels.fk(h, q)
    R, p = np.asarray(R), np.asarray(p)
    G = np.einsum("bij,bjk->bik", R, h.grot)
    c = p + np.einsum("bij,bj->bi", R, h.gpos)
    tips = []
    for i in model.leaf_bodies():
        if h.gtype[i] == CAPSULE:
            tips.append(c[i] + G[i][:, 2] * h.gdim[i, 1])
        else:
            tips.append(c[i])
    return FKResult(R, p, c, G, np.array(tips).reshape(-1, 3))
