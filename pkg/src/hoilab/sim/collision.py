import numpy as np

from .. import _backend
from ..contact.surface import ContactSet
from ..geometry import quat_to_mat


def sdf(obj_model, point, pos=None, quat=None):
    """Exact signed distance from ``point`` to the object surface.

    Negative inside. Without a pose the point is taken in the object frame.
    """
    x = np.asarray(point, dtype=float)
    if pos is not None:
        R = quat_to_mat(quat) if quat is not None else np.eye(3)
        x = R.T @ (x - np.asarray(pos, float))
    d, _ = _backend.kernels.sdf_local(obj_model.code, obj_model.dims(), x)
    return float(d)


def detect_contacts(hand_model, hand_state, obj_model, obj_state):
    """One deepest-point contact per overlapping hand body.

    Capsules are tested along their core segment (the object distance is
    convex along it; flat stretches resolve to their midpoint). Box bodies
    use a 27-point stencil plus the object center clipped into the box.
    """
    out = _backend.kernels.collide(hand_model.packed(), obj_model.code, obj_model.dims(),
                                   np.asarray(hand_state.q, float), np.asarray(hand_state.dq, float),
                                   obj_state.pos, obj_state.quat, obj_state.vel, obj_state.angvel)
    body, pts, nrm, dep, vrel = (np.asarray(a) for a in out)
    if len(body) == 0:
        return ContactSet.empty()
    h = hand_model.packed()
    R, p = _backend.kernels.fk(h, np.asarray(hand_state.q, float))
    V, _ = _backend.kernels.body_velocities(h, np.asarray(R), np.asarray(p),
                                            np.asarray(hand_state.dq, float))
    rel_w = obj_state.angvel[None, :] - np.asarray(V)[body, :3]
    return ContactSet(pts, nrm, dep, vrel, body.astype(np.int32), rel_w)
