import json

import numpy as np

from .. import _backend, _kernels_py
from ..geometry import cross3
from .model import HandState, ObjectState
from .collision import detect_contacts


class SimulationFault(RuntimeError):
    """Non-finite state. ``frame`` holds the inputs of the failing step."""

    def __init__(self, message, frame):
        super().__init__(message)
        self.frame = frame

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.frame, fh, indent=2)


def _to_list(x):
    return np.asarray(x, dtype=float).tolist()


def forward_dynamics(model, q, dq, tau, fext=None, gravity=None):
    """Generalized accelerations of the hand tree (articulated-body method).

    ``fext`` is an ``(nb, 6)`` array of spatial forces (torque about the
    world origin, then force); ``gravity`` adds ``m g`` at every body COM.
    """
    h = model.packed()
    q = np.asarray(q, float)
    dq = np.asarray(dq, float)
    tau = np.asarray(tau, float)
    for name, v in (("q", q), ("dq", dq), ("tau", tau)):
        if v.shape != (model.nq,):
            raise ValueError(f"forward_dynamics: {name} must have length {model.nq}")
    f = np.zeros((model.nb, 6)) if fext is None else np.array(fext, float).reshape(model.nb, 6)
    if gravity is not None:
        f = f + _gravity_wrenches(model, q, gravity)
    return np.asarray(_backend.kernels.aba(h, q, dq, tau, f))


def inverse_dynamics(model, q, dq, qdd, fext=None, gravity=None):
    """Generalized forces producing ``qdd`` (Newton-Euler recursion)."""
    h = model.packed()
    f = np.zeros((model.nb, 6)) if fext is None else np.array(fext, float).reshape(model.nb, 6)
    if gravity is not None:
        f = f + _gravity_wrenches(model, q, gravity)
    return _kernels_py.rnea(h, np.asarray(q, float), np.asarray(dq, float), np.asarray(qdd, float), f)


def _gravity_wrenches(model, q, gravity):
    h = model.packed()
    R, p = _kernels_py.fk(h, np.asarray(q, float))
    _, c = _kernels_py.body_frames(h, R, p)
    return _kernels_py.gravity_wrenches(h, c, np.asarray(gravity, float))


class World:
    """Fixed-step simulation of one hand proxy and one free object.

    A control step runs ``world.substeps`` kick-drift-kick substeps of
    ``1 / world.sim_hz`` seconds. Contacts are penalty springs with a
    Coulomb-clamped viscous tangential force; the compensation wrench acts
    at and about the object's center of mass on every substep. A world is
    not thread-safe; give each worker its own instance.
    """

    def __init__(self, scene):
        self.scene = scene
        self.hand = scene.hand
        self.obj = scene.obj
        self.config = scene.world
        self._hp = scene.hand.packed()
        self._wp = scene.world.packed()
        self._odims = scene.obj.dims()

    @property
    def control_dt(self):
        return self.config.control_dt

    def step(self, hand_state, obj_state, torques, f_comp=None, tau_comp=None):
        """One control step with generalized forces held constant."""
        return self._advance(0, torques, hand_state, obj_state, f_comp, tau_comp)

    def step_pd(self, hand_state, obj_state, q_target, f_comp=None, tau_comp=None):
        """One control step with the PD law re-evaluated every substep."""
        return self._advance(1, q_target, hand_state, obj_state, f_comp, tau_comp)

    def _advance(self, mode, u, hand_state, obj_state, f_comp, tau_comp):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.hand.nq,):
            raise ValueError(f"expected {self.hand.nq} controls, got {u.shape}")
        fc = np.zeros(3) if f_comp is None else np.asarray(f_comp, float)
        tc = np.zeros(3) if tau_comp is None else np.asarray(tau_comp, float)
        q = np.array(hand_state.q, dtype=float)
        dq = np.array(hand_state.dq, dtype=float)
        opos = obj_state.pos.copy()
        oquat = obj_state.quat.copy()
        ovel = obj_state.vel.copy()
        oang = obj_state.angvel.copy()
        if obj_state.anchors is None:
            anchors = np.zeros((self.hand.nb, 7))
        else:
            anchors = np.array(obj_state.anchors, dtype=float).reshape(self.hand.nb, 7)
        status = _backend.kernels.advance(
            self._hp, self.obj.code, self._odims, self.obj.mass, self.obj.inertia,
            self.obj.friction, self._wp, self.config.substeps,
            q, dq, opos, oquat, ovel, oang, anchors, mode, u, fc, tc)
        if status != 0:
            frame = {"mode": mode, "controls": _to_list(u), "f_comp": _to_list(fc),
                     "tau_comp": _to_list(tc), "q": _to_list(hand_state.q),
                     "dq": _to_list(hand_state.dq), "obj_pos": _to_list(obj_state.pos),
                     "obj_quat": _to_list(obj_state.quat), "obj_vel": _to_list(obj_state.vel),
                     "obj_angvel": _to_list(obj_state.angvel)}
            raise SimulationFault("simulation produced a non-finite state", frame)
        dt = self.config.control_dt
        new_obj = ObjectState(opos, oquat, ovel, oang,
                              (ovel - obj_state.vel) / dt, (oang - obj_state.angvel) / dt, anchors)
        return HandState(q, dq), new_obj

    def contacts(self, hand_state, obj_state):
        return detect_contacts(self.hand, hand_state, self.obj, obj_state)

    def contact_forces(self, hand_state, obj_state):
        """Penalty force on the object at each current contact.

        Includes the stick spring of any anchored contact. The hand body at
        the same point receives the negation.
        """
        cs = self.contacts(hand_state, obj_state)
        if len(cs) == 0:
            return cs, np.zeros((0, 3))
        h = self._hp
        R, p = _backend.kernels.fk(h, np.asarray(hand_state.q, float))
        V, _ = _backend.kernels.body_velocities(h, np.asarray(R), np.asarray(p),
                                                np.asarray(hand_state.dq, float))
        V = np.asarray(V)
        vfull = np.array([
            obj_state.vel + cross3(obj_state.angvel, cs.points[k] - obj_state.pos)
            - V[b, 3:] - cross3(V[b, :3], cs.points[k])
            for k, b in enumerate(cs.bodies)])
        deltas = np.zeros((len(cs), 3))
        if obj_state.anchors is not None:
            R = np.asarray(R)
            p = np.asarray(p)
            orot = obj_state.rotation
            for k, b in enumerate(cs.bodies):
                a = obj_state.anchors[b]
                if a[0] != 0.0:
                    deltas[k] = (obj_state.pos + orot @ a[1:4]) - (p[b] + R[b] @ a[4:7])
        forces = _backend.kernels.penalty_forces(cs.normals, cs.depths, vfull, self.obj.friction,
                                                 self._wp[4], self._wp[5], self._wp[6],
                                                 self._wp[9], deltas)
        return cs, np.asarray(forces)
