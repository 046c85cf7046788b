"""Scene description: hand proxy, rigid object, world settings and states.

All quantities are SI. Quaternions are ``(w, x, y, z)``. Capsules and
cylinders have their long axis along the local z axis of their geometry
frame.
"""
from dataclasses import dataclass, field
import json

import numpy as np

from ..geometry import quat_normalize, quat_to_mat, expmap_to_mat, mat_to_quat

FREE, HINGE = 0, 1
CAPSULE, BOX = 0, 1
OBJ_BOX, OBJ_SPHERE, OBJ_CAPSULE, OBJ_CYLINDER = 0, 1, 2, 3

OBJECT_KINDS = {"box": OBJ_BOX, "sphere": OBJ_SPHERE,
                "capsule": OBJ_CAPSULE, "cylinder": OBJ_CYLINDER}

SCENE_FORMAT_VERSION = 1


class SceneError(ValueError):
    """Raised for malformed scene descriptions."""


def box_inertia(mass, half_extents):
    a, b, c = half_extents
    return mass / 3.0 * np.diag([b * b + c * c, a * a + c * c, a * a + b * b])


def sphere_inertia(mass, radius):
    return 0.4 * mass * radius * radius * np.eye(3)


def cylinder_inertia(mass, radius, half_length):
    ixx = mass * (3.0 * radius ** 2 + 4.0 * half_length ** 2) / 12.0
    return np.diag([ixx, ixx, 0.5 * mass * radius ** 2])


def capsule_inertia(mass, radius, half_length):
    v_cyl = np.pi * radius ** 2 * 2.0 * half_length
    v_sph = 4.0 / 3.0 * np.pi * radius ** 3
    m_cyl = mass * v_cyl / (v_cyl + v_sph)
    m_sph = mass - m_cyl
    axial = 0.5 * m_cyl * radius ** 2 + 0.4 * m_sph * radius ** 2
    trans = (m_cyl * (radius ** 2 / 4.0 + (2.0 * half_length) ** 2 / 12.0)
             + m_sph * (0.4 * radius ** 2 + half_length ** 2 + 0.75 * half_length * radius))
    return np.diag([trans, trans, axial])


def _frame_from_axis(axis):
    """Rotation taking local +z onto ``axis``."""
    z = np.asarray(axis, dtype=float)
    z = z / np.linalg.norm(z)
    if abs(z[2]) > 1.0 - 1e-12:
        return np.eye(3) if z[2] > 0 else np.diag([1.0, -1.0, -1.0])
    x = np.cross([0.0, 0.0, 1.0], z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


@dataclass
class Joint:
    name: str
    parent: int
    kind: str                      # "free" or "hinge"
    shape: str                     # "capsule" or "box"
    size: tuple                    # capsule (radius, half_length); box half-extents
    mass: float
    kp: np.ndarray
    kd: np.ndarray
    torque_limit: np.ndarray
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    body_pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    body_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    limits: tuple = (-np.pi, np.pi)

    @property
    def ndof(self):
        return 6 if self.kind == "free" else 1


class HandModel:
    """Articulated hand proxy: a kinematic tree with one free root.

    Generalized coordinates ``q`` hold the root translation, the root
    rotation as a rotation vector, then one angle per hinge. The matching
    velocity block of the root is the world-frame linear velocity of the
    root origin followed by the world-frame angular velocity.
    """

    def __init__(self, joints):
        self.joints = list(joints)
        self._validate()
        self.nb = len(self.joints)
        self.qidx = np.zeros(self.nb, dtype=np.int32)
        n = 0
        for i, j in enumerate(self.joints):
            self.qidx[i] = n
            n += j.ndof
        self.nq = n
        self.kp = np.concatenate([np.broadcast_to(j.kp, (j.ndof,)) for j in self.joints]).astype(float)
        self.kd = np.concatenate([np.broadcast_to(j.kd, (j.ndof,)) for j in self.joints]).astype(float)
        self.torque_limit = np.concatenate(
            [np.broadcast_to(j.torque_limit, (j.ndof,)) for j in self.joints]).astype(float)
        lo = np.full(self.nq, -np.inf)
        hi = np.full(self.nq, np.inf)
        for i, j in enumerate(self.joints):
            if j.kind == "hinge":
                lo[self.qidx[i]], hi[self.qidx[i]] = j.limits
        self.q_lo, self.q_hi = lo, hi
        self._packed = None

    def _validate(self):
        if not self.joints:
            raise SceneError("hand has no joints")
        if self.joints[0].kind != "free" or self.joints[0].parent != -1:
            raise SceneError("joint 0 must be the free root with parent -1")
        for i, j in enumerate(self.joints):
            if i > 0 and j.kind != "hinge":
                raise SceneError(f"joint {j.name!r}: only the root may be free")
            if i > 0 and not 0 <= j.parent < i:
                raise SceneError(f"joint {j.name!r}: parent index must precede it")
            if j.mass <= 0:
                raise SceneError(f"joint {j.name!r}: mass must be positive")
            if np.any(np.asarray(j.kp) <= 0) or np.any(np.asarray(j.kd) <= 0):
                raise SceneError(f"joint {j.name!r}: kp and kd must be positive")
            if j.shape not in ("capsule", "box"):
                raise SceneError(f"joint {j.name!r}: unknown body primitive {j.shape!r}")

    @property
    def n_hinges(self):
        return self.nb - 1

    def body_inertia(self, i):
        j = self.joints[i]
        if j.shape == "box":
            return box_inertia(j.mass, j.size)
        return capsule_inertia(j.mass, j.size[0], j.size[1])

    def packed(self):
        """Flat arrays consumed by the numeric kernels (cached)."""
        if self._packed is None:
            self._packed = PackedHand(self)
        return self._packed

    def zero_state(self):
        return HandState(np.zeros(self.nq), np.zeros(self.nq))

    def clamp_targets(self, q_target):
        return np.clip(q_target, self.q_lo, self.q_hi)

    def leaf_bodies(self):
        parents = {j.parent for j in self.joints}
        return [i for i in range(self.nb) if i not in parents]

    def to_dict(self):
        out = []
        for j in self.joints:
            d = {"name": j.name, "parent": j.parent, "type": j.kind,
                 "pos": list(map(float, j.pos)), "mass": float(j.mass),
                 "kp": np.atleast_1d(j.kp).tolist(), "kd": np.atleast_1d(j.kd).tolist(),
                 "torque_limit": np.atleast_1d(j.torque_limit).tolist()}
            if j.kind == "hinge":
                d["axis"] = list(map(float, j.axis))
                d["limits"] = [float(j.limits[0]), float(j.limits[1])]
            if j.shape == "capsule":
                d["body"] = {"capsule": {"radius": float(j.size[0]), "half_length": float(j.size[1])},
                             "pos": list(map(float, j.body_pos)),
                             "axis": list(map(float, j.body_axis))}
            else:
                d["body"] = {"box": {"half_extents": list(map(float, j.size))},
                             "pos": list(map(float, j.body_pos))}
            out.append(d)
        return {"joints": out}

    @classmethod
    def from_dict(cls, d):
        joints = []
        for k, jd in enumerate(d["joints"]):
            try:
                kind = jd.get("type", "free" if k == 0 else "hinge")
                body = jd["body"]
                if "capsule" in body:
                    shape = "capsule"
                    size = (float(body["capsule"]["radius"]), float(body["capsule"]["half_length"]))
                elif "box" in body:
                    shape = "box"
                    size = tuple(float(x) for x in body["box"]["half_extents"])
                else:
                    raise SceneError(f"joint {k}: body needs 'capsule' or 'box'")
                ndof = 6 if kind == "free" else 1
                joints.append(Joint(
                    name=jd.get("name", f"j{k}"), parent=int(jd.get("parent", -1 if k == 0 else k - 1)),
                    kind=kind, shape=shape, size=size, mass=float(jd["mass"]),
                    kp=np.broadcast_to(np.asarray(jd["kp"], float), (ndof,)).copy(),
                    kd=np.broadcast_to(np.asarray(jd["kd"], float), (ndof,)).copy(),
                    torque_limit=np.broadcast_to(
                        np.asarray(jd.get("torque_limit", np.inf), float), (ndof,)).copy(),
                    axis=np.asarray(jd.get("axis", [0, 0, 1]), float),
                    pos=np.asarray(jd.get("pos", [0, 0, 0]), float),
                    body_pos=np.asarray(body.get("pos", [0, 0, 0]), float),
                    body_axis=np.asarray(body.get("axis", [0, 0, 1]), float),
                    limits=tuple(jd.get("limits", (-np.pi, np.pi))),
                ))
            except KeyError as exc:
                raise SceneError(f"joint {k}: missing field {exc}") from None
        return cls(joints)


class PackedHand:
    """Array view of a :class:`HandModel` for the kernels."""

    def __init__(self, model):
        nb = model.nb
        self.nb = nb
        self.nq = model.nq
        self.parent = np.array([j.parent for j in model.joints], dtype=np.int32)
        self.jtype = np.array([FREE if j.kind == "free" else HINGE for j in model.joints], dtype=np.int32)
        self.qidx = model.qidx.astype(np.int32)
        self.jaxis = np.array([np.asarray(j.axis, float) / np.linalg.norm(j.axis) for j in model.joints])
        self.jpos = np.array([np.asarray(j.pos, float) for j in model.joints])
        self.gtype = np.array([CAPSULE if j.shape == "capsule" else BOX for j in model.joints], dtype=np.int32)
        self.gdim = np.zeros((nb, 3))
        self.grot = np.zeros((nb, 3, 3))
        for i, j in enumerate(model.joints):
            self.gdim[i, :len(j.size)] = j.size
            self.grot[i] = _frame_from_axis(j.body_axis) if j.shape == "capsule" else np.eye(3)
        self.gpos = np.array([np.asarray(j.body_pos, float) for j in model.joints])
        self.mass = np.array([j.mass for j in model.joints], dtype=float)
        self.ibody = np.array([model.body_inertia(i) for i in range(nb)])
        self.kp = model.kp.copy()
        self.kd = model.kd.copy()
        self.tlim = model.torque_limit.copy()
        self.qlo = model.q_lo.copy()
        self.qhi = model.q_hi.copy()


@dataclass
class ObjectModel:
    kind: str
    size: tuple         # box half-extents; sphere (r,); capsule/cylinder (r, half_length)
    mass: float
    inertia: np.ndarray = None
    friction: float = 1.0

    def __post_init__(self):
        if self.kind not in OBJECT_KINDS:
            raise SceneError(f"unsupported object primitive {self.kind!r}")
        if self.mass <= 0:
            raise SceneError("object mass must be positive")
        if self.friction < 0:
            raise SceneError("friction coefficient must be non-negative")
        self.size = tuple(float(s) for s in self.size)
        if self.inertia is None:
            if self.kind == "box":
                self.inertia = box_inertia(self.mass, self.size)
            elif self.kind == "sphere":
                self.inertia = sphere_inertia(self.mass, self.size[0])
            elif self.kind == "capsule":
                self.inertia = capsule_inertia(self.mass, *self.size)
            else:
                self.inertia = cylinder_inertia(self.mass, *self.size)
        self.inertia = np.asarray(self.inertia, dtype=float)
        if not np.allclose(self.inertia, self.inertia.T):
            raise SceneError("object inertia must be symmetric")
        ev = np.linalg.eigvalsh(self.inertia)
        if ev[0] <= 0:
            raise SceneError("object inertia must be positive definite")
        tol = 1e-12 * ev.sum()
        if ev[0] + ev[1] < ev[2] - tol:
            raise SceneError("object principal moments violate the triangle inequality")

    @property
    def code(self):
        return OBJECT_KINDS[self.kind]

    def half_extent(self):
        """Largest distance from the center to the surface along a principal axis."""
        if self.kind == "capsule":
            return float(self.size[0] + self.size[1])
        return float(max(self.size))

    def dims(self):
        d = np.zeros(3)
        d[:len(self.size)] = self.size
        return d

    def to_dict(self):
        return {"primitive": self.kind, "size": list(self.size), "mass": self.mass,
                "inertia": self.inertia.tolist(), "friction": self.friction}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(kind=d["primitive"], size=tuple(d["size"]), mass=float(d["mass"]),
                       inertia=None if d.get("inertia") is None else np.asarray(d["inertia"], float),
                       friction=float(d.get("friction", 1.0)))
        except KeyError as exc:
            raise SceneError(f"object: missing field {exc}") from None


@dataclass
class WorldConfig:
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    sim_hz: float = 450.0
    substeps: int = 15
    contact_stiffness: float = 2000.0
    contact_damping: float = 5.0
    friction_damping: float = 5.0
    friction_stiffness: float = 1000.0
    force_limit: float = 20.0
    torque_limit: float = 2.0

    def __post_init__(self):
        self.gravity = np.asarray(self.gravity, dtype=float)
        if self.sim_hz <= 0 or self.substeps < 1:
            raise SceneError("sim_hz must be positive and substeps >= 1")

    @property
    def dt(self):
        return 1.0 / self.sim_hz

    @property
    def control_hz(self):
        return self.sim_hz / self.substeps

    @property
    def control_dt(self):
        return self.substeps / self.sim_hz

    def packed(self):
        return np.array([*self.gravity, self.dt, self.contact_stiffness, self.contact_damping,
                         self.friction_damping, self.force_limit, self.torque_limit,
                         self.friction_stiffness])

    def to_dict(self):
        return {"gravity": self.gravity.tolist(), "sim_hz": self.sim_hz, "substeps": self.substeps,
                "contact_stiffness": self.contact_stiffness, "contact_damping": self.contact_damping,
                "friction_damping": self.friction_damping,
                "friction_stiffness": self.friction_stiffness, "force_limit": self.force_limit,
                "torque_limit": self.torque_limit}

    @classmethod
    def from_dict(cls, d):
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)


@dataclass
class HandState:
    q: np.ndarray
    dq: np.ndarray

    def copy(self):
        return HandState(self.q.copy(), self.dq.copy())

    @property
    def root_rotation(self):
        return expmap_to_mat(self.q[3:6])


@dataclass
class ObjectState:
    pos: np.ndarray
    quat: np.ndarray
    vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angvel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    acc: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angacc: np.ndarray = field(default_factory=lambda: np.zeros(3))
    # simulator bookkeeping: per-hand-body tangential stick anchors (nb x 7), None = no contact history
    anchors: np.ndarray = None

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float)
        self.quat = quat_normalize(self.quat)
        self.vel = np.asarray(self.vel, dtype=float)
        self.angvel = np.asarray(self.angvel, dtype=float)
        self.acc = np.asarray(self.acc, dtype=float)
        self.angacc = np.asarray(self.angacc, dtype=float)

    def copy(self):
        return ObjectState(self.pos.copy(), self.quat.copy(), self.vel.copy(),
                           self.angvel.copy(), self.acc.copy(), self.angacc.copy(),
                           None if self.anchors is None else self.anchors.copy())

    @property
    def rotation(self):
        return quat_to_mat(self.quat)


@dataclass
class Grasp:
    """Hand configuration holding the object, used to synthesize references."""
    q: np.ndarray
    obj_pos: np.ndarray
    obj_quat: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.obj_pos = np.asarray(self.obj_pos, dtype=float)
        self.obj_quat = quat_normalize(self.obj_quat)

    def to_dict(self):
        return {"q": self.q.tolist(), "obj_pos": self.obj_pos.tolist(),
                "obj_quat": self.obj_quat.tolist()}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d["q"], d["obj_pos"], d.get("obj_quat", [1.0, 0.0, 0.0, 0.0]))
        except KeyError as exc:
            raise SceneError(f"grasp: missing field {exc}") from None


@dataclass
class Scene:
    hand: HandModel
    obj: ObjectModel
    world: WorldConfig
    grasp: Grasp = None

    def __post_init__(self):
        if self.grasp is not None and self.grasp.q.shape != (self.hand.nq,):
            raise SceneError(f"grasp.q must have {self.hand.nq} entries")

    def to_dict(self):
        d = {"format_version": SCENE_FORMAT_VERSION, "hand": self.hand.to_dict(),
             "object": self.obj.to_dict(), "world": self.world.to_dict()}
        if self.grasp is not None:
            d["grasp"] = self.grasp.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise SceneError("scene must be a JSON object")
        version = d.get("format_version", SCENE_FORMAT_VERSION)
        if version != SCENE_FORMAT_VERSION:
            raise SceneError(f"unsupported scene format_version {version}")
        for key in ("hand", "object"):
            if key not in d:
                raise SceneError(f"scene is missing {key!r}")
        grasp = Grasp.from_dict(d["grasp"]) if d.get("grasp") is not None else None
        return cls(HandModel.from_dict(d["hand"]), ObjectModel.from_dict(d["object"]),
                   WorldConfig.from_dict(d.get("world", {})), grasp)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SceneError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data)


def object_state_from_pose(pos, rot=None, vel=(0, 0, 0), angvel=(0, 0, 0)):
    quat = np.array([1.0, 0, 0, 0]) if rot is None else mat_to_quat(rot)
    return ObjectState(np.asarray(pos, float), quat, np.asarray(vel, float), np.asarray(angvel, float))
