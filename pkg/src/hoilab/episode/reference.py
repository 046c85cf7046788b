"""Kinematic reference sequences: synthesis and JSON Lines I/O.

A reference file starts with one header line
``{"format_version": 1, "kind": "reference", "fps": 30, "provenance": {...}}``
followed by one frame per line::

    {"t": 0, "q": [...], "dq": [...], "obj_pos": [x, y, z],
     "obj_quat": [w, x, y, z], "obj_vel": [...], "obj_angvel": [...]}

Simulated trajectories written by ``rollout`` use the same layout with
``"kind": "trajectory"``. Files without a header are read as bare frames.
"""
from dataclasses import dataclass, field
import json

import numpy as np

from ..geometry import (expmap_to_mat, mat_to_expmap, mat_to_quat, quat_to_mat,
                        quat_normalize)
from ..sim.kinematics import forward_kinematics

REFERENCE_FORMAT_VERSION = 1
FPS = 30.0
SCRIPTS = ("hold", "lift", "translate", "rotate", "shake")


class ReferenceError(ValueError):
    pass


@dataclass
class ReferenceFrame:
    t: int
    q: np.ndarray
    dq: np.ndarray
    obj_pos: np.ndarray
    obj_quat: np.ndarray
    obj_vel: np.ndarray
    obj_angvel: np.ndarray

    def to_dict(self):
        return {"t": int(self.t), "q": self.q.tolist(), "dq": self.dq.tolist(),
                "obj_pos": self.obj_pos.tolist(), "obj_quat": self.obj_quat.tolist(),
                "obj_vel": self.obj_vel.tolist(), "obj_angvel": self.obj_angvel.tolist()}

    @classmethod
    def from_dict(cls, d, nq=None):
        try:
            f = cls(int(d["t"]), *(np.asarray(d[k], dtype=float) for k in
                                   ("q", "dq", "obj_pos", "obj_quat", "obj_vel", "obj_angvel")))
        except KeyError as exc:
            raise ReferenceError(f"frame is missing {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ReferenceError(f"frame has a malformed field: {exc}") from None
        n = f.q.shape[0] if nq is None else nq
        for name, shape in (("q", (n,)), ("dq", (n,)), ("obj_pos", (3,)), ("obj_quat", (4,)),
                            ("obj_vel", (3,)), ("obj_angvel", (3,))):
            v = getattr(f, name)
            if v.shape != shape:
                raise ReferenceError(f"frame {f.t}: {name} has shape {v.shape}, expected {shape}")
            if not np.all(np.isfinite(v)):
                raise ReferenceError(f"frame {f.t}: {name} is not finite")
        return f


@dataclass
class ReferenceSequence:
    frames: list
    fps: float = FPS
    provenance: dict = field(default_factory=dict)
    kind: str = "reference"

    def __len__(self):
        return len(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    @property
    def dt(self):
        return 1.0 / self.fps

    def window(self, t, n):
        """Frames ``t+1 .. t+n`` (fewer near the end; never empty)."""
        return self.frames[min(t + 1, len(self.frames) - 1):t + 1 + n]

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(json.dumps({"format_version": REFERENCE_FORMAT_VERSION, "kind": self.kind,
                                 "fps": self.fps, "provenance": self.provenance}) + "\n")
            for f in self.frames:
                fh.write(json.dumps(f.to_dict()) + "\n")

    @classmethod
    def load(cls, path, nq=None):
        header = None
        frames = []
        try:
            fh = open(path)
        except OSError as exc:
            raise ReferenceError(f"cannot open {path}: {exc}") from None
        with fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    d = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ReferenceError(f"{path}:{lineno}: invalid JSON ({exc})") from None
                if not isinstance(d, dict):
                    raise ReferenceError(f"{path}:{lineno}: expected a JSON object")
                if "t" not in d and "format_version" in d:
                    if header is not None or frames:
                        raise ReferenceError(f"{path}:{lineno}: unexpected header line")
                    header = d
                    if d["format_version"] != REFERENCE_FORMAT_VERSION:
                        raise ReferenceError(
                            f"{path}: unsupported format_version {d['format_version']}")
                    continue
                frames.append(ReferenceFrame.from_dict(d, nq))
        if not frames:
            raise ReferenceError(f"{path}: no frames")
        if nq is None:
            n = frames[0].q.shape[0]
            if any(f.q.shape[0] != n for f in frames):
                raise ReferenceError(f"{path}: frames disagree on the number of coordinates")
        header = header or {}
        return cls(frames, float(header.get("fps", FPS)), header.get("provenance", {}),
                   header.get("kind", "reference"))


@dataclass
class NoiseSpec:
    """Artifacts added to a clean reference.

    ``jitter``: per-frame Gaussian noise (std, metres) on the root translation
    and the object position. ``penetration``: the object is shifted this far
    toward the hand body nearest to it in the grasp, so that body overlaps
    it more deeply. ``dropout``: per-frame probability that every hinge
    snaps to zero (the open hand), dropping the finger contacts.
    """
    jitter: float = 0.0
    penetration: float = 0.0
    dropout: float = 0.0

    def __post_init__(self):
        if self.jitter < 0 or self.penetration < 0:
            raise ValueError("jitter and penetration must be non-negative")
        if not 0.0 <= self.dropout <= 1.0:
            raise ValueError("dropout must be a probability")

    def to_dict(self):
        return {"jitter": self.jitter, "penetration": self.penetration, "dropout": self.dropout}


def min_jerk(s):
    s = np.clip(s, 0.0, 1.0)
    return s ** 3 * (10.0 - 15.0 * s + 6.0 * s * s)


def _script_motion(script, n, fps, amount):
    """Per-frame root offset (translation) and rotation about world z."""
    t = np.arange(n) / fps
    T = max((n - 1) / fps, 1e-9)
    # hold 20 %, move 60 %, hold 20 %
    s = min_jerk((t / T - 0.2) / 0.6)
    trans = np.zeros((n, 3))
    yaw = np.zeros(n)
    if script == "lift":
        trans[:, 2] = (0.1 if amount is None else amount) * s
    elif script == "translate":
        trans[:, 0] = (0.1 if amount is None else amount) * s
    elif script == "rotate":
        yaw = (np.pi / 2 if amount is None else amount) * s
    elif script == "shake":
        amp = 0.02 if amount is None else amount
        env = np.sin(np.pi * np.clip(t / T, 0.0, 1.0)) ** 2
        trans[:, 1] = amp * env * np.sin(2.0 * np.pi * 2.0 * t)
    elif script != "hold":
        raise ReferenceError(f"unknown script {script!r}; choose from {', '.join(SCRIPTS)}")
    return trans, yaw


def _rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _fd(x, dt):
    """Central differences inside, one-sided at the ends (axis 0)."""
    n = x.shape[0]
    out = np.zeros_like(x)
    if n < 2:
        return out
    out[1:-1] = (x[2:] - x[:-2]) / (2 * dt)
    out[0] = (x[1] - x[0]) / dt
    out[-1] = (x[-1] - x[-2]) / dt
    return out


def _fd_angular(Rs, dt):
    """World angular velocity from a rotation sequence, same stencil as :func:`_fd`."""
    n = len(Rs)
    out = np.zeros((n, 3))
    if n < 2:
        return out
    for i in range(n):
        a, b = max(i - 1, 0), min(i + 1, n - 1)
        out[i] = mat_to_expmap(Rs[b] @ Rs[a].T) / ((b - a) * dt)
    return out


def finite_difference_velocities(qs, obj_pos, obj_rot, dt):
    """Generalized and object velocities matching the simulator conventions."""
    qs = np.asarray(qs, float)
    dq = _fd(qs, dt)
    Rr = [expmap_to_mat(q[3:6]) for q in qs]
    dq[:, 3:6] = _fd_angular(Rr, dt)
    return dq, _fd(np.asarray(obj_pos, float), dt), _fd_angular(obj_rot, dt)


def frames_from_poses(qs, obj_pos, obj_rot, fps=FPS):
    dt = 1.0 / fps
    dq, ov, ow = finite_difference_velocities(qs, obj_pos, obj_rot, dt)
    return [ReferenceFrame(i, np.array(qs[i], float), dq[i], np.array(obj_pos[i], float),
                           mat_to_quat(obj_rot[i]), ov[i], ow[i]) for i in range(len(qs))]


def generate_reference(scene, script, frames=90, noise=None, seed=0, amount=None):
    """Synthesize a reference for ``scene`` (which must carry a grasp).

    The hand keeps its grasp configuration while the root follows the
    script; the object rides rigidly with the root, so the noise-free
    output is consistent with carrying. ``amount`` overrides the script's
    default size (0.1 m for lift/translate, pi/2 for rotate, 0.02 m shake
    amplitude).
    """
    if scene.grasp is None:
        raise ReferenceError("scene has no grasp to build a reference from")
    if frames < 1:
        raise ReferenceError("frames must be at least 1")
    noise = noise or NoiseSpec()
    n = int(frames)
    trans, yaw = _script_motion(script, n, FPS, amount)
    g = scene.grasp
    q0 = g.q.copy()
    R0 = expmap_to_mat(q0[3:6])
    p0 = q0[0:3].copy()
    Ro0 = quat_to_mat(g.obj_quat)
    rel_p = R0.T @ (g.obj_pos - p0)
    rel_R = R0.T @ Ro0

    qs = np.tile(q0, (n, 1))
    obj_pos = np.zeros((n, 3))
    obj_rot = []
    for i in range(n):
        Rz = _rot_z(yaw[i])
        Ri = Rz @ R0
        pi_ = p0 + trans[i]
        qs[i, 0:3] = pi_
        qs[i, 3:6] = mat_to_expmap(Ri) if yaw[i] != 0.0 else q0[3:6]
        obj_pos[i] = pi_ + Ri @ rel_p
        obj_rot.append(Ri @ rel_R)

    rng = np.random.default_rng(seed)
    if noise.penetration > 0:
        fk = forward_kinematics(scene.hand, q0)
        d = fk.centers - g.obj_pos
        k = int(np.argmin(np.linalg.norm(d, axis=1)))
        u_rel = R0.T @ (d[k] / np.linalg.norm(d[k]))
        for i in range(n):
            Ri = expmap_to_mat(qs[i, 3:6])
            obj_pos[i] += noise.penetration * (Ri @ u_rel)
    if noise.jitter > 0:
        qs[:, 0:3] += rng.normal(0.0, noise.jitter, (n, 3))
        obj_pos += rng.normal(0.0, noise.jitter, (n, 3))
    if noise.dropout > 0:
        drop = rng.random(n) < noise.dropout
        qs[drop, 6:] = 0.0

    prov = {"script": script, "frames": n, "noise": noise.to_dict(), "seed": int(seed),
            "amount": amount}
    return ReferenceSequence(frames_from_poses(qs, obj_pos, obj_rot), FPS, prov)


def sequence_from_states(hand_states, obj_states, fps=FPS, provenance=None):
    """Trajectory with the simulator's own velocities (no differencing)."""
    frames = [ReferenceFrame(i, np.array(h.q, float), np.array(h.dq, float),
                             np.array(o.pos, float), quat_normalize(o.quat),
                             np.array(o.vel, float), np.array(o.angvel, float))
              for i, (h, o) in enumerate(zip(hand_states, obj_states))]
    return ReferenceSequence(frames, fps, provenance or {}, "trajectory")
