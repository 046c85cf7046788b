"""Surface-contact audit of an object's motion.

Each simulator contact is widened into a small square patch represented
by five points. Friction-pyramid forces at those points are fitted to the
wrench the object's observed motion requires; whatever the fit cannot
explain is the residual wrench, which drives the physics reward.
"""
from dataclasses import dataclass

import numpy as np

from .. import _backend
from ..geometry import cross3, tangent_frame, quat_to_mat

DEFAULT_OFFSET = 0.0025
DEFAULT_EPS = 1e-10
DEFAULT_TOL = 1e-10


@dataclass
class ContactSet:
    """Point contacts between hand bodies and the object (world frame).

    ``rel_angvel`` is the object-minus-hand angular velocity, used to carry
    the sliding velocity from a contact to its neighbouring patch points.
    """
    points: np.ndarray
    normals: np.ndarray
    depths: np.ndarray
    vrel: np.ndarray
    bodies: np.ndarray = None
    rel_angvel: np.ndarray = None

    def __post_init__(self):
        self.points = np.asarray(self.points, float).reshape(-1, 3)
        n = len(self.points)
        self.normals = np.asarray(self.normals, float).reshape(n, 3)
        self.depths = np.asarray(self.depths, float).reshape(n)
        self.vrel = np.asarray(self.vrel, float).reshape(n, 3)
        if self.bodies is None:
            self.bodies = np.full(n, -1, dtype=np.int32)
        if self.rel_angvel is None:
            self.rel_angvel = np.zeros((n, 3))
        self.rel_angvel = np.asarray(self.rel_angvel, float).reshape(n, 3)

    def __len__(self):
        return len(self.points)

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros((0, 3)))


@dataclass
class ExtendedContactSet:
    points: np.ndarray      # (5P, 3)
    normals: np.ndarray     # (5P, 3)
    vrel: np.ndarray        # (5P, 3) tangential sliding velocity per point
    offset: float

    def __len__(self):
        return len(self.points)


@dataclass
class TargetWrench:
    force: np.ndarray
    torque: np.ndarray


@dataclass
class QPProblem:
    H: np.ndarray
    g: np.ndarray
    const: float
    A: np.ndarray           # stacked friction bases, (3, 4P)
    B: np.ndarray           # stacked moment arms times bases, (3, 4P)
    c_lin: np.ndarray       # sliding cost coefficients, (4P,)
    target: TargetWrench
    eps: float

    @property
    def n(self):
        return len(self.g)

    def objective(self, lam):
        lam = np.asarray(lam, float)
        return float(0.5 * lam @ (self.H @ lam) + self.g @ lam + self.const)


@dataclass
class QPSolution:
    lam: np.ndarray
    net_force: np.ndarray
    net_torque: np.ndarray
    f_res: np.ndarray
    tau_res: np.ndarray
    objective: float
    converged: bool
    iterations: int
    kkt: float

    @property
    def residual_norm(self):
        """``|f_res| + |tau_res|``, the quantity thresholded by the Phys. ratio."""
        return float(np.linalg.norm(self.f_res) + np.linalg.norm(self.tau_res))

    def to_dict(self):
        return {"lambda": self.lam.tolist(),
                "net_wrench": {"force": self.net_force.tolist(), "torque": self.net_torque.tolist()},
                "residual": {"force": self.f_res.tolist(), "torque": self.tau_res.tolist()},
                "objective": self.objective, "converged": bool(self.converged),
                "iterations": int(self.iterations), "kkt": self.kkt}


def extend_contacts(contacts, offset=DEFAULT_OFFSET):
    """Five patch points per contact: the original plus four tangential offsets.

    The offsets are ``+t1, -t1, +t2, -t2`` times ``offset`` with the
    deterministic tangent frame of :func:`hoilab.geometry.tangent_frame`.
    """
    n = len(contacts)
    pts = np.empty((n, 5, 3))
    nrm = np.empty((n, 5, 3))
    vel = np.empty((n, 5, 3))
    for i in range(n):
        p, nv = contacts.points[i], contacts.normals[i]
        t1, t2 = tangent_frame(nv)
        d = np.array([np.zeros(3), offset * t1, -offset * t1, offset * t2, -offset * t2])
        pts[i] = p + d
        nrm[i] = nv
        w = contacts.rel_angvel[i]
        # v_rel + w x d for every offset d
        v = contacts.vrel[i] + np.column_stack([w[1] * d[:, 2] - w[2] * d[:, 1],
                                                 w[2] * d[:, 0] - w[0] * d[:, 2],
                                                 w[0] * d[:, 1] - w[1] * d[:, 0]])
        vel[i] = v - np.outer(v @ nv, nv)
    pts, nrm, vel = pts.reshape(-1, 3), nrm.reshape(-1, 3), vel.reshape(-1, 3)
    return ExtendedContactSet(pts, nrm, vel, offset)


def friction_basis(normal, mu):
    """Unit lateral edges of the four-sided friction pyramid, as columns.

    Edge ``k`` is ``(n + mu * t_k) / sqrt(1 + mu^2)`` for ``t_k`` in
    ``(t1, -t1, t2, -t2)``. The edges lie on the exact cone, so the pyramid
    is inscribed: along the tangent diagonals it only reaches a friction
    coefficient of ``mu / sqrt(2)``.
    """
    n = np.asarray(normal, float)
    nn = np.linalg.norm(n)
    if nn == 0.0:
        raise ValueError("friction_basis: zero normal")
    if mu < 0:
        raise ValueError("friction_basis: negative friction coefficient")
    n = n / nn
    t1, t2 = tangent_frame(n)
    s = 1.0 / np.sqrt(1.0 + mu * mu)
    return np.column_stack([(n + mu * t1) * s, (n - mu * t1) * s,
                            (n + mu * t2) * s, (n - mu * t2) * s])


def target_wrench(obj_model, obj_state, gravity):
    """Wrench the contacts must supply to produce the observed motion.

    ``force = m * acc - m * g``; ``torque = I_w * angacc + w x (I_w * w)``
    with the body inertia rotated into the world frame.
    """
    m = obj_model.mass
    R = quat_to_mat(obj_state.quat)
    Iw = R @ obj_model.inertia @ R.T
    w = obj_state.angvel
    f = m * np.asarray(obj_state.acc) - m * np.asarray(gravity)
    tau = Iw @ obj_state.angacc + cross3(w, Iw @ w)
    return TargetWrench(f, tau)


def assemble_qp(ext, bases, target, center, eps=DEFAULT_EPS):
    """Quadratic program in the pyramid multipliers ``lam >= 0``.

    ``0.5 lam'H lam + g'lam + const`` equals
    ``|A lam - f|^2 + |B lam - tau|^2 + c_lin'lam + eps |lam|^2``.
    """
    P = len(ext)
    if len(bases) != P:
        raise ValueError(f"assemble_qp: {P} points but {len(bases)} friction bases")
    c = np.asarray(center, float)
    if P:
        A = np.hstack(bases)
        arms = np.repeat(ext.points - c, 4, axis=0).T
        # column j of B is (p_j - c) x A[:, j]
        B = np.array([arms[1] * A[2] - arms[2] * A[1],
                      arms[2] * A[0] - arms[0] * A[2],
                      arms[0] * A[1] - arms[1] * A[0]])
        proj = np.einsum("kj,kj->j", A, np.repeat(ext.vrel, 4, axis=0).T)
        beta = np.repeat(np.abs(proj).reshape(P, 4).max(axis=1), 4)
        c_lin = beta + proj
    else:
        A = np.zeros((3, 0))
        B = np.zeros((3, 0))
        c_lin = np.zeros(0)
    f_t = np.asarray(target.force, float)
    tau_t = np.asarray(target.torque, float)
    H = 2.0 * (A.T @ A + B.T @ B) + 2.0 * eps * np.eye(4 * P)
    g = -2.0 * (A.T @ f_t + B.T @ tau_t) + c_lin
    const = float(f_t @ f_t + tau_t @ tau_t)
    return QPProblem(H, g, const, A, B, c_lin, TargetWrench(f_t, tau_t), eps)


def solve_qp(problem, tol=DEFAULT_TOL, max_iter=10000):
    """Solve with the spectral projected-gradient kernel and report residuals.

    When the iteration cap is hit the best iterate is returned with
    ``converged=False``.
    """
    lam, iters, ok = _backend.kernels.qp_pgbb(problem.H, problem.g, tol, max_iter)
    lam = np.asarray(lam)
    f_net = problem.A @ lam if problem.n else np.zeros(3)
    t_net = problem.B @ lam if problem.n else np.zeros(3)
    grad = problem.H @ lam + problem.g
    kkt = float(np.max(np.abs(np.minimum(lam, grad)))) if problem.n else 0.0
    return QPSolution(lam, f_net, t_net, problem.target.force - f_net,
                      problem.target.torque - t_net, problem.objective(lam),
                      bool(ok), int(iters), kkt)


def physics_reward(solution, k_phys=1.0, w_torque=100.0):
    """``exp(-k_phys * (|f_res| + w_torque * |tau_res|))``."""
    return float(np.exp(-k_phys * (np.linalg.norm(solution.f_res)
                                   + w_torque * np.linalg.norm(solution.tau_res))))


def audit(contacts, obj_model, obj_state, gravity, offset=DEFAULT_OFFSET,
          extended=True, eps=DEFAULT_EPS, tol=DEFAULT_TOL, max_iter=10000):
    """Full pipeline for one frame: patch points, bases, QP, residual.

    ``extended=False`` keeps only the original contact points (the point
    contact variant).
    """
    if extended:
        ext = extend_contacts(contacts, offset)
    else:
        ext = ExtendedContactSet(contacts.points.copy(), contacts.normals.copy(),
                                 contacts.vrel.copy(), 0.0)
    # patch points share their contact's normal, hence its pyramid
    per_contact = [friction_basis(n, obj_model.friction) for n in contacts.normals]
    group = 5 if extended else 1
    bases = [per_contact[j // group] for j in range(len(ext))]
    target = target_wrench(obj_model, obj_state, gravity)
    prob = assemble_qp(ext, bases, target, obj_state.pos, eps)
    return solve_qp(prob, tol, max_iter)
