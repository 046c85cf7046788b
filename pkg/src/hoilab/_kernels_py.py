"""Pure numpy implementation of the numeric kernels.

This module is the reference the compiled core (``_kernels``) mirrors
function for function. It is selected automatically when the extension
is not built, or when ``HOILAB_PURE=1`` is set.

Spatial vectors are expressed in world coordinates about the world
origin and ordered ``(angular, linear)``.
"""
import numpy as np

from .geometry import skew, expmap_to_mat, mat_to_expmap, quat_to_mat, quat_mul, \
    expmap_to_quat, quat_normalize

_INVPHI = 0.5 * (np.sqrt(5.0) - 1.0)
GOLDEN_ITERS = 48
BISECT_ITERS = 36
FLAT_TOL = 1e-10

OK, FAULT = 0, 1


# ---------------------------------------------------------------- kinematics

def fk(hand, q):
    """Joint-frame rotations and origins in world, root first."""
    nb = hand.nb
    R = np.empty((nb, 3, 3))
    p = np.empty((nb, 3))
    for i in range(nb):
        k = hand.qidx[i]
        if hand.jtype[i] == 0:
            R[i] = expmap_to_mat(q[k + 3:k + 6])
            p[i] = q[k:k + 3]
        else:
            par = hand.parent[i]
            R[i] = R[par] @ expmap_to_mat(hand.jaxis[i] * q[k])
            p[i] = p[par] + R[par] @ hand.jpos[i]
    return R, p


def body_frames(hand, R, p):
    """Geometry rotation and center (the COM) of every body."""
    G = np.einsum("bij,bjk->bik", R, hand.grot)
    c = p + np.einsum("bij,bj->bi", R, hand.gpos)
    return G, c


def body_velocities(hand, R, p, dq):
    """Spatial velocities ``(omega, v_origin)`` and hinge motion axes."""
    nb = hand.nb
    V = np.empty((nb, 6))
    S = np.zeros((nb, 6))
    for i in range(nb):
        k = hand.qidx[i]
        if hand.jtype[i] == 0:
            w = dq[k + 3:k + 6]
            V[i, :3] = w
            V[i, 3:] = dq[k:k + 3] + np.cross(p[i], w)
        else:
            a = R[i] @ hand.jaxis[i]
            S[i, :3] = a
            S[i, 3:] = np.cross(p[i], a)
            V[i] = V[hand.parent[i]] + S[i] * dq[k]
    return V, S


# ---------------------------------------------------------------- geometry

def sdf_local(otype, odim, x):
    """Signed distance and outward unit gradient in the object frame."""
    if otype == 0:
        qv = np.abs(x) - odim
        out = np.maximum(qv, 0.0)
        no = np.sqrt(out @ out)
        if no > 0.0:
            g = np.sign(x) * out / no
            d = no
        else:
            k = int(np.argmax(qv))
            g = np.zeros(3)
            g[k] = 1.0 if x[k] >= 0.0 else -1.0
            d = qv[k]
        return d, g
    if otype == 1:
        n = np.sqrt(x @ x)
        g = x / n if n > 0.0 else np.array([0.0, 0.0, 1.0])
        return n - odim[0], g
    if otype == 2:
        zc = min(max(x[2], -odim[1]), odim[1])
        v = np.array([x[0], x[1], x[2] - zc])
        n = np.sqrt(v @ v)
        g = v / n if n > 0.0 else np.array([1.0, 0.0, 0.0])
        return n - odim[0], g
    if otype == 3:
        rxy = np.hypot(x[0], x[1])
        dr = rxy - odim[0]
        dz = abs(x[2]) - odim[1]
        ur = np.array([x[0] / rxy, x[1] / rxy, 0.0]) if rxy > 0.0 else np.array([1.0, 0.0, 0.0])
        uz = np.array([0.0, 0.0, 1.0 if x[2] >= 0.0 else -1.0])
        if dr > 0.0 and dz > 0.0:
            n = np.hypot(dr, dz)
            return n, (dr * ur + dz * uz) / n
        if dr >= dz:
            return dr, ur
        return dz, uz
    raise ValueError(f"unsupported primitive code {otype}")


def sdf_world(otype, odim, opos, orot, x):
    d, g = sdf_local(otype, odim, orot.T @ (x - opos))
    return d, orot @ g


def _segment_min(f, a, b):
    """Center of the flat minimizing interval of a convex ``f`` on ``[a, b]``."""
    ab = b - a

    def fs(s):
        return f(a + s * ab)

    lo, hi = 0.0, 1.0
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1, f2 = fs(x1), fs(x2)
    for _ in range(GOLDEN_ITERS):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INVPHI * (hi - lo)
            f1 = fs(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INVPHI * (hi - lo)
            f2 = fs(x2)
    sm = 0.5 * (lo + hi)
    fm = fs(sm)
    f0, fe = fs(0.0), fs(1.0)
    if f0 < fm:
        sm, fm = 0.0, f0
    if fe < fm:
        sm, fm = 1.0, fe
    level = fm + FLAT_TOL
    if f0 <= level:
        sl = 0.0
    else:
        l, h = 0.0, sm
        for _ in range(BISECT_ITERS):
            mid = 0.5 * (l + h)
            if fs(mid) <= level:
                h = mid
            else:
                l = mid
        sl = h
    if fe <= level:
        sr = 1.0
    else:
        l, h = sm, 1.0
        for _ in range(BISECT_ITERS):
            mid = 0.5 * (l + h)
            if fs(mid) <= level:
                l = mid
            else:
                h = mid
        sr = l
    return a + 0.5 * (sl + sr) * ab


_BOX_STENCIL = np.array([[i, j, k] for i in (-1.0, 0.0, 1.0)
                         for j in (-1.0, 0.0, 1.0) for k in (-1.0, 0.0, 1.0)])


def collide(hand, otype, odim, q, dq, opos, oquat, ovel, oangvel):
    """Deepest-point contact for every overlapping (hand body, object) pair.

    Returns ``(body, point, normal, depth, vrel)`` arrays. ``normal`` points
    from the hand body into the object; ``vrel`` is the tangential part of
    the object-minus-hand velocity at the contact point.
    """
    R, p = fk(hand, q)
    G, c = body_frames(hand, R, p)
    V, _ = body_velocities(hand, R, p, dq)
    orot = quat_to_mat(oquat)
    ext = float(np.max(odim))
    if otype == 0:
        ext = float(np.sqrt(odim @ odim))
    elif otype == 2 or otype == 3:
        ext = float(odim[0] + odim[1])
    bodies, points, normals, depths, vrels = [], [], [], [], []

    def f(x):
        return sdf_world(otype, odim, opos, orot, x)[0]

    for i in range(hand.nb):
        if hand.gtype[i] == 0:
            r, hl = hand.gdim[i, 0], hand.gdim[i, 1]
            if np.linalg.norm(c[i] - opos) > ext + hl + r:
                continue
            ax = G[i][:, 2] * hl
            xs = _segment_min(f, c[i] - ax, c[i] + ax)
            d, g = sdf_world(otype, odim, opos, orot, xs)
            depth = r - d
            if depth <= 0.0:
                continue
            point = xs - r * g
        else:
            h = hand.gdim[i]
            if np.linalg.norm(c[i] - opos) > ext + np.sqrt(h @ h):
                continue
            cands = _BOX_STENCIL * h
            local_center = np.clip(G[i].T @ (opos - c[i]), -h, h)
            cands = np.vstack([cands, local_center])
            best, bx = np.inf, None
            for lc in cands:
                xw = c[i] + G[i] @ lc
                d = f(xw)
                if d < best:
                    best, bx = d, xw
            depth = -best
            if depth <= 0.0:
                continue
            point = bx
            _, g = sdf_world(otype, odim, opos, orot, point)
        n = -g
        v_obj = ovel + np.cross(oangvel, point - opos)
        v_hand = V[i, 3:] + np.cross(V[i, :3], point)
        vr = v_obj - v_hand
        vr = vr - (vr @ n) * n
        bodies.append(i)
        points.append(point)
        normals.append(n)
        depths.append(depth)
        vrels.append(vr)
    if not bodies:
        return (np.zeros(0, dtype=np.int32), np.zeros((0, 3)), np.zeros((0, 3)),
                np.zeros(0), np.zeros((0, 3)))
    return (np.array(bodies, dtype=np.int32), np.array(points), np.array(normals),
            np.array(depths), np.array(vrels))


def penalty_forces(normals, depths, vrel_full, mu, kn, cn, kt, ks=0.0, deltas=None):
    """Force on the object at each contact (the hand receives the negation).

    ``vrel_full`` is the full object-minus-hand velocity at each point.
    ``deltas`` (optional) is the object-minus-hand displacement since the
    contact stuck; its tangential part loads a spring of stiffness ``ks``.
    The tangential force is clamped to ``mu`` times the normal force.
    """
    out = np.zeros_like(normals)
    for k in range(len(depths)):
        n = normals[k]
        vn = vrel_full[k] @ n
        fn = kn * depths[k] - cn * vn
        if fn <= 0.0:
            continue
        vt = vrel_full[k] - vn * n
        ft = -kt * vt
        if deltas is not None:
            d = deltas[k]
            ft = ft - ks * (d - (d @ n) * n)
        nt = np.sqrt(ft @ ft)
        if nt > mu * fn:
            ft *= mu * fn / nt
        out[k] = fn * n + ft
    return out


# ---------------------------------------------------------------- dynamics

def spatial_inertia(m, c, Ic):
    C = skew(c)
    top = np.hstack([Ic + m * C @ C.T, m * C])
    bot = np.hstack([m * C.T, m * np.eye(3)])
    return np.vstack([top, bot])


def crm(v):
    out = np.zeros((6, 6))
    W = skew(v[:3])
    out[:3, :3] = W
    out[3:, :3] = skew(v[3:])
    out[3:, 3:] = W
    return out


def crf(v):
    return -crm(v).T


def _root_S(p):
    S0 = np.zeros((6, 6))
    S0[:3, 3:] = np.eye(3)
    S0[3:, :3] = np.eye(3)
    S0[3:, 3:] = skew(p)
    return S0


def _setup(hand, q, dq):
    R, p = fk(hand, q)
    G, c = body_frames(hand, R, p)
    V, S = body_velocities(hand, R, p, dq)
    I6 = np.empty((hand.nb, 6, 6))
    for i in range(hand.nb):
        Ic = G[i] @ hand.ibody[i] @ G[i].T
        I6[i] = spatial_inertia(hand.mass[i], c[i], Ic)
    return R, p, G, c, V, S, I6


def _bias_accel(hand, i, p, V, S, dq):
    if hand.jtype[i] == 0:
        k = hand.qidx[i]
        return np.concatenate([np.zeros(3), np.cross(dq[k:k + 3], dq[k + 3:k + 6])])
    return crm(V[i]) @ (S[i] * dq[hand.qidx[i]])


def aba(hand, q, dq, tau, fext):
    """Forward dynamics by the articulated-body recursion.

    ``fext[i]`` is the external spatial force on body ``i`` (world frame,
    about the origin), gravity included by the caller.
    """
    nb = hand.nb
    R, p, G, c, V, S, I6 = _setup(hand, q, dq)
    cbias = np.array([_bias_accel(hand, i, p, V, S, dq) for i in range(nb)])
    IA = I6.copy()
    pA = np.array([crf(V[i]) @ (I6[i] @ V[i]) - fext[i] for i in range(nb)])
    U = np.zeros((nb, 6))
    D = np.zeros(nb)
    u = np.zeros(nb)
    for i in range(nb - 1, 0, -1):
        k = hand.qidx[i]
        U[i] = IA[i] @ S[i]
        D[i] = S[i] @ U[i]
        u[i] = tau[k] - S[i] @ pA[i]
        Ia = IA[i] - np.outer(U[i], U[i]) / D[i]
        pa = pA[i] + Ia @ cbias[i] + U[i] * (u[i] / D[i])
        par = hand.parent[i]
        IA[par] += Ia
        pA[par] += pa
    qdd = np.zeros(hand.nq)
    S0 = _root_S(p[0])
    A0 = S0.T @ IA[0] @ S0
    b0 = tau[0:6] - S0.T @ (IA[0] @ cbias[0] + pA[0])
    qdd[0:6] = np.linalg.solve(A0, b0)
    a = np.zeros((nb, 6))
    a[0] = S0 @ qdd[0:6] + cbias[0]
    for i in range(1, nb):
        k = hand.qidx[i]
        ap = a[hand.parent[i]] + cbias[i]
        qdd[k] = (u[i] - U[i] @ ap) / D[i]
        a[i] = ap + S[i] * qdd[k]
    return qdd


def rnea(hand, q, dq, qdd, fext):
    """Inverse dynamics by Newton-Euler recursion (independent of :func:`aba`)."""
    nb = hand.nb
    R, p, G, c, V, S, I6 = _setup(hand, q, dq)
    a = np.zeros((nb, 6))
    f = np.zeros((nb, 6))
    S0 = _root_S(p[0])
    for i in range(nb):
        cb = _bias_accel(hand, i, p, V, S, dq)
        if i == 0:
            a[0] = S0 @ qdd[0:6] + cb
        else:
            a[i] = a[hand.parent[i]] + S[i] * qdd[hand.qidx[i]] + cb
        f[i] = I6[i] @ a[i] + crf(V[i]) @ (I6[i] @ V[i]) - fext[i]
    tau = np.zeros(hand.nq)
    for i in range(nb - 1, 0, -1):
        tau[hand.qidx[i]] = S[i] @ f[i]
        f[hand.parent[i]] += f[i]
    tau[0:6] = S0.T @ f[0]
    return tau


def gravity_wrenches(hand, c, g):
    fext = np.zeros((hand.nb, 6))
    for i in range(hand.nb):
        fg = hand.mass[i] * g
        fext[i, :3] = np.cross(c[i], fg)
        fext[i, 3:] = fg
    return fext


# ---------------------------------------------------------------- stepping

class _Sys:
    """Mutable simulation state used inside :func:`advance`."""

    def __init__(self, hand, q, dq, opos, oquat, ovel, oangvel, oinertia, anchors):
        self.q = q.copy()
        self.dq = dq.copy()
        self.Rroot = expmap_to_mat(q[3:6])
        self.opos = opos.copy()
        self.oquat = oquat.copy()
        self.ovel = ovel.copy()
        R = quat_to_mat(oquat)
        self.L = R @ oinertia @ R.T @ oangvel
        self.anchors = anchors.copy()


def _accel(hand, otype, odim, omass, oinertia, mu, wp, sys, mode, u, fc, tc):
    """Accelerations at the current state.

    Also returns, per contact, ``(body, point, normal, fn, delta)`` where
    ``delta`` is the stick displacement (``None`` without an anchor); the
    anchor update after each substep uses them.
    """
    g = wp[0:3]
    kn, cn, kt, ks = wp[4], wp[5], wp[6], wp[9]
    q = sys.q.copy()
    q[3:6] = mat_to_expmap(sys.Rroot)
    orot = quat_to_mat(sys.oquat)
    Iw = orot @ oinertia @ orot.T
    oang = np.linalg.solve(Iw, sys.L)
    R, p = fk(hand, q)
    G, c = body_frames(hand, R, p)
    V, _ = body_velocities(hand, R, p, sys.dq)
    fext = gravity_wrenches(hand, c, g)
    F = omass * g + fc
    T = tc.copy()
    info = []
    body, pts, nrm, dep, _ = collide(hand, otype, odim, q, sys.dq, sys.opos, sys.oquat, sys.ovel, oang)
    for k in range(len(body)):
        i = body[k]
        vfull = (sys.ovel + np.cross(oang, pts[k] - sys.opos)
                 - V[i, 3:] - np.cross(V[i, :3], pts[k]))
        delta = None
        if sys.anchors[i, 0] != 0.0:
            delta = (sys.opos + orot @ sys.anchors[i, 1:4]) - (p[i] + R[i] @ sys.anchors[i, 4:7])
        fo = penalty_forces(nrm[k:k + 1], dep[k:k + 1], vfull[None], mu, kn, cn, kt, ks,
                            None if delta is None else delta[None])[0]
        fn = max(kn * dep[k] - cn * (vfull @ nrm[k]), 0.0)
        info.append((i, pts[k], nrm[k], fn, delta))
        F += fo
        T += np.cross(pts[k] - sys.opos, fo)
        fext[i, :3] -= np.cross(pts[k], fo)
        fext[i, 3:] -= fo
    if mode == 1:
        tau = hand.kp * (u - q) - hand.kd * sys.dq
    else:
        tau = u.copy()
    tau = np.clip(tau, -hand.tlim, hand.tlim)
    qdd = aba(hand, q, sys.dq, tau, fext)
    return qdd, F / omass, T, (info, R, p, orot)


def _update_anchors(sys, state, mu, ks):
    """Create, slide or drop the stick anchors after a substep."""
    info, R, p, orot = state
    new = np.zeros_like(sys.anchors)
    for i, point, n, fn, delta in info:
        if delta is None:
            target = point
        else:
            hand_pt = p[i] + R[i] @ sys.anchors[i, 4:7]
            dn = (delta @ n) * n
            dt = delta - dn
            lim = mu * fn
            st = ks * np.sqrt(dt @ dt)
            if st > lim:
                dt = dt * (lim / st)
            new[i] = sys.anchors[i]
            new[i, 1:4] = orot.T @ (hand_pt + dn + dt - sys.opos)
            continue
        new[i, 0] = 1.0
        new[i, 1:4] = orot.T @ (target - sys.opos)
        new[i, 4:7] = R[i].T @ (target - p[i])
    sys.anchors = new


def advance(hand, otype, odim, omass, oinertia, mu, wp, n_sub,
            q, dq, opos, oquat, ovel, oangvel, anchors, mode, u, fc, tc):
    """Advance hand and object by ``n_sub`` substeps (kick-drift-kick).

    ``mode`` 0 applies the fixed generalized forces ``u``; mode 1 treats ``u``
    as PD targets re-evaluated every substep. ``anchors`` (``nb x 7``) holds
    the tangential stick anchors per hand body: an active flag, the anchor
    in the object frame and in the body's joint frame. Arrays are updated
    in place. Returns ``OK`` or ``FAULT`` (non-finite state).
    """
    h = wp[3]
    fc = np.clip(fc, -wp[7], wp[7])
    tc = np.clip(tc, -wp[8], wp[8])
    if mode == 1:
        u = np.clip(u, hand.qlo, hand.qhi)
    sys = _Sys(hand, q, dq, opos, oquat, ovel, oangvel, oinertia, anchors)
    nroot = 6
    qdd, oacc, Ldot, _ = _accel(hand, otype, odim, omass, oinertia, mu, wp, sys, mode, u, fc, tc)
    for _ in range(n_sub):
        sys.dq += 0.5 * h * qdd
        sys.ovel += 0.5 * h * oacc
        sys.L += 0.5 * h * Ldot
        orot = quat_to_mat(sys.oquat)
        oang = np.linalg.solve(orot @ oinertia @ orot.T, sys.L)
        sys.q[0:3] += h * sys.dq[0:3]
        sys.Rroot = expmap_to_mat(h * sys.dq[3:6]) @ sys.Rroot
        sys.q[nroot:] += h * sys.dq[nroot:]
        sys.opos += h * sys.ovel
        sys.oquat = quat_normalize(quat_mul(expmap_to_quat(h * oang), sys.oquat))
        qdd, oacc, Ldot, cinfo = _accel(hand, otype, odim, omass, oinertia, mu, wp, sys, mode, u, fc, tc)
        sys.dq += 0.5 * h * qdd
        sys.ovel += 0.5 * h * oacc
        sys.L += 0.5 * h * Ldot
        _update_anchors(sys, cinfo, mu, wp[9])
    orot = quat_to_mat(sys.oquat)
    oang = np.linalg.solve(orot @ oinertia @ orot.T, sys.L)
    sys.q[3:6] = mat_to_expmap(sys.Rroot)
    if not (np.all(np.isfinite(sys.q)) and np.all(np.isfinite(sys.dq))
            and np.all(np.isfinite(sys.opos)) and np.all(np.isfinite(sys.ovel))
            and np.all(np.isfinite(oang)) and np.all(np.isfinite(sys.anchors))):
        return FAULT
    q[:] = sys.q
    dq[:] = sys.dq
    opos[:] = sys.opos
    oquat[:] = sys.oquat
    ovel[:] = sys.ovel
    oangvel[:] = oang
    anchors[:] = sys.anchors
    return OK


# ---------------------------------------------------------------- QP

def qp_objective(H, g, x):
    return 0.5 * x @ (H @ x) + g @ x


def kkt_residual(x, grad):
    return float(np.max(np.abs(np.minimum(x, grad)))) if len(x) else 0.0


def _active_set(H, g, x, tol, max_solves):
    """Primal active-set refinement from the feasible point ``x`` (in place).

    Newton steps on the free variables are truncated at the first bound
    they would cross, and that variable is fixed at zero. After a full
    step, the fixed variable with the most negative gradient is released.
    Stops when no fixed gradient is below ``-tol``. Returns the number of
    Newton solves.
    """
    free = x > 0.0
    solves = 0
    added = -1
    while solves < max_solves:
        idx = np.flatnonzero(free)
        if len(idx):
            try:
                Lc = np.linalg.cholesky(H[np.ix_(idx, idx)])
            except np.linalg.LinAlgError:
                return solves
            z = np.linalg.solve(Lc.T, np.linalg.solve(Lc, -g[idx]))
            solves += 1
            xf = x[idx]
            d = z - xf
            t, hit = 1.0, -1
            for k in range(len(idx)):
                if d[k] < 0.0:
                    ratio = xf[k] / -d[k]
                    if ratio < t:
                        t, hit = ratio, k
            if hit >= 0 and t == 0.0 and idx[hit] == added:
                return solves
            xf = xf + t * d
            xf[xf < 0.0] = 0.0
            if hit >= 0:
                xf[hit] = 0.0
                free[idx[hit]] = False
            x[idx] = xf
            if hit >= 0:
                continue
        grad = H @ x + g
        cand = np.where(free, np.inf, grad)
        j = int(np.argmin(cand))
        if cand[j] >= -tol:
            return solves
        free[j] = True
        added = j
    return solves


def qp_pgbb(H, g, tol=1e-10, max_iter=10000, x0=None, pg_steps=20):
    """Minimize ``0.5 x'Hx + g'x`` subject to ``x >= 0``.

    Gradient projection with Barzilai-Borwein steps makes a cheap first
    guess at the active set; each round then finishes with the primal
    active-set refinement of :func:`_active_set`, which terminates
    finitely even along the nearly flat directions. Stops on the KKT
    residual ``max |min(x, grad)| <= tol``. ``H`` must be positive definite.

    Returns ``(x, iterations, converged)``; iterations count projected
    gradient steps plus face solves.
    """
    n = len(g)
    if n == 0:
        return np.zeros(0), 0, True
    x = np.zeros(n) if x0 is None else np.maximum(np.asarray(x0, float), 0.0)
    alpha = 1.0 / max(np.max(np.sum(np.abs(H), axis=1)), 1e-300)
    it = 0
    while True:
        grad = H @ x + g
        if kkt_residual(x, grad) <= tol:
            return x, it, True
        if it >= max_iter:
            return x, it, False
        for _ in range(pg_steps):
            d = np.maximum(x - alpha * grad, 0.0) - x
            gd = grad @ d
            if gd >= 0.0:
                break
            Hd = H @ d
            dHd = d @ Hd
            t = min(1.0, -gd / dHd) if dHd > 0.0 else 1.0
            s = t * d
            x = x + s
            x[x < 0.0] = 0.0
            grad = grad + t * Hd
            sy = t * (s @ Hd)
            alpha = (s @ s) / sy if sy > 0.0 else 1e10
            alpha = min(max(alpha, 1e-12), 1e12)
            it += 1
        it += _active_set(H, g, x, tol, max(1, max_iter - it))
