# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numeric kernels; mirrors ``hoilab._kernels_py`` function for function."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, sin, cos, atan2, hypot, isfinite
from libc.stdlib cimport malloc, free
from libc.string cimport memset, memcpy

cnp.import_array()

DEF MAXB = 32
DEF MAXQ = 64
DEF MAXC = 32
DEF GOLDEN_ITERS = 48
DEF BISECT_ITERS = 36
DEF FLAT_TOL = 1e-10

cdef double INVPHI = 0.5 * (sqrt(5.0) - 1.0)

OK = 0
FAULT = 1


cdef struct HandC:
    int nb
    int nq
    int* parent
    int* jtype
    int* qidx
    int* gtype
    double* jaxis
    double* jpos
    double* gdim
    double* gpos
    double* grot
    double* mass
    double* ibody
    double* kp
    double* kd
    double* tlim
    double* qlo
    double* qhi


cdef double* _dptr(object arr, list keep) except NULL:
    cdef cnp.ndarray a = np.ascontiguousarray(arr, dtype=np.float64)
    keep.append(a)
    if a.size == 0:
        a = np.zeros(1)
        keep.append(a)
    return <double*> cnp.PyArray_DATA(a)


cdef int* _iptr(object arr, list keep) except NULL:
    cdef cnp.ndarray a = np.ascontiguousarray(arr, dtype=np.int32)
    keep.append(a)
    return <int*> cnp.PyArray_DATA(a)


cdef HandC _hand(object h, list keep) except *:
    cdef HandC c
    c.nb = h.nb
    c.nq = h.nq
    if c.nb > MAXB or c.nq > MAXQ:
        raise ValueError("hand too large for the compiled kernels")
    c.parent = _iptr(h.parent, keep)
    c.jtype = _iptr(h.jtype, keep)
    c.qidx = _iptr(h.qidx, keep)
    c.gtype = _iptr(h.gtype, keep)
    c.jaxis = _dptr(h.jaxis, keep)
    c.jpos = _dptr(h.jpos, keep)
    c.gdim = _dptr(h.gdim, keep)
    c.gpos = _dptr(h.gpos, keep)
    c.grot = _dptr(h.grot, keep)
    c.mass = _dptr(h.mass, keep)
    c.ibody = _dptr(h.ibody, keep)
    c.kp = _dptr(h.kp, keep)
    c.kd = _dptr(h.kd, keep)
    c.tlim = _dptr(h.tlim, keep)
    c.qlo = _dptr(h.qlo, keep)
    c.qhi = _dptr(h.qhi, keep)
    return c


# ------------------------------------------------------------ 3-vector / 3x3

cdef inline void cross3(const double* a, const double* b, double* o) noexcept nogil:
    cdef double x = a[1] * b[2] - a[2] * b[1]
    cdef double y = a[2] * b[0] - a[0] * b[2]
    cdef double z = a[0] * b[1] - a[1] * b[0]
    o[0] = x
    o[1] = y
    o[2] = z


cdef inline double dot3(const double* a, const double* b) noexcept nogil:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


cdef inline void matvec3(const double* M, const double* v, double* o) noexcept nogil:
    cdef double x = M[0] * v[0] + M[1] * v[1] + M[2] * v[2]
    cdef double y = M[3] * v[0] + M[4] * v[1] + M[5] * v[2]
    cdef double z = M[6] * v[0] + M[7] * v[1] + M[8] * v[2]
    o[0] = x
    o[1] = y
    o[2] = z


cdef inline void mattvec3(const double* M, const double* v, double* o) noexcept nogil:
    cdef double x = M[0] * v[0] + M[3] * v[1] + M[6] * v[2]
    cdef double y = M[1] * v[0] + M[4] * v[1] + M[7] * v[2]
    cdef double z = M[2] * v[0] + M[5] * v[1] + M[8] * v[2]
    o[0] = x
    o[1] = y
    o[2] = z


cdef inline void matmul3(const double* A, const double* B, double* o) noexcept nogil:
    cdef double t[9]
    cdef int i, j
    for i in range(3):
        for j in range(3):
            t[3 * i + j] = A[3 * i] * B[j] + A[3 * i + 1] * B[3 + j] + A[3 * i + 2] * B[6 + j]
    memcpy(o, t, 9 * sizeof(double))


cdef inline void expmap_mat(const double* r, double* R) noexcept nogil:
    cdef double th = sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2])
    cdef double a, b
    cdef double K[9]
    cdef double K2[9]
    cdef int i
    K[0] = 0.0
    K[1] = -r[2]
    K[2] = r[1]
    K[3] = r[2]
    K[4] = 0.0
    K[5] = -r[0]
    K[6] = -r[1]
    K[7] = r[0]
    K[8] = 0.0
    matmul3(K, K, K2)
    if th < 1e-8:
        a = 1.0
        b = 0.5
    else:
        a = sin(th) / th
        b = (1.0 - cos(th)) / (th * th)
    for i in range(9):
        R[i] = a * K[i] + b * K2[i]
    R[0] += 1.0
    R[4] += 1.0
    R[8] += 1.0


cdef inline void quat_mat(const double* q, double* R) noexcept nogil:
    cdef double w = q[0], x = q[1], y = q[2], z = q[3]
    R[0] = 1 - 2 * (y * y + z * z)
    R[1] = 2 * (x * y - w * z)
    R[2] = 2 * (x * z + w * y)
    R[3] = 2 * (x * y + w * z)
    R[4] = 1 - 2 * (x * x + z * z)
    R[5] = 2 * (y * z - w * x)
    R[6] = 2 * (x * z - w * y)
    R[7] = 2 * (y * z + w * x)
    R[8] = 1 - 2 * (x * x + y * y)


cdef inline void quat_normalize_c(double* q) noexcept nogil:
    cdef double n = sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    q[0] /= n
    q[1] /= n
    q[2] /= n
    q[3] /= n


cdef inline void mat_quat(const double* R, double* q) noexcept nogil:
    cdef double tr = R[0] + R[4] + R[8]
    cdef double s
    if tr > 0.0:
        s = 2.0 * sqrt(tr + 1.0)
        q[0] = 0.25 * s
        q[1] = (R[7] - R[5]) / s
        q[2] = (R[2] - R[6]) / s
        q[3] = (R[3] - R[1]) / s
    elif R[0] > R[4] and R[0] > R[8]:
        s = 2.0 * sqrt(1.0 + R[0] - R[4] - R[8])
        q[0] = (R[7] - R[5]) / s
        q[1] = 0.25 * s
        q[2] = (R[1] + R[3]) / s
        q[3] = (R[2] + R[6]) / s
    elif R[4] > R[8]:
        s = 2.0 * sqrt(1.0 + R[4] - R[0] - R[8])
        q[0] = (R[2] - R[6]) / s
        q[1] = (R[1] + R[3]) / s
        q[2] = 0.25 * s
        q[3] = (R[5] + R[7]) / s
    else:
        s = 2.0 * sqrt(1.0 + R[8] - R[0] - R[4])
        q[0] = (R[3] - R[1]) / s
        q[1] = (R[2] + R[6]) / s
        q[2] = (R[5] + R[7]) / s
        q[3] = 0.25 * s
    if q[0] < 0.0:
        q[0] = -q[0]
        q[1] = -q[1]
        q[2] = -q[2]
        q[3] = -q[3]
    quat_normalize_c(q)


cdef inline void quat_expmap(double* q, double* r) noexcept nogil:
    cdef double sn, ang
    quat_normalize_c(q)
    if q[0] < 0.0:
        q[0] = -q[0]
        q[1] = -q[1]
        q[2] = -q[2]
        q[3] = -q[3]
    sn = sqrt(q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    if sn < 1e-12:
        r[0] = 2.0 * q[1]
        r[1] = 2.0 * q[2]
        r[2] = 2.0 * q[3]
        return
    ang = 2.0 * atan2(sn, q[0])
    r[0] = q[1] * ang / sn
    r[1] = q[2] * ang / sn
    r[2] = q[3] * ang / sn


cdef inline void mat_expmap(const double* R, double* r) noexcept nogil:
    cdef double q[4]
    mat_quat(R, q)
    quat_expmap(q, r)


cdef inline void expmap_quat(const double* r, double* q) noexcept nogil:
    cdef double th = sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2])
    cdef double s
    if th < 1e-8:
        q[0] = 1.0
        q[1] = 0.5 * r[0]
        q[2] = 0.5 * r[1]
        q[3] = 0.5 * r[2]
        quat_normalize_c(q)
        return
    s = sin(0.5 * th) / th
    q[0] = cos(0.5 * th)
    q[1] = s * r[0]
    q[2] = s * r[1]
    q[3] = s * r[2]


cdef inline void quat_mul_c(const double* a, const double* b, double* o) noexcept nogil:
    cdef double w = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
    cdef double x = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2]
    cdef double y = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1]
    cdef double z = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]
    o[0] = w
    o[1] = x
    o[2] = y
    o[3] = z


cdef int solve_dense(double* A, double* b, int n) noexcept nogil:
    """Gaussian elimination with partial pivoting; A (n x n) and b are overwritten."""
    cdef int i, j, k, piv
    cdef double m, t
    for k in range(n):
        piv = k
        m = fabs(A[k * n + k])
        for i in range(k + 1, n):
            if fabs(A[i * n + k]) > m:
                m = fabs(A[i * n + k])
                piv = i
        if m == 0.0:
            return 1
        if piv != k:
            for j in range(n):
                t = A[k * n + j]
                A[k * n + j] = A[piv * n + j]
                A[piv * n + j] = t
            t = b[k]
            b[k] = b[piv]
            b[piv] = t
        for i in range(k + 1, n):
            m = A[i * n + k] / A[k * n + k]
            if m != 0.0:
                for j in range(k, n):
                    A[i * n + j] -= m * A[k * n + j]
                b[i] -= m * b[k]
    for i in range(n - 1, -1, -1):
        t = b[i]
        for j in range(i + 1, n):
            t -= A[i * n + j] * b[j]
        b[i] = t / A[i * n + i]
    return 0


# ------------------------------------------------------------ kinematics

cdef void fk_c(HandC* h, const double* q, double* R, double* p) noexcept nogil:
    cdef int i, k, par
    cdef double r[3]
    cdef double Rj[9]
    cdef double t[3]
    for i in range(h.nb):
        k = h.qidx[i]
        if h.jtype[i] == 0:
            expmap_mat(&q[k + 3], &R[9 * i])
            p[3 * i] = q[k]
            p[3 * i + 1] = q[k + 1]
            p[3 * i + 2] = q[k + 2]
        else:
            par = h.parent[i]
            r[0] = h.jaxis[3 * i] * q[k]
            r[1] = h.jaxis[3 * i + 1] * q[k]
            r[2] = h.jaxis[3 * i + 2] * q[k]
            expmap_mat(r, Rj)
            matmul3(&R[9 * par], Rj, &R[9 * i])
            matvec3(&R[9 * par], &h.jpos[3 * i], t)
            p[3 * i] = p[3 * par] + t[0]
            p[3 * i + 1] = p[3 * par + 1] + t[1]
            p[3 * i + 2] = p[3 * par + 2] + t[2]


cdef void frames_c(HandC* h, const double* R, const double* p, double* G, double* c) noexcept nogil:
    cdef int i
    cdef double t[3]
    for i in range(h.nb):
        matmul3(&R[9 * i], &h.grot[9 * i], &G[9 * i])
        matvec3(&R[9 * i], &h.gpos[3 * i], t)
        c[3 * i] = p[3 * i] + t[0]
        c[3 * i + 1] = p[3 * i + 1] + t[1]
        c[3 * i + 2] = p[3 * i + 2] + t[2]


cdef void vel_c(HandC* h, const double* R, const double* p, const double* dq,
                double* V, double* S) noexcept nogil:
    cdef int i, k, j, par
    cdef double a[3]
    cdef double t[3]
    for i in range(h.nb):
        k = h.qidx[i]
        for j in range(6):
            S[6 * i + j] = 0.0
        if h.jtype[i] == 0:
            V[6 * i] = dq[k + 3]
            V[6 * i + 1] = dq[k + 4]
            V[6 * i + 2] = dq[k + 5]
            cross3(&p[3 * i], &dq[k + 3], t)
            V[6 * i + 3] = dq[k] + t[0]
            V[6 * i + 4] = dq[k + 1] + t[1]
            V[6 * i + 5] = dq[k + 2] + t[2]
        else:
            matvec3(&R[9 * i], &h.jaxis[3 * i], a)
            S[6 * i] = a[0]
            S[6 * i + 1] = a[1]
            S[6 * i + 2] = a[2]
            cross3(&p[3 * i], a, &S[6 * i + 3])
            par = h.parent[i]
            for j in range(6):
                V[6 * i + j] = V[6 * par + j] + S[6 * i + j] * dq[k]


def fk(hand, q):
    cdef list keep = []
    cdef HandC h = _hand(hand, keep)
    cdef double* qp = _dptr(q, keep)
    R = np.empty((h.nb, 3, 3))
    p = np.empty((h.nb, 3))
    cdef double[:, :, ::1] Rv = R
    cdef double[:, ::1] pv = p
    fk_c(&h, qp, &Rv[0, 0, 0], &pv[0, 0])
    return R, p


def body_frames(hand, R, p):
    cdef list keep = []
    cdef HandC h = _hand(hand, keep)
    G = np.empty((h.nb, 3, 3))
    c = np.empty((h.nb, 3))
    cdef double[:, :, ::1] Gv = G
    cdef double[:, ::1] cv = c
    frames_c(&h, _dptr(R, keep), _dptr(p, keep), &Gv[0, 0, 0], &cv[0, 0])
    return G, c


def body_velocities(hand, R, p, dq):
    cdef list keep = []
    cdef HandC h = _hand(hand, keep)
    V = np.empty((h.nb, 6))
    S = np.empty((h.nb, 6))
    cdef double[:, ::1] Vv = V
    cdef double[:, ::1] Sv = S
    vel_c(&h, _dptr(R, keep), _dptr(p, keep), _dptr(dq, keep), &Vv[0, 0], &Sv[0, 0])
    return V, S


# ------------------------------------------------------------ signed distance

cdef double sdf_local_c(int otype, const double* od, const double* x, double* g) noexcept nogil:
    cdef double q0, q1, q2, o0, o1, o2, no, n, zc, rxy, dr, dz, ur0, ur1, uz
    cdef int k
    if otype == 0:
        q0 = fabs(x[0]) - od[0]
        q1 = fabs(x[1]) - od[1]
        q2 = fabs(x[2]) - od[2]
        o0 = q0 if q0 > 0.0 else 0.0
        o1 = q1 if q1 > 0.0 else 0.0
        o2 = q2 if q2 > 0.0 else 0.0
        no = sqrt(o0 * o0 + o1 * o1 + o2 * o2)
        if no > 0.0:
            g[0] = (1.0 if x[0] > 0.0 else (-1.0 if x[0] < 0.0 else 0.0)) * o0 / no
            g[1] = (1.0 if x[1] > 0.0 else (-1.0 if x[1] < 0.0 else 0.0)) * o1 / no
            g[2] = (1.0 if x[2] > 0.0 else (-1.0 if x[2] < 0.0 else 0.0)) * o2 / no
            return no
        k = 0
        if q1 > q0:
            k = 1
        if q2 > (q1 if k == 1 else q0):
            k = 2
        g[0] = 0.0
        g[1] = 0.0
        g[2] = 0.0
        g[k] = 1.0 if x[k] >= 0.0 else -1.0
        if k == 0:
            return q0
        if k == 1:
            return q1
        return q2
    elif otype == 1:
        n = sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])
        if n > 0.0:
            g[0] = x[0] / n
            g[1] = x[1] / n
            g[2] = x[2] / n
        else:
            g[0] = 0.0
            g[1] = 0.0
            g[2] = 1.0
        return n - od[0]
    elif otype == 2:
        zc = x[2]
        if zc < -od[1]:
            zc = -od[1]
        if zc > od[1]:
            zc = od[1]
        o0 = x[0]
        o1 = x[1]
        o2 = x[2] - zc
        n = sqrt(o0 * o0 + o1 * o1 + o2 * o2)
        if n > 0.0:
            g[0] = o0 / n
            g[1] = o1 / n
            g[2] = o2 / n
        else:
            g[0] = 1.0
            g[1] = 0.0
            g[2] = 0.0
        return n - od[0]
    else:
        rxy = hypot(x[0], x[1])
        dr = rxy - od[0]
        dz = fabs(x[2]) - od[1]
        if rxy > 0.0:
            ur0 = x[0] / rxy
            ur1 = x[1] / rxy
        else:
            ur0 = 1.0
            ur1 = 0.0
        uz = 1.0 if x[2] >= 0.0 else -1.0
        if dr > 0.0 and dz > 0.0:
            n = hypot(dr, dz)
            g[0] = dr * ur0 / n
            g[1] = dr * ur1 / n
            g[2] = dz * uz / n
            return n
        if dr >= dz:
            g[0] = ur0
            g[1] = ur1
            g[2] = 0.0
            return dr
        g[0] = 0.0
        g[1] = 0.0
        g[2] = uz
        return dz


def sdf_local(int otype, odim, x):
    if otype < 0 or otype > 3:
        raise ValueError(f"unsupported primitive code {otype}")
    cdef list keep = []
    cdef double g[3]
    cdef double d = sdf_local_c(otype, _dptr(odim, keep), _dptr(x, keep), g)
    return d, np.array([g[0], g[1], g[2]])


cdef struct ObjC:
    int otype
    double* od
    double pos[3]
    double R[9]


cdef inline double sdf_world_c(ObjC* o, const double* x, double* g) noexcept nogil:
    cdef double d[3]
    cdef double xl[3]
    cdef double gl[3]
    cdef double s
    d[0] = x[0] - o.pos[0]
    d[1] = x[1] - o.pos[1]
    d[2] = x[2] - o.pos[2]
    mattvec3(o.R, d, xl)
    s = sdf_local_c(o.otype, o.od, xl, gl)
    matvec3(o.R, gl, g)
    return s


cdef inline double seg_eval(ObjC* o, const double* a, const double* ab, double s) noexcept nogil:
    cdef double x[3]
    cdef double g[3]
    x[0] = a[0] + s * ab[0]
    x[1] = a[1] + s * ab[1]
    x[2] = a[2] + s * ab[2]
    return sdf_world_c(o, x, g)


cdef double segment_min_c(ObjC* o, const double* a, const double* b, double* out) noexcept nogil:
    cdef double ab[3]
    cdef double lo = 0.0, hi = 1.0, x1, x2, f1, f2, sm, fm, f0, fe, level, l, hh, mid, sl, sr
    cdef int it
    ab[0] = b[0] - a[0]
    ab[1] = b[1] - a[1]
    ab[2] = b[2] - a[2]
    x1 = hi - INVPHI * (hi - lo)
    x2 = lo + INVPHI * (hi - lo)
    f1 = seg_eval(o, a, ab, x1)
    f2 = seg_eval(o, a, ab, x2)
    for it in range(GOLDEN_ITERS):
        if f1 <= f2:
            hi = x2
            x2 = x1
            f2 = f1
            x1 = hi - INVPHI * (hi - lo)
            f1 = seg_eval(o, a, ab, x1)
        else:
            lo = x1
            x1 = x2
            f1 = f2
            x2 = lo + INVPHI * (hi - lo)
            f2 = seg_eval(o, a, ab, x2)
    sm = 0.5 * (lo + hi)
    fm = seg_eval(o, a, ab, sm)
    f0 = seg_eval(o, a, ab, 0.0)
    fe = seg_eval(o, a, ab, 1.0)
    if f0 < fm:
        sm = 0.0
        fm = f0
    if fe < fm:
        sm = 1.0
        fm = fe
    level = fm + FLAT_TOL
    if f0 <= level:
        sl = 0.0
    else:
        l = 0.0
        hh = sm
        for it in range(BISECT_ITERS):
            mid = 0.5 * (l + hh)
            if seg_eval(o, a, ab, mid) <= level:
                hh = mid
            else:
                l = mid
        sl = hh
    if fe <= level:
        sr = 1.0
    else:
        l = sm
        hh = 1.0
        for it in range(BISECT_ITERS):
            mid = 0.5 * (l + hh)
            if seg_eval(o, a, ab, mid) <= level:
                l = mid
            else:
                hh = mid
        sr = l
    sm = 0.5 * (sl + sr)
    out[0] = a[0] + sm * ab[0]
    out[1] = a[1] + sm * ab[1]
    out[2] = a[2] + sm * ab[2]
    return 0.0


cdef int collide_c(HandC* h, ObjC* o, const double* G, const double* c, const double* V,
                   const double* ovel, const double* oang,
                   int* body, double* pts, double* nrm, double* dep, double* vrel) noexcept nogil:
    """Fills up to ``h.nb`` contacts; returns the count."""
    cdef int i, k, n = 0, ia, ib, ic
    cdef double ext, r, hl, d, depth, best, dist
    cdef double ax[3]
    cdef double a[3]
    cdef double b[3]
    cdef double xs[3]
    cdef double g[3]
    cdef double point[3]
    cdef double lc[3]
    cdef double xw[3]
    cdef double bx[3]
    cdef double t[3]
    cdef double vo[3]
    cdef double vh[3]
    cdef double vr[3]
    cdef double vn
    cdef double* hd
    if o.otype == 0:
        ext = sqrt(o.od[0] * o.od[0] + o.od[1] * o.od[1] + o.od[2] * o.od[2])
    elif o.otype == 2 or o.otype == 3:
        ext = o.od[0] + o.od[1]
    else:
        ext = o.od[0]
        if o.od[1] > ext:
            ext = o.od[1]
        if o.od[2] > ext:
            ext = o.od[2]
    for i in range(h.nb):
        t[0] = c[3 * i] - o.pos[0]
        t[1] = c[3 * i + 1] - o.pos[1]
        t[2] = c[3 * i + 2] - o.pos[2]
        dist = sqrt(dot3(t, t))
        if h.gtype[i] == 0:
            r = h.gdim[3 * i]
            hl = h.gdim[3 * i + 1]
            if dist > ext + hl + r:
                continue
            for k in range(3):
                ax[k] = G[9 * i + 3 * k + 2] * hl
                a[k] = c[3 * i + k] - ax[k]
                b[k] = c[3 * i + k] + ax[k]
            segment_min_c(o, a, b, xs)
            d = sdf_world_c(o, xs, g)
            depth = r - d
            if depth <= 0.0:
                continue
            for k in range(3):
                point[k] = xs[k] - r * g[k]
        else:
            hd = &h.gdim[3 * i]
            if dist > ext + sqrt(hd[0] * hd[0] + hd[1] * hd[1] + hd[2] * hd[2]):
                continue
            best = 1e300
            bx[0] = c[3 * i]
            bx[1] = c[3 * i + 1]
            bx[2] = c[3 * i + 2]
            for ia in range(3):
                for ib in range(3):
                    for ic in range(3):
                        lc[0] = (ia - 1) * hd[0]
                        lc[1] = (ib - 1) * hd[1]
                        lc[2] = (ic - 1) * hd[2]
                        matvec3(&G[9 * i], lc, xw)
                        for k in range(3):
                            xw[k] += c[3 * i + k]
                        d = sdf_world_c(o, xw, g)
                        if d < best:
                            best = d
                            bx[0] = xw[0]
                            bx[1] = xw[1]
                            bx[2] = xw[2]
            t[0] = o.pos[0] - c[3 * i]
            t[1] = o.pos[1] - c[3 * i + 1]
            t[2] = o.pos[2] - c[3 * i + 2]
            mattvec3(&G[9 * i], t, lc)
            for k in range(3):
                if lc[k] < -hd[k]:
                    lc[k] = -hd[k]
                if lc[k] > hd[k]:
                    lc[k] = hd[k]
            matvec3(&G[9 * i], lc, xw)
            for k in range(3):
                xw[k] += c[3 * i + k]
            d = sdf_world_c(o, xw, g)
            if d < best:
                best = d
                bx[0] = xw[0]
                bx[1] = xw[1]
                bx[2] = xw[2]
            depth = -best
            if depth <= 0.0:
                continue
            point[0] = bx[0]
            point[1] = bx[1]
            point[2] = bx[2]
            sdf_world_c(o, point, g)
        # normal from hand into object
        for k in range(3):
            nrm[3 * n + k] = -g[k]
            pts[3 * n + k] = point[k]
            t[k] = point[k] - o.pos[k]
        cross3(oang, t, vo)
        cross3(&V[6 * i], point, vh)
        for k in range(3):
            vr[k] = ovel[k] + vo[k] - V[6 * i + 3 + k] - vh[k]
        vn = dot3(vr, &nrm[3 * n])
        for k in range(3):
            vrel[3 * n + k] = vr[k] - vn * nrm[3 * n + k]
        body[n] = i
        dep[n] = depth
        n += 1
    return n


cdef void obj_setup(ObjC* o, int otype, double* od, const double* opos, const double* oquat) noexcept nogil:
    o.otype = otype
    o.od = od
    o.pos[0] = opos[0]
    o.pos[1] = opos[1]
    o.pos[2] = opos[2]
    quat_mat(oquat, o.R)


def collide(hand, int otype, odim, q, dq, opos, oquat, ovel, oangvel):
    cdef list keep = []
    cdef HandC h = _hand(hand, keep)
    cdef ObjC o
    cdef double R[MAXB * 9]
    cdef double p[MAXB * 3]
    cdef double G[MAXB * 9]
    cdef double c[MAXB * 3]
    cdef double V[MAXB * 6]
    cdef double S[MAXB * 6]
    cdef int body[MAXB]
    cdef double pts[MAXB * 3]
    cdef double nrm[MAXB * 3]
    cdef double dep[MAXB]
    cdef double vrel[MAXB * 3]
    cdef double* qp = _dptr(q, keep)
    cdef double* dqp = _dptr(dq, keep)
    cdef int n, i
    obj_setup(&o, otype, _dptr(odim, keep), _dptr(opos, keep), _dptr(oquat, keep))
    fk_c(&h, qp, R, p)
    frames_c(&h, R, p, G, c)
    vel_c(&h, R, p, dqp, V, S)
    n = collide_c(&h, &o, G, c, V, _dptr(ovel, keep), _dptr(oangvel, keep), body, pts, nrm, dep, vrel)
    ob = np.empty(n, dtype=np.int32)
    op = np.empty((n, 3))
    on = np.empty((n, 3))
    od = np.empty(n)
    ov = np.empty((n, 3))
    for i in range(n):
        ob[i] = body[i]
        od[i] = dep[i]
        op[i] = (pts[3 * i], pts[3 * i + 1], pts[3 * i + 2])
        on[i] = (nrm[3 * i], nrm[3 * i + 1], nrm[3 * i + 2])
        ov[i] = (vrel[3 * i], vrel[3 * i + 1], vrel[3 * i + 2])
    return ob, op, on, od, ov


cdef double penalty_c(const double* n, double depth, const double* vfull, double mu,
                      double kn, double cn, double kt, double ks, const double* delta,
                      double* f) noexcept nogil:
    """Writes the force on the object; returns the (clamped at 0) normal force."""
    cdef double vn = dot3(vfull, n)
    cdef double fn = kn * depth - cn * vn
    cdef double ft[3]
    cdef double nt, dn
    cdef int k
    if fn <= 0.0:
        f[0] = 0.0
        f[1] = 0.0
        f[2] = 0.0
        return 0.0
    for k in range(3):
        ft[k] = -kt * (vfull[k] - vn * n[k])
    if delta != NULL:
        dn = dot3(delta, n)
        for k in range(3):
            ft[k] = ft[k] - ks * (delta[k] - dn * n[k])
    nt = sqrt(dot3(ft, ft))
    if nt > mu * fn:
        for k in range(3):
            ft[k] *= mu * fn / nt
    for k in range(3):
        f[k] = fn * n[k] + ft[k]
    return fn


def penalty_forces(normals, depths, vrel_full, double mu, double kn, double cn, double kt,
                   double ks=0.0, deltas=None):
    cdef list keep = []
    cdef int m = len(depths), k
    out = np.zeros((m, 3))
    if m == 0:
        return out
    cdef double[:, ::1] ov = out
    cdef double* nn = _dptr(normals, keep)
    cdef double* dd = _dptr(depths, keep)
    cdef double* vv = _dptr(vrel_full, keep)
    cdef double* de = NULL
    if deltas is not None:
        de = _dptr(deltas, keep)
    for k in range(m):
        penalty_c(&nn[3 * k], dd[k], &vv[3 * k], mu, kn, cn, kt, ks,
                  NULL if de == NULL else &de[3 * k], &ov[k, 0])
    return out


# ------------------------------------------------------------ dynamics

cdef inline void spatial_inertia_c(double m, const double* c, const double* Ic, double* I6) noexcept nogil:
    # I6 row-major 6x6: [[Ic + m C C^T, m C], [m C^T, m 1]]
    cdef double C[9]
    cdef double CCt[9]
    cdef int i, j, k
    C[0] = 0.0
    C[1] = -c[2]
    C[2] = c[1]
    C[3] = c[2]
    C[4] = 0.0
    C[5] = -c[0]
    C[6] = -c[1]
    C[7] = c[0]
    C[8] = 0.0
    for i in range(3):
        for j in range(3):
            CCt[3 * i + j] = 0.0
            for k in range(3):
                CCt[3 * i + j] += C[3 * i + k] * C[3 * j + k]
    for i in range(3):
        for j in range(3):
            I6[6 * i + j] = Ic[3 * i + j] + m * CCt[3 * i + j]
            I6[6 * i + 3 + j] = m * C[3 * i + j]
            I6[6 * (3 + i) + j] = m * C[3 * j + i]
            I6[6 * (3 + i) + 3 + j] = m if i == j else 0.0


cdef inline void mat6vec(const double* M, const double* x, double* o) noexcept nogil:
    cdef int i, j
    cdef double s
    for i in range(6):
        s = 0.0
        for j in range(6):
            s += M[6 * i + j] * x[j]
        o[i] = s


cdef inline void crm_c(const double* v, const double* m, double* o) noexcept nogil:
    cdef double t1[3]
    cdef double t2[3]
    cdef double t3[3]
    cross3(v, m, t1)
    cross3(v, &m[3], t2)
    cross3(&v[3], m, t3)
    o[0] = t1[0]
    o[1] = t1[1]
    o[2] = t1[2]
    o[3] = t2[0] + t3[0]
    o[4] = t2[1] + t3[1]
    o[5] = t2[2] + t3[2]


cdef inline void crf_c(const double* v, const double* f, double* o) noexcept nogil:
    cdef double t1[3]
    cdef double t2[3]
    cdef double t3[3]
    cross3(v, f, t1)
    cross3(&v[3], &f[3], t2)
    cross3(v, &f[3], t3)
    o[0] = t1[0] + t2[0]
    o[1] = t1[1] + t2[1]
    o[2] = t1[2] + t2[2]
    o[3] = t3[0]
    o[4] = t3[1]
    o[5] = t3[2]


cdef int aba_c(HandC* h, const double* q, const double* dq, const double* tau,
               const double* fext, double* qdd) noexcept nogil:
    cdef int nb = h.nb, i, j, k, par, col
    cdef double R[MAXB * 9]
    cdef double p[MAXB * 3]
    cdef double G[MAXB * 9]
    cdef double c[MAXB * 3]
    cdef double V[MAXB * 6]
    cdef double S[MAXB * 6]
    cdef double IA[MAXB * 36]
    cdef double pA[MAXB * 6]
    cdef double cb[MAXB * 6]
    cdef double U[MAXB * 6]
    cdef double D[MAXB]
    cdef double u[MAXB]
    cdef double a[MAXB * 6]
    cdef double Ic[9]
    cdef double T[9]
    cdef double tmp[6]
    cdef double tmp2[6]
    cdef double Ia[36]
    cdef double pa[6]
    cdef double A0[36]
    cdef double b0[6]
    cdef double x6[6]
    cdef double y6[6]
    cdef double sd[6]
    cdef double ap[6]
    cdef double s
    fk_c(h, q, R, p)
    frames_c(h, R, p, G, c)
    vel_c(h, R, p, dq, V, S)
    for i in range(nb):
        # world inertia about COM: G Ib G^T
        matmul3(&G[9 * i], &h.ibody[9 * i], T)
        for j in range(3):
            for k in range(3):
                Ic[3 * j + k] = T[3 * j] * G[9 * i + 3 * k] + T[3 * j + 1] * G[9 * i + 3 * k + 1] \
                    + T[3 * j + 2] * G[9 * i + 3 * k + 2]
        spatial_inertia_c(h.mass[i], &c[3 * i], Ic, &IA[36 * i])
        if h.jtype[i] == 0:
            k = h.qidx[i]
            cb[6 * i] = 0.0
            cb[6 * i + 1] = 0.0
            cb[6 * i + 2] = 0.0
            cross3(&dq[k], &dq[k + 3], &cb[6 * i + 3])
        else:
            for j in range(6):
                sd[j] = S[6 * i + j] * dq[h.qidx[i]]
            crm_c(&V[6 * i], sd, &cb[6 * i])
        mat6vec(&IA[36 * i], &V[6 * i], tmp)
        crf_c(&V[6 * i], tmp, &pA[6 * i])
        for j in range(6):
            pA[6 * i + j] -= fext[6 * i + j]
    for i in range(nb - 1, 0, -1):
        k = h.qidx[i]
        mat6vec(&IA[36 * i], &S[6 * i], &U[6 * i])
        s = 0.0
        for j in range(6):
            s += S[6 * i + j] * U[6 * i + j]
        D[i] = s
        s = 0.0
        for j in range(6):
            s += S[6 * i + j] * pA[6 * i + j]
        u[i] = tau[k] - s
        for j in range(6):
            for col in range(6):
                Ia[6 * j + col] = IA[36 * i + 6 * j + col] - U[6 * i + j] * U[6 * i + col] / D[i]
        mat6vec(Ia, &cb[6 * i], tmp)
        for j in range(6):
            pa[j] = pA[6 * i + j] + tmp[j] + U[6 * i + j] * (u[i] / D[i])
        par = h.parent[i]
        for j in range(36):
            IA[36 * par + j] += Ia[j]
        for j in range(6):
            pA[6 * par + j] += pa[j]
    # root: (S0^T IA S0) qdd0 = tau0 - S0^T (IA cb0 + pA0)
    for col in range(6):
        for j in range(6):
            x6[j] = 0.0
        # S0 e_col: first three gen. coords are linear velocity, last three angular
        if col < 3:
            x6[3 + col] = 1.0
        else:
            x6[col - 3] = 1.0
            sd[0] = 0.0
            sd[1] = 0.0
            sd[2] = 0.0
            sd[col - 3] = 1.0
            cross3(&p[0], sd, &x6[3])
        mat6vec(&IA[0], x6, y6)
        # S0^T y = (y_f, y_n - p x y_f)
        cross3(&p[0], &y6[3], tmp)
        for j in range(3):
            A0[6 * j + col] = y6[3 + j]
            A0[6 * (3 + j) + col] = y6[j] - tmp[j]
    mat6vec(&IA[0], &cb[0], y6)
    for j in range(6):
        y6[j] += pA[j]
    cross3(&p[0], &y6[3], tmp)
    for j in range(3):
        b0[j] = tau[j] - y6[3 + j]
        b0[3 + j] = tau[3 + j] - (y6[j] - tmp[j])
    if solve_dense(A0, b0, 6) != 0:
        return 1
    for j in range(6):
        qdd[j] = b0[j]
    # a0 = S0 qdd0 + cb0
    cross3(&p[0], &b0[3], tmp)
    a[0] = b0[3] + cb[0]
    a[1] = b0[4] + cb[1]
    a[2] = b0[5] + cb[2]
    a[3] = b0[0] + tmp[0] + cb[3]
    a[4] = b0[1] + tmp[1] + cb[4]
    a[5] = b0[2] + tmp[2] + cb[5]
    for i in range(1, nb):
        k = h.qidx[i]
        par = h.parent[i]
        for j in range(6):
            ap[j] = a[6 * par + j] + cb[6 * i + j]
        s = 0.0
        for j in range(6):
            s += U[6 * i + j] * ap[j]
        qdd[k] = (u[i] - s) / D[i]
        for j in range(6):
            a[6 * i + j] = ap[j] + S[6 * i + j] * qdd[k]
    return 0


def aba(hand, q, dq, tau, fext):
    cdef list keep = []
    cdef HandC h = _hand(hand, keep)
    qdd = np.zeros(h.nq)
    cdef double[::1] qv = qdd
    if aba_c(&h, _dptr(q, keep), _dptr(dq, keep), _dptr(tau, keep), _dptr(fext, keep), &qv[0]) != 0:
        raise np.linalg.LinAlgError("singular root articulated inertia")
    return qdd


# ------------------------------------------------------------ stepping

cdef struct SysC:
    double q[MAXQ]
    double dq[MAXQ]
    double Rroot[9]
    double opos[3]
    double oquat[4]
    double ovel[3]
    double L[3]
    double anchors[MAXB * 7]


cdef struct CInfo:
    # per-contact data from the latest acceleration evaluation
    int n
    int body[MAXB]
    int has_delta[MAXB]
    double pts[MAXB * 3]
    double nrm[MAXB * 3]
    double fn[MAXB]
    double delta[MAXB * 3]
    double R[MAXB * 9]
    double p[MAXB * 3]
    double orot[9]


cdef void obj_angvel(const double* oquat, const double* Ib, const double* L, double* w) noexcept nogil:
    cdef double R[9]
    cdef double Lb[3]
    cdef double A[9]
    # w = R Ib^-1 R^T L
    quat_mat(oquat, R)
    mattvec3(R, L, Lb)
    memcpy(A, Ib, 9 * sizeof(double))
    solve_dense(A, Lb, 3)
    matvec3(R, Lb, w)


cdef int accel_c(HandC* h, int otype, double* od, double omass, const double* Ib, double mu,
                 const double* wp, SysC* s, int mode, const double* u, const double* fc,
                 const double* tc, double* qdd, double* oacc, double* Ldot, CInfo* ci) noexcept nogil:
    cdef int nb = h.nb, nq = h.nq, i, k, n, b
    cdef double q[MAXQ]
    cdef double tau[MAXQ]
    cdef double G[MAXB * 9]
    cdef double c[MAXB * 3]
    cdef double V[MAXB * 6]
    cdef double S[MAXB * 6]
    cdef double fext[MAXB * 6]
    cdef double dep[MAXB]
    cdef double vrel[MAXB * 3]
    cdef double oang[3]
    cdef double F[3]
    cdef double T[3]
    cdef double fg[3]
    cdef double t[3]
    cdef double t2[3]
    cdef double vf[3]
    cdef double fo[3]
    cdef double* R = ci.R
    cdef double* p = ci.p
    cdef double* a
    cdef ObjC o
    memcpy(q, s.q, nq * sizeof(double))
    mat_expmap(s.Rroot, &q[3])
    obj_angvel(s.oquat, Ib, s.L, oang)
    fk_c(h, q, R, p)
    frames_c(h, R, p, G, c)
    vel_c(h, R, p, s.dq, V, S)
    for i in range(nb):
        for k in range(3):
            fg[k] = h.mass[i] * wp[k]
        cross3(&c[3 * i], fg, &fext[6 * i])
        fext[6 * i + 3] = fg[0]
        fext[6 * i + 4] = fg[1]
        fext[6 * i + 5] = fg[2]
    for k in range(3):
        F[k] = omass * wp[k] + fc[k]
        T[k] = tc[k]
    obj_setup(&o, otype, od, s.opos, s.oquat)
    memcpy(ci.orot, o.R, 9 * sizeof(double))
    n = collide_c(h, &o, G, c, V, s.ovel, oang, ci.body, ci.pts, ci.nrm, dep, vrel)
    ci.n = n
    for k in range(n):
        b = ci.body[k]
        for i in range(3):
            t[i] = ci.pts[3 * k + i] - s.opos[i]
        cross3(oang, t, vf)
        cross3(&V[6 * b], &ci.pts[3 * k], t2)
        for i in range(3):
            vf[i] = s.ovel[i] + vf[i] - V[6 * b + 3 + i] - t2[i]
        a = &s.anchors[7 * b]
        ci.has_delta[k] = 1 if a[0] != 0.0 else 0
        if ci.has_delta[k]:
            matvec3(o.R, &a[1], t2)
            matvec3(&R[9 * b], &a[4], fg)
            for i in range(3):
                ci.delta[3 * k + i] = (s.opos[i] + t2[i]) - (p[3 * b + i] + fg[i])
        ci.fn[k] = penalty_c(&ci.nrm[3 * k], dep[k], vf, mu, wp[4], wp[5], wp[6], wp[9],
                             &ci.delta[3 * k] if ci.has_delta[k] else NULL, fo)
        for i in range(3):
            F[i] += fo[i]
        cross3(t, fo, t2)
        for i in range(3):
            T[i] += t2[i]
        cross3(&ci.pts[3 * k], fo, t2)
        for i in range(3):
            fext[6 * b + i] -= t2[i]
            fext[6 * b + 3 + i] -= fo[i]
    for i in range(nq):
        if mode == 1:
            tau[i] = h.kp[i] * (u[i] - q[i]) - h.kd[i] * s.dq[i]
        else:
            tau[i] = u[i]
        if tau[i] > h.tlim[i]:
            tau[i] = h.tlim[i]
        elif tau[i] < -h.tlim[i]:
            tau[i] = -h.tlim[i]
    if aba_c(h, q, s.dq, tau, fext, qdd) != 0:
        return 1
    for k in range(3):
        oacc[k] = F[k] / omass
        Ldot[k] = T[k]
    return 0


cdef void update_anchors_c(HandC* h, SysC* s, CInfo* ci, double mu, double ks) noexcept nogil:
    cdef double new[MAXB * 7]
    cdef double hp[3]
    cdef double dn[3]
    cdef double dt[3]
    cdef double t[3]
    cdef double w[3]
    cdef double dnn, lim, st
    cdef int k, i, j
    cdef double* n
    memset(new, 0, h.nb * 7 * sizeof(double))
    for k in range(ci.n):
        i = ci.body[k]
        n = &ci.nrm[3 * k]
        if ci.has_delta[k]:
            matvec3(&ci.R[9 * i], &s.anchors[7 * i + 4], t)
            dnn = dot3(&ci.delta[3 * k], n)
            for j in range(3):
                hp[j] = ci.p[3 * i + j] + t[j]
                dn[j] = dnn * n[j]
                dt[j] = ci.delta[3 * k + j] - dn[j]
            lim = mu * ci.fn[k]
            st = ks * sqrt(dot3(dt, dt))
            if st > lim:
                for j in range(3):
                    dt[j] = dt[j] * (lim / st)
            for j in range(7):
                new[7 * i + j] = s.anchors[7 * i + j]
            for j in range(3):
                w[j] = hp[j] + dn[j] + dt[j] - s.opos[j]
            mattvec3(ci.orot, w, &new[7 * i + 1])
        else:
            new[7 * i] = 1.0
            for j in range(3):
                w[j] = ci.pts[3 * k + j] - s.opos[j]
                t[j] = ci.pts[3 * k + j] - ci.p[3 * i + j]
            mattvec3(ci.orot, w, &new[7 * i + 1])
            mattvec3(&ci.R[9 * i], t, &new[7 * i + 4])
    memcpy(s.anchors, new, h.nb * 7 * sizeof(double))


def advance(hand, int otype, odim, double omass, oinertia, double mu, wp, int n_sub,
            double[::1] q, double[::1] dq, double[::1] opos, double[::1] oquat,
            double[::1] ovel, double[::1] oangvel, double[:, ::1] anchors, int mode, u, fc, tc):
    cdef list keep = []
    cdef HandC h = _hand(hand, keep)
    cdef double* od = _dptr(odim, keep)
    cdef double* Ib = _dptr(oinertia, keep)
    cdef double* w = _dptr(wp, keep)
    cdef double* up_in = _dptr(u, keep)
    cdef double* fcp = _dptr(fc, keep)
    cdef double* tcp = _dptr(tc, keep)
    cdef SysC s
    cdef CInfo ci
    cdef double uu[MAXQ]
    cdef double fcc[3]
    cdef double tcc[3]
    cdef double qdd[MAXQ]
    cdef double oacc[3]
    cdef double Ldot[3]
    cdef double R[9]
    cdef double r[3]
    cdef double dR[9]
    cdef double dqq[4]
    cdef double oang[3]
    cdef double hstep = w[3]
    cdef int nq = h.nq, nb = h.nb, i, k, step, bad = 0
    if anchors.shape[0] != nb or anchors.shape[1] != 7:
        raise ValueError("anchors must have shape (nb, 7)")
    if len(wp) < 10:
        raise ValueError("world parameters need 10 entries")
    with nogil:
        for i in range(3):
            fcc[i] = fcp[i]
            if fcc[i] > w[7]:
                fcc[i] = w[7]
            elif fcc[i] < -w[7]:
                fcc[i] = -w[7]
            tcc[i] = tcp[i]
            if tcc[i] > w[8]:
                tcc[i] = w[8]
            elif tcc[i] < -w[8]:
                tcc[i] = -w[8]
        for i in range(nq):
            uu[i] = up_in[i]
            if mode == 1:
                if uu[i] < h.qlo[i]:
                    uu[i] = h.qlo[i]
                if uu[i] > h.qhi[i]:
                    uu[i] = h.qhi[i]
            s.q[i] = q[i]
            s.dq[i] = dq[i]
        for i in range(nb):
            for k in range(7):
                s.anchors[7 * i + k] = anchors[i, k]
        expmap_mat(&q[3], s.Rroot)
        for i in range(3):
            s.opos[i] = opos[i]
            s.ovel[i] = ovel[i]
        for i in range(4):
            s.oquat[i] = oquat[i]
        # L = R Ib R^T w
        quat_mat(s.oquat, R)
        mattvec3(R, &oangvel[0], r)
        matvec3(Ib, r, dqq)
        matvec3(R, dqq, s.L)
        if accel_c(&h, otype, od, omass, Ib, mu, w, &s, mode, uu, fcc, tcc, qdd, oacc, Ldot, &ci) != 0:
            bad = 1
        step = 0
        while step < n_sub and bad == 0:
            for i in range(nq):
                s.dq[i] += 0.5 * hstep * qdd[i]
            for i in range(3):
                s.ovel[i] += 0.5 * hstep * oacc[i]
                s.L[i] += 0.5 * hstep * Ldot[i]
            obj_angvel(s.oquat, Ib, s.L, oang)
            for i in range(3):
                s.q[i] += hstep * s.dq[i]
                r[i] = hstep * s.dq[3 + i]
            expmap_mat(r, dR)
            matmul3(dR, s.Rroot, s.Rroot)
            for i in range(6, nq):
                s.q[i] += hstep * s.dq[i]
            for i in range(3):
                s.opos[i] += hstep * s.ovel[i]
                r[i] = hstep * oang[i]
            expmap_quat(r, dqq)
            quat_mul_c(dqq, s.oquat, s.oquat)
            quat_normalize_c(s.oquat)
            if accel_c(&h, otype, od, omass, Ib, mu, w, &s, mode, uu, fcc, tcc, qdd, oacc, Ldot, &ci) != 0:
                bad = 1
                break
            for i in range(nq):
                s.dq[i] += 0.5 * hstep * qdd[i]
            for i in range(3):
                s.ovel[i] += 0.5 * hstep * oacc[i]
                s.L[i] += 0.5 * hstep * Ldot[i]
            update_anchors_c(&h, &s, &ci, mu, w[9])
            step += 1
        if bad == 0:
            obj_angvel(s.oquat, Ib, s.L, oang)
            mat_expmap(s.Rroot, &s.q[3])
            for i in range(nq):
                if not (isfinite(s.q[i]) and isfinite(s.dq[i])):
                    bad = 1
            for i in range(3):
                if not (isfinite(s.opos[i]) and isfinite(s.ovel[i]) and isfinite(oang[i])):
                    bad = 1
            for i in range(7 * nb):
                if not isfinite(s.anchors[i]):
                    bad = 1
    if bad:
        return FAULT
    for i in range(nq):
        q[i] = s.q[i]
        dq[i] = s.dq[i]
    for i in range(3):
        opos[i] = s.opos[i]
        ovel[i] = s.ovel[i]
        oangvel[i] = oang[i]
    for i in range(4):
        oquat[i] = s.oquat[i]
    for i in range(nb):
        for k in range(7):
            anchors[i, k] = s.anchors[7 * i + k]
    return OK


# ------------------------------------------------------------ QP

cdef double kkt_c(const double* x, const double* g, int n) noexcept nogil:
    cdef double m = 0.0, v
    cdef int j
    for j in range(n):
        v = x[j] if x[j] < g[j] else g[j]
        v = fabs(v)
        if v > m:
            m = v
    return m


cdef int cholesky_c(double* A, int n) noexcept nogil:
    """In-place lower Cholesky factor; returns 1 if not positive definite."""
    cdef int i, j, k
    cdef double s
    for j in range(n):
        s = A[j * n + j]
        for k in range(j):
            s -= A[j * n + k] * A[j * n + k]
        if s <= 0.0:
            return 1
        A[j * n + j] = sqrt(s)
        for i in range(j + 1, n):
            s = A[i * n + j]
            for k in range(j):
                s -= A[i * n + k] * A[j * n + k]
            A[i * n + j] = s / A[j * n + j]
    return 0


cdef void chol_solve_c(const double* L, double* b, int n) noexcept nogil:
    cdef int i, k
    cdef double s
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i * n + k] * b[k]
        b[i] = s / L[i * n + i]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, n):
            s -= L[k * n + i] * b[k]
        b[i] = s / L[i * n + i]


cdef int active_set_c(const double* H, const double* g, double* x, int n, double tol,
                      int max_solves, double* work, int* idx, double* z, char* free_) noexcept nogil:
    cdef int solves = 0, m, a, b, hit, added = -1, j
    cdef double t, ratio, d, v, best
    for a in range(n):
        free_[a] = 1 if x[a] > 0.0 else 0
    while solves < max_solves:
        m = 0
        for a in range(n):
            if free_[a]:
                idx[m] = a
                m += 1
        if m > 0:
            for a in range(m):
                for b in range(m):
                    work[a * m + b] = H[idx[a] * n + idx[b]]
                z[a] = -g[idx[a]]
            if cholesky_c(work, m) != 0:
                return solves
            chol_solve_c(work, z, m)
            solves += 1
            t = 1.0
            hit = -1
            for a in range(m):
                d = z[a] - x[idx[a]]
                if d < 0.0:
                    ratio = x[idx[a]] / -d
                    if ratio < t:
                        t = ratio
                        hit = a
            if hit >= 0 and t == 0.0 and idx[hit] == added:
                return solves
            for a in range(m):
                x[idx[a]] = x[idx[a]] + t * (z[a] - x[idx[a]])
                if x[idx[a]] < 0.0:
                    x[idx[a]] = 0.0
            if hit >= 0:
                x[idx[hit]] = 0.0
                free_[idx[hit]] = 0
                continue
        j = -1
        best = 0.0
        for a in range(n):
            if not free_[a]:
                v = g[a]
                for b in range(n):
                    v += H[a * n + b] * x[b]
                if j < 0 or v < best:
                    best = v
                    j = a
        if j < 0 or best >= -tol:
            return solves
        free_[j] = 1
        added = j
    return solves


def qp_pgbb(H, g, double tol=1e-10, int max_iter=10000, x0=None, int pg_steps=20):
    cdef list keep = []
    cdef int n = len(g)
    if n == 0:
        return np.zeros(0), 0, True
    cdef double* Hp = _dptr(H, keep)
    cdef double* gp = _dptr(g, keep)
    xa = np.zeros(n) if x0 is None else np.maximum(np.asarray(x0, dtype=np.float64), 0.0)
    xa = np.ascontiguousarray(xa)
    cdef double[::1] xv = xa
    cdef double* x = &xv[0]
    cdef double* grad = <double*> malloc(n * sizeof(double))
    cdef double* d = <double*> malloc(n * sizeof(double))
    cdef double* Hd = <double*> malloc(n * sizeof(double))
    cdef double* z = <double*> malloc(n * sizeof(double))
    cdef double* work = <double*> malloc(n * n * sizeof(double))
    cdef int* idx = <int*> malloc(n * sizeof(int))
    cdef char* free_ = <char*> malloc(n)
    cdef double alpha, rs, gd, dHd, t, ss, sy, v
    cdef int it = 0, k, a, b, conv = 0
    with nogil:
        alpha = 0.0
        for a in range(n):
            rs = 0.0
            for b in range(n):
                rs += fabs(Hp[a * n + b])
            if rs > alpha:
                alpha = rs
        alpha = 1.0 / (alpha if alpha > 1e-300 else 1e-300)
        while True:
            for a in range(n):
                v = gp[a]
                for b in range(n):
                    v += Hp[a * n + b] * x[b]
                grad[a] = v
            if kkt_c(x, grad, n) <= tol:
                conv = 1
                break
            if it >= max_iter:
                break
            for k in range(pg_steps):
                gd = 0.0
                for a in range(n):
                    v = x[a] - alpha * grad[a]
                    if v < 0.0:
                        v = 0.0
                    d[a] = v - x[a]
                    gd += grad[a] * d[a]
                if gd >= 0.0:
                    break
                dHd = 0.0
                for a in range(n):
                    v = 0.0
                    for b in range(n):
                        v += Hp[a * n + b] * d[b]
                    Hd[a] = v
                    dHd += d[a] * v
                t = 1.0
                if dHd > 0.0:
                    t = -gd / dHd
                    if t > 1.0:
                        t = 1.0
                ss = 0.0
                sy = 0.0
                for a in range(n):
                    x[a] += t * d[a]
                    if x[a] < 0.0:
                        x[a] = 0.0
                    grad[a] += t * Hd[a]
                    ss += t * t * d[a] * d[a]
                    sy += t * t * d[a] * Hd[a]
                alpha = ss / sy if sy > 0.0 else 1e10
                if alpha < 1e-12:
                    alpha = 1e-12
                if alpha > 1e12:
                    alpha = 1e12
                it += 1
            it += active_set_c(Hp, gp, x, n, tol, max_iter - it if max_iter - it > 1 else 1,
                               work, idx, z, free_)
    free(grad)
    free(d)
    free(Hd)
    free(z)
    free(work)
    free(idx)
    free(free_)
    return xa, it, bool(conv)
