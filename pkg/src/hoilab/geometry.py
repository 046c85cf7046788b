"""Small rotation helpers shared by the simulator, rewards and metrics.

Quaternions are stored as ``(w, x, y, z)`` float arrays. Rotation vectors
(exponential coordinates) are axis * angle with the angle in radians.
"""
import numpy as np

_EPS = 1e-12


def skew(v):
    """Cross-product matrix ``[v]x`` so that ``skew(a) @ b == cross(a, b)``."""
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def cross3(a, b):
    """Cross product of two 3-vectors (much cheaper than ``np.cross`` for one pair)."""
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    n = np.sqrt(q @ q)
    if n < _EPS:
        raise ValueError("cannot normalize a zero quaternion")
    return q / n


def quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_mat(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def mat_to_quat(R):
    """Shepperd's method; returns the representative with ``w >= 0``."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s,
                      (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s,
                      0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    if q[0] < 0.0:
        q = -q
    return quat_normalize(q)


def expmap_to_mat(r):
    """Rodrigues' formula for a rotation vector."""
    r = np.asarray(r, dtype=float)
    theta = np.sqrt(r @ r)
    K = skew(r)
    if theta < 1e-8:
        # second-order series keeps the map smooth at the origin
        return np.eye(3) + K + 0.5 * (K @ K)
    return (np.eye(3) + (np.sin(theta) / theta) * K
            + ((1.0 - np.cos(theta)) / (theta * theta)) * (K @ K))


def expmap_to_quat(r):
    r = np.asarray(r, dtype=float)
    theta = np.sqrt(r @ r)
    if theta < 1e-8:
        return quat_normalize(np.array([1.0, 0.5 * r[0], 0.5 * r[1], 0.5 * r[2]]))
    s = np.sin(0.5 * theta) / theta
    return np.array([np.cos(0.5 * theta), s * r[0], s * r[1], s * r[2]])


def quat_to_expmap(q):
    q = quat_normalize(q)
    if q[0] < 0.0:
        q = -q
    v = q[1:]
    sn = np.sqrt(v @ v)
    if sn < 1e-12:
        return 2.0 * v
    angle = 2.0 * np.arctan2(sn, q[0])
    return v * (angle / sn)


def mat_to_expmap(R):
    return quat_to_expmap(mat_to_quat(R))


def rotation_angle(R):
    """Geodesic angle of a rotation matrix, in ``[0, pi]``."""
    c = 0.5 * (np.trace(R) - 1.0)
    # arccos loses precision near 0 and pi; the atan2 form does not
    s = 0.5 * np.linalg.norm([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return float(np.arctan2(s, c))


def quat_angle(qa, qb):
    """Geodesic angle between two unit quaternions."""
    v = quat_mul(quat_conj(qa), qb)
    return float(2.0 * np.arctan2(np.linalg.norm(v[1:]), abs(v[0])))


def integrate_quat(q, omega, dt):
    """Advance ``q`` by a constant world-frame angular velocity for ``dt``."""
    return quat_normalize(quat_mul(expmap_to_quat(np.asarray(omega) * dt), q))


def tangent_frame(n):
    """Deterministic orthonormal tangents ``(t1, t2)`` for a unit normal.

    The smallest-magnitude world axis is crossed with ``n`` and the result
    re-orthogonalized, so the frame is a fixed function of ``n``.
    """
    n = np.asarray(n, dtype=float)
    k = int(np.argmin(np.abs(n)))
    e = np.zeros(3)
    e[k] = 1.0
    t1 = cross3(e, n)
    t1 = t1 - (t1 @ n) * n
    t1 /= np.sqrt(t1 @ t1)
    t2 = cross3(n, t1)
    return t1, t2
