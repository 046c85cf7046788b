"""Time the compiled kernels against the numpy reference kernels.

    python benchmarks/bench_kernels.py [--repeat N]

Prints microseconds per call for each kernel and backend, plus the
speed-up. Kernels missing from the compiled build are reported as such.
"""
import argparse
import timeit

import numpy as np

from hoilab import _kernels_py
from hoilab.contact.surface import (ContactSet, assemble_qp, extend_contacts, friction_basis,
                                   target_wrench)
from hoilab.sim.model import ObjectState
from hoilab.sim.presets import two_finger_box

try:
    from hoilab import _kernels
except ImportError:
    _kernels = None


def cases(scene):
    """Name and argument-builder pairs; builders return fresh arrays."""
    h = scene.hand.packed()
    g = scene.grasp
    obj = scene.obj
    q = np.array(g.q, float)
    dq = np.zeros_like(q)
    opos = np.array(g.obj_pos, float)
    oquat = np.array(g.obj_quat, float)
    R, p = _kernels_py.fk(h, q)
    rng = np.random.default_rng(0)
    nb = scene.hand.nb
    qp = _qp_problem(scene)

    def advance_args():
        return (h, obj.code, obj.dims(), obj.mass, obj.inertia, obj.friction,
                scene.world.packed(), scene.world.substeps, q.copy(), dq.copy(), opos.copy(),
                oquat.copy(), np.zeros(3), np.zeros(3), np.zeros((nb, 7)), 1, q.copy(),
                np.zeros(3), np.zeros(3))

    return [
        ("fk", lambda: (h, q)),
        ("body_velocities", lambda: (h, R, p, dq)),
        ("sdf_local", lambda: (obj.code, obj.dims(), np.array([0.01, 0.02, 0.03]))),
        ("collide", lambda: (h, obj.code, obj.dims(), q, dq, opos, oquat, np.zeros(3),
                             np.zeros(3))),
        ("aba", lambda: (h, q, dq, rng.normal(size=len(q)), np.zeros((nb, 6)))),
        ("advance", advance_args),
        ("qp_pgbb", lambda: (qp[0], qp[1], 1e-10, 10000)),
    ]


def _qp_problem(scene):
    """A three-contact QP: the preset box held from both sides and below."""
    obj = scene.obj
    h = np.asarray(obj.dims())
    pts = np.array([[h[0], 0, 0], [-h[0], 0, 0], [0, 0, -h[2]]])
    nrm = np.array([[-1.0, 0, 0], [1.0, 0, 0], [0, 0, 1.0]])
    contacts = ContactSet(pts, nrm, np.zeros(3), np.zeros((3, 3)), rel_angvel=np.zeros((3, 3)))
    state = ObjectState(np.zeros(3), np.array([1.0, 0, 0, 0]))
    ext = extend_contacts(contacts)
    bases = [friction_basis(nrm[j // 5], obj.friction) for j in range(len(ext))]
    prob = assemble_qp(ext, bases, target_wrench(obj, state, scene.world.gravity), state.pos)
    return prob.H, prob.g


def bench(fn, make_args, repeat):
    args = make_args()
    fn(*args)
    n = max(1, repeat)
    return 1e6 * min(timeit.repeat(lambda: fn(*make_args()), number=n, repeat=3)) / n


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args(argv)
    scene = two_finger_box()
    print(f"{'kernel':<16} {'python us':>12} {'cython us':>12} {'speed-up':>9}")
    for name, make in cases(scene):
        t_py = bench(getattr(_kernels_py, name), make, args.repeat)
        if _kernels is None or not hasattr(_kernels, name):
            print(f"{name:<16} {t_py:12.1f} {'n/a':>12} {'':>9}")
            continue
        t_cy = bench(getattr(_kernels, name), make, args.repeat)
        print(f"{name:<16} {t_py:12.1f} {t_cy:12.1f} {t_py / t_cy:8.1f}x")


if __name__ == "__main__":
    main()
