import numpy as np
import pytest

from hoilab.sim.model import Joint, HandModel, ObjectModel, WorldConfig, Scene, ObjectState


def chain_hand(link=0.1, hinge_axis=(0.0, 0.0, 1.0)):
    """Box root plus one hinge whose joint sits ``link`` metres along x."""
    root = Joint("root", -1, "free", "box", (0.02, 0.02, 0.02), 0.5, np.full(6, 50.0),
                 np.full(6, 2.0), np.full(6, 50.0))
    child = Joint("link", 0, "hinge", "capsule", (0.01, 0.04), 0.1, np.array([5.0]),
                  np.array([0.1]), np.array([5.0]), axis=np.array(hinge_axis),
                  pos=np.array([link, 0.0, 0.0]), body_pos=np.array([0.05, 0.0, 0.0]),
                  body_axis=np.array([1.0, 0.0, 0.0]))
    return HandModel([root, child])


def far_scene(obj=None, gravity=(0.0, 0.0, -9.81), hand=None):
    """Scene whose hand sits 10 m away from the object: no contacts ever."""
    obj = obj or ObjectModel("box", (0.05, 0.05, 0.05), 1.0)
    return Scene(hand or chain_hand(), obj, WorldConfig(gravity=np.array(gravity)))


def hand_far(model, z=10.0):
    from hoilab.sim.model import HandState
    q = np.zeros(model.nq)
    q[2] = z
    return HandState(q, np.zeros(model.nq))


def obj_at(pos=(0.0, 0.0, 0.0), quat=(1.0, 0.0, 0.0, 0.0), vel=(0, 0, 0), angvel=(0, 0, 0)):
    return ObjectState(np.array(pos, float), np.array(quat, float), np.array(vel, float),
                       np.array(angvel, float))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
