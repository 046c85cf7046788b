"""Ready-made scenes.

``two_finger_box`` is the toy lift setup: a box palm carrying two opposed
single-hinge capsule fingers that pinch a 5 cm cube. Its grasp closes the
fingers until each reference fingertip sinks ``squeeze`` metres into the
cube face, which is roughly what a vision estimate of a pinch reports.
"""
import numpy as np

from .model import Joint, HandModel, ObjectModel, WorldConfig, Scene, Grasp

FINGER_X = 0.033
FINGER_RADIUS = 0.008
FINGER_HALF = 0.03
CUBE_HALF = 0.025


def two_finger_hand(finger_kp=2.0, finger_kd=0.01):
    root_kp = np.array([2000.0, 2000.0, 2000.0, 5.0, 5.0, 5.0])
    root_kd = np.array([40.0, 40.0, 40.0, 0.05, 0.05, 0.05])
    root_lim = np.array([20.0, 20.0, 20.0, 2.0, 2.0, 2.0])
    joints = [Joint("palm", -1, "free", "box", (0.04, 0.02, 0.01), 0.3, root_kp, root_kd, root_lim)]
    for name, sx in (("finger_r", 1.0), ("finger_l", -1.0)):
        joints.append(Joint(
            name, 0, "hinge", "capsule", (FINGER_RADIUS, FINGER_HALF), 0.04,
            np.array([finger_kp]), np.array([finger_kd]), np.array([1.0]),
            axis=np.array([0.0, sx, 0.0]), pos=np.array([sx * FINGER_X, 0.0, -0.01]),
            body_pos=np.array([0.0, 0.0, -FINGER_HALF]), limits=(-0.6, 0.6)))
    return HandModel(joints)


def two_finger_box(squeeze=0.001, mass=0.1, friction=1.0):
    """Pinch grasp of a cube hanging below the palm (root at the origin)."""
    hand = two_finger_hand()
    tip = 2.0 * FINGER_HALF
    gap = FINGER_X - FINGER_RADIUS - CUBE_HALF
    # rotating a finger by theta moves its tip sphere inward by tip * sin(theta)
    theta = float(np.arcsin((gap + squeeze) / tip))
    q = np.zeros(hand.nq)
    q[6:8] = theta
    obj_z = -0.05
    obj = ObjectModel("box", (CUBE_HALF,) * 3, mass, friction=friction)
    grasp = Grasp(q, [0.0, 0.0, obj_z], [1.0, 0.0, 0.0, 0.0])
    return Scene(hand, obj, WorldConfig(), grasp)
