"""Motion-capture ground-truth composition.

A marker body is rigidly attached to the object; the fixed transform
between the object's local frame and that marker body is solved once from
a calibration frame where the object-in-camera pose is trusted, then
composed with per-frame mocap readings to produce ground-truth object
poses in the camera frame.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError
from .se3 import Pose, Rotation, compose, inverse


@dataclass
class MocapFrame:
    """Mocap readings: object body and camera body in the mocap world."""

    t_ob_m: Pose
    t_cb_m: Pose
    frame_index: int = 0


@dataclass
class HandEye:
    """Camera optical frame in the camera marker body."""

    t_c_cb: Pose


def solve_object_offset(frame, handeye, t_o_c):
    """Fixed object-to-marker-body transform from one trusted frame.

    T_O_OB = T_OB_M^-1 T_CB_M T_C_CB T_O_C
    """
    return compose(
        inverse(frame.t_ob_m),
        compose(frame.t_cb_m, compose(handeye.t_c_cb, t_o_c)))


def gt_object_pose(frame, handeye, offset):
    """Ground-truth object pose in the camera frame for one mocap frame.

    T_O_C = T_C_CB^-1 T_CB_M^-1 T_OB_M T_O_OB
    """
    return compose(
        inverse(handeye.t_c_cb),
        compose(inverse(frame.t_cb_m), compose(frame.t_ob_m, offset)))


def solve_object_offset_multi(frames, handeye, t_o_c_list):
    """Average the per-frame offset solutions for noisy mocap streams.

    Quaternion eigenvector mean plus arithmetic translation mean.
    """
    if not frames:
        raise InsufficientDataError("no calibration frames given")
    if len(frames) != len(t_o_c_list):
        raise InsufficientDataError(
            "one trusted object pose required per calibration frame")
    offsets = [solve_object_offset(f, handeye, t)
               for f, t in zip(frames, t_o_c_list)]
    translations = np.mean([o.translation for o in offsets], axis=0)
    acc = np.zeros((4, 4))
    for o in offsets:
        q = o.rotation.q
        acc += np.outer(q, q)
    _, vecs = np.linalg.eigh(acc)
    mean_q = vecs[:, -1]
    return Pose(Rotation(mean_q), translations)
