"""The 25-joint Kinect-v2 skeleton layout and the upper-body subset we model.

Only six joints carry the signal for word-level signing: both wrists,
elbows and shoulders.  The wrist (not hand or hand-tip) joints stand in
for "wrist" throughout, both for 3D trajectories and 2D patch centers.
"""

from enum import IntEnum


class JointId(IntEnum):
    SPINE_BASE = 0
    SPINE_MID = 1
    NECK = 2
    HEAD = 3
    SHOULDER_LEFT = 4
    ELBOW_LEFT = 5
    WRIST_LEFT = 6
    HAND_LEFT = 7
    SHOULDER_RIGHT = 8
    ELBOW_RIGHT = 9
    WRIST_RIGHT = 10
    HAND_RIGHT = 11
    HIP_LEFT = 12
    KNEE_LEFT = 13
    ANKLE_LEFT = 14
    FOOT_LEFT = 15
    HIP_RIGHT = 16
    KNEE_RIGHT = 17
    ANKLE_RIGHT = 18
    FOOT_RIGHT = 19
    SPINE_SHOULDER = 20
    HAND_TIP_LEFT = 21
    THUMB_LEFT = 22
    HAND_TIP_RIGHT = 23
    THUMB_RIGHT = 24


NUM_JOINTS = 25

# Canonical model-input order: wrists first, then elbows, then shoulders.
UPPER_BODY_JOINTS = (
    JointId.WRIST_LEFT,
    JointId.WRIST_RIGHT,
    JointId.ELBOW_LEFT,
    JointId.ELBOW_RIGHT,
    JointId.SHOULDER_LEFT,
    JointId.SHOULDER_RIGHT,
)
