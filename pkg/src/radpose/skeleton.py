"""26-keypoint skeleton taxonomy, body-part groups, and scripted motions.

Coordinate frame: radar at the origin, +y boresight (depth into the room),
+x lateral, +z up. All positions in meters.
"""

from __future__ import annotations

import numpy as np

from .rng import Rng

KEYPOINT_NAMES = (
    "Hips",
    "RightHip",
    "RightKnee",
    "RightHeel",
    "RightFootCenter",
    "RightFootEnd",
    "LeftHip",
    "LeftKnee",
    "LeftHeel",
    "LeftFootCenter",
    "LeftFootEnd",
    "Spine",
    "Spine1",
    "RightNeck",
    "RightShoulder",
    "RightForeArm",
    "RightHand",
    "RightHandEnd",
    "LeftNeck",
    "LeftShoulder",
    "LeftForeArm",
    "LeftHand",
    "LeftHandEnd",
    "Neck",
    "Head",
    "HeadEnd",
)

N_KEYPOINTS = len(KEYPOINT_NAMES)
KEYPOINT_INDEX = {name: i for i, name in enumerate(KEYPOINT_NAMES)}

BODY_GROUPS = {
    "body_center": (0, 11, 12, 23, 24, 25),
    "right_leg": (1, 2, 3, 4, 5),
    "left_leg": (6, 7, 8, 9, 10),
    "right_arm": (13, 14, 15, 16, 17),
    "left_arm": (18, 19, 20, 21, 22),
}

ACTIVITY_NAMES = (
    "left_limb_extension",
    "right_limb_extension",
    "bilateral_limb_extension",
    "bicep_curls",
    "front_arm_rotation",
    "trunk_forward_bending",
    "left_front_lunge",
    "right_front_lunge",
    "squats",
)

N_ACTIVITIES = len(ACTIVITY_NAMES)

# Standing reference pose in the subject-local frame (x lateral, y depth, z up).
_BASE_POSE = np.array(
    [
        [0.00, 0.00, 0.95],   # Hips
        [0.12, 0.00, 0.92],   # RightHip
        [0.13, 0.00, 0.52],   # RightKnee
        [0.14, -0.03, 0.08],  # RightHeel
        [0.14, 0.07, 0.04],   # RightFootCenter
        [0.14, 0.14, 0.03],   # RightFootEnd
        [-0.12, 0.00, 0.92],  # LeftHip
        [-0.13, 0.00, 0.52],  # LeftKnee
        [-0.14, -0.03, 0.08],  # LeftHeel
        [-0.14, 0.07, 0.04],  # LeftFootCenter
        [-0.14, 0.14, 0.03],  # LeftFootEnd
        [0.00, 0.00, 1.12],   # Spine
        [0.00, 0.00, 1.28],   # Spine1
        [0.05, 0.00, 1.42],   # RightNeck
        [0.20, 0.00, 1.42],   # RightShoulder
        [0.24, 0.00, 1.16],   # RightForeArm
        [0.26, 0.02, 0.92],   # RightHand
        [0.27, 0.03, 0.82],   # RightHandEnd
        [-0.05, 0.00, 1.42],  # LeftNeck
        [-0.20, 0.00, 1.42],  # LeftShoulder
        [-0.24, 0.00, 1.16],  # LeftForeArm
        [-0.26, 0.02, 0.92],  # LeftHand
        [-0.27, 0.03, 0.82],  # LeftHandEnd
        [0.00, 0.00, 1.46],   # Neck
        [0.00, 0.02, 1.58],   # Head
        [0.00, 0.02, 1.72],   # HeadEnd
    ]
)

_RIGHT_ARM = (15, 16, 17)
_LEFT_ARM = (20, 21, 22)
_UPPER_BODY = (11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24, 25)
_RIGHT_LEG = (2, 3, 4, 5)
_LEFT_LEG = (7, 8, 9, 10)

# Joints with small reflective surfaces carry less radar signal by default.
HETEROSCEDASTIC_RCS = np.array(
    [1.0, 0.9, 0.7, 0.5, 0.5, 0.4,
     0.9, 0.7, 0.5, 0.5, 0.4,
     1.0, 1.0,
     0.8, 0.6, 0.4, 0.1, 0.1,
     0.8, 0.6, 0.4, 0.1, 0.1,
     0.8, 0.3, 0.2]
)

UNIFORM_RCS = np.ones(N_KEYPOINTS)


def base_pose(scale: float = 1.0, depth: float = 3.0) -> np.ndarray:
    """Standing pose for a subject of the given body scale at the given depth."""
    pose = _BASE_POSE * scale
    pose = pose.copy()
    pose[:, 1] += depth
    return pose


def _raise_arm(pose: np.ndarray, joints: tuple[int, ...], shoulder: int, lift: float) -> None:
    """Rotate an arm from hanging to laterally extended; lift in [0, 1]."""
    sh = pose[shoulder]
    for j in joints:
        rel = pose[j] - sh
        hang = np.array([rel[0], rel[1], rel[2]])
        reach = np.linalg.norm(rel)
        out = np.sign(rel[0] + 1e-9) if abs(rel[0]) > 1e-9 else np.sign(sh[0])
        raised = np.array([out * reach * 0.95, rel[1], reach * 0.30])
        pose[j] = sh + (1.0 - lift) * hang + lift * raised


def make_trajectory(
    activity: int,
    n_frames: int,
    frame_rate: float,
    rng: Rng,
    depth: float = 3.0,
) -> np.ndarray:
    """Scripted motion for one recording: array [n_frames, 26, 3] in meters.

    Every activity shares a slow whole-body sway in depth and lateral
    position (subject-specific amplitude/phase) plus the activity-specific
    limb motion, so global translation and limb dynamics are both present.
    """
    if not 0 <= activity < N_ACTIVITIES:
        raise ValueError(f"activity must be in [0, {N_ACTIVITIES}), got {activity}")
    scale = 0.9 + 0.2 * rng.uniform()
    sway_amp_y = 0.20 + 0.15 * rng.uniform()
    sway_amp_x = 0.05 + 0.10 * rng.uniform()
    sway_f = 0.20 + 0.15 * rng.uniform()
    act_f = 0.35 + 0.25 * rng.uniform()
    phase = 2 * np.pi * rng.uniform(size=3)

    frames = np.empty((n_frames, N_KEYPOINTS, 3))
    for i in range(n_frames):
        t = i / frame_rate
        pose = base_pose(scale, depth)
        osc = 0.5 - 0.5 * np.cos(2 * np.pi * act_f * t + phase[2])  # 0..1 envelope

        if activity == 0:
            _raise_arm(pose, _LEFT_ARM, 19, osc)
        elif activity == 1:
            _raise_arm(pose, _RIGHT_ARM, 14, osc)
        elif activity == 2:
            _raise_arm(pose, _LEFT_ARM, 19, osc)
            _raise_arm(pose, _RIGHT_ARM, 14, osc)
        elif activity == 3:
            # curl: hands travel up toward the shoulders
            for hand, shoulder in ((16, 14), (21, 19)):
                curl = osc * 0.9
                for j, frac in ((hand, 1.0), (hand + 1, 1.1)):
                    pose[j] = pose[j] + curl * frac * (pose[shoulder] - pose[j]) * np.array([0.2, 0.3, 0.85])
        elif activity == 4:
            ang = 2 * np.pi * act_f * t + phase[2]
            for j in _RIGHT_ARM + _LEFT_ARM:
                r = 0.12 * scale
                pose[j] = pose[j] + np.array([0.0, r * np.cos(ang), r * np.sin(ang)])
        elif activity == 5:
            bend = osc * 0.9
            hips_z = pose[0, 2]
            for j in _UPPER_BODY:
                h = pose[j, 2] - hips_z
                pose[j, 1] += np.sin(bend) * h
                pose[j, 2] = hips_z + np.cos(bend) * h
        elif activity in (6, 7):
            leg = _LEFT_LEG if activity == 6 else _RIGHT_LEG
            step = osc * 0.45
            for j in leg:
                pose[j, 1] += step
            pose[:, 2] -= osc * 0.12 * (pose[:, 2] > 0.4)
        elif activity == 8:
            drop = osc * 0.35
            above_knee = pose[:, 2] > 0.45 * scale
            pose[above_knee, 2] -= drop
            for j in (16, 17, 21, 22):
                pose[j, 1] += osc * 0.25  # arms forward for balance

        pose[:, 1] += sway_amp_y * np.sin(2 * np.pi * sway_f * t + phase[0])
        pose[:, 0] += sway_amp_x * np.sin(2 * np.pi * sway_f * 0.7 * t + phase[1])
        frames[i] = pose
    return frames
