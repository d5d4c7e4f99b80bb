"""Joint, abstract and inverse pose spaces for a humanoid's limbs.

Conventions: trunk frame has x forward, y left, z up; trunk origin sits at
the hip midpoint. Pitch joints rotate about +y, roll about +x, yaw about
+z. The legs chain hip yaw -> roll -> pitch -> knee pitch -> ankle pitch
-> roll; arms chain shoulder roll -> pitch -> elbow pitch. The abstract
space describes each limb by an extension in [0, 1], the limb centre-line
angles and (for legs) the foot angles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import ParameterError, ReachabilityError
from .rotations import (
    quat_from_matrix,
    quat_to_matrix,
    rot_x,
    rot_y,
    rot_z,
    wrap_angle,
)

LEG_JOINT_NAMES = ("hip_yaw", "hip_roll", "hip_pitch", "knee_pitch", "ankle_pitch", "ankle_roll")
ARM_JOINT_NAMES = ("shoulder_pitch", "shoulder_roll", "elbow_pitch")

#: flat column names matching JointPose.to_array / AbstractPose.to_array
JOINT_FIELD_NAMES = tuple(
    f"{side}_{name}" for side in ("l", "r") for name in LEG_JOINT_NAMES
) + tuple(f"{side}_{name}" for side in ("l", "r") for name in ARM_JOINT_NAMES)
ABSTRACT_FIELD_NAMES = tuple(
    f"{side}_leg_{name}"
    for side in ("l", "r")
    for name in ("extension", "angle_x", "angle_y", "angle_z", "foot_angle_x", "foot_angle_y")
) + tuple(
    f"{side}_arm_{name}" for side in ("l", "r") for name in ("extension", "angle_x", "angle_y")
)
INVERSE_FIELD_NAMES = tuple(
    f"{limb}_{name}"
    for limb in ("l_foot", "r_foot", "l_hand", "r_hand")
    for name in ("x", "y", "z", "qw", "qx", "qy", "qz")
)

DEFAULT_JOINT_LIMITS = {
    "hip_yaw": (-0.8, 0.8),
    "hip_roll": (-0.6, 0.6),
    "hip_pitch": (-1.2, 1.2),
    "knee_pitch": (0.0, 2.4),
    "ankle_pitch": (-1.0, 1.0),
    "ankle_roll": (-0.6, 0.6),
    "shoulder_pitch": (-1.3, 1.3),
    "shoulder_roll": (-1.0, 1.0),
    "elbow_pitch": (0.0, 2.4),
}


@dataclass
class LegJoints:
    hip_yaw: float = 0.0
    hip_roll: float = 0.0
    hip_pitch: float = 0.0
    knee_pitch: float = 0.0
    ankle_pitch: float = 0.0
    ankle_roll: float = 0.0


@dataclass
class ArmJoints:
    shoulder_pitch: float = 0.0
    shoulder_roll: float = 0.0
    elbow_pitch: float = 0.0


@dataclass
class JointPose:
    """Vector of all joint angles, grouped per limb."""

    left_leg: LegJoints = field(default_factory=LegJoints)
    right_leg: LegJoints = field(default_factory=LegJoints)
    left_arm: ArmJoints = field(default_factory=ArmJoints)
    right_arm: ArmJoints = field(default_factory=ArmJoints)

    def to_array(self) -> np.ndarray:
        vals = []
        for leg in (self.left_leg, self.right_leg):
            vals.extend(getattr(leg, n) for n in LEG_JOINT_NAMES)
        for arm in (self.left_arm, self.right_arm):
            vals.extend(getattr(arm, n) for n in ARM_JOINT_NAMES)
        return np.array(vals)

    @classmethod
    def from_array(cls, arr) -> "JointPose":
        arr = np.asarray(arr, dtype=float).reshape(18)
        legs = [LegJoints(*arr[i : i + 6]) for i in (0, 6)]
        arms = [ArmJoints(*arr[i : i + 3]) for i in (12, 15)]
        return cls(legs[0], legs[1], arms[0], arms[1])


@dataclass
class AbstractLeg:
    extension: float = 0.0  # eta in [0, 1]; 0 = straight leg
    angle_x: float = 0.0  # leg centre-line roll
    angle_y: float = 0.0  # leg centre-line pitch
    angle_z: float = 0.0  # leg centre-line yaw
    foot_angle_x: float = 0.0
    foot_angle_y: float = 0.0


@dataclass
class AbstractArm:
    extension: float = 0.0
    angle_x: float = 0.0
    angle_y: float = 0.0


@dataclass
class AbstractPose:
    left_leg: AbstractLeg = field(default_factory=AbstractLeg)
    right_leg: AbstractLeg = field(default_factory=AbstractLeg)
    left_arm: AbstractArm = field(default_factory=AbstractArm)
    right_arm: AbstractArm = field(default_factory=AbstractArm)

    def to_array(self) -> np.ndarray:
        vals = []
        for leg in (self.left_leg, self.right_leg):
            vals.extend(getattr(leg, f.name) for f in fields(AbstractLeg))
        for arm in (self.left_arm, self.right_arm):
            vals.extend(getattr(arm, f.name) for f in fields(AbstractArm))
        return np.array(vals)

    @classmethod
    def from_array(cls, arr) -> "AbstractPose":
        arr = np.asarray(arr, dtype=float).reshape(18)
        legs = [AbstractLeg(*arr[i : i + 6]) for i in (0, 6)]
        arms = [AbstractArm(*arr[i : i + 3]) for i in (12, 15)]
        return cls(legs[0], legs[1], arms[0], arms[1])

    def copy(self) -> "AbstractPose":
        return AbstractPose(
            replace(self.left_leg),
            replace(self.right_leg),
            replace(self.left_arm),
            replace(self.right_arm),
        )


@dataclass
class LimbPose:
    """End-effector position [m] and unit-quaternion orientation, trunk frame."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.orientation = np.asarray(self.orientation, dtype=float).reshape(4)
        n = float(np.linalg.norm(self.orientation))
        if abs(n - 1.0) > 1e-9:
            if abs(n - 1.0) > 1e-6:
                raise ParameterError(f"limb orientation quaternion norm {n} not 1")
            self.orientation = self.orientation / n


@dataclass
class InversePose:
    left_foot: LimbPose
    right_foot: LimbPose
    left_hand: LimbPose
    right_hand: LimbPose

    def to_array(self) -> np.ndarray:
        vals = []
        for limb in (self.left_foot, self.right_foot, self.left_hand, self.right_hand):
            vals.extend(limb.position)
            vals.extend(limb.orientation)
        return np.array(vals)

    @classmethod
    def from_array(cls, arr) -> "InversePose":
        arr = np.asarray(arr, dtype=float).reshape(28)
        limbs = [LimbPose(arr[i : i + 3], arr[i + 3 : i + 7]) for i in (0, 7, 14, 21)]
        return cls(*limbs)


@dataclass(frozen=True)
class KinematicConfig:
    """Limb link lengths [m], attachment offsets and joint limit table."""

    thigh_length: float = 0.2
    shank_length: float = 0.2
    upper_arm_length: float = 0.15
    lower_arm_length: float = 0.15
    hip_offset_y: float = 0.055
    shoulder_offset_y: float = 0.11
    shoulder_offset_z: float = 0.25
    joint_limits: dict = field(default_factory=lambda: dict(DEFAULT_JOINT_LIMITS))

    def __post_init__(self):
        for name in ("thigh_length", "shank_length", "upper_arm_length", "lower_arm_length"):
            if getattr(self, name) <= 0.0:
                raise ParameterError(f"{name} must be > 0")

    @property
    def leg_reach(self) -> float:
        return self.thigh_length + self.shank_length

    @property
    def arm_reach(self) -> float:
        return self.upper_arm_length + self.lower_arm_length

    def hip_origin(self, side: str) -> np.ndarray:
        sign = 1.0 if side == "left" else -1.0
        return np.array([0.0, sign * self.hip_offset_y, 0.0])

    def shoulder_origin(self, side: str) -> np.ndarray:
        sign = 1.0 if side == "left" else -1.0
        return np.array([0.0, sign * self.shoulder_offset_y, self.shoulder_offset_z])

    def saturate(self, pose: JointPose) -> JointPose:
        out = JointPose.from_array(pose.to_array())
        for limb in (out.left_leg, out.right_leg):
            for name in LEG_JOINT_NAMES:
                lo, hi = self.joint_limits[name]
                setattr(limb, name, min(hi, max(lo, getattr(limb, name))))
        for limb in (out.left_arm, out.right_arm):
            for name in ARM_JOINT_NAMES:
                lo, hi = self.joint_limits[name]
                setattr(limb, name, min(hi, max(lo, getattr(limb, name))))
        return out


# ---------------------------------------------------------------------------
# joint <-> abstract


def leg_joint_to_abstract(leg: LegJoints) -> AbstractLeg:
    half_knee = 0.5 * leg.knee_pitch
    angle_y = leg.hip_pitch + half_knee
    return AbstractLeg(
        extension=1.0 - math.cos(half_knee),
        angle_x=leg.hip_roll,
        angle_y=angle_y,
        angle_z=leg.hip_yaw,
        foot_angle_x=leg.hip_roll + leg.ankle_roll,
        foot_angle_y=angle_y + leg.ankle_pitch + half_knee,
    )


def leg_abstract_to_joint(leg: AbstractLeg) -> LegJoints:
    if not (0.0 <= leg.extension <= 1.0):
        raise ParameterError(f"leg extension {leg.extension} outside [0, 1]")
    knee = 2.0 * math.acos(1.0 - leg.extension)
    half_knee = 0.5 * knee
    return LegJoints(
        hip_yaw=leg.angle_z,
        hip_roll=leg.angle_x,
        hip_pitch=leg.angle_y - half_knee,
        knee_pitch=knee,
        ankle_pitch=leg.foot_angle_y - leg.angle_y - half_knee,
        ankle_roll=leg.foot_angle_x - leg.angle_x,
    )


def arm_joint_to_abstract(arm: ArmJoints) -> AbstractArm:
    half_elbow = 0.5 * arm.elbow_pitch
    return AbstractArm(
        extension=1.0 - math.cos(half_elbow),
        angle_x=arm.shoulder_roll,
        angle_y=arm.shoulder_pitch + half_elbow,
    )


def arm_abstract_to_joint(arm: AbstractArm) -> ArmJoints:
    if not (0.0 <= arm.extension <= 1.0):
        raise ParameterError(f"arm extension {arm.extension} outside [0, 1]")
    elbow = 2.0 * math.acos(1.0 - arm.extension)
    return ArmJoints(
        shoulder_pitch=arm.angle_y - 0.5 * elbow,
        shoulder_roll=arm.angle_x,
        elbow_pitch=elbow,
    )


def joint_to_abstract(pose: JointPose) -> AbstractPose:
    return AbstractPose(
        left_leg=leg_joint_to_abstract(pose.left_leg),
        right_leg=leg_joint_to_abstract(pose.right_leg),
        left_arm=arm_joint_to_abstract(pose.left_arm),
        right_arm=arm_joint_to_abstract(pose.right_arm),
    )


def abstract_to_joint(pose: AbstractPose) -> JointPose:
    return JointPose(
        left_leg=leg_abstract_to_joint(pose.left_leg),
        right_leg=leg_abstract_to_joint(pose.right_leg),
        left_arm=arm_abstract_to_joint(pose.left_arm),
        right_arm=arm_abstract_to_joint(pose.right_arm),
    )


# ---------------------------------------------------------------------------
# forward kinematics (joint -> inverse)


def leg_foot_position(leg: LegJoints, cfg: KinematicConfig, side: str) -> np.ndarray:
    """Foot position only; cheaper than the full pose when the orientation
    is not needed (height bookkeeping in the feedback path)."""
    hip = cfg.hip_origin(side)
    r_hip = rot_z(leg.hip_yaw) @ rot_x(leg.hip_roll) @ rot_y(leg.hip_pitch)
    p_knee = hip + r_hip @ np.array([0.0, 0.0, -cfg.thigh_length])
    r_knee = r_hip @ rot_y(leg.knee_pitch)
    return p_knee + r_knee @ np.array([0.0, 0.0, -cfg.shank_length])


def leg_forward_kinematics(leg: LegJoints, cfg: KinematicConfig, side: str) -> LimbPose:
    hip = cfg.hip_origin(side)
    r_hip = rot_z(leg.hip_yaw) @ rot_x(leg.hip_roll) @ rot_y(leg.hip_pitch)
    p_knee = hip + r_hip @ np.array([0.0, 0.0, -cfg.thigh_length])
    r_knee = r_hip @ rot_y(leg.knee_pitch)
    p_ankle = p_knee + r_knee @ np.array([0.0, 0.0, -cfg.shank_length])
    r_foot = r_knee @ rot_y(leg.ankle_pitch) @ rot_x(leg.ankle_roll)
    return LimbPose(p_ankle, quat_from_matrix(r_foot))


def arm_forward_kinematics(arm: ArmJoints, cfg: KinematicConfig, side: str) -> LimbPose:
    shoulder = cfg.shoulder_origin(side)
    r_sh = rot_x(arm.shoulder_roll) @ rot_y(arm.shoulder_pitch)
    p_elbow = shoulder + r_sh @ np.array([0.0, 0.0, -cfg.upper_arm_length])
    r_el = r_sh @ rot_y(arm.elbow_pitch)
    p_hand = p_elbow + r_el @ np.array([0.0, 0.0, -cfg.lower_arm_length])
    return LimbPose(p_hand, quat_from_matrix(r_el))


def joint_to_inverse(pose: JointPose, cfg: KinematicConfig) -> InversePose:
    return InversePose(
        left_foot=leg_forward_kinematics(pose.left_leg, cfg, "left"),
        right_foot=leg_forward_kinematics(pose.right_leg, cfg, "right"),
        left_hand=arm_forward_kinematics(pose.left_arm, cfg, "left"),
        right_hand=arm_forward_kinematics(pose.right_arm, cfg, "right"),
    )


def abstract_to_inverse(pose: AbstractPose, cfg: KinematicConfig) -> InversePose:
    return joint_to_inverse(abstract_to_joint(pose), cfg)


# ---------------------------------------------------------------------------
# inverse kinematics (inverse -> joint)


def leg_inverse_kinematics(target: LimbPose, cfg: KinematicConfig, side: str) -> LegJoints:
    """Analytic 6-DOF leg IK; returns the knee-forward (knee >= 0) branch."""
    a, b = cfg.thigh_length, cfg.shank_length
    p = target.position - cfg.hip_origin(side)
    dist = float(np.linalg.norm(p))
    if dist > a + b + 1e-9:
        raise ReachabilityError(
            f"{side} foot target at {dist:.4f} m exceeds leg reach {a + b:.4f} m",
            closest=cfg.hip_origin(side) + p * ((a + b) / dist),
        )
    if dist < abs(a - b) - 1e-9:
        raise ReachabilityError(
            f"{side} foot target at {dist:.4f} m inside minimum reach {abs(a - b):.4f} m"
        )
    cos_knee = (dist * dist - a * a - b * b) / (2.0 * a * b)
    knee = math.acos(min(1.0, max(-1.0, cos_knee)))

    r_foot = quat_to_matrix(target.orientation)
    r = r_foot.T @ (-p)  # hip position seen from the foot frame
    ankle_roll = math.atan2(r[1], r[2])
    w_z = math.hypot(r[1], r[2])
    ankle_pitch = wrap_angle(
        math.atan2(-a * math.sin(knee), b + a * math.cos(knee)) - math.atan2(r[0], w_z)
    )

    t_hip = r_foot @ rot_x(-ankle_roll) @ rot_y(-(knee + ankle_pitch))
    hip_roll = math.asin(min(1.0, max(-1.0, t_hip[2, 1])))
    hip_yaw = math.atan2(-t_hip[0, 1], t_hip[1, 1])
    hip_pitch = math.atan2(-t_hip[2, 0], t_hip[2, 2])
    return LegJoints(hip_yaw, hip_roll, hip_pitch, knee, ankle_pitch, ankle_roll)


def arm_inverse_kinematics(target: LimbPose, cfg: KinematicConfig, side: str) -> ArmJoints:
    """Position-only 3-DOF arm IK, elbow-forward branch; orientation follows."""
    u, l = cfg.upper_arm_length, cfg.lower_arm_length
    p = target.position - cfg.shoulder_origin(side)
    dist = float(np.linalg.norm(p))
    if dist > u + l + 1e-9:
        raise ReachabilityError(
            f"{side} hand target at {dist:.4f} m exceeds arm reach {u + l:.4f} m",
            closest=cfg.shoulder_origin(side) + p * ((u + l) / dist),
        )
    if dist < abs(u - l) - 1e-9:
        raise ReachabilityError(
            f"{side} hand target at {dist:.4f} m inside minimum reach {abs(u - l):.4f} m"
        )
    cos_elbow = (dist * dist - u * u - l * l) / (2.0 * u * l)
    elbow = math.acos(min(1.0, max(-1.0, cos_elbow)))

    # hand orientation R = Rx(roll) @ Ry(pitch + elbow) disambiguates the
    # shoulder angles for any reachable pose
    r_hand = quat_to_matrix(target.orientation)
    shoulder_roll = math.atan2(r_hand[2, 1], r_hand[1, 1])
    total_pitch = math.atan2(r_hand[0, 2], r_hand[0, 0])
    shoulder_pitch = wrap_angle(total_pitch - elbow)
    return ArmJoints(shoulder_pitch, shoulder_roll, elbow)


def inverse_to_joint(pose: InversePose, cfg: KinematicConfig) -> JointPose:
    return JointPose(
        left_leg=leg_inverse_kinematics(pose.left_foot, cfg, "left"),
        right_leg=leg_inverse_kinematics(pose.right_foot, cfg, "right"),
        left_arm=arm_inverse_kinematics(pose.left_hand, cfg, "left"),
        right_arm=arm_inverse_kinematics(pose.right_hand, cfg, "right"),
    )


def inverse_to_abstract(pose: InversePose, cfg: KinematicConfig) -> AbstractPose:
    return joint_to_abstract(inverse_to_joint(pose, cfg))


# ---------------------------------------------------------------------------
# symmetry helper


def mirrored_abstract(pose: AbstractPose) -> AbstractPose:
    """Swap left/right limbs and negate the roll/yaw (lateral) components."""
    def flip_leg(leg: AbstractLeg) -> AbstractLeg:
        return AbstractLeg(
            extension=leg.extension,
            angle_x=-leg.angle_x,
            angle_y=leg.angle_y,
            angle_z=-leg.angle_z,
            foot_angle_x=-leg.foot_angle_x,
            foot_angle_y=leg.foot_angle_y,
        )

    def flip_arm(arm: AbstractArm) -> AbstractArm:
        return AbstractArm(extension=arm.extension, angle_x=-arm.angle_x, angle_y=arm.angle_y)

    return AbstractPose(
        left_leg=flip_leg(pose.right_leg),
        right_leg=flip_leg(pose.left_leg),
        left_arm=flip_arm(pose.right_arm),
        right_arm=flip_arm(pose.left_arm),
    )
