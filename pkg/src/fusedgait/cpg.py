"""Open-loop central pattern generator.

The gait phase mu lives in (-pi, pi]; mu = 0 and mu = pi are the commanded
touchdown instants of the left and right leg. Each tick the phase advances
by pi * f_g * dt. The generated pose is a configured halt pose plus
additive waveforms driven by the (norm/acceleration/jerk limited) gait
velocity command and the phase; support coefficients follow a trapezoid
that crossfades across the double-support window.

Waveform shapes (fixed by golden regression values in the tests):
  * limb advance: linear retraction tracking the body during support,
    half-cosine return during swing, scaled per axis by the command,
  * leg lift: half-sine bump in the extension during swing,
  * ground-lift trim: constant foot pitch offset while the foot swings,
  * arm swing opposing the same-side leg,
  * velocity-rate lean: leg-angle offsets proportional to the slew
    acceleration of the command.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ParameterError
from .poses import AbstractPose
from .rotations import wrap_angle

TWO_PI = 2.0 * math.pi


def update_phase(mu: float, freq: float, dt: float) -> float:
    """Advance the gait phase by pi * freq * dt and wrap into (-pi, pi]."""
    if freq < 0.0:
        raise ParameterError(f"gait frequency must be >= 0, got {freq}")
    return wrap_angle(mu + math.pi * freq * dt)


@dataclass
class GaitCommand:
    """Normalized gait velocity (x fwd, y left, z turn) with its slew state."""

    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3).copy()
        self.acceleration = np.asarray(self.acceleration, dtype=float).reshape(3).copy()

    def copy(self) -> "GaitCommand":
        return GaitCommand(self.velocity.copy(), self.acceleration.copy())


@dataclass(frozen=True)
class CommandLimits:
    max_norm: float = 1.0
    max_accel: float = 2.0  # [1/s]
    max_jerk: float = 20.0  # [1/s^2]

    def __post_init__(self):
        if min(self.max_norm, self.max_accel, self.max_jerk) <= 0.0:
            raise ParameterError("command limits must all be > 0")


def limit_command(
    target: GaitCommand, current: GaitCommand, dt: float, limits: CommandLimits
) -> GaitCommand:
    """One tick of norm/acceleration/jerk limited slewing toward the target.

    The acceleration is steered with a braking law so the velocity settles
    on the target without overshoot, then snapped exactly onto it once both
    the remaining error and the slew rate are within one tick of zero.
    """
    if dt <= 0.0:
        raise ParameterError(f"dt must be > 0, got {dt}")
    goal = target.velocity.copy()
    norm = float(np.linalg.norm(goal))
    if norm > limits.max_norm:
        goal *= limits.max_norm / norm

    vel = current.velocity.copy()
    acc = current.acceleration.copy()
    for i in range(3):
        err = goal[i] - vel[i]
        if abs(err) <= limits.max_accel * dt * dt and abs(acc[i]) <= limits.max_jerk * dt:
            vel[i] = goal[i]
            acc[i] = 0.0
            continue
        # largest approach rate that can still be ramped down to zero in
        # time (discrete braking distance of a jerk-limited profile)
        reachable = math.sqrt(2.0 * limits.max_jerk * abs(err) + (limits.max_jerk * dt) ** 2)
        a_des = math.copysign(min(limits.max_accel, reachable - limits.max_jerk * dt), err)
        da = min(limits.max_jerk * dt, max(-limits.max_jerk * dt, a_des - acc[i]))
        acc[i] += da
        vel[i] += acc[i] * dt

    norm = float(np.linalg.norm(vel))
    if norm > limits.max_norm:
        vel *= limits.max_norm / norm
        acc = (vel - current.velocity) / dt
    return GaitCommand(vel, acc)


@dataclass(frozen=True)
class WaveformAmplitudes:
    """Gains of the additive gait waveforms on top of the halt pose."""

    step_lift: float = 0.06  # extension bump during swing
    swing_pitch: float = 0.25  # leg pitch amplitude per unit forward command
    swing_roll: float = 0.12  # leg roll amplitude per unit lateral command
    swing_yaw: float = 0.2  # hip yaw amplitude per unit turn command
    arm_swing: float = 0.25  # arm pitch amplitude per unit forward command
    lean_rate: float = 0.02  # leg-angle lean per unit command acceleration


@dataclass(frozen=True)
class GaitConfig:
    freq_nominal: float = 1.6  # [steps/s]
    freq_max: float = 3.0
    double_support: float = 0.1 * math.pi  # [rad of gait phase]
    halt: AbstractPose = field(default_factory=AbstractPose)
    amplitudes: WaveformAmplitudes = field(default_factory=WaveformAmplitudes)
    ground_lift_trim: float = 0.0  # constant foot pitch offset during swing
    blend_time: float = 1.0  # [s] walk/halt transition
    limits: CommandLimits = field(default_factory=CommandLimits)

    def __post_init__(self):
        if not (0.0 < self.freq_nominal <= self.freq_max):
            raise ParameterError(
                f"need 0 < freq_nominal <= freq_max, got {self.freq_nominal}, {self.freq_max}"
            )
        if not (0.0 <= self.double_support < math.pi):
            raise ParameterError(f"double_support must lie in [0, pi), got {self.double_support}")


@dataclass
class SupportCoefficients:
    """Fraction of body weight carried by each root link; sums to one."""

    trunk: float = 0.0
    left_foot: float = 0.5
    right_foot: float = 0.5

    def as_dict(self) -> dict:
        return {"trunk": self.trunk, "left_foot": self.left_foot, "right_foot": self.right_foot}


@dataclass
class InverseAdjustments:
    """Inverse-space additions: horizontal CoM shift and per-foot height."""

    com_shift: np.ndarray = field(default_factory=lambda: np.zeros(2))  # [m] (x, y)
    foot_height: np.ndarray = field(default_factory=lambda: np.zeros(2))  # [m] (left, right)

    def __post_init__(self):
        self.com_shift = np.asarray(self.com_shift, dtype=float).reshape(2).copy()
        self.foot_height = np.asarray(self.foot_height, dtype=float).reshape(2).copy()


def leg_phase(mu: float, side: str) -> float:
    """Leg-local phase: 0 at this leg's own commanded touchdown.

    The right leg touches down at mu = 0, the left leg at mu = pi; this
    pairing makes the timing-feedback phase weighting slow the gait when
    the robot is tilted over its current support foot.
    """
    return wrap_angle(mu) if side == "right" else wrap_angle(mu + math.pi)


def segment_progress(lam: float, double_support: float) -> tuple[bool, float]:
    """Map a leg phase onto (in_swing, progress u in [0, 1]) of its segment.

    Support runs from the leg's own touchdown (lam = 0) through the other
    leg's touchdown until lift-off at lam = -pi + double_support; swing
    covers the remainder up to the next touchdown.
    """
    unwrapped = lam if lam >= 0.0 else lam + TWO_PI
    support_len = math.pi + double_support
    if unwrapped <= support_len:
        return False, unwrapped / support_len
    return True, (unwrapped - support_len) / (TWO_PI - support_len)


def limb_advance(lam: float, double_support: float) -> float:
    """Normalized limb advance: +1 fully forward (touchdown), -1 retracted."""
    in_swing, u = segment_progress(lam, double_support)
    if in_swing:
        return -math.cos(math.pi * u)
    return 1.0 - 2.0 * u


def swing_lift(lam: float, double_support: float) -> float:
    """Half-sine lift profile in [0, 1]; zero through the support segment."""
    in_swing, u = segment_progress(lam, double_support)
    if not in_swing:
        return 0.0
    return math.sin(math.pi * u)


def support_weight(lam: float, double_support: float) -> float:
    """Trapezoidal support-coefficient waveform for one foot."""
    if double_support <= 0.0:
        return 1.0 if 0.0 <= lam < math.pi else 0.0
    if 0.0 <= lam < double_support:
        return lam / double_support  # gaining weight after own touchdown
    if double_support <= lam <= math.pi:
        return 1.0
    lam_other = lam + math.pi if lam < 0.0 else lam - math.pi
    if 0.0 <= lam_other < double_support:
        return 1.0 - lam_other / double_support
    return 0.0


def support_coefficients(mu: float, cfg: GaitConfig) -> SupportCoefficients:
    w_left = support_weight(leg_phase(mu, "left"), cfg.double_support)
    return SupportCoefficients(trunk=0.0, left_foot=w_left, right_foot=1.0 - w_left)


def generate_pose(
    command: GaitCommand, mu: float, cfg: GaitConfig
) -> tuple[AbstractPose, InverseAdjustments, SupportCoefficients]:
    """Deterministic open-loop pose for the given command and gait phase."""
    amp = cfg.amplitudes
    vx, vy, vz = command.velocity
    ax, ay, _ = command.acceleration
    pose = cfg.halt.copy()

    for side, leg, arm in (
        ("left", pose.left_leg, pose.left_arm),
        ("right", pose.right_leg, pose.right_arm),
    ):
        lam = leg_phase(mu, side)
        advance = limb_advance(lam, cfg.double_support)
        lift = swing_lift(lam, cfg.double_support)
        in_swing, _ = segment_progress(lam, cfg.double_support)

        leg.extension += amp.step_lift * lift
        leg.angle_y += -amp.swing_pitch * vx * advance
        leg.angle_x += amp.swing_roll * vy * advance
        leg.angle_z += amp.swing_yaw * vz * advance
        if in_swing:
            leg.foot_angle_y += cfg.ground_lift_trim
        # velocity-rate lean, realized as hip motions on both legs
        leg.angle_y += amp.lean_rate * ax
        leg.angle_x += -amp.lean_rate * ay
        # arm opposes the same-side leg swing
        arm.angle_y += amp.arm_swing * vx * advance

    return pose, InverseAdjustments(), support_coefficients(mu, cfg)


def smoothstep(s: float) -> float:
    return 3.0 * s * s - 2.0 * s * s * s


def blend_pose(pose_a: AbstractPose, pose_b: AbstractPose, s: float) -> AbstractPose:
    """Componentwise interpolation with a C1 smoothstep profile."""
    if not (0.0 <= s <= 1.0):
        raise ParameterError(f"blend fraction must lie in [0, 1], got {s}")
    w = smoothstep(s)
    arr = (1.0 - w) * pose_a.to_array() + w * pose_b.to_array()
    return AbstractPose.from_array(arr)
