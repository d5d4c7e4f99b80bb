"""Fused angle deviation feedback pipeline.

Deviations of the fused pitch/roll from their expected limit cycle are
conditioned into a 6-entry feedback vector

    e = [e_Px, e_Py, e_Ix, e_Iy, e_Dx, e_Dy]

(x = lateral plane / roll, y = sagittal plane / pitch) and mapped through
a 5x6 gains matrix onto the activation values of the five superimposed
corrective actions: arm angle, hip angle, continuous foot angle, support
foot angle and CoM shift. Timing feedback modulates the gait frequency
from the lateral deviation, and the virtual slope adjusts inverse foot
heights; both are computed separately from the gains matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import poses
from .cpg import GaitConfig, InverseAdjustments, leg_phase
from .errors import ParameterError
from .filters import (
    EwIntegrator,
    MeanFilter,
    SoftBounds,
    WlbfFilter,
    alpha_from_half_life,
    hard_coerce,
    sharp_deadband,
    smooth_deadband,
    soft_coerce,
)
from .estimation import DeviationPair
from .poses import AbstractPose, KinematicConfig
from .rotations import wrap_angle

ACTION_NAMES = ("arm_angle", "hip_angle", "foot_angle_cts", "foot_angle_support", "com_shift")
FEEDBACK_NAMES = ("p_x", "p_y", "i_x", "i_y", "d_x", "d_y")


def gains_matrix(entries: dict | None = None) -> np.ndarray:
    """Build the 5x6 corrective-action gains matrix from sparse entries.

    Keys are "<action>.<feedback>" pairs, e.g. {"arm_angle.p_y": -1.0}.
    """
    k = np.zeros((len(ACTION_NAMES), len(FEEDBACK_NAMES)))
    for key, value in (entries or {}).items():
        try:
            row, col = key.split(".")
            k[ACTION_NAMES.index(row), FEEDBACK_NAMES.index(col)] = float(value)
        except (ValueError, IndexError) as exc:
            raise ParameterError(f"bad gains matrix entry {key!r}") from exc
    return k


def activations(k_a, e) -> np.ndarray:
    """Corrective action activation values u_a = K_a @ e."""
    k_a = np.asarray(k_a, dtype=float)
    e = np.asarray(e, dtype=float).reshape(-1)
    if k_a.shape != (5, 6) or e.shape != (6,):
        raise ParameterError(f"need a 5x6 matrix and 6-vector, got {k_a.shape} and {e.shape}")
    return k_a @ e


@dataclass(frozen=True)
class FeedbackGains:
    """Scalar gains and deadband radii of the deviation feedback paths."""

    kp: tuple[float, float] = (0.0, 0.0)  # (lateral, sagittal)
    kd: tuple[float, float] = (0.0, 0.0)
    ki: tuple[float, float] = (0.0, 0.0)
    deadband_p: float = 0.0
    deadband_d: float = 0.0
    deadband_i: float = 0.0
    integrator_half_life: float = 2.0  # [s]
    # timing feedback
    timing_weight_shape: float = 1.0  # K_tw >= 1
    timing_speed_up: float = 0.0  # K_su
    timing_slow_down: float = 0.0  # K_sd
    deadband_timing: float = 0.0  # r_T
    # virtual slope
    slope_deadband: float = 0.0
    slope_scale_with: float = 1.0  # tilted in the walking direction
    slope_scale_against: float = 0.25
    slope_clearance_gain: float = 0.0

    def __post_init__(self):
        if self.timing_weight_shape < 1.0:
            raise ParameterError(
                f"timing weight shape gain must be >= 1, got {self.timing_weight_shape}"
            )
        for name in ("kp", "kd", "ki"):
            if min(getattr(self, name)) < 0.0:
                raise ParameterError(f"{name} entries must be >= 0")
        if min(self.timing_speed_up, self.timing_slow_down) < 0.0:
            raise ParameterError("timing gains must be >= 0")


@dataclass(frozen=True)
class SaturationBounds:
    """Soft bounds applied to the final commanded abstract values."""

    arm_angle: SoftBounds = field(default_factory=lambda: SoftBounds(-1.3, 1.3, 0.2))
    leg_angle: SoftBounds = field(default_factory=lambda: SoftBounds(-1.0, 1.0, 0.2))
    foot_angle: SoftBounds = field(default_factory=lambda: SoftBounds(-0.8, 0.8, 0.15))
    com_shift: SoftBounds = field(default_factory=lambda: SoftBounds(-0.15, 0.15, 0.03))


@dataclass(frozen=True)
class FeedbackConfig:
    gains: FeedbackGains = field(default_factory=FeedbackGains)
    k_a: np.ndarray = field(default_factory=gains_matrix)
    mean_window_p: int = 5
    mean_window_i: int = 5
    wlbf_capacity: int = 10
    #: (phase center, half width, weight) windows lowering WLBF confidence,
    #: e.g. around the foot-strike phases
    wlbf_phase_weights: tuple = ()
    enable_p: bool = True
    enable_d: bool = True
    enable_i: bool = True
    #: per-action (lateral, sagittal) application direction of the scalar
    #: activation value
    action_directions: np.ndarray = field(
        default_factory=lambda: np.array(
            [
                [0.0, 1.0],  # arm angle: sagittal arm pitch
                [1.0, 0.0],  # hip angle: lateral torso lean
                [0.0, 1.0],  # continuous foot angle: sagittal foot pitch
                [1.0, 0.0],  # support foot angle: lateral foot roll
                [0.0, 1.0],  # CoM shift: sagittal shift
            ]
        )
    )
    support_fade_width: float = 0.1 * math.pi  # [rad of gait phase]
    saturation: SaturationBounds = field(default_factory=SaturationBounds)

    def __post_init__(self):
        k = np.asarray(self.k_a, dtype=float)
        if k.shape != (5, 6):
            raise ParameterError(f"gains matrix must be 5x6, got {k.shape}")
        object.__setattr__(self, "k_a", k)
        dirs = np.asarray(self.action_directions, dtype=float)
        if dirs.shape != (5, 2):
            raise ParameterError(f"action directions must be 5x2, got {dirs.shape}")
        object.__setattr__(self, "action_directions", dirs)


@dataclass
class FeedbackTick:
    """Outputs of one pipeline update."""

    e: np.ndarray
    filtered_roll: float  # mean-filtered lateral deviation, feeds timing
    filtered_pitch: float


class FeedbackPipeline:
    """Stateful deviation-to-feedback-vector pipeline (one robot, one tick)."""

    def __init__(self, cfg: FeedbackConfig, dt: float):
        if dt <= 0.0:
            raise ParameterError(f"dt must be > 0, got {dt}")
        self.cfg = cfg
        self.dt = dt
        self._mean_p = (MeanFilter(cfg.mean_window_p), MeanFilter(cfg.mean_window_p))
        self._wlbf = (WlbfFilter(cfg.wlbf_capacity), WlbfFilter(cfg.wlbf_capacity))
        alpha = alpha_from_half_life(cfg.gains.integrator_half_life, dt)
        self._ew = (EwIntegrator(alpha), EwIntegrator(alpha))
        self._mean_i = (MeanFilter(cfg.mean_window_i), MeanFilter(cfg.mean_window_i))

    def reset(self) -> None:
        for pair in (self._mean_p, self._wlbf, self._ew, self._mean_i):
            for f in pair:
                f.reset()

    def wlbf_weight(self, mu: float) -> float:
        weight = 1.0
        for center, halfwidth, w in self.cfg.wlbf_phase_weights:
            if abs(wrap_angle(mu - center)) <= halfwidth:
                weight = min(weight, w)
        return weight

    def update(self, dev: DeviationPair, t: float, mu: float) -> FeedbackTick:
        g = self.cfg.gains
        d = (dev.roll, dev.pitch)  # x = lateral, y = sagittal

        filtered = [self._mean_p[i].update(d[i]) for i in range(2)]
        e_p = [g.kp[i] * smooth_deadband(filtered[i], g.deadband_p) for i in range(2)]

        weight = self.wlbf_weight(mu)
        slopes = []
        for i in range(2):
            self._wlbf[i].update(t, d[i], weight)
            slopes.append(self._wlbf[i].evaluate(t)[1])
        e_d = [g.kd[i] * smooth_deadband(slopes[i], g.deadband_d) for i in range(2)]

        e_i = []
        for i in range(2):
            integ = self._ew[i].update(smooth_deadband(d[i], g.deadband_i))
            e_i.append(g.ki[i] * self._mean_i[i].update(integ))

        if not self.cfg.enable_p:
            e_p = [0.0, 0.0]
        if not self.cfg.enable_d:
            e_d = [0.0, 0.0]
        if not self.cfg.enable_i:
            e_i = [0.0, 0.0]
        e = np.array([e_p[0], e_p[1], e_i[0], e_i[1], e_d[0], e_d[1]])
        return FeedbackTick(e=e, filtered_roll=filtered[0], filtered_pitch=filtered[1])


# ---------------------------------------------------------------------------
# corrective action application


def support_fade_weight(lam: float, double_support: float, fade_width: float) -> float:
    """Fade weight of the support foot-angle action over one leg's cycle.

    Nonzero only inside the leg's single-support window, with linear ramps
    just after full weight transfer and just before the swing retraction,
    so the two feet's windows can never overlap.
    """
    start, end = double_support, math.pi
    if fade_width < 0.0 or start + 2.0 * fade_width > end:
        raise ParameterError("fade ramps do not fit inside the single-support window")
    if not (start <= lam <= end):
        return 0.0
    if fade_width == 0.0:
        return 1.0
    if lam < start + fade_width:
        return (lam - start) / fade_width
    if lam > end - fade_width:
        return (end - lam) / fade_width
    return 1.0


def _foot_heights(pose: AbstractPose, kin: KinematicConfig) -> np.ndarray:
    left = poses.leg_abstract_to_joint(pose.left_leg)
    right = poses.leg_abstract_to_joint(pose.right_leg)
    return np.array(
        [
            poses.leg_foot_position(left, kin, "left")[2],
            poses.leg_foot_position(right, kin, "right")[2],
        ]
    )


def _height_compensation(pose: AbstractPose, before: np.ndarray, kin: KinematicConfig) -> None:
    """Trim the leg extensions so a torso tilt leaves the relative foot
    heights as they were (first-order, from the kinematic chain)."""
    after = _foot_heights(pose, kin)
    dz = (after - before) - np.mean(after - before)
    eps = 1e-6
    for i, leg in enumerate((pose.left_leg, pose.right_leg)):
        if abs(dz[i]) < 1e-12:
            continue
        eta = leg.extension
        lo, hi = max(0.0, eta - eps), min(1.0, eta + eps)
        probe = pose.copy()
        probe_leg = probe.left_leg if i == 0 else probe.right_leg
        probe_leg.extension = hi
        z_hi = _foot_heights(probe, kin)[i]
        probe_leg.extension = lo
        z_lo = _foot_heights(probe, kin)[i]
        dz_deta = (z_hi - z_lo) / (hi - lo)
        if abs(dz_deta) < 1e-9:
            continue
        leg.extension = hard_coerce(eta - dz[i] / dz_deta, 0.0, 1.0)


def apply_corrective_actions(
    pose: AbstractPose,
    adjust: InverseAdjustments,
    u_a,
    mu: float,
    cfg: FeedbackConfig,
    gait: GaitConfig,
    kin: KinematicConfig,
) -> tuple[AbstractPose, InverseAdjustments]:
    """Superimpose the activation values onto the open-loop pose.

    Returns new pose/adjustment objects; the inputs are left untouched.
    All final abstract arm angles, leg angles, foot angles and CoM shifts
    are passed through the configured soft saturation.
    """
    u = np.asarray(u_a, dtype=float).reshape(5)
    dirs = cfg.action_directions
    out = pose.copy()
    adj = InverseAdjustments(adjust.com_shift.copy(), adjust.foot_height.copy())

    for arm in (out.left_arm, out.right_arm):
        arm.angle_x += u[0] * dirs[0, 0]
        arm.angle_y += u[0] * dirs[0, 1]

    if u[1] != 0.0:
        before = _foot_heights(out, kin)
        for leg in (out.left_leg, out.right_leg):
            leg.angle_x += u[1] * dirs[1, 0]
            leg.angle_y += u[1] * dirs[1, 1]
        _height_compensation(out, before, kin)

    for leg in (out.left_leg, out.right_leg):
        leg.foot_angle_x += u[2] * dirs[2, 0]
        leg.foot_angle_y += u[2] * dirs[2, 1]

    for side, leg in (("left", out.left_leg), ("right", out.right_leg)):
        fade = support_fade_weight(
            leg_phase(mu, side), gait.double_support, cfg.support_fade_width
        )
        leg.foot_angle_x += u[3] * dirs[3, 0] * fade
        leg.foot_angle_y += u[3] * dirs[3, 1] * fade

    adj.com_shift[0] += u[4] * dirs[4, 1]  # sagittal shift moves forward
    adj.com_shift[1] += u[4] * dirs[4, 0]

    sat = cfg.saturation
    for arm in (out.left_arm, out.right_arm):
        arm.angle_x = soft_coerce(arm.angle_x, sat.arm_angle)
        arm.angle_y = soft_coerce(arm.angle_y, sat.arm_angle)
        arm.extension = hard_coerce(arm.extension, 0.0, 1.0)
    for leg in (out.left_leg, out.right_leg):
        leg.angle_x = soft_coerce(leg.angle_x, sat.leg_angle)
        leg.angle_y = soft_coerce(leg.angle_y, sat.leg_angle)
        leg.angle_z = soft_coerce(leg.angle_z, sat.leg_angle)
        leg.foot_angle_x = soft_coerce(leg.foot_angle_x, sat.foot_angle)
        leg.foot_angle_y = soft_coerce(leg.foot_angle_y, sat.foot_angle)
        leg.extension = hard_coerce(leg.extension, 0.0, 1.0)
    adj.com_shift[0] = soft_coerce(adj.com_shift[0], sat.com_shift)
    adj.com_shift[1] = soft_coerce(adj.com_shift[1], sat.com_shift)
    return out, adj


# ---------------------------------------------------------------------------
# timing feedback and virtual slope


def timing_feedback(
    filtered_roll: float, mu: float, gains: FeedbackGains, gait: GaitConfig
) -> float:
    """Gait frequency command from the mean-filtered lateral deviation.

    The deviation is weighted by a saturated oscillation of the gait phase
    (sign follows the current support leg, near zero through the double
    support), deadbanded, and scaled by separate speed-up / slow-down
    gains; the result is coerced into [0, freq_max].
    """
    weight = hard_coerce(
        -gains.timing_weight_shape * math.sin(mu - 0.5 * gait.double_support), -1.0, 1.0
    )
    e_t = smooth_deadband(filtered_roll * weight, gains.deadband_timing)
    gain = gains.timing_speed_up if e_t >= 0.0 else gains.timing_slow_down
    return hard_coerce(gait.freq_nominal + gain * e_t, 0.0, gait.freq_max)


def virtual_slope(
    pitch_deviation: float, v_gx: float, swing_angle: float, gains: FeedbackGains
) -> float:
    """Foot height adjustment [m] emulating walking on a slope.

    The sharp-deadbanded sagittal deviation is scaled asymmetrically
    depending on whether the robot tilts with or against its walking
    direction, then multiplied by the forward command and the leg's
    current sagittal swing angle (positive = leg in front).
    """
    tilt = sharp_deadband(pitch_deviation, gains.slope_deadband)
    if tilt == 0.0 or v_gx == 0.0:
        return 0.0
    scale = gains.slope_scale_with if tilt * v_gx > 0.0 else gains.slope_scale_against
    return gains.slope_clearance_gain * scale * tilt * v_gx * swing_angle
