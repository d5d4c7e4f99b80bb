"""Attitude bookkeeping for the balance feedback.

Orientation arrives as a unit quaternion from an external attitude
estimator; here it is split into fused yaw/pitch/roll so the sagittal and
lateral balance loops can act independently. The nominal walking motion is
modelled as per-axis sines of the gait phase, and the feedback consumes
the deviations from that expectation. Gyro conditioning (temperature
scale, mounting offset, online bias estimation at rest) lives here too.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .rotations import (
    quat_check_unit,
    quat_multiply,
    quat_to_matrix,
    wrap_angle,
)

GRAVITY_MAGNITUDE = 9.81


@dataclass(frozen=True)
class FusedAngles:
    """Fused yaw/pitch/roll [rad] plus the tilt hemisphere flag (+1 or -1)."""

    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0
    hemisphere: int = 1


def orientation_to_fused(q) -> FusedAngles:
    """Split a unit quaternion into fused angles.

    Fused pitch is the sagittal tilt component, fused roll the lateral one;
    the two satisfy |pitch| + |roll| <= pi/2. The hemisphere flag carries
    the sign of the z-z rotation matrix element.
    """
    w, x, y, z = quat_check_unit(q)
    s_pitch = min(1.0, max(-1.0, 2.0 * (y * w - x * z)))
    s_roll = min(1.0, max(-1.0, 2.0 * (y * z + x * w)))
    hemisphere = 1 if (x * x + y * y) <= 0.5 else -1
    yaw = wrap_angle(2.0 * math.atan2(z, w))
    return FusedAngles(yaw, math.asin(s_pitch), math.asin(s_roll), hemisphere)


def fused_to_orientation(f: FusedAngles) -> np.ndarray:
    """Reconstruct the unit quaternion for a set of fused angles."""
    s_pitch, s_roll = math.sin(f.pitch), math.sin(f.roll)
    crit = s_pitch * s_pitch + s_roll * s_roll
    if crit > 1.0 + 1e-9:
        raise ParameterError(
            f"fused pitch/roll ({f.pitch}, {f.roll}) violate |pitch| + |roll| <= pi/2"
        )
    cos_alpha = math.sqrt(max(0.0, 1.0 - crit))
    if f.hemisphere < 0:
        cos_alpha = -cos_alpha
    alpha = math.acos(min(1.0, max(-1.0, cos_alpha)))
    gamma = math.atan2(s_pitch, s_roll)
    half = 0.5 * alpha
    q_tilt = np.array(
        [math.cos(half), math.sin(half) * math.cos(gamma), math.sin(half) * math.sin(gamma), 0.0]
    )
    q_yaw = np.array([math.cos(0.5 * f.yaw), 0.0, 0.0, math.sin(0.5 * f.yaw)])
    return quat_multiply(q_yaw, q_tilt)


@dataclass(frozen=True)
class SineWave:
    """offset + amplitude * sin(phase + shift), evaluated in gait phase."""

    offset: float = 0.0
    amplitude: float = 0.0
    shift: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0.0:
            raise ParameterError(f"amplitude must be >= 0, got {self.amplitude}")

    def at(self, phase: float) -> float:
        return self.offset + self.amplitude * math.sin(phase + self.shift)


@dataclass(frozen=True)
class LimitCycleModel:
    """Expected fused pitch/roll over the gait cycle."""

    pitch: SineWave = field(default_factory=SineWave)
    roll: SineWave = field(default_factory=SineWave)


def expected_attitude(phase: float, model: LimitCycleModel) -> tuple[float, float]:
    """Nominal (pitch, roll) at the given gait phase."""
    return model.pitch.at(phase), model.roll.at(phase)


@dataclass(frozen=True)
class DeviationPair:
    """Deviation of the fused angles from their expected limit cycle [rad]."""

    pitch: float = 0.0  # d_theta, sagittal; positive = tilted further forward
    roll: float = 0.0  # d_phi, lateral


def deviations(f: FusedAngles, expected: tuple[float, float]) -> DeviationPair:
    pitch_exp, roll_exp = expected
    return DeviationPair(pitch=f.pitch - pitch_exp, roll=f.roll - roll_exp)


# ---------------------------------------------------------------------------
# gyro calibration


@dataclass(frozen=True)
class GyroCalibration:
    """Temperature-dependent scale, mounting offset and bias for a gyro."""

    scale_low: float = 1.0
    scale_high: float = 1.0
    temp_low: float = 15.0
    temp_high: float = 60.0
    orientation_offset: np.ndarray = field(
        default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0])
    )
    bias: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.scale_low <= 0.0 or self.scale_high <= 0.0:
            raise ParameterError("gyro scale factors must be > 0")
        if self.temp_low >= self.temp_high:
            raise ParameterError("temperature breakpoints must satisfy low < high")
        object.__setattr__(self, "orientation_offset", quat_check_unit(self.orientation_offset))
        object.__setattr__(self, "bias", np.asarray(self.bias, dtype=float).reshape(3))

    def scale_at(self, temperature: float) -> float:
        """Saturated linear interpolation between the two breakpoints."""
        if temperature <= self.temp_low:
            return self.scale_low
        if temperature >= self.temp_high:
            return self.scale_high
        frac = (temperature - self.temp_low) / (self.temp_high - self.temp_low)
        return self.scale_low + frac * (self.scale_high - self.scale_low)


def apply_gyro_calibration(omega_raw, temperature: float, cal: GyroCalibration) -> np.ndarray:
    """Scale, de-bias and re-orient a raw angular velocity sample."""
    omega_raw = np.asarray(omega_raw, dtype=float).reshape(3)
    scaled = cal.scale_at(temperature) * (omega_raw - cal.bias)
    return quat_to_matrix(cal.orientation_offset) @ scaled


@dataclass
class BiasCalibState:
    """Online gyro bias estimation over automatically detected rest windows.

    Rest is declared once every sample in the trailing window has an
    acceleration norm close to gravity and a small de-biased rate; the bias
    then converges exponentially toward the windowed mean rate, and is
    frozen the moment motion resumes.
    """

    window: float = 0.5  # [s]
    accel_tolerance: float = 0.3  # [m/s^2] around gravity magnitude
    rate_tolerance: float = 0.05  # [rad/s] residual after de-biasing
    time_constant: float = 0.2  # [s] exponential convergence at rest
    bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    resting: bool = False
    _samples: deque = field(default_factory=deque, repr=False)

    def __post_init__(self):
        self.bias = np.asarray(self.bias, dtype=float).reshape(3).copy()


def bias_autocalib_update(omega_raw, accel, dt: float, state: BiasCalibState) -> np.ndarray:
    """Advance the rest detector one sample; returns the current bias estimate."""
    omega_raw = np.asarray(omega_raw, dtype=float).reshape(3)
    accel = np.asarray(accel, dtype=float).reshape(3)
    if dt <= 0.0:
        raise ParameterError(f"dt must be > 0, got {dt}")

    accel_ok = abs(float(np.linalg.norm(accel)) - GRAVITY_MAGNITUDE) < state.accel_tolerance
    rate_ok = float(np.linalg.norm(omega_raw - state.bias)) < state.rate_tolerance
    state._samples.append((omega_raw.copy(), accel_ok and rate_ok))
    max_len = max(1, round(state.window / dt))
    while len(state._samples) > max_len:
        state._samples.popleft()

    window_full = len(state._samples) >= max_len
    state.resting = window_full and all(ok for _, ok in state._samples)
    if state.resting:
        mean_rate = np.mean([w for w, _ in state._samples], axis=0)
        gain = 1.0 - math.exp(-dt / state.time_constant)
        state.bias = state.bias + gain * (mean_rate - state.bias)
    return state.bias
