"""Configuration loading for the gait controller and scenario harness.

Configuration files are TOML with the sections [gait], [feedback], [imu],
[servo], [kinematics], [scenario] and [tuning]; every key has a default,
so a file only states what differs. See data/default.toml for the
documented key reference.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .actuator import RigidBodyModel, ServoModel, model_from_dict
from .cpg import CommandLimits, GaitConfig, WaveformAmplitudes
from .errors import ConfigError, GaitError
from .estimation import GyroCalibration, SineWave
from .feedback import (
    ACTION_NAMES,
    FeedbackConfig,
    FeedbackGains,
    SaturationBounds,
    gains_matrix,
)
from .filters import SoftBounds
from .poses import AbstractArm, AbstractLeg, AbstractPose, KinematicConfig


@dataclass(frozen=True)
class Push:
    time: float
    axis: str  # "lateral" or "sagittal"
    magnitude: float  # [rad/s] deviation-rate impulse

    def __post_init__(self):
        if self.axis not in ("lateral", "sagittal"):
            raise ConfigError(f"push axis must be lateral or sagittal, got {self.axis!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "walk_in_place"
    duration: float = 10.0
    dt: float = 0.01
    seed: int = 0
    noise_std: float = 0.0  # [rad] orientation tilt noise per tick
    command: tuple = (0.0, 0.0, 0.0)  # target gait velocity
    fall_threshold: float = 0.6  # [rad]
    enable_timing: bool = False
    enable_virtual_slope: bool = False
    isolate: str | None = None  # "timing" | "integral" | "virtual_slope"
    pendulum_constant: float = 4.0
    support_halfwidth: float = 0.06
    com_height: float = 0.22
    output_offset: float = 0.0  # [rad] floor-step pitch disturbance
    output_offset_time: float = 0.0
    expected_pitch: SineWave = field(default_factory=SineWave)
    expected_roll: SineWave | None = None  # None: fitted during warmup
    warmup_duration: float = 4.0
    pushes: tuple = ()
    clearance_margin: float = 0.002  # [m]
    log_actuator: bool = True

    def __post_init__(self):
        if self.duration <= 0.0 or self.dt <= 0.0:
            raise ConfigError("scenario duration and dt must be > 0")
        if self.isolate is not None:
            if self.isolate not in ("timing", "integral", "virtual_slope"):
                raise ConfigError(f"unknown isolation mechanism {self.isolate!r}")


@dataclass(frozen=True)
class TuningSection:
    x_max: tuple = (0.1, 0.5)
    u_max: float = 1.0


@dataclass(frozen=True)
class HarnessConfig:
    gait: GaitConfig = field(default_factory=GaitConfig)
    kinematics: KinematicConfig = field(default_factory=KinematicConfig)
    feedback: FeedbackConfig = field(default_factory=FeedbackConfig)
    imu: GyroCalibration = field(default_factory=GyroCalibration)
    servo: ServoModel = field(default_factory=ServoModel)
    bus_voltage: float = 12.0
    robot_model: RigidBodyModel | None = None
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    tuning: TuningSection = field(default_factory=TuningSection)


def _section(data: dict, name: str) -> dict:
    sec = data.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return dict(sec)


def _take(sec: dict, key: str, default):
    return sec.pop(key, default)


def _reject_unknown(sec: dict, name: str) -> None:
    if sec:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(sec)}")


def _halt_pose(sec: dict) -> AbstractPose:
    """Symmetric halt pose from shorthand keys (mirrored roll components)."""
    leg_ext = _take(sec, "leg_extension", 0.0)
    leg_roll = _take(sec, "leg_roll", 0.0)
    leg_pitch = _take(sec, "leg_pitch", 0.0)
    foot_roll = _take(sec, "foot_roll", 0.0)
    foot_pitch = _take(sec, "foot_pitch", 0.0)
    arm_ext = _take(sec, "arm_extension", 0.0)
    arm_roll = _take(sec, "arm_roll", 0.0)
    arm_pitch = _take(sec, "arm_pitch", 0.0)
    _reject_unknown(sec, "gait.halt")

    def leg(sign):
        return AbstractLeg(
            extension=leg_ext, angle_x=sign * leg_roll, angle_y=leg_pitch,
            foot_angle_x=sign * foot_roll, foot_angle_y=foot_pitch,
        )

    def arm(sign):
        return AbstractArm(extension=arm_ext, angle_x=sign * arm_roll, angle_y=arm_pitch)

    return AbstractPose(left_leg=leg(1.0), right_leg=leg(-1.0),
                        left_arm=arm(1.0), right_arm=arm(-1.0))


def _gait(data: dict) -> GaitConfig:
    sec = _section(data, "gait")
    halt = _halt_pose(_take(sec, "halt", {}))
    amp_sec = _take(sec, "amplitudes", {})
    amplitudes = WaveformAmplitudes(
        step_lift=_take(amp_sec, "step_lift", 0.06),
        swing_pitch=_take(amp_sec, "swing_pitch", 0.25),
        swing_roll=_take(amp_sec, "swing_roll", 0.12),
        swing_yaw=_take(amp_sec, "swing_yaw", 0.2),
        arm_swing=_take(amp_sec, "arm_swing", 0.25),
        lean_rate=_take(amp_sec, "lean_rate", 0.02),
    )
    _reject_unknown(amp_sec, "gait.amplitudes")
    limits = CommandLimits(
        max_norm=_take(sec, "max_norm", 1.0),
        max_accel=_take(sec, "max_accel", 2.0),
        max_jerk=_take(sec, "max_jerk", 20.0),
    )
    cfg = GaitConfig(
        freq_nominal=_take(sec, "freq_nominal", 1.6),
        freq_max=_take(sec, "freq_max", 3.0),
        double_support=_take(sec, "double_support", 0.1 * math.pi),
        halt=halt,
        amplitudes=amplitudes,
        ground_lift_trim=_take(sec, "ground_lift_trim", 0.0),
        blend_time=_take(sec, "blend_time", 1.0),
        limits=limits,
    )
    _reject_unknown(sec, "gait")
    return cfg


def _kinematics(data: dict) -> KinematicConfig:
    sec = _section(data, "kinematics")
    cfg = KinematicConfig(
        thigh_length=_take(sec, "thigh_length", 0.2),
        shank_length=_take(sec, "shank_length", 0.2),
        upper_arm_length=_take(sec, "upper_arm_length", 0.15),
        lower_arm_length=_take(sec, "lower_arm_length", 0.15),
        hip_offset_y=_take(sec, "hip_offset_y", 0.055),
        shoulder_offset_y=_take(sec, "shoulder_offset_y", 0.11),
        shoulder_offset_z=_take(sec, "shoulder_offset_z", 0.25),
    )
    _reject_unknown(sec, "kinematics")
    return cfg


def _soft_bounds(value, name: str, default: SoftBounds) -> SoftBounds:
    if value is None:
        return default
    try:
        lo, hi, buf = value
        return SoftBounds(float(lo), float(hi), float(buf))
    except (TypeError, ValueError, GaitError) as exc:
        raise ConfigError(f"{name} must be [lo, hi, buffer]: {exc}") from exc


def _feedback(data: dict) -> FeedbackConfig:
    sec = _section(data, "feedback")

    def pair(key, default=(0.0, 0.0)):
        value = _take(sec, key, list(default))
        try:
            x, y = value
            return float(x), float(y)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"feedback.{key} must be [lateral, sagittal]") from exc

    gains = FeedbackGains(
        kp=pair("kp"),
        kd=pair("kd"),
        ki=pair("ki"),
        deadband_p=_take(sec, "deadband_p", 0.0),
        deadband_d=_take(sec, "deadband_d", 0.0),
        deadband_i=_take(sec, "deadband_i", 0.0),
        integrator_half_life=_take(sec, "integrator_half_life", 2.0),
        timing_weight_shape=_take(sec, "timing_weight_shape", 1.0),
        timing_speed_up=_take(sec, "timing_speed_up", 0.0),
        timing_slow_down=_take(sec, "timing_slow_down", 0.0),
        deadband_timing=_take(sec, "deadband_timing", 0.0),
        slope_deadband=_take(sec, "slope_deadband", 0.0),
        slope_scale_with=_take(sec, "slope_scale_with", 1.0),
        slope_scale_against=_take(sec, "slope_scale_against", 0.25),
        slope_clearance_gain=_take(sec, "slope_clearance_gain", 0.0),
    )
    k_a = gains_matrix(_take(sec, "k_a", {}))
    sat_sec = _take(sec, "saturation", {})
    defaults = SaturationBounds()
    saturation = SaturationBounds(
        arm_angle=_soft_bounds(sat_sec.pop("arm_angle", None), "saturation.arm_angle",
                               defaults.arm_angle),
        leg_angle=_soft_bounds(sat_sec.pop("leg_angle", None), "saturation.leg_angle",
                               defaults.leg_angle),
        foot_angle=_soft_bounds(sat_sec.pop("foot_angle", None), "saturation.foot_angle",
                                defaults.foot_angle),
        com_shift=_soft_bounds(sat_sec.pop("com_shift", None), "saturation.com_shift",
                               SoftBounds(-0.05, 0.05, 0.01)),
    )
    _reject_unknown(sat_sec, "feedback.saturation")

    dir_sec = _take(sec, "action_directions", {})
    directions = FeedbackConfig().action_directions.copy()
    for action, value in dir_sec.items():
        if action not in ACTION_NAMES:
            raise ConfigError(f"unknown corrective action {action!r}")
        directions[ACTION_NAMES.index(action)] = np.asarray(value, dtype=float).reshape(2)

    weights = tuple(
        (float(c), float(w), float(v)) for c, w, v in _take(sec, "wlbf_phase_weights", [])
    )
    cfg = FeedbackConfig(
        gains=gains,
        k_a=k_a,
        mean_window_p=int(_take(sec, "mean_window_p", 5)),
        mean_window_i=int(_take(sec, "mean_window_i", 5)),
        wlbf_capacity=int(_take(sec, "wlbf_capacity", 10)),
        wlbf_phase_weights=weights,
        enable_p=bool(_take(sec, "enable_p", True)),
        enable_d=bool(_take(sec, "enable_d", True)),
        enable_i=bool(_take(sec, "enable_i", True)),
        action_directions=directions,
        support_fade_width=_take(sec, "support_fade_width", 0.1 * math.pi),
        saturation=saturation,
    )
    _reject_unknown(sec, "feedback")
    return cfg


def _imu(data: dict) -> GyroCalibration:
    sec = _section(data, "imu")
    cal = GyroCalibration(
        scale_low=_take(sec, "scale_low", 1.0),
        scale_high=_take(sec, "scale_high", 1.0),
        temp_low=_take(sec, "temp_low", 15.0),
        temp_high=_take(sec, "temp_high", 60.0),
        orientation_offset=np.asarray(
            _take(sec, "orientation_offset", [1.0, 0.0, 0.0, 0.0]), dtype=float
        ),
        bias=np.asarray(_take(sec, "bias", [0.0, 0.0, 0.0]), dtype=float),
    )
    _reject_unknown(sec, "imu")
    return cal


def _servo(data: dict) -> tuple[ServoModel, float, str]:
    sec = _section(data, "servo")
    servo = ServoModel(
        kp=_take(sec, "kp", 10.0),
        ff_torque=_take(sec, "ff_torque", 1.0),
        ff_viscous=_take(sec, "ff_viscous", 0.0),
        ff_coulomb=_take(sec, "ff_coulomb", 0.0),
        ff_static=_take(sec, "ff_static", 0.0),
        stribeck_velocity=_take(sec, "stribeck_velocity", 0.1),
    )
    bus_voltage = _take(sec, "bus_voltage", 12.0)
    model_source = _take(sec, "model", "builtin:planar_biped")
    _reject_unknown(sec, "servo")
    return servo, bus_voltage, model_source


def _sine(value, name: str) -> SineWave:
    try:
        offset, amplitude, shift = value
        return SineWave(float(offset), float(amplitude), float(shift))
    except (TypeError, ValueError, GaitError) as exc:
        raise ConfigError(f"{name} must be [offset, amplitude, shift]: {exc}") from exc


def _scenario(data: dict) -> ScenarioConfig:
    sec = _section(data, "scenario")
    pushes = tuple(
        Push(
            time=float(p.get("time", 0.0)),
            axis=str(p.get("axis", "lateral")),
            magnitude=float(p.get("magnitude", 0.0)),
        )
        for p in _take(sec, "pushes", [])
    )
    roll = _take(sec, "expected_roll", None)
    cfg = ScenarioConfig(
        name=str(_take(sec, "name", "walk_in_place")),
        duration=_take(sec, "duration", 10.0),
        dt=_take(sec, "dt", 0.01),
        seed=int(_take(sec, "seed", 0)),
        noise_std=_take(sec, "noise_std", 0.0),
        command=tuple(float(v) for v in _take(sec, "command", [0.0, 0.0, 0.0])),
        fall_threshold=_take(sec, "fall_threshold", 0.6),
        enable_timing=bool(_take(sec, "enable_timing", False)),
        enable_virtual_slope=bool(_take(sec, "enable_virtual_slope", False)),
        isolate=_take(sec, "isolate", None),
        pendulum_constant=_take(sec, "pendulum_constant", 4.0),
        support_halfwidth=_take(sec, "support_halfwidth", 0.06),
        com_height=_take(sec, "com_height", 0.22),
        output_offset=_take(sec, "output_offset", 0.0),
        output_offset_time=_take(sec, "output_offset_time", 0.0),
        expected_pitch=_sine(_take(sec, "expected_pitch", [0.0, 0.0, 0.0]),
                             "scenario.expected_pitch"),
        expected_roll=None if roll is None else _sine(roll, "scenario.expected_roll"),
        warmup_duration=_take(sec, "warmup_duration", 4.0),
        pushes=pushes,
        clearance_margin=_take(sec, "clearance_margin", 0.002),
        log_actuator=bool(_take(sec, "log_actuator", True)),
    )
    _reject_unknown(sec, "scenario")
    return cfg


def _tuning(data: dict) -> TuningSection:
    sec = _section(data, "tuning")
    x_max = _take(sec, "x_max", [0.1, 0.5])
    cfg = TuningSection(
        x_max=tuple(float(v) for v in x_max),
        u_max=float(_take(sec, "u_max", 1.0)),
    )
    _reject_unknown(sec, "tuning")
    if len(cfg.x_max) != 2:
        raise ConfigError("tuning.x_max must have two entries")
    return cfg


def load_robot_model(source: str) -> RigidBodyModel:
    """Load a rigid-body model from `builtin:<name>` or a TOML file path."""
    if source.startswith("builtin:"):
        name = source.split(":", 1)[1]
        ref = resources.files("fusedgait.data").joinpath(f"{name}.toml")
        if not ref.is_file():
            raise ConfigError(f"unknown builtin robot model {name!r}")
        raw = ref.read_bytes()
    else:
        path = Path(source)
        if not path.is_file():
            raise ConfigError(f"robot model file not found: {source}")
        raw = path.read_bytes()
    try:
        return model_from_dict(tomllib.loads(raw.decode()))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"robot model {source}: {exc}") from exc


def _validate_isolation(cfg: HarnessConfig) -> None:
    """Reject toggle combinations that would blur a single-mechanism run."""
    iso = cfg.scenario.isolate
    if iso is None:
        return
    on = {
        "timing": cfg.scenario.enable_timing,
        "integral": cfg.feedback.enable_i,
        "virtual_slope": cfg.scenario.enable_virtual_slope,
    }
    others = [name for name, enabled in on.items() if enabled and name != iso]
    if others:
        raise ConfigError(
            f"scenario isolates {iso!r} but also enables {others}; "
            "disable the other mechanisms for an isolation run"
        )


def parse_config(data: dict) -> HarnessConfig:
    """Build a validated harness configuration from parsed TOML data."""
    data = dict(data)
    gait = _gait(data)
    kinematics = _kinematics(data)
    feedback = _feedback(data)
    imu = _imu(data)
    servo, bus_voltage, model_source = _servo(data)
    scenario = _scenario(data)
    tuning = _tuning(data)
    known = {"gait", "kinematics", "feedback", "imu", "servo", "scenario", "tuning"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    cfg = HarnessConfig(
        gait=gait,
        kinematics=kinematics,
        feedback=feedback,
        imu=imu,
        servo=servo,
        bus_voltage=bus_voltage,
        robot_model=load_robot_model(model_source) if scenario.log_actuator else None,
        scenario=scenario,
        tuning=tuning,
    )
    _validate_isolation(cfg)
    return cfg


def load_config(path) -> HarnessConfig:
    """Parse and validate a TOML configuration file.

    Syntax errors carry the line/column reported by the TOML parser.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        return parse_config(data)
    except GaitError as exc:
        if isinstance(exc, ConfigError):
            raise ConfigError(f"{path}: {exc}") from exc
        raise ConfigError(f"{path}: invalid value: {exc}") from exc


def load_builtin_config(name: str) -> HarnessConfig:
    """Load one of the packaged example configurations."""
    ref = resources.files("fusedgait.data").joinpath(f"{name}.toml")
    if not ref.is_file():
        raise ConfigError(f"unknown builtin config {name!r}")
    data = tomllib.loads(ref.read_bytes().decode())
    return parse_config(data)
