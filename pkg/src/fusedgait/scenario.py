"""Deterministic closed-loop scenario runs with CSV logging.

One run binds the whole controller: command limiting, the CPG pose,
orientation synthesis from the plant states (plus optional seeded noise),
fused-angle extraction, the deviation feedback pipeline, timing feedback,
virtual slope, the inverse-space adjustments, leg IK and the actuator
feed-forward path, against the sagittal deviation plant and the lateral
rocking plant. Identical configuration and seed give byte-identical CSV.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import poses
from .actuator import feedforward_setpoint, superpose_feedforward
from .config import HarnessConfig, ScenarioConfig
from .cpg import (
    GaitCommand,
    generate_pose,
    leg_phase,
    limit_command,
    segment_progress,
    update_phase,
)
from .errors import ConfigError
from .estimation import (
    FusedAngles,
    LimitCycleModel,
    SineWave,
    deviations,
    expected_attitude,
    fused_to_orientation,
    orientation_to_fused,
)
from .feedback import (
    FeedbackPipeline,
    activations,
    apply_corrective_actions,
    timing_feedback,
    virtual_slope,
)
from .plants import LateralPlant, SagittalPlant, SimState, step_plants
from .rotations import quat_multiply, quat_to_matrix

COLUMNS = (
    "time", "mu", "f_g", "v_gx", "v_gy", "v_gz",
    "theta_b", "phi_b", "d_theta", "d_phi",
    "e_px", "e_py", "e_ix", "e_iy", "e_dx", "e_dy",
    "u_arm", "u_hip", "u_foot_cts", "u_foot_support", "u_com",
    "support_left", "support_right",
    "com_shift_x", "com_shift_y", "foot_height_l", "foot_height_r",
    "l_leg_extension", "r_leg_extension", "l_leg_angle_y", "r_leg_angle_y",
    "l_foot_angle_y", "r_foot_angle_y", "l_knee_pitch", "r_knee_pitch",
    "ffwd_l_knee", "ffwd_r_knee",
    "sag_x1", "sag_x2", "lat_y", "lat_ydot", "support_leg",
    "clearance", "fallen",
)

#: joint names of the bundled planar robot model -> JointPose attributes
BIPED_JOINT_MAP = {
    "l_hip_pitch": ("left_leg", "hip_pitch"),
    "l_knee_pitch": ("left_leg", "knee_pitch"),
    "l_ankle_pitch": ("left_leg", "ankle_pitch"),
    "r_hip_pitch": ("right_leg", "hip_pitch"),
    "r_knee_pitch": ("right_leg", "knee_pitch"),
    "r_ankle_pitch": ("right_leg", "ankle_pitch"),
}


@dataclass
class RunLog:
    """Per-tick log of one scenario run."""

    name: str
    columns: tuple
    rows: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    @property
    def fell(self) -> bool:
        return bool(self.rows[-1, self.columns.index("fallen")])

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(f"{v:.9g}" for v in row))
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_csv())


def fit_limit_cycle(phases, values) -> SineWave:
    """Least-squares sine-in-phase fit offset + amp*sin(mu + shift)."""
    phases = np.asarray(phases, dtype=float)
    values = np.asarray(values, dtype=float)
    basis = np.column_stack([np.ones_like(phases), np.sin(phases), np.cos(phases)])
    coeff, *_ = np.linalg.lstsq(basis, values, rcond=None)
    offset, a_sin, a_cos = coeff
    return SineWave(
        offset=float(offset),
        amplitude=float(math.hypot(a_sin, a_cos)),
        shift=float(math.atan2(a_cos, a_sin)),
    )


def _fit_roll_cycle(sc: ScenarioConfig, freq: float) -> SineWave:
    """Open-loop warmup of a fresh lateral plant to fit the roll cycle."""
    plant = LateralPlant(
        pendulum_constant=sc.pendulum_constant,
        support_halfwidth=sc.support_halfwidth,
        com_height=sc.com_height,
    )
    plant.place_on_orbit(freq)
    state = SimState(
        sagittal=SagittalPlant(dt=sc.dt), lateral=plant, mu=0.0,
        fall_threshold=sc.fall_threshold,
    )
    n = max(16, int(round(sc.warmup_duration / sc.dt)))
    mus = np.empty(n)
    rolls = np.empty(n)
    for k in range(n):
        mus[k] = state.mu
        rolls[k] = plant.roll()
        step_plants(state, np.zeros(5), freq, sc.dt)
    return fit_limit_cycle(mus, rolls)


def run_scenario(cfg: HarnessConfig) -> RunLog:
    """Execute one closed-loop scenario and return its tick log."""
    sc = cfg.scenario
    gait, fb, kin = cfg.gait, cfg.feedback, cfg.kinematics
    dt = sc.dt
    rng = np.random.default_rng(sc.seed)

    roll_model = sc.expected_roll or _fit_roll_cycle(sc, gait.freq_nominal)
    cycle = LimitCycleModel(pitch=sc.expected_pitch, roll=roll_model)

    lateral = LateralPlant(
        pendulum_constant=sc.pendulum_constant,
        support_halfwidth=sc.support_halfwidth,
        com_height=sc.com_height,
    )
    lateral.place_on_orbit(gait.freq_nominal)
    state = SimState(
        sagittal=SagittalPlant(dt=dt),
        lateral=lateral,
        mu=0.0,
        fall_threshold=sc.fall_threshold,
        sagittal_mix=fb.action_directions[:, 1].copy(),
    )
    pipeline = FeedbackPipeline(fb, dt)
    command = GaitCommand()
    target = GaitCommand(np.asarray(sc.command, dtype=float))

    models = None
    if sc.log_actuator and cfg.robot_model is not None:
        models = (
            cfg.robot_model,
            cfg.robot_model.rerooted("l_foot"),
            cfg.robot_model.rerooted("r_foot"),
        )
    q_hist: list[dict] = []

    n_ticks = int(round(sc.duration / dt))
    pending = sorted(sc.pushes, key=lambda p: p.time)
    rows = np.zeros((n_ticks, len(COLUMNS)))

    for k in range(n_ticks):
        t = k * dt
        while pending and pending[0].time < t + dt:
            push = pending.pop(0)
            if push.axis == "lateral":
                state.lateral.rate_impulse(push.magnitude)
            else:
                state.sagittal.rate_impulse(push.magnitude)
        state.sagittal.output_offset = (
            sc.output_offset if t >= sc.output_offset_time else 0.0
        )

        command = limit_command(target, command, dt, gait.limits)

        pitch_b = sc.expected_pitch.at(state.mu) + state.sagittal.output()
        roll_b = state.lateral.roll()
        attitude = fused_to_orientation(FusedAngles(0.0, pitch_b, roll_b, 1))
        measured = attitude
        if sc.noise_std > 0.0:
            axis = rng.normal(size=3)
            axis /= max(1e-12, np.linalg.norm(axis))
            angle = rng.normal(0.0, sc.noise_std)
            half = 0.5 * angle
            noise = np.concatenate([[math.cos(half)], math.sin(half) * axis])
            measured = quat_multiply(noise, attitude)
        fused = orientation_to_fused(measured)
        dev = deviations(fused, expected_attitude(state.mu, cycle))

        tick = pipeline.update(dev, t, state.mu)
        u_a = activations(fb.k_a, tick.e)
        f_g = (
            timing_feedback(tick.filtered_roll, state.mu, fb.gains, gait)
            if sc.enable_timing
            else gait.freq_nominal
        )

        open_pose, adjust, coeffs = generate_pose(command, state.mu, gait)
        pose, adjust = apply_corrective_actions(
            open_pose, adjust, u_a, state.mu, fb, gait, kin
        )
        if sc.enable_virtual_slope:
            for i, (leg, halt_leg) in enumerate(
                ((open_pose.left_leg, gait.halt.left_leg),
                 (open_pose.right_leg, gait.halt.right_leg))
            ):
                swing_angle = -(leg.angle_y - halt_leg.angle_y)
                adjust.foot_height[i] += virtual_slope(
                    dev.pitch, command.velocity[0], swing_angle, fb.gains
                )

        inverse = poses.abstract_to_inverse(pose, kin)
        shift = np.array([-adjust.com_shift[0], -adjust.com_shift[1], 0.0])
        inverse.left_foot.position += shift + np.array([0.0, 0.0, adjust.foot_height[0]])
        inverse.right_foot.position += shift + np.array([0.0, 0.0, adjust.foot_height[1]])
        joints = poses.inverse_to_joint(inverse, kin)

        trunk_rot = quat_to_matrix(attitude)
        feet_world = (
            trunk_rot @ inverse.left_foot.position,
            trunk_rot @ inverse.right_foot.position,
        )
        if state.lateral.support > 0:
            clearance = feet_world[1][2] - feet_world[0][2]
        else:
            clearance = feet_world[0][2] - feet_world[1][2]

        ffwd_knees = (0.0, 0.0)
        if models is not None:
            q_now = {
                joint: getattr(getattr(joints, limb), attr)
                for joint, (limb, attr) in BIPED_JOINT_MAP.items()
            }
            q_hist.append(q_now)
            if len(q_hist) > 3:
                q_hist.pop(0)
            qd, qdd = {}, {}
            if len(q_hist) >= 2:
                qd = {j: (q_hist[-1][j] - q_hist[-2][j]) / dt for j in q_now}
            if len(q_hist) >= 3:
                qdd = {
                    j: (q_hist[-1][j] - 2.0 * q_hist[-2][j] + q_hist[-3][j]) / (dt * dt)
                    for j in q_now
                }
            trunk_model, left_model, right_model = models
            tau = superpose_feedforward(
                trunk_model,
                [left_model, right_model],
                [coeffs.left_foot, coeffs.right_foot],
                q_now, qd, qdd,
            )
            ffwd_knees = tuple(
                feedforward_setpoint(
                    q_now[j], qd.get(j, 0.0), tau.get(j, 0.0), cfg.bus_voltage, cfg.servo
                )
                for j in ("l_knee_pitch", "r_knee_pitch")
            )

        rows[k] = (
            t, state.mu, f_g, *command.velocity,
            pitch_b, roll_b, dev.pitch, dev.roll,
            *tick.e,
            *u_a,
            coeffs.left_foot, coeffs.right_foot,
            *adjust.com_shift, *adjust.foot_height,
            pose.left_leg.extension, pose.right_leg.extension,
            pose.left_leg.angle_y, pose.right_leg.angle_y,
            pose.left_leg.foot_angle_y, pose.right_leg.foot_angle_y,
            joints.left_leg.knee_pitch, joints.right_leg.knee_pitch,
            *ffwd_knees,
            state.sagittal.x[0], state.sagittal.x[1],
            state.lateral.y, state.lateral.ydot, state.lateral.support,
            clearance, float(state.fallen),
        )

        step_plants(state, u_a, f_g, dt)

    return RunLog(name=sc.name, columns=COLUMNS, rows=rows)


def swing_mask(log: RunLog, side: str, double_support: float) -> np.ndarray:
    """Ticks on which the given leg is in its swing segment."""
    mus = log.column("mu")
    mask = np.zeros(len(mus), dtype=bool)
    for i, mu in enumerate(mus):
        in_swing, _ = segment_progress(leg_phase(mu, side), double_support)
        mask[i] = in_swing
    return mask


def swing_clearance(log: RunLog, double_support: float) -> np.ndarray:
    """Clearance samples of whichever leg is swinging, over the whole run."""
    support = log.column("support_leg")
    clearance = log.column("clearance")
    sides = np.where(support > 0, "right", "left")
    keep = np.zeros(len(clearance), dtype=bool)
    mus = log.column("mu")
    for i, (mu, side) in enumerate(zip(mus, sides)):
        in_swing, _ = segment_progress(leg_phase(mu, side), double_support)
        keep[i] = in_swing
    return clearance[keep]


def calibrate_lateral_push(
    cfg: HarnessConfig,
    low: float,
    high: float,
    iterations: int = 12,
    recovery_window: float = 3.0,
    recovery_level: float = 0.1,
) -> float:
    """Bisect the smallest lateral push that fells the timing-off run.

    Returns a magnitude just above that boundary, verified to straddle the
    two outcomes: the timing-off run falls, the timing-on run recovers
    (|d_phi| back below `recovery_level` within `recovery_window` seconds
    of the push).
    """
    def falls_without_timing(magnitude: float) -> bool:
        test = _with_push(cfg, magnitude, enable_timing=False)
        return run_scenario(test).fell

    if falls_without_timing(low):
        raise ConfigError("push bisection low bound already falls")
    if not falls_without_timing(high):
        raise ConfigError("push bisection high bound does not fall")
    lo, hi = low, high
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if falls_without_timing(mid):
            hi = mid
        else:
            lo = mid
    magnitude = hi * 1.05
    on = run_scenario(_with_push(cfg, magnitude, enable_timing=True))
    if on.fell or not _recovers(on, cfg, magnitude, recovery_window, recovery_level):
        raise ConfigError(
            f"timing-on run does not recover at calibrated push {magnitude:.4f}"
        )
    return magnitude


def _with_push(cfg: HarnessConfig, magnitude: float, enable_timing: bool) -> HarnessConfig:
    from .config import Push  # local import to avoid a cycle in module docs

    push_time = cfg.scenario.pushes[0].time if cfg.scenario.pushes else 3.0
    scenario = replace(
        cfg.scenario,
        pushes=(Push(time=push_time, axis="lateral", magnitude=magnitude),),
        enable_timing=enable_timing,
    )
    return replace(cfg, scenario=scenario)


def _recovers(
    log: RunLog, cfg: HarnessConfig, magnitude: float, window: float, level: float
) -> bool:
    push_time = cfg.scenario.pushes[0].time if cfg.scenario.pushes else 3.0
    time = log.column("time")
    d_phi = np.abs(log.column("d_phi"))
    after = time >= push_time + window
    return bool(np.all(d_phi[after] < level))
