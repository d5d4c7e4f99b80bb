import math

import numpy as np
import pytest

from fusedgait.errors import ParameterError
from fusedgait.estimation import (
    BiasCalibState,
    DeviationPair,
    FusedAngles,
    GyroCalibration,
    LimitCycleModel,
    SineWave,
    apply_gyro_calibration,
    bias_autocalib_update,
    deviations,
    expected_attitude,
    fused_to_orientation,
    orientation_to_fused,
)
from fusedgait.rotations import (
    quat_from_axis_angle,
    quat_from_matrix,
    quat_multiply,
    quat_to_matrix,
    rot_z,
)


def rodrigues(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    K = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


def fused_rotation_oracle(yaw, pitch, roll):
    """Independent construction: yaw about z composed with a pure tilt."""
    s_pitch, s_roll = math.sin(pitch), math.sin(roll)
    alpha = math.asin(min(1.0, math.sqrt(s_pitch**2 + s_roll**2)))
    if alpha == 0.0:
        tilt = np.eye(3)
    else:
        gamma = math.atan2(s_pitch, s_roll)
        tilt = rodrigues([math.cos(gamma), math.sin(gamma), 0.0], alpha)
    return rot_z(yaw) @ tilt


class TestOrientationToFused:
    def test_identity(self):
        f = orientation_to_fused([1.0, 0.0, 0.0, 0.0])
        assert (f.yaw, f.pitch, f.roll, f.hemisphere) == (0.0, 0.0, 0.0, 1)

    def test_pure_pitch(self):
        q = quat_from_axis_angle([0, 1, 0], 0.2)
        f = orientation_to_fused(q)
        assert f.pitch == pytest.approx(0.2, abs=1e-12)
        assert f.roll == pytest.approx(0.0, abs=1e-12)
        assert f.yaw == pytest.approx(0.0, abs=1e-12)

    def test_pure_roll(self):
        q = quat_from_axis_angle([1, 0, 0], -0.35)
        f = orientation_to_fused(q)
        assert f.roll == pytest.approx(-0.35, abs=1e-12)
        assert f.pitch == pytest.approx(0.0, abs=1e-12)

    def test_non_unit_rejected(self):
        with pytest.raises(ParameterError):
            orientation_to_fused([1.0, 0.2, 0.0, 0.0])

    def test_matches_rotation_oracle(self):
        rng = np.random.default_rng(31)
        for _ in range(2000):
            yaw = rng.uniform(-math.pi, math.pi)
            pitch = rng.uniform(-0.7, 0.7)
            max_roll = math.pi / 2 - abs(pitch) - 1e-3
            roll = rng.uniform(-max_roll, max_roll)
            q = quat_from_matrix(fused_rotation_oracle(yaw, pitch, roll))
            f = orientation_to_fused(q)
            assert f.pitch == pytest.approx(pitch, abs=1e-9)
            assert f.roll == pytest.approx(roll, abs=1e-9)
            assert f.yaw == pytest.approx(yaw, abs=1e-9)
            assert f.hemisphere == 1

    def test_round_trip_random_quaternions(self):
        rng = np.random.default_rng(32)
        for _ in range(2000):
            q = rng.normal(size=4)
            q /= np.linalg.norm(q)
            f = orientation_to_fused(q)
            q_back = fused_to_orientation(f)
            # same rotation up to global sign
            if np.dot(q, q_back) < 0.0:
                q_back = -q_back
            np.testing.assert_allclose(q_back, q, atol=1e-9)

    def test_domain_constraint(self):
        rng = np.random.default_rng(33)
        for _ in range(2000):
            q = rng.normal(size=4)
            q /= np.linalg.norm(q)
            f = orientation_to_fused(q)
            assert abs(f.pitch) + abs(f.roll) <= math.pi / 2 + 1e-9


class TestExpectedAttitude:
    def test_zero_amplitude(self):
        m = LimitCycleModel(pitch=SineWave(offset=0.04), roll=SineWave(offset=-0.01))
        assert expected_attitude(1.3, m) == (0.04, -0.01)

    def test_sine_peak(self):
        m = LimitCycleModel(roll=SineWave(amplitude=0.2))
        assert expected_attitude(math.pi / 2, m)[1] == pytest.approx(0.2)

    def test_periodicity(self):
        m = LimitCycleModel(pitch=SineWave(0.01, 0.05, 0.3), roll=SineWave(-0.02, 0.1, -1.0))
        assert expected_attitude(0.7, m) == pytest.approx(expected_attitude(0.7 + 2 * math.pi, m))

    def test_negative_amplitude_rejected(self):
        with pytest.raises(ParameterError):
            SineWave(amplitude=-0.1)


class TestDeviations:
    def test_matching(self):
        d = deviations(FusedAngles(pitch=0.04, roll=-0.01), (0.04, -0.01))
        assert (d.pitch, d.roll) == (0.0, 0.0)

    def test_values(self):
        d = deviations(FusedAngles(pitch=0.1), (0.04, 0.0))
        assert d.pitch == pytest.approx(0.06)

    def test_sign_convention(self):
        # tilted further forward than expected => positive sagittal deviation
        d = deviations(FusedAngles(pitch=0.2), (0.05, 0.0))
        assert d.pitch > 0.0

    def test_linearity(self):
        rng = np.random.default_rng(34)
        for _ in range(100):
            p1, r1, p2, r2, ep, er = rng.uniform(-0.3, 0.3, 6)
            a = deviations(FusedAngles(pitch=p1, roll=r1), (ep, er))
            b = deviations(FusedAngles(pitch=p2, roll=r2), (0.0, 0.0))
            both = deviations(FusedAngles(pitch=p1 + p2, roll=r1 + r2), (ep, er))
            assert both.pitch == pytest.approx(a.pitch + b.pitch, abs=1e-12)
            assert both.roll == pytest.approx(a.roll + b.roll, abs=1e-12)


class TestGyroCalibration:
    def test_scale_saturation(self):
        cal = GyroCalibration(scale_low=0.9, scale_high=1.1, temp_low=20.0, temp_high=60.0)
        assert cal.scale_at(-10.0) == 0.9
        assert cal.scale_at(100.0) == 1.1

    def test_scale_midpoint(self):
        cal = GyroCalibration(scale_low=0.9, scale_high=1.1, temp_low=20.0, temp_high=60.0)
        assert cal.scale_at(40.0) == pytest.approx(1.0)

    def test_bias_removal(self):
        bias = np.array([0.01, -0.02, 0.005])
        cal = GyroCalibration(scale_low=2.0, scale_high=2.0, bias=bias)
        out = apply_gyro_calibration(np.zeros(3), 30.0, cal)
        np.testing.assert_allclose(out, -2.0 * bias, atol=1e-12)

    def test_orientation_offset(self):
        offset = quat_from_axis_angle([0, 0, 1], math.pi / 2)
        cal = GyroCalibration(orientation_offset=offset)
        out = apply_gyro_calibration([1.0, 0.0, 0.0], 30.0, cal)
        np.testing.assert_allclose(out, [0.0, 1.0, 0.0], atol=1e-12)


class TestBiasAutocalib:
    GRAV = np.array([0.0, 0.0, 9.81])

    def test_convergence_at_rest(self):
        state = BiasCalibState()
        true_bias = np.array([0.02, -0.01, 0.03])
        dt = 0.01
        # five time constants after the rest window fills
        n_window = round(state.window / dt)
        n_settle = round(5.0 * state.time_constant / dt)
        for _ in range(n_window + n_settle):
            bias_autocalib_update(true_bias, self.GRAV, dt, state)
        assert state.resting
        err = np.linalg.norm(state.bias - true_bias) / np.linalg.norm(true_bias)
        assert err < 0.02
        # first-order exponential oracle: after the window fills, the error
        # decays by (1 - gain) each step
        state2 = BiasCalibState()
        for _ in range(n_window):
            bias_autocalib_update(true_bias, self.GRAV, dt, state2)
        settle_start = state2.bias.copy()
        for _ in range(n_settle):
            bias_autocalib_update(true_bias, self.GRAV, dt, state2)
        expected_err = np.linalg.norm(settle_start - true_bias) * (
            math.exp(-dt / state2.time_constant) ** n_settle
        )
        assert np.linalg.norm(state2.bias - true_bias) == pytest.approx(expected_err, rel=1e-6)

    def test_shaking_freezes_bias(self):
        state = BiasCalibState(bias=[0.01, 0.0, 0.0])
        rng = np.random.default_rng(35)
        for _ in range(200):
            accel = self.GRAV + rng.normal(0.0, 2.0, 3)
            bias_autocalib_update(rng.normal(0.0, 0.5, 3), accel, 0.01, state)
            assert not state.resting
        np.testing.assert_allclose(state.bias, [0.01, 0.0, 0.0], atol=0.0)

    def test_rest_then_motion_freezes(self):
        state = BiasCalibState()
        true_bias = np.array([0.015, 0.0, -0.01])
        for _ in range(300):
            bias_autocalib_update(true_bias, self.GRAV, 0.01, state)
        frozen = state.bias.copy()
        for _ in range(100):
            bias_autocalib_update([1.0, 1.0, 1.0], self.GRAV * 1.5, 0.01, state)
            assert not state.resting
        np.testing.assert_allclose(state.bias, frozen, atol=0.0)

    def test_never_updates_outside_rest(self):
        state = BiasCalibState()
        rng = np.random.default_rng(36)
        prev = state.bias.copy()
        for _ in range(500):
            moving = rng.uniform() < 0.5
            omega = rng.normal(0.0, 1.0, 3) if moving else np.zeros(3)
            accel = self.GRAV + (rng.normal(0.0, 3.0, 3) if moving else np.zeros(3))
            bias_autocalib_update(omega, accel, 0.01, state)
            if not state.resting:
                np.testing.assert_allclose(state.bias, prev, atol=0.0)
            prev = state.bias.copy()
