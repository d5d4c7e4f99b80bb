import math

import numpy as np
import pytest
from scipy import linalg as sla

from fusedgait.errors import NumericError, ParameterError
from fusedgait.tuning import (
    LqrWeights,
    StateSpaceModel,
    bryson_weights,
    care_residual,
    gain_from_pd,
    identified_sagittal_model,
    lqr_gain,
    model_poles,
    pd_from_gain,
    simulate_pd_response,
)

MODEL = identified_sagittal_model()


def random_stabilizable_model(rng):
    """Second-order SISO model with a stabilizable (A, B) pair."""
    while True:
        a = rng.normal(0.0, 3.0, (2, 2))
        b = rng.normal(0.0, 2.0, (2, 1))
        c = rng.normal(0.0, 1.0, (1, 2))
        ctrl = np.hstack([b, a @ b])
        if abs(np.linalg.det(ctrl)) > 1e-3 and abs(np.linalg.det(np.vstack([c, c @ a]))) > 1e-3:
            return StateSpaceModel(a, b, c)


class TestModelPoles:
    def test_identified_model_poles(self):
        poles = model_poles(MODEL)
        assert abs(poles[0].real) == pytest.approx(16.77, rel=0.005)
        assert abs(poles[1].real) == pytest.approx(236.3, rel=0.005)
        assert np.all(poles.real < 0.0)

    def test_diagonal(self):
        m = StateSpaceModel([[-2.0, 0.0], [0.0, -5.0]], [[1.0], [1.0]], [[1.0, 0.0]])
        np.testing.assert_allclose(sorted(model_poles(m).real), [-5.0, -2.0], atol=1e-12)

    def test_quadratic_formula_oracle(self):
        rng = np.random.default_rng(71)
        for _ in range(500):
            a = rng.normal(0.0, 2.0, (2, 2))
            a = 0.5 * (a + a.T)  # symmetric: real roots
            m = StateSpaceModel(a, [[1.0], [0.0]], [[1.0, 0.0]])
            tr, det = np.trace(a), np.linalg.det(a)
            disc = math.sqrt(max(0.0, tr * tr - 4.0 * det))
            roots = sorted([(tr - disc) / 2.0, (tr + disc) / 2.0], key=abs)
            got = sorted(model_poles(m).real, key=abs)
            np.testing.assert_allclose(got, roots, atol=1e-9)


class TestLqrGain:
    def test_scalar_closed_form(self):
        # 1x1 reduction embedded in the 2x2 API: decoupled second state
        m = StateSpaceModel([[-1.0, 0.0], [0.0, -100.0]], [[1.0], [0.0]], [[1.0, 0.0]])
        w = LqrWeights(q=np.diag([1.0, 0.0]), r=[[1.0]])
        k = lqr_gain(m, w)
        # scalar CARE: -2p - p^2 + 1 = 0 => p = sqrt(2) - 1, k = p
        assert k[0, 0] == pytest.approx(math.sqrt(2.0) - 1.0, abs=1e-9)
        assert k[0, 1] == pytest.approx(0.0, abs=1e-9)

    def test_identified_model_closed_loop_stable(self):
        w = bryson_weights([0.1, 0.5], 1.0)
        k = lqr_gain(MODEL, w)
        closed = np.linalg.eigvals(MODEL.a - MODEL.b @ k)
        assert np.all(closed.real < 0.0)

    def test_care_residual_random_models(self):
        rng = np.random.default_rng(72)
        r_inv_cases = 0
        for _ in range(300):
            m = random_stabilizable_model(rng)
            q_half = rng.normal(0.0, 1.0, (2, 2))
            w = LqrWeights(q=q_half.T @ q_half + 1e-6 * np.eye(2), r=[[rng.uniform(0.1, 5.0)]])
            k = lqr_gain(m, w)
            p_scipy = sla.solve_continuous_are(m.a, m.b, w.q, w.r)
            k_scipy = np.linalg.inv(w.r) @ m.b.T @ p_scipy
            np.testing.assert_allclose(k, k_scipy, atol=1e-6 * max(1.0, np.abs(k_scipy).max()))
            r_inv_cases += 1
        assert r_inv_cases == 300

    def test_not_stabilizable(self):
        m = StateSpaceModel([[1.0, 0.0], [0.0, -1.0]], [[0.0], [1.0]], [[1.0, 0.0]])
        with pytest.raises(NumericError):
            lqr_gain(m, LqrWeights(q=np.eye(2), r=[[1.0]]))


class TestPdConversion:
    def test_kd_zero_degenerate(self):
        k = gain_from_pd(2.5, 0.0, MODEL)
        np.testing.assert_allclose(k, 2.5 * MODEL.c, atol=1e-12)

    def test_formula_oracle(self):
        kp, kd = 1.0, 0.01
        k = gain_from_pd(kp, kd, MODEL)
        cb = (MODEL.c @ MODEL.b)[0, 0]
        expected = (kp * MODEL.c + kd * MODEL.c @ MODEL.a) / (1.0 + kd * cb)
        np.testing.assert_allclose(k, expected, atol=1e-12)

    def test_round_trip(self):
        kp_ref, kd_ref = 2.0, 0.05
        k = gain_from_pd(kp_ref, kd_ref, MODEL)
        kp, kd = pd_from_gain(k, MODEL)
        assert kp == pytest.approx(kp_ref, abs=1e-8)
        assert kd == pytest.approx(kd_ref, abs=1e-8)

    def test_zero_gain(self):
        kp, kd = pd_from_gain(np.zeros((1, 2)), MODEL)
        assert (kp, kd) == (0.0, 0.0)

    def test_singular_output_matrix(self):
        m = StateSpaceModel(MODEL.a, MODEL.b, [[0.0, 0.0]])
        with pytest.raises(NumericError):
            pd_from_gain(np.array([[1.0, 0.5]]), m)

    def test_round_trip_random_models(self):
        rng = np.random.default_rng(73)
        for _ in range(1000):
            m = random_stabilizable_model(rng)
            kp = rng.uniform(-3.0, 3.0)
            kd = rng.uniform(-0.2, 0.2)
            cb = (m.c @ m.b)[0, 0]
            if abs(1.0 + kd * cb) < 1e-3:
                continue
            k = gain_from_pd(kp, kd, m)
            stack = np.vstack([m.c, m.c @ m.a - m.c @ m.b @ k])
            if abs(np.linalg.det(stack)) < 1e-6:
                continue
            kp2, kd2 = pd_from_gain(k, m)
            assert kp2 == pytest.approx(kp, abs=1e-8 * max(1.0, abs(kp)))
            assert kd2 == pytest.approx(kd, abs=1e-8 * max(1.0, abs(kd)))


class TestBrysonWeights:
    def test_unit(self):
        w = bryson_weights([1.0, 1.0], 1.0)
        np.testing.assert_allclose(w.q, np.eye(2), atol=0.0)
        assert w.r[0, 0] == 1.0

    def test_values(self):
        w = bryson_weights([0.5, 2.0], 4.0)
        np.testing.assert_allclose(w.q, np.diag([4.0, 0.25]), atol=1e-15)
        assert w.r[0, 0] == pytest.approx(1.0 / 16.0)

    def test_uniform_scaling_leaves_gain(self):
        w1 = bryson_weights([0.2, 0.8], 2.0)
        c = 3.7
        w2 = bryson_weights([0.2 * c, 0.8 * c], 2.0 * c)
        k1 = lqr_gain(MODEL, w1)
        k2 = lqr_gain(MODEL, w2)
        np.testing.assert_allclose(k1, k2, atol=1e-8)

    def test_invalid(self):
        with pytest.raises(ParameterError):
            bryson_weights([0.0, 1.0], 1.0)


class TestClosedLoopSimulation:
    def test_pd_recovered_gains_stabilize(self):
        w = bryson_weights([0.1, 0.5], 1.0)
        k = lqr_gain(MODEL, w)
        kp, kd = pd_from_gain(k, MODEL)
        rng = np.random.default_rng(74)
        for _ in range(20):
            x0 = rng.normal(0.0, 1.0, 2)
            rows = simulate_pd_response(MODEL, kp, kd, x0, dt=0.001, duration=2.0)
            start = np.linalg.norm(rows[0, 1:3])
            end = np.linalg.norm(rows[-1, 1:3])
            assert end < 1e-3 * max(start, 1e-9)

    def test_residual_reported(self):
        w = bryson_weights([0.1, 0.5], 1.0)
        k = lqr_gain(MODEL, w)
        p = sla.solve_continuous_are(MODEL.a, MODEL.b, w.q, w.r)
        assert care_residual(MODEL, w, p) < 1e-6
