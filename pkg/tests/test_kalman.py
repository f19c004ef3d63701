import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lanetrack.dynamics import DynamicsConfig, transition_matrix
from lanetrack.geometry import LineParam
from lanetrack.kalman import (
    INITIAL_COV,
    GaussianBelief,
    KalmanConfig,
    SingularInnovation,
    initial_belief,
    kf_predict,
    kf_step,
    kf_update,
    run_kalman,
)
from lanetrack.observation import ObservationMode, ObservationSet

from oracles import kalman_reference


def obs_of(*lines, frame=0):
    return ObservationSet(tuple(ObservationMode(LineParam(r, t), 1.0) for r, t in lines), frame)


def matmul4(A, B):
    """Plain-loop 4x4 product."""
    return np.array([[sum(A[i][k] * B[k][j] for k in range(4)) for j in range(4)] for i in range(4)])


class TestPredict:
    def test_no_motion_no_noise(self):
        b = GaussianBelief(np.array([1.0, 2.0, 3.0, 4.0]), np.diag([1.0, 2.0, 3.0, 4.0]))
        out = kf_predict(b, KalmanConfig(DynamicsConfig(0.0, 0.0, 0.0)))
        np.testing.assert_array_equal(out.mean, b.mean)
        np.testing.assert_array_equal(out.cov, b.cov)

    def test_deterministic(self):
        b = GaussianBelief(np.array([100.0, 10.0, 45.0, 0.0]), np.zeros((4, 4)))
        out = kf_predict(b, KalmanConfig(DynamicsConfig(0.06, 0.0, 0.0)))
        np.testing.assert_allclose(out.mean, [100.6, 10.0, 45.0, 0.0])
        np.testing.assert_array_equal(out.cov, np.zeros((4, 4)))

    def test_identity_cov_unit_step(self):
        cfg = KalmanConfig(DynamicsConfig(1.0, 1.0, 1.0))
        out = kf_predict(GaussianBelief(np.zeros(4), np.eye(4)), cfg)
        F = transition_matrix(cfg.dynamics)
        FPFt = matmul4(matmul4(F, np.eye(4)), F.T)
        np.testing.assert_allclose(FPFt[:2, :2], [[2.0, 1.0], [1.0, 1.0]])
        assert out.cov[0, 0] == pytest.approx(7.0 / 3.0)


class TestUpdate:
    cfg = KalmanConfig(DynamicsConfig(0.0625, 8.0, 1.5))

    def test_zero_innovation(self):
        b = GaussianBelief(np.array([300.0, 1.0, 50.0, 0.5]), INITIAL_COV)
        out = kf_update(b, LineParam(300.0, 50.0), self.cfg)
        np.testing.assert_allclose(out.mean, b.mean)
        assert np.trace(out.cov) < np.trace(b.cov)

    def test_uninformative(self):
        b = GaussianBelief(np.array([300.0, 1.0, 50.0, 0.5]), INITIAL_COV)
        cfg = KalmanConfig(self.cfg.dynamics, R=((5e12, 0.0), (0.0, 5e12)))
        out = kf_update(b, LineParam(320.0, 55.0), cfg)
        np.testing.assert_allclose(out.mean, b.mean, rtol=1e-6)
        np.testing.assert_allclose(out.cov, b.cov, rtol=1e-6)

    def test_scalar_gain_half(self):
        b = GaussianBelief(np.array([100.0, 0.0, 40.0, 0.0]), np.diag([1.0, 0.0, 0.0, 0.0]))
        cfg = KalmanConfig(self.cfg.dynamics, R=((1.0, 0.0), (0.0, 1.0)))
        out = kf_update(b, LineParam(102.0, 40.0), cfg)
        assert out.mean[0] == pytest.approx(101.0)

    def test_singular_innovation(self):
        b = GaussianBelief(np.zeros(4), np.diag([1e16, 0.0, 1.0, 0.0]))
        with pytest.raises(SingularInnovation):
            kf_update(b, LineParam(1.0, 1.0), self.cfg)

    def test_rejects_bad_r(self):
        with pytest.raises(ValueError):
            KalmanConfig(R=((1.0, 0.0), (0.0, -1.0)))

    @given(st.integers(0, 10_000), st.booleans())
    def test_matches_reference(self, seed, joseph):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(4, 4))
        P = A @ A.T + 0.1 * np.eye(4)
        m = rng.normal([300, 0, 60, 0], [50, 5, 20, 2])
        # keep theta away from the 0/180 wrap, where LineParam flips the sign of rho
        m[2] = np.clip(m[2], 20.0, 160.0)
        z = (m[0] + rng.normal(0, 5), m[2] + rng.normal(0, 3))
        cfg = KalmanConfig(DynamicsConfig(0.0625, 8.0, 1.5), R=((5.0, 0.5), (0.5, 3.0)), joseph=joseph)
        out = kf_step(GaussianBelief(m, P), obs_of(z), cfg)
        rm, rP = kalman_reference(m, P, z, 0.0625, 8.0, 1.5, np.array(cfg.R))
        np.testing.assert_allclose(out.mean, rm, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(out.cov, rP, rtol=1e-7, atol=1e-9)

    @given(st.integers(0, 10_000))
    def test_trace_never_grows_on_update(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(4, 4)) * rng.uniform(0.1, 30)
        b = GaussianBelief(rng.normal(size=4), A @ A.T)
        out = kf_update(b, LineParam(*rng.normal(size=2)), self.cfg)
        assert np.trace(out.cov) <= np.trace(b.cov) + 1e-9


class TestStep:
    cfg = KalmanConfig(DynamicsConfig(0.0625, 8.0, 1.5))

    def test_missing_frames_are_predictions(self):
        b = initial_belief(LineParam(300.0, 50.0))
        b = GaussianBelief(b.mean + np.array([0, 3.0, 0, -1.0]), b.cov)
        stepped, predicted = b, b
        for t in range(5):
            stepped = kf_step(stepped, ObservationSet((), t), self.cfg)
            predicted = kf_predict(predicted, self.cfg)
        assert np.array_equal(stepped.mean, predicted.mean)
        assert np.array_equal(stepped.cov, predicted.cov)

    def test_single_mode(self):
        b = initial_belief(LineParam(300.0, 50.0))
        out = kf_step(b, obs_of((305.0, 52.0)), self.cfg)
        ref = kf_update(kf_predict(b, self.cfg), LineParam(305.0, 52.0), self.cfg)
        np.testing.assert_array_equal(out.mean, ref.mean)

    def test_only_head_mode_used(self):
        b = initial_belief(LineParam(300.0, 50.0))
        a = kf_step(b, obs_of((305.0, 52.0), (100.0, 30.0), (200.0, 70.0)), self.cfg)
        c = kf_step(b, obs_of((305.0, 52.0), (-50.0, 120.0)), self.cfg)
        np.testing.assert_array_equal(a.mean, c.mean)

    def test_initial_belief(self):
        b = initial_belief(LineParam(300.0, 50.0))
        np.testing.assert_array_equal(b.mean, [300.0, 0.0, 50.0, 0.0])
        np.testing.assert_array_equal(b.cov, np.diag([100.0, 400.0, 25.0, 100.0]))


class TestRun:
    def test_leading_empty_frames(self):
        cfg = KalmanConfig(DynamicsConfig(0.0625, 8.0, 1.5), init_cov=(1.0, 2.0, 3.0, 4.0))
        seq = [ObservationSet((), 0), obs_of((300.0, 50.0), frame=1), obs_of((301.0, 50.5), frame=2)]
        trace = []
        out = run_kalman(seq, cfg, trace)
        assert len(out) == 3
        assert out[0].rho == 0.0 and out[0].theta == 90.0
        assert out[1].rho == 300.0
        assert [f for f, _ in trace] == [1, 2]
        np.testing.assert_array_equal(trace[0][1].cov, np.diag([1.0, 2.0, 3.0, 4.0]))
