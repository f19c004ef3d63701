"""Linear Kalman filter baseline.

Only the strongest detection of a frame is used as the measurement; frames
without any detection get the prediction step only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import DynamicsConfig, process_noise_cov, transition_matrix
from .geometry import LaneState, LineParam
from .observation import ObservationSet

H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
INITIAL_COV = np.diag([100.0, 400.0, 25.0, 100.0])


class SingularInnovation(ArithmeticError):
    pass


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(4))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float).reshape(4, 4))

    @property
    def state(self) -> LaneState:
        return LaneState.from_array(self.mean)


@dataclass(frozen=True)
class KalmanConfig:
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    R: tuple[tuple[float, float], tuple[float, float]] = ((5.0, 0.0), (0.0, 5.0))
    joseph: bool = False
    init_cov: tuple[float, float, float, float] = (100.0, 400.0, 25.0, 100.0)  # diagonal

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        if R.shape != (2, 2) or not np.allclose(R, R.T) or np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("R must be a symmetric positive definite 2x2 matrix")

    @property
    def H(self) -> np.ndarray:
        return H

    @property
    def R_matrix(self) -> np.ndarray:
        return np.asarray(self.R, dtype=float)


def initial_belief(z: LineParam | None, cov=INITIAL_COV, fallback=(0.0, 90.0)) -> GaussianBelief:
    """Belief centered on a first measurement with zero velocities."""
    rho, theta = (z.rho, z.theta) if z is not None else fallback
    return GaussianBelief(np.array([rho, 0.0, theta, 0.0]), np.array(cov, dtype=float))


def kf_predict(belief: GaussianBelief, cfg: KalmanConfig) -> GaussianBelief:
    F = transition_matrix(cfg.dynamics)
    Q = process_noise_cov(cfg.dynamics)
    P = F @ belief.cov @ F.T + Q
    return GaussianBelief(F @ belief.mean, 0.5 * (P + P.T))


def kf_update(belief: GaussianBelief, z: LineParam, cfg: KalmanConfig) -> GaussianBelief:
    R = cfg.R_matrix
    P = belief.cov
    nu = np.array([z.rho, z.theta]) - H @ belief.mean
    S = H @ P @ H.T + R
    if not np.all(np.isfinite(S)) or np.linalg.cond(S) > 1e12:
        raise SingularInnovation(f"innovation covariance is singular: {S.tolist()}")
    K = np.linalg.solve(S, H @ P).T  # P H^T S^-1, S symmetric
    mean = belief.mean + K @ nu
    IKH = np.eye(4) - K @ H
    if cfg.joseph:
        P = IKH @ P @ IKH.T + K @ R @ K.T
    else:
        P = IKH @ P
    return GaussianBelief(mean, 0.5 * (P + P.T))


def kf_step(belief: GaussianBelief, obs: ObservationSet | None, cfg: KalmanConfig) -> GaussianBelief:
    pred = kf_predict(belief, cfg)
    if obs is None or obs.K == 0:
        return pred
    return kf_update(pred, obs.modes[0].line, cfg)


def run_kalman(observations, cfg: KalmanConfig, trace=None) -> list[LaneState]:
    """Filter a whole sequence; the first frame with a detection seeds the belief.

    Frames before that report the fallback prior mean. ``trace``, if a list,
    receives ``(frame, belief)`` for every frame.
    """
    out = []
    belief = None
    for obs in observations:
        if belief is None:
            if obs.K == 0:
                out.append(initial_belief(None).state)
                continue
            belief = initial_belief(obs.modes[0].line, np.diag(cfg.init_cov))
        else:
            belief = kf_step(belief, obs, cfg)
        if trace is not None:
            trace.append((obs.frame_index, belief))
        out.append(belief.state)
    return out
