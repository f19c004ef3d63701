"""Constant-velocity motion model shared by the trackers and the simulator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import LaneState


@dataclass(frozen=True)
class DynamicsConfig:
    """Frame interval ``T`` (s) and acceleration std-devs.

    The default ``T`` is 1/16 s (16 fps camera). Default sigmas are loose
    values for detector-driven runs; simulated scenarios carry their own.
    """

    T: float = 0.0625
    sigma_rho: float = 50.0
    sigma_theta: float = 20.0

    def __post_init__(self):
        if not self.T >= 0:
            raise ValueError(f"T must be non-negative, got {self.T}")
        if self.sigma_rho < 0 or self.sigma_theta < 0:
            raise ValueError("acceleration sigmas must be >= 0")


def transition_matrix(cfg: DynamicsConfig) -> np.ndarray:
    T = cfg.T
    return np.array(
        [
            [1.0, T, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, T],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def _cv_block(T: float) -> np.ndarray:
    return np.array([[T**3 / 3.0, T**2 / 2.0], [T**2 / 2.0, T]])


def process_noise_cov(cfg: DynamicsConfig) -> np.ndarray:
    Q = np.zeros((4, 4))
    blk = _cv_block(cfg.T)
    Q[:2, :2] = blk * cfg.sigma_rho**2
    Q[2:, 2:] = blk * cfg.sigma_theta**2
    return Q


def noise_factor(cfg: DynamicsConfig) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == Q``.

    Each 2x2 block is factored on its own. The CV block for unit sigma is
    positive definite whenever T > 0, so a zero sigma simply zeros that
    block's columns instead of making Cholesky fail.
    """
    L = np.zeros((4, 4))
    if cfg.T > 0:
        blk = np.linalg.cholesky(_cv_block(cfg.T))
        L[:2, :2] = blk * cfg.sigma_rho
        L[2:, 2:] = blk * cfg.sigma_theta
    return L


def propagate(state, cfg: DynamicsConfig, noise=None):
    """``F @ x + noise``. Accepts a LaneState or an ``(..., 4)`` array."""
    F = transition_matrix(cfg)
    if isinstance(state, LaneState):
        x = F @ state.as_array()
        if noise is not None:
            x = x + np.asarray(noise, dtype=float)
        return LaneState.from_array(x)
    x = np.asarray(state, dtype=float) @ F.T
    if noise is not None:
        x = x + noise
    return x


def sample_process_noise(cfg: DynamicsConfig, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw from N(0, Q); returns shape (4,) or (size, 4)."""
    L = noise_factor(cfg)
    shape = (4,) if size is None else (size, 4)
    z = rng.standard_normal(shape)
    return z @ L.T
