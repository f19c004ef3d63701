"""SIR particle filter over lane states.

Particles are propagated through the motion model (which doubles as the
importance density), reweighted by the multi-mode observation likelihood,
sorted by weight and resampled systematically when the effective sample size
drops below a fraction of ``N``.

Random numbers for frame ``t`` come from a stream keyed on ``(seed, t)``; row
``i`` of each draw belongs to particle ``i``, so results do not depend on how
the particle loop is chunked.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DynamicsConfig, propagate, sample_process_noise
from .geometry import LaneState
from .observation import ObservationConfig, ObservationSet, log_likelihood

log = logging.getLogger(__name__)


class WeightCollapse(ArithmeticError):
    """All particle likelihoods vanished; raised only by ``strict`` steps."""


@dataclass(frozen=True)
class Particle:
    state: LaneState
    weight: float


@dataclass
class ParticleSet:
    states: np.ndarray  # (N, 4)
    weights: np.ndarray  # (N,)
    frame_index: int = 0
    resampled: bool = False
    collapsed: bool = False  # weights were reset after every likelihood vanished

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def particles(self) -> list[Particle]:
        return [Particle(LaneState.from_array(s), float(w)) for s, w in zip(self.states, self.weights)]


@dataclass(frozen=True)
class ParticleConfig:
    n_particles: int = 500
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    obs_cfg: ObservationConfig = field(default_factory=ObservationConfig)
    resample_threshold: float = 0.5  # 1.0 resamples every frame, 0 never
    rng_seed: int = 0
    init_velocity_sigma: tuple[float, float] = (50.0, 20.0)
    sort: bool = True

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("n_particles must be >= 2")
        if not 0.0 <= self.resample_threshold <= 1.0:
            raise ValueError("resample_threshold must be in [0, 1]")


def frame_rng(seed: int, frame: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, frame]))


def pf_init(initial_obs: ObservationSet, cfg: ParticleConfig, rng=None) -> ParticleSet:
    """Draw particles from the observation mixture (uniform box if K = 0)."""
    if rng is None:
        rng = frame_rng(cfg.rng_seed, initial_obs.frame_index)
    n = cfg.n_particles
    oc = cfg.obs_cfg
    states = np.zeros((n, 4))
    if initial_obs.K == 0:
        states[:, 0] = rng.uniform(*oc.rho_box, size=n)
        states[:, 2] = rng.uniform(*oc.theta_box, size=n)
    else:
        means, weights = initial_obs.arrays()
        k = rng.choice(len(weights), size=n, p=weights)
        jitter = rng.standard_normal((n, 2)) @ oc._chol.T
        states[:, 0] = means[k, 0] + jitter[:, 0]
        states[:, 2] = means[k, 1] + jitter[:, 1]
    sv_rho, sv_theta = cfg.init_velocity_sigma
    v = rng.standard_normal((n, 2))
    states[:, 1] = v[:, 0] * sv_rho
    states[:, 3] = v[:, 1] * sv_theta
    return ParticleSet(states, np.full(n, 1.0 / n), initial_obs.frame_index)


def effective_sample_size(ps: ParticleSet) -> float:
    w = np.asarray(ps.weights, dtype=float)
    return float(1.0 / np.sum(w * w))


def systematic_indices(weights: np.ndarray, u: float, n: int | None = None) -> np.ndarray:
    """``n`` ancestor indices (default ``len(weights)``) for offsets ``(u + j) / n``, ``u`` in [0, 1)."""
    n = len(weights) if n is None else n
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    pos = (u + np.arange(n)) / n
    return np.minimum(np.searchsorted(cdf, pos, side="right"), len(weights) - 1)


def resample(ps: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    idx = systematic_indices(ps.weights, rng.uniform())
    n = ps.n
    return ParticleSet(ps.states[idx].copy(), np.full(n, 1.0 / n), ps.frame_index, resampled=True)


def estimate(ps: ParticleSet) -> LaneState:
    return LaneState.from_array(np.asarray(ps.weights) @ ps.states)


def pf_step(
    ps: ParticleSet, obs: ObservationSet, cfg: ParticleConfig, rng=None, strict: bool = False
) -> ParticleSet:
    """One propagate / weight / sort / resample cycle."""
    frame = ps.frame_index + 1 if obs is None else obs.frame_index
    if rng is None:
        rng = frame_rng(cfg.rng_seed, frame)
    noise = sample_process_noise(cfg.dynamics, rng, size=ps.n)
    states = propagate(ps.states, cfg.dynamics, noise)
    with np.errstate(divide="ignore"):
        logw = np.log(ps.weights)
    logw = logw + log_likelihood(states, obs if obs is not None else ObservationSet((), frame), cfg.obs_cfg)
    top = np.max(logw)
    if not np.isfinite(top):
        if strict:
            raise WeightCollapse(f"frame {frame}: every particle weight is zero")
        log.warning("frame %d: weight collapse, resetting to uniform weights", frame)
        weights = np.full(ps.n, 1.0 / ps.n)
        collapsed = True
    else:
        collapsed = False
        weights = np.exp(logw - top)
        weights /= math.fsum(weights)
    if cfg.sort:
        # stable, so equal weights keep particle order
        order = np.argsort(-weights, kind="stable")
        states, weights = states[order], weights[order]
    out = ParticleSet(states, weights, frame, collapsed=collapsed)
    if cfg.resample_threshold >= 1.0 or effective_sample_size(out) < cfg.resample_threshold * ps.n:
        out = resample(out, rng)
        out.collapsed = collapsed
    return out


def run_particle(observations, cfg: ParticleConfig, trace=None) -> list[LaneState]:
    """Filter a sequence; the first frame initializes the cloud.

    ``trace``, if a list, receives the ParticleSet of every frame.
    """
    out = []
    ps = None
    for obs in observations:
        ps = pf_init(obs, cfg) if ps is None else pf_step(ps, obs, cfg)
        if trace is not None:
            trace.append(ps)
        out.append(estimate(ps))
    return out
