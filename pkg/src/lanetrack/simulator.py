"""Synthetic lane scenarios with ground truth.

A scenario holds one or more lanes ("left", "right") that follow the
constant-velocity model, plus persistent false edges (clutter) and dropout
windows where a lane produces no detection. Two output paths share the same
truth: direct candidate lists (fast, for filter experiments) and rendered RGB
frames (for the image detector).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .detection import ScoredLine
from .dynamics import DynamicsConfig, propagate, sample_process_noise
from .geometry import ImageGeometry, LaneState, LineParam
from .observation import SIDE_LIMITS, ObservationConfig, ObservationSet, build_observation, partition

log = logging.getLogger(__name__)

SIDES = ("left", "right")


@dataclass(frozen=True)
class ClutterMode:
    """A false edge active on frames ``first..last`` inclusive."""

    line: LineParam
    first: int
    last: int
    jitter_sigma: tuple[float, float] = (0.0, 0.0)

    def active(self, t: int) -> bool:
        return self.first <= t <= self.last


@dataclass(frozen=True)
class Dropout:
    side: str
    first: int
    last: int

    def active(self, t: int) -> bool:
        return self.first <= t <= self.last


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "custom"
    n_frames: int = 80
    dynamics: DynamicsConfig = field(default_factory=lambda: DynamicsConfig(0.0625, 8.0, 1.5))
    lanes: tuple[tuple[str, LaneState], ...] = ()
    clutter_modes: tuple[ClutterMode, ...] = ()
    dropout_ranges: tuple[Dropout, ...] = ()
    detection_noise_sigma: tuple[float, float] = (2.0, 1.0)
    true_candidate_score: int = 60
    clutter_score: int = 40
    geometry: ImageGeometry = field(default_factory=ImageGeometry)
    seed: int = 0
    rho_box: tuple[float, float] = (-640.0, 740.0)
    side_limits: tuple[tuple[str, tuple[float, float]], ...] = tuple(SIDE_LIMITS.items())
    stripe_brightness: float = 0.85
    clutter_brightness: float = 0.85
    background: float = 0.25
    pixel_noise: float = 0.02
    stripe_width: float = 4.0

    def __post_init__(self):
        if self.n_frames <= 0:
            raise ValueError("n_frames must be positive")
        names = [n for n, _ in self.lanes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate lane names {names}")
        limits = dict(self.side_limits)
        for n in names:
            if n not in limits:
                raise ValueError(f"lane {n!r} has no theta limits")
        for c in self.clutter_modes:
            self._check_range(c.first, c.last, "clutter")
        for d in self.dropout_ranges:
            self._check_range(d.first, d.last, "dropout")
            if d.side not in names:
                raise ValueError(f"dropout refers to unknown lane {d.side!r}")

    def _check_range(self, first, last, what):
        if not 0 <= first <= last < self.n_frames:
            raise ValueError(f"{what} range {first}..{last} outside [0, {self.n_frames})")

    @property
    def lane_names(self) -> list[str]:
        return [n for n, _ in self.lanes]

    def dropped(self, side: str, t: int) -> bool:
        return any(d.side == side and d.active(t) for d in self.dropout_ranges)


@dataclass(frozen=True)
class GroundTruthTrajectory:
    """Per-lane state arrays of shape ``(n_frames, 4)``."""

    lanes: dict

    @property
    def n_frames(self) -> int:
        return len(next(iter(self.lanes.values())))

    def states(self, side: str) -> list[LaneState]:
        return [LaneState.from_array(x) for x in self.lanes[side]]


def _rng(cfg: ScenarioConfig, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, *key]))


def simulate_trajectory(cfg: ScenarioConfig) -> GroundTruthTrajectory:
    """Propagate each lane with sampled process noise.

    States are clamped to the lane's theta range (1 deg inside it) and to the
    rho box; the velocity of a clamped component is zeroed.
    """
    limits = dict(cfg.side_limits)
    lanes = {}
    for k, (name, init) in enumerate(cfg.lanes):
        rng = _rng(cfg, 0, k)
        lo, hi = limits[name]
        lo, hi = lo + 1.0, hi - 1.0
        xs = np.zeros((cfg.n_frames, 4))
        x = init.as_array()
        for t in range(cfg.n_frames):
            if t > 0:
                x = propagate(x, cfg.dynamics, sample_process_noise(cfg.dynamics, rng))
            if not lo <= x[2] <= hi:
                log.debug("%s frame %d: clamping theta %.3f", name, t, x[2])
                x[2] = min(max(x[2], lo), hi)
                x[3] = 0.0
            if not cfg.rho_box[0] <= x[0] <= cfg.rho_box[1]:
                log.debug("%s frame %d: clamping rho %.3f", name, t, x[0])
                x[0] = min(max(x[0], cfg.rho_box[0]), cfg.rho_box[1])
                x[1] = 0.0
            xs[t] = x
        lanes[name] = xs
    return GroundTruthTrajectory(lanes)


def emit_candidates(truth: GroundTruthTrajectory, cfg: ScenarioConfig) -> list[list[ScoredLine]]:
    """Per-frame detector output as the direct path would report it."""
    rng = _rng(cfg, 1)
    srho, stheta = cfg.detection_noise_sigma
    frames = []
    for t in range(truth.n_frames):
        cands = []
        for name in cfg.lane_names:
            n = rng.standard_normal(2)
            if cfg.dropped(name, t):
                continue
            rho, _, theta, _ = truth.lanes[name][t]
            cands.append(ScoredLine(LineParam(rho + srho * n[0], theta + stheta * n[1]), cfg.true_candidate_score))
        for c in cfg.clutter_modes:
            n = rng.standard_normal(2)
            if not c.active(t):
                continue
            jr, jt = c.jitter_sigma
            cands.append(ScoredLine(LineParam(c.line.rho + jr * n[0], c.line.theta + jt * n[1]), cfg.clutter_score))
        cands.sort(key=lambda s: -s.score)
        frames.append(cands)
    return frames


def observations_from_candidates(
    frames, geom: ImageGeometry, obs_cfg: ObservationConfig, side_limits
) -> dict[str, list[ObservationSet]]:
    """Partition each frame's candidates by lane and build observation sets."""
    limits = dict(side_limits)
    out: dict[str, list[ObservationSet]] = {name: [] for name in limits}
    for t, cands in enumerate(frames):
        parts = partition(cands, limits)
        for name in limits:
            out[name].append(build_observation(parts[name], geom, obs_cfg, t))
    return out


def emit_observations(
    truth: GroundTruthTrajectory, cfg: ScenarioConfig, obs_cfg: ObservationConfig | None = None
) -> dict[str, list[ObservationSet]]:
    obs_cfg = obs_cfg or ObservationConfig()
    limits = [(n, lim) for n, lim in cfg.side_limits if n in truth.lanes]
    return observations_from_candidates(emit_candidates(truth, cfg), cfg.geometry, obs_cfg, limits)


def _stripe(xc: np.ndarray, yc: np.ndarray, line: LineParam, width: float) -> np.ndarray:
    t = math.radians(line.theta)
    d = np.abs(xc * math.cos(t) + yc * math.sin(t) - line.rho)
    return np.clip(width / 2.0 + 0.5 - d, 0.0, 1.0)


def render_frames(truth: GroundTruthTrajectory, cfg: ScenarioConfig) -> list[np.ndarray]:
    """RGB frames: gray road, bright anti-aliased stripes, mild gray noise."""
    rng = _rng(cfg, 2)
    g = cfg.geometry
    yc, xc = np.mgrid[0 : g.height, 0 : g.width].astype(float)
    frames = []
    for t in range(truth.n_frames):
        img = np.full((g.height, g.width), cfg.background)
        for name in cfg.lane_names:
            if cfg.dropped(name, t):
                continue
            rho, _, theta, _ = truth.lanes[name][t]
            cov = _stripe(xc, yc, LineParam(rho, theta), cfg.stripe_width)
            img = img + cov * (cfg.stripe_brightness - img)
        for c in cfg.clutter_modes:
            if c.active(t):
                cov = _stripe(xc, yc, c.line, cfg.stripe_width)
                img = img + cov * (cfg.clutter_brightness - img)
        img = img + cfg.pixel_noise * rng.standard_normal(img.shape)
        img = np.clip(img, 0.0, 1.0)
        frames.append(np.repeat(img[..., None], 3, axis=2))
    return frames
