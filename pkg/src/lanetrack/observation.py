"""Multi-mode observation model.

Every detected candidate line becomes one Gaussian mode in (rho, theta);
modes are weighted by ``1 / (d_car * d_focus)`` and normalized, so the
likelihood of a lane state is a proper Gaussian mixture density. A frame with
no candidates (K = 0) falls back to a flat density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ImageGeometry, LaneState, LineParam, line_bottom_intercept, point_line_distance


@dataclass(frozen=True)
class ObservationMode:
    line: LineParam
    weight: float

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError(f"mode weight must be > 0, got {self.weight}")


@dataclass(frozen=True)
class ObservationSet:
    """Modes in detection-score order (the first one is the strongest line)."""

    modes: tuple[ObservationMode, ...] = ()
    frame_index: int = 0

    def __post_init__(self):
        modes = tuple(self.modes)
        if modes:
            total = math.fsum(m.weight for m in modes)
            modes = tuple(ObservationMode(m.line, m.weight / total) for m in modes)
        object.__setattr__(self, "modes", modes)

    @property
    def K(self) -> int:
        return len(self.modes)

    def arrays(self):
        """``(means (K, 2), weights (K,))``."""
        if not self.modes:
            return np.zeros((0, 2)), np.zeros(0)
        means = np.array([[m.line.rho, m.line.theta] for m in self.modes])
        weights = np.array([m.weight for m in self.modes])
        return means, weights


DEFAULT_RHO_BOX = (-640.0, 740.0)
DEFAULT_THETA_BOX = (15.0, 165.0)


@dataclass(frozen=True)
class ObservationConfig:
    sigma: tuple[tuple[float, float], tuple[float, float]] = ((25.0, 0.0), (0.0, 4.0))
    uniform_density: float = 1.0 / ((DEFAULT_RHO_BOX[1] - DEFAULT_RHO_BOX[0]) * (DEFAULT_THETA_BOX[1] - DEFAULT_THETA_BOX[0]))
    epsilon_dist: float = 1.0
    # feasible (rho, theta) box; pf_init draws from it when K = 0
    rho_box: tuple[float, float] = DEFAULT_RHO_BOX
    theta_box: tuple[float, float] = DEFAULT_THETA_BOX
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        S = np.asarray(self.sigma, dtype=float)
        if S.shape != (2, 2) or not np.allclose(S, S.T):
            raise ValueError("sigma must be a symmetric 2x2 matrix")
        try:
            chol = np.linalg.cholesky(S)
        except np.linalg.LinAlgError as e:
            raise ValueError("sigma must be positive definite") from e
        if not self.uniform_density > 0:
            raise ValueError("uniform_density must be > 0")
        if not self.epsilon_dist > 0:
            raise ValueError("epsilon_dist must be > 0")
        object.__setattr__(self, "sigma", tuple(tuple(float(v) for v in r) for r in S))
        object.__setattr__(self, "_chol", chol)

    @property
    def sigma_matrix(self) -> np.ndarray:
        return np.array(self.sigma)


def mode_weight(line: LineParam, geom: ImageGeometry, cfg: ObservationConfig) -> float:
    """Unnormalized ``1 / (d_car * d_focus)`` with both distances floored."""
    x = line_bottom_intercept(line, geom)
    d_car = float(geom.width) if x is None else abs(x - geom.bottom_midpoint[0])
    d_focus = point_line_distance(geom.focus_point, line)
    eps = cfg.epsilon_dist
    return 1.0 / (max(d_car, eps) * max(d_focus, eps))


def build_observation(candidates, geom: ImageGeometry, cfg: ObservationConfig, frame: int = 0) -> ObservationSet:
    """One mode per candidate (ScoredLine or LineParam), order preserved."""
    modes = []
    for c in candidates:
        line = getattr(c, "line", c)
        modes.append(ObservationMode(line, mode_weight(line, geom, cfg)))
    return ObservationSet(tuple(modes), frame)


def log_likelihood(x, obs: ObservationSet, cfg: ObservationConfig) -> np.ndarray:
    """Log GMM density at the (rho, theta) of each state.

    ``x`` is a LaneState or an ``(..., 4)`` state array. Evaluated with
    log-sum-exp so that far-away particles keep finite, comparable values.
    """
    if isinstance(x, LaneState):
        x = x.as_array()
    x = np.asarray(x, dtype=float)
    pos = x[..., [0, 2]]
    if obs.K == 0:
        return np.full(pos.shape[:-1], math.log(cfg.uniform_density))
    means, weights = obs.arrays()
    L = cfg._chol
    diff = pos[..., None, :] - means  # (..., K, 2)
    # whiten: solve L z = diff for the 2x2 lower-triangular factor
    z0 = diff[..., 0] / L[0, 0]
    z1 = (diff[..., 1] - L[1, 0] * z0) / L[1, 1]
    maha = z0 * z0 + z1 * z1
    log_norm = -math.log(2.0 * math.pi) - math.log(L[0, 0] * L[1, 1])
    terms = np.log(weights) + log_norm - 0.5 * maha
    top = terms.max(axis=-1)
    return top + np.log(np.exp(terms - top[..., None]).sum(axis=-1))


def likelihood(x, obs: ObservationSet, cfg: ObservationConfig):
    """GMM density ``sum_k w_k N([rho, theta]; y_k, Sigma)``; flat when K = 0."""
    ll = log_likelihood(x, obs, cfg)
    return float(np.exp(ll)) if np.ndim(ll) == 0 else np.exp(ll)


def partition(candidates, side_limits: dict[str, tuple[float, float]]) -> dict[str, list]:
    """Split candidates by theta into per-lane lists, preserving order.

    ``side_limits`` maps a lane name to an inclusive-exclusive theta range.
    """
    out: dict[str, list] = {name: [] for name in side_limits}
    for c in candidates:
        th = getattr(c, "line", c).theta
        for name, (lo, hi) in side_limits.items():
            if lo <= th < hi:
                out[name].append(c)
                break
    return out


SIDE_LIMITS = {"left": (15.0, 75.0), "right": (105.0, 165.0)}


# -- text record ---------------------------------------------------------------


def format_records(sets) -> str:
    """Line-oriented record: ``frame K`` then K lines ``rho theta weight``."""
    lines = []
    for s in sets:
        lines.append(f"{s.frame_index} {s.K}")
        for m in s.modes:
            lines.append(f"{m.line.rho!r} {m.line.theta!r} {m.weight!r}")
    return "\n".join(lines) + "\n"


def parse_records(text: str) -> list[ObservationSet]:
    out = []
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    i = 0
    while i < len(rows):
        head = rows[i]
        if len(head) != 2:
            raise ValueError(f"record {i + 1}: expected 'frame K', got {' '.join(head)!r}")
        frame, k = int(head[0]), int(head[1])
        body = rows[i + 1 : i + 1 + k]
        if len(body) != k or any(len(r) != 3 for r in body):
            raise ValueError(f"record for frame {frame}: expected {k} mode lines")
        modes = tuple(ObservationMode(LineParam(float(r), float(t)), float(w)) for r, t, w in body)
        out.append(ObservationSet(modes, frame))
        i += 1 + k
    return out
