"""Line and lane-state value types plus the two distance helpers the
observation weights are built from.

Lines use the Hough normal form ``x*cos(theta) + y*sin(theta) = rho`` in image
coordinates (origin at the upper-left corner, y pointing down). Angles are in
degrees; radians only appear inside trig calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LineParam:
    """A line in normal form.

    ``theta`` is canonicalized to ``[0, 180)``; a representation with theta
    outside that range is folded back by flipping the sign of ``rho``.
    ``rho`` is therefore signed (lines to the right of the image diagonal
    with an obtuse normal angle have ``rho < 0``).
    """

    rho: float
    theta: float

    def __post_init__(self):
        rho, theta = canonical_line(float(self.rho), float(self.theta))
        if not (math.isfinite(rho) and math.isfinite(theta)):
            raise ValueError(f"non-finite line ({self.rho}, {self.theta})")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def through(cls, p, q) -> "LineParam":
        """The line through two distinct points."""
        (x0, y0), (x1, y1) = p, q
        dx, dy = x1 - x0, y1 - y0
        if dx == 0 and dy == 0:
            raise ValueError("points coincide")
        theta = math.degrees(math.atan2(dx, -dy))
        t = math.radians(theta)
        return cls(x0 * math.cos(t) + y0 * math.sin(t), theta)


def canonical_line(rho: float, theta: float) -> tuple[float, float]:
    theta = theta % 360.0
    if theta >= 180.0:
        theta -= 180.0
        rho = -rho
    # % can return 180.0 exactly for tiny negative inputs
    if theta >= 180.0:
        theta = 0.0
        rho = -rho
    return rho, theta


@dataclass(frozen=True)
class LaneState:
    """Hidden state ``[rho, v_rho, theta, v_theta]`` (px, px/s, deg, deg/s)."""

    rho: float
    v_rho: float
    theta: float
    v_theta: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_tuple()):
            raise ValueError(f"non-finite lane state {self.as_tuple()}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.rho, self.v_rho, self.theta, self.v_theta)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=float)

    @classmethod
    def from_array(cls, x) -> "LaneState":
        x = np.asarray(x, dtype=float).reshape(4)
        return cls(*(float(v) for v in x))

    @property
    def line(self) -> LineParam:
        return LineParam(self.rho, self.theta)


@dataclass(frozen=True)
class ImageGeometry:
    width: int = 640
    height: int = 368
    focus_point: tuple[float, float] = (320.0, 150.0)
    bottom_midpoint: tuple[float, float] = field(init=False)

    def __post_init__(self):
        fx, fy = self.focus_point
        if not (0 <= fx < self.width and 0 <= fy < self.height):
            raise ValueError(f"focus point {self.focus_point} outside {self.width}x{self.height}")
        object.__setattr__(self, "focus_point", (float(fx), float(fy)))
        object.__setattr__(self, "bottom_midpoint", (self.width / 2.0, float(self.height - 1)))


def line_bottom_intercept(line: LineParam, geom: ImageGeometry) -> float | None:
    """x where ``line`` crosses the bottom row, or None for a horizontal line."""
    t = math.radians(line.theta)
    c = math.cos(t)
    # cos(90 deg) is ~6e-17, not 0
    if abs(c) < 1e-12:
        return None
    y = geom.height - 1
    return (line.rho - y * math.sin(t)) / c


def point_line_distance(p, line: LineParam) -> float:
    x, y = p
    t = math.radians(line.theta)
    return abs(x * math.cos(t) + y * math.sin(t) - line.rho)
