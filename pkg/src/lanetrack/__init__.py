"""Lane tracking in (rho, theta) line space with Kalman and particle filters."""

from .geometry import ImageGeometry, LaneState, LineParam

__all__ = ["ImageGeometry", "LaneState", "LineParam"]
__version__ = "0.1.0"
