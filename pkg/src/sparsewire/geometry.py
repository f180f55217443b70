"""Square grid with periodic boundary conditions.

Node index <-> position mapping is x = idx % side, y = idx // side.
Distances are Euclidean after wrapping each axis displacement into
[-side/2, side/2].
"""

from __future__ import annotations

import numpy as np


class GridGeometry:
    __slots__ = ("side", "n", "x", "y")

    def __init__(self, side: int):
        self.side = side
        self.n = side * side
        idx = np.arange(self.n)
        self.x = (idx % side).astype(np.float64)
        self.y = (idx // side).astype(np.float64)

    def _wrap(self, d: np.ndarray) -> np.ndarray:
        d = np.abs(d)
        return np.minimum(d, self.side - d)

    def toroidal_distance(self, i, j) -> np.ndarray | float:
        """Distance between node indices (either may be an array)."""
        dx = self._wrap(self.x[i] - self.x[j])
        dy = self._wrap(self.y[i] - self.y[j])
        return np.hypot(dx, dy)

    def distance_to_point(self, px: float, py: float) -> np.ndarray:
        """Distance from a continuous point to every node."""
        dx = self._wrap(self.x - px)
        dy = self._wrap(self.y - py)
        return np.hypot(dx, dy)

    def displacement(self, i, j) -> tuple[np.ndarray, np.ndarray]:
        """Signed per-axis displacement j - i, wrapped into [-side/2, side/2)."""
        half = self.side / 2
        dx = (self.x[j] - self.x[i] + half) % self.side - half
        dy = (self.y[j] - self.y[i] + half) % self.side - half
        return dx, dy
