"""Time-indexed planned trajectory shared by the planner and the controllers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

COLUMNS = ("t", "s", "l", "x", "y", "theta", "v", "a", "kappa")


@dataclass
class TrajectoryPoint:
    t: float
    s: float
    l: float
    x: float
    y: float
    theta: float
    v: float
    a: float
    kappa: float


@dataclass
class PlannedTrajectory:
    """Column arrays; ``t`` is absolute simulation time, ``s`` the station on
    the reference line the plan was made on."""

    t: np.ndarray
    s: np.ndarray
    l: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    v: np.ndarray
    a: np.ndarray
    kappa: np.ndarray

    def __post_init__(self) -> None:
        for name in COLUMNS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.t)
        if n == 0 or any(len(getattr(self, c)) != n for c in COLUMNS):
            raise ValueError("trajectory columns must be non-empty and aligned")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def points(self) -> list[TrajectoryPoint]:
        return [TrajectoryPoint(*row) for row in zip(*(getattr(self, c) for c in COLUMNS))]

    def as_array(self) -> np.ndarray:
        return np.column_stack([getattr(self, c) for c in COLUMNS])

    @property
    def path_length(self) -> np.ndarray:
        """Cumulative Cartesian arc length along the points."""
        seg = np.hypot(np.diff(self.x), np.diff(self.y))
        return np.concatenate([[0.0], np.cumsum(seg)])

    def at_time(self, t: float) -> TrajectoryPoint:
        """Linear interpolation in time (clamped to the ends)."""
        t = float(np.clip(t, self.t[0], self.t[-1]))
        vals = {}
        for c in COLUMNS:
            arr = getattr(self, c)
            if c == "theta":
                vals[c] = float(np.interp(t, self.t, np.unwrap(arr)))
            else:
                vals[c] = float(np.interp(t, self.t, arr))
        return TrajectoryPoint(**vals)

    def match(self, x: float, y: float) -> tuple[TrajectoryPoint, float]:
        """Nearest point on the polyline through the trajectory points.

        Returns the interpolated point and the along-trajectory arc length
        of that point.
        """
        n = len(self.t)
        if n == 1:
            return self.points[0], 0.0
        px, py = np.diff(self.x), np.diff(self.y)
        L2 = px * px + py * py
        L2 = np.where(L2 > 1e-12, L2, 1e-12)
        u = np.clip(((x - self.x[:-1]) * px + (y - self.y[:-1]) * py) / L2, 0.0, 1.0)
        fx = self.x[:-1] + u * px
        fy = self.y[:-1] + u * py
        d2 = (fx - x) ** 2 + (fy - y) ** 2
        i = int(np.argmin(d2))
        w = float(u[i])
        th = np.unwrap(self.theta[i : i + 2])
        vals = {}
        for c in COLUMNS:
            arr = getattr(self, c)
            vals[c] = float(arr[i] + w * (arr[i + 1] - arr[i]))
        vals["theta"] = float((th[0] + w * (th[1] - th[0]) + math.pi) % (2 * math.pi) - math.pi)
        along = float(self.path_length[i] + w * math.sqrt(L2[i]))
        return TrajectoryPoint(**vals), along
