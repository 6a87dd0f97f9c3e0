"""Candidate lattices for the DP search.

SL lattices are built uniformly and then thinned with an artificial
potential field: obstacle repulsion, road-boundary repulsion and attraction
to the previous cycle's path. ST lattices are pruned to the set reachable
under bang-bang acceleration from the current speed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import LayerBlocked


@dataclass(frozen=True)
class SlGridSpec:
    n_layers: int = 4
    m_rows: int = 11
    ds: float = 25.0
    l_min: float = -5.0
    l_max: float = 5.0
    s_start: float = 0.0

    def __post_init__(self) -> None:
        if self.n_layers < 2 or self.m_rows < 3:
            raise ValueError("need n_layers >= 2 and m_rows >= 3")
        if self.ds <= 0 or not self.l_min < self.l_max:
            raise ValueError("need ds > 0 and l_min < l_max")


@dataclass(frozen=True)
class ApfCoefficients:
    eta: float = 1000.0
    gamma: float = 20.0
    alpha: float = 20.0
    buffer: float = 1.0

    def __post_init__(self) -> None:
        if min(self.eta, self.gamma, self.alpha, self.buffer) < 0:
            raise ValueError("APF gains and buffer must be non-negative")


@dataclass(frozen=True)
class SlObstacle:
    """Lateral band ``[l_down, l_up]`` occupied over ``s_range``."""

    s_range: tuple[float, float]
    l_down: float
    l_up: float

    def __post_init__(self) -> None:
        if not self.l_down < self.l_up:
            raise ValueError("obstacle needs l_down < l_up")
        if not self.s_range[0] <= self.s_range[1]:
            raise ValueError("obstacle s_range is reversed")

    def covers(self, s):
        return (np.asarray(s) >= self.s_range[0]) & (np.asarray(s) <= self.s_range[1])


@dataclass(frozen=True)
class StGridSpec:
    horizon_T: float = 8.0
    dt: float = 1.0
    s_max: float = 100.0
    m_rows: int = 51
    v_bounds: tuple[float, float] = (0.0, 20.0)
    a_bounds: tuple[float, float] = (-4.0, 2.0)
    j_bounds: tuple[float, float] = (-10.0, 10.0)
    s_min: float = 0.0

    def __post_init__(self) -> None:
        if self.horizon_T <= 0 or self.dt <= 0:
            raise ValueError("horizon and dt must be positive")
        for lo, hi in (self.v_bounds, self.a_bounds, self.j_bounds):
            if lo > hi:
                raise ValueError("bounds must be ordered (min, max)")
        if self.m_rows < 2 or not self.s_min < self.s_max:
            raise ValueError("need m_rows >= 2 and s_min < s_max")

    @property
    def n_layers(self) -> int:
        return int(round(self.horizon_T / self.dt))


@dataclass
class Layer:
    """One lattice column: ``coord`` is s (SL) or t (ST); ``rows`` are l or s."""

    coord: float
    rows: np.ndarray
    cost: np.ndarray
    retained: np.ndarray

    @property
    def retained_index(self) -> np.ndarray:
        return np.flatnonzero(self.retained)

    @property
    def nodes(self) -> list[tuple[tuple[float, float], float, bool]]:
        return [((self.coord, float(r)), float(c), bool(k)) for r, c, k in zip(self.rows, self.cost, self.retained)]


@dataclass
class SampledGrid:
    layers: list[Layer]
    kind: str = "sl"
    origin: tuple[float, float] | None = field(default=None)

    @property
    def n_nodes(self) -> int:
        return sum(len(L.rows) for L in self.layers)

    @property
    def retained_counts(self) -> list[int]:
        return [int(L.retained.sum()) for L in self.layers]


def uniform_sl_grid(spec: SlGridSpec) -> SampledGrid:
    rows = np.linspace(spec.l_min, spec.l_max, spec.m_rows)
    layers = [
        Layer(spec.s_start + (i + 1) * spec.ds, rows.copy(), np.zeros(spec.m_rows), np.ones(spec.m_rows, bool))
        for i in range(spec.n_layers)
    ]
    return SampledGrid(layers, "sl")


# -- fields -----------------------------------------------------------------


def _inv_sq(d):
    with np.errstate(divide="ignore"):
        return 1.0 / (d * d)


def obstacle_field(s: float, l, obstacles: Sequence[SlObstacle], coeff: ApfCoefficients):
    l = np.asarray(l, dtype=float)
    u = np.zeros_like(l)
    for ob in obstacles:
        if not ob.covers(s):
            continue
        lo = ob.l_down - coeff.buffer
        hi = ob.l_up + coeff.buffer
        inside = (l >= lo) & (l <= hi)
        d = np.where(l > hi, l - hi, lo - l)
        u = u + np.where(inside, np.inf, 0.5 * coeff.eta * _inv_sq(np.where(inside, 1.0, d)))
    return u


def boundary_field(l, bounds: tuple[float, float], coeff: ApfCoefficients):
    l = np.asarray(l, dtype=float)
    lo = bounds[0] + coeff.buffer
    hi = bounds[1] - coeff.buffer
    inside = (l > lo) & (l < hi)
    d_up = np.where(inside, hi - l, 1.0)
    d_lo = np.where(inside, l - lo, 1.0)
    return np.where(inside, 0.5 * coeff.gamma * (_inv_sq(d_up) + _inv_sq(d_lo)), np.inf)


def reference_field(s: float, l, prev_path: Callable[[float], float] | None, coeff: ApfCoefficients):
    l = np.asarray(l, dtype=float)
    ref = 0.0 if prev_path is None else float(prev_path(s))
    return 0.5 * coeff.alpha * (l - ref) ** 2


def sl_apf_cost(
    s: float,
    l,
    obstacles: Sequence[SlObstacle],
    bounds: tuple[float, float],
    prev_path: Callable[[float], float] | None,
    coeff: ApfCoefficients,
):
    """Total potential at (s, l); +inf marks forbidden nodes."""
    if not bounds[0] < bounds[1]:
        raise ValueError("need l_lbound < l_ubound")
    u = (
        reference_field(s, l, prev_path, coeff)
        + obstacle_field(s, l, obstacles, coeff)
        + boundary_field(l, bounds, coeff)
    )
    return float(u) if np.ndim(u) == 0 else u


def adapt_sl(
    grid: SampledGrid,
    k_retain: int,
    obstacles: Sequence[SlObstacle],
    bounds: tuple[float, float],
    prev_path: Callable[[float], float] | None,
    coeff: ApfCoefficients,
) -> SampledGrid:
    """Keep the ``k_retain`` cheapest finite nodes per layer.

    Ties are broken by distance to the previous path, then by row index.
    """
    if k_retain < 1:
        raise ValueError("k_retain must be >= 1")
    layers = []
    for i, L in enumerate(grid.layers):
        cost = np.asarray(sl_apf_cost(L.coord, L.rows, obstacles, bounds, prev_path, coeff), dtype=float)
        finite = np.isfinite(cost)
        if not finite.any():
            raise LayerBlocked(i)
        ref = 0.0 if prev_path is None else float(prev_path(L.coord))
        rows_idx = np.arange(len(L.rows))
        order = np.lexsort((rows_idx, np.abs(L.rows - ref), cost))
        order = order[finite[order]][:k_retain]
        keep = np.zeros(len(L.rows), bool)
        keep[order] = True
        layers.append(Layer(L.coord, L.rows.copy(), cost, keep))
    return SampledGrid(layers, "sl", grid.origin)


# -- ST ---------------------------------------------------------------------


def reach_bounds(t, v0: float, spec: StGridSpec):
    """Bang-bang reachable station interval ``[lo, hi]`` at time ``t``.

    The envelope switches acceleration instantaneously (no jerk limit), so
    the current acceleration does not enter.
    """
    t = np.asarray(t, dtype=float)
    (v_min, v_max), (a_min, a_max) = spec.v_bounds, spec.a_bounds

    def travel(v_lim, acc):
        if acc == 0.0 or v_lim == v0:
            return v0 * t
        t_sat = (v_lim - v0) / acc
        if t_sat < 0:
            # already beyond the limit in the direction of travel
            return v0 * t
        ramp = v0 * t + 0.5 * acc * t * t
        sat = v0 * t_sat + 0.5 * acc * t_sat**2 + v_lim * (t - t_sat)
        return np.where(t <= t_sat, ramp, sat)

    hi = travel(v_max, a_max)
    lo = travel(v_min, a_min)
    return lo, hi


def st_warm_cost(t: float, s, v0: float, a0: float, weights=(1.0, 1.0, 1.0)):
    """Smoothness potential of reaching ``s`` at ``t`` along a constant-
    acceleration arc from (v0, a0)."""
    s = np.asarray(s, dtype=float)
    w1, w2, w3 = weights
    v_bar = s / t
    a_bar = 2.0 * (s - v0 * t) / (t * t)
    return w1 * (v_bar - v0) ** 2 + w2 * a_bar**2 + w3 * ((a_bar - a0) / t) ** 2


def st_obstacle_field(t: float, s, blocked, w: float = 1000.0, buffer: float = 1.0):
    """Potential from ST blocked bands; ``blocked`` is a list of callables
    t -> (lower, upper) or None."""
    s = np.asarray(s, dtype=float)
    u = np.zeros_like(s)
    for band in blocked or ():
        b = band(t)
        if b is None:
            continue
        lo, hi = b[0] - buffer, b[1] + buffer
        inside = (s >= lo) & (s <= hi)
        d = np.where(s > hi, s - hi, lo - s)
        u = u + np.where(inside, np.inf, 0.5 * w * _inv_sq(np.where(inside, 1.0, d)))
    return u


def st_constraint_prune(
    spec: StGridSpec,
    v0: float,
    a0: float = 0.0,
    blocked=None,
    weights=(1.0, 1.0, 1.0),
    prune: bool = True,
) -> SampledGrid:
    """Uniform ST lattice with unreachable nodes removed.

    ``prune=False`` keeps every node (the uniform baseline) while still
    attaching the warm costs; with pruning a node is kept iff it is
    reachable and its warm cost is finite.
    """
    if not spec.v_bounds[0] <= v0 <= spec.v_bounds[1]:
        raise ValueError("v0 outside v_bounds")
    rows = np.linspace(spec.s_min, spec.s_max, spec.m_rows)
    tol = 1e-9
    layers = []
    for i in range(spec.n_layers):
        t = (i + 1) * spec.dt
        lo, hi = reach_bounds(t, v0, spec)
        cost = st_warm_cost(t, rows, v0, a0, weights) + st_obstacle_field(t, rows, blocked)
        reach = (rows >= lo - tol) & (rows <= hi + tol)
        keep = (np.isfinite(cost) & reach) if prune else np.ones(len(rows), bool)
        layers.append(Layer(t, rows.copy(), cost, keep))
    return SampledGrid(layers, "st", origin=(0.0, 0.0))
