"""Layered dynamic programming over SL and ST lattices.

The search follows the classic value-iteration scheme: the start column is
padded to the width of the first layer (only the start entry is finite),
every (predecessor, node) pair of consecutive columns is relaxed, and the
optimum is recovered by backtracking. ``expansions`` counts relaxations, so
a lattice with K nodes per layer and N layers costs exactly N*K*K.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .apf_sampling import SampledGrid, SlObstacle
from .errors import NoFeasiblePath
from .quintic import BoundaryConditions, QuinticPoly, evaluate, fit

N_EVAL = 11  # Simpson samples per SL edge (10 panels)


@dataclass(frozen=True)
class DpWeights:
    w1: float = 1.0
    w2: float = 1.0
    w3: float = 1.0
    w4: float = 1.0
    d_safety: float = 3.0
    d_collision: float = 1.25
    v_ref: float = 10.0
    w_ref: float = 1.0

    def __post_init__(self) -> None:
        if min(self.w1, self.w2, self.w3, self.w4, self.w_ref) < 0:
            raise ValueError("DP weights must be non-negative")
        if not self.d_collision < self.d_safety:
            raise ValueError("need d_collision < d_safety")


@dataclass(frozen=True)
class DpNode:
    """Lattice node: ``coord`` is s (SL) or t (ST), ``value`` is l or s.
    ``d1``/``d2`` are first/second derivatives (only the start carries them);
    ``row`` is the grid row index, -1 for the start."""

    coord: float
    value: float
    d1: float = 0.0
    d2: float = 0.0
    row: int = -1


@dataclass
class DpResult:
    node_indices: list[int]
    nodes: list[DpNode]
    edge_costs: list[float]
    total_cost: float
    expansions: int
    elapsed: int
    edge_polys: list = field(default_factory=list)

    @property
    def values(self) -> np.ndarray:
        return np.array([n.value for n in self.nodes])

    @property
    def coords(self) -> np.ndarray:
        return np.array([n.coord for n in self.nodes])


# a layer-cost callback receives the predecessor paths (each a list of
# DpNode from the start), their accumulated costs and the candidate nodes,
# and returns a (n_from, n_to) matrix of edge costs. Entries for infinite
# predecessors are ignored.
LayerCost = Callable[[list, np.ndarray, list], np.ndarray]


def scalar_layer_cost(edge_cost: Callable[[list, DpNode], float]) -> LayerCost:
    """Adapt a per-edge cost into a layer callback that skips edges out of
    unreachable predecessors."""

    def layer(paths, costs, to_nodes):
        out = np.full((len(paths), len(to_nodes)), np.inf)
        for k, path in enumerate(paths):
            if not math.isfinite(costs[k]):
                continue
            for j, node in enumerate(to_nodes):
                out[k, j] = edge_cost(path, node)
        return out

    return layer


def dp_search(grid: SampledGrid, start: DpNode, layer_cost: LayerCost) -> DpResult:
    """Minimum-cost layer-monotone path through the retained nodes.

    Ties go to the lowest predecessor index at every node and to the lowest
    row in the final layer.
    """
    t0 = time.perf_counter_ns()
    if not grid.layers or any(not L.retained.any() for L in grid.layers):
        raise NoFeasiblePath("a lattice layer has no retained node")
    width = int(grid.layers[0].retained.sum())
    paths: list[list[DpNode] | None] = [[start]] + [None] * (width - 1)
    cost = np.full(width, np.inf)
    cost[0] = 0.0
    expansions = 0
    back: list[np.ndarray] = []
    edge_mats: list[np.ndarray] = []
    for L in grid.layers:
        idx = L.retained_index
        to_nodes = [DpNode(L.coord, float(L.rows[r]), row=int(r)) for r in idx]
        live = [p if p is not None else [start] for p in paths]
        mat = np.asarray(layer_cost(live, cost, to_nodes), dtype=float)
        expansions += len(paths) * len(to_nodes)
        total = np.where(np.isfinite(cost)[:, None], cost[:, None] + mat, np.inf)
        bp = np.argmin(total, axis=0)
        new_cost = total[bp, np.arange(len(to_nodes))]
        new_paths = []
        for j, node in enumerate(to_nodes):
            prev = paths[bp[j]]
            new_paths.append(None if prev is None or not np.isfinite(new_cost[j]) else prev + [node])
        back.append(bp)
        edge_mats.append(mat)
        paths, cost = new_paths, new_cost
    j = int(np.argmin(cost))
    if not np.isfinite(cost[j]):
        raise NoFeasiblePath("every path through the lattice has infinite cost")
    chain = [j]
    for bp in reversed(back[1:]):
        chain.append(int(bp[chain[-1]]))
    chain.append(0)
    chain.reverse()  # column positions, start first
    nodes = paths[j]
    edges = [float(edge_mats[i][chain[i], chain[i + 1]]) for i in range(len(grid.layers))]
    elapsed = max(time.perf_counter_ns() - t0, 1)
    return DpResult(
        node_indices=[-1] + [n.row for n in nodes[1:]],
        nodes=nodes,
        edge_costs=edges,
        total_cost=float(cost[j]),
        expansions=expansions,
        elapsed=elapsed,
    )


# -- SL ---------------------------------------------------------------------


def _simpson_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / 3.0


_SIMPSON = _simpson_weights(N_EVAL)
_UNIT = np.linspace(0.0, 1.0, N_EVAL)


@lru_cache(maxsize=256)
def _gram(T: float, order: int) -> np.ndarray:
    """G[i, j] = integral over [0, T] of d^k(t^i) * d^k(t^j)."""
    G = np.zeros((6, 6))
    for i in range(order, 6):
        ci = math.perm(i, order)
        for j in range(order, 6):
            cj = math.perm(j, order)
            p = i + j - 2 * order
            G[i, j] = ci * cj * T ** (p + 1) / (p + 1)
    return G


@lru_cache(maxsize=256)
def _weighted_gram(T: float, w1: float, w2: float, w3: float) -> np.ndarray:
    return w1 * _gram(T, 1) + w2 * _gram(T, 2) + w3 * _gram(T, 3)


def smoothness_energy(poly: QuinticPoly, w: DpWeights) -> float:
    c = np.asarray(poly.coeffs)
    G = _weighted_gram(float(poly.duration), w.w1, w.w2, w.w3)
    return float(c @ G @ c)


def obstacle_distance(s: np.ndarray, l: np.ndarray, obstacles: Sequence[SlObstacle]) -> np.ndarray:
    """Lateral distance from each sample to the nearest obstacle band
    covering its station (inf where none does; 0 inside a band)."""
    d = np.full(len(s), np.inf)
    for ob in obstacles:
        cov = ob.covers(s)
        if not cov.any():
            continue
        gap = np.maximum(np.maximum(ob.l_down - l, l - ob.l_up), 0.0)
        d = np.where(cov, np.minimum(d, gap), d)
    return d


def distance_penalty(d: np.ndarray, w: float, d_safety: float, d_collision: float) -> np.ndarray:
    far = d >= d_safety
    hit = d <= d_collision
    gap = np.where(far | hit, 1.0, d - d_collision)
    return np.where(far, 0.0, np.where(hit, np.inf, w / (gap * gap)))


def sl_edge(frm: DpNode, to: DpNode, w: DpWeights, obstacles: Sequence[SlObstacle]) -> tuple[float, QuinticPoly]:
    T = to.coord - frm.coord
    if not T > 0:
        raise ValueError("SL edges must advance in s")
    poly = fit(BoundaryConditions(frm.value, frm.d1, frm.d2, to.value, to.d1, to.d2, T))
    cost = smoothness_energy(poly, w)
    u = T * _UNIT
    # Horner on the sample grid; the samples lie inside the span by construction
    l = np.zeros(N_EVAL)
    for ci in poly.coeffs[::-1]:
        l = l * u + ci
    h = T / (N_EVAL - 1)
    cost += w.w_ref * h * float(_SIMPSON @ (l * l))
    if obstacles:
        d = obstacle_distance(frm.coord + u, l, obstacles)
        pen = distance_penalty(d, w.w4, w.d_safety, w.d_collision)
        if np.isinf(pen).any():
            return math.inf, poly
        cost += h * float(_SIMPSON @ pen)
    return cost, poly


def sl_edge_cost(frm: DpNode, to: DpNode, weights: DpWeights, obstacles: Sequence[SlObstacle] = ()) -> float:
    return sl_edge(frm, to, weights, obstacles)[0]


def sl_dp(
    grid: SampledGrid, start: DpNode, weights: DpWeights, obstacles: Sequence[SlObstacle] = ()
) -> DpResult:
    """SL search with quintic edges; the result carries the edge quintics."""
    res = dp_search(grid, start, scalar_layer_cost(lambda path, to: sl_edge_cost(path[-1], to, weights, obstacles)))
    res.edge_polys = [sl_edge(a, b, weights, obstacles)[1] for a, b in zip(res.nodes[:-1], res.nodes[1:])]
    return res


def sl_profile(res: DpResult, s) -> np.ndarray:
    """Evaluate the piecewise-quintic DP path at stations ``s`` (clamped)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    knots = res.coords
    out = np.empty_like(s)
    for k, si in enumerate(s):
        i = int(np.clip(np.searchsorted(knots, si, side="right") - 1, 0, len(knots) - 2))
        poly = res.edge_polys[i]
        out[k] = evaluate(poly, float(np.clip(si - knots[i], 0.0, poly.duration)))
    return out


# -- ST ---------------------------------------------------------------------


@dataclass(frozen=True)
class StLimits:
    v_min: float = 0.0
    v_max: float = 20.0
    a_min: float = -4.0
    a_max: float = 2.0
    j_min: float = -10.0
    j_max: float = 10.0


@dataclass(frozen=True)
class StBlock:
    """Blocked station band of one obstacle sampled on a uniform time grid;
    NaN marks times at which the obstacle is off the corridor."""

    dt: float
    lower: np.ndarray
    upper: np.ndarray
    label: str = ""

    def index(self, t) -> np.ndarray:
        return np.clip(np.rint(np.asarray(t) / self.dt).astype(int), 0, len(self.lower) - 1)

    def at(self, t):
        i = self.index(t)
        return self.lower[i], self.upper[i]

    def __call__(self, t):
        lo, hi = self.at(t)
        return None if np.isnan(lo) else (float(lo), float(hi))

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.lower)) * self.dt

    def is_empty(self) -> bool:
        return bool(np.all(np.isnan(self.lower)))


def st_history(start: DpNode, dt: float, depth: int = 3) -> list[float]:
    """Virtual stations before t=0 from the start speed and acceleration,
    oldest first, followed by the start station."""
    v0, a0 = start.d1, start.d2
    past = [start.value - v0 * m * dt + 0.5 * a0 * (m * dt) ** 2 for m in range(depth - 1, 0, -1)]
    return past + [start.value]


N_SUB = 10


def _st_cost_arrays(s3, s2, s1, t_from, s_to, w: DpWeights, blocked, dt, lim: StLimits):
    """Vectorized ST edge cost; s3, s2, s1 broadcast against s_to."""
    v = (s_to - s1) / dt
    a = (s_to - 2.0 * s1 + s2) / dt**2
    j = (s_to - 3.0 * s1 + 3.0 * s2 - s3) / dt**3
    eps = 1e-9
    ok = (
        (s_to >= s1 - eps)
        & (v >= lim.v_min - eps)
        & (v <= lim.v_max + eps)
        & (a >= lim.a_min - eps)
        & (a <= lim.a_max + eps)
    )
    cost = (w.w1 * (v - w.v_ref) ** 2 + w.w2 * a * a + w.w3 * j * j) * dt
    if blocked:
        pen = np.zeros(np.broadcast(s1, s_to).shape)
        h = dt / N_SUB
        for k in range(1, N_SUB + 1):
            frac = k / N_SUB
            s = s1 + frac * (s_to - s1)
            t = t_from + frac * dt
            d = np.full(s.shape, np.inf)
            for band in blocked:
                lo, hi = band.at(t)
                if np.isnan(lo):
                    continue
                gap = np.maximum(np.maximum(lo - s, s - hi), 0.0)
                d = np.minimum(d, gap)
            pen = pen + h * distance_penalty(d, w.w4, w.d_safety, w.d_collision)
        cost = cost + pen
    return np.where(ok, cost, np.inf)


def st_edge_cost(
    history: Sequence[float],
    to: DpNode,
    weights: DpWeights,
    blocked: Sequence[StBlock] = (),
    dt: float = 1.0,
    limits: StLimits = StLimits(),
) -> float:
    """Cost of extending a station history ``(..., s_{i-3}, s_{i-2}, s_{i-1})``
    to ``to.value`` at time ``to.coord``.

    Rates use backward differences v = (s_i - s_{i-1})/dt,
    a = (s_i - 2 s_{i-1} + s_{i-2})/dt^2 and
    j = (s_i - 3 s_{i-1} + 3 s_{i-2} - s_{i-3})/dt^3.
    """
    s3, s2, s1 = (float(x) for x in history[-3:])
    c = _st_cost_arrays(
        np.array(s3), np.array(s2), np.array(s1), to.coord - dt, np.array(to.value), weights, blocked, dt, limits
    )
    return float(c)


def st_dp(
    grid: SampledGrid,
    start: DpNode,
    weights: DpWeights,
    blocked: Sequence[StBlock] = (),
    dt: float = 1.0,
    limits: StLimits = StLimits(),
) -> DpResult:
    """ST search; ``start`` carries (t=0, s0, v0, a0) in (coord, value, d1, d2)."""
    virtual = st_history(start, dt)

    def layer(paths, costs, to_nodes):
        hist = np.array([([*virtual[:-1], *[n.value for n in p]])[-3:] for p in paths])
        s_to = np.array([n.value for n in to_nodes])[None, :]
        t_from = to_nodes[0].coord - dt
        mat = _st_cost_arrays(
            hist[:, 0:1], hist[:, 1:2], hist[:, 2:3], t_from, s_to, weights, blocked, dt, limits
        )
        mat[~np.isfinite(costs)] = np.inf
        return mat

    return dp_search(grid, start, layer)


def project_dynamic_obstacles(
    obstacles,
    line,
    horizon: float,
    dt: float,
    path_l: Callable | None = None,
    half_width: float = 1.0,
    inflation: float = 0.0,
    s_offset: float = 0.0,
) -> list[StBlock]:
    """Constant-velocity ST footprints of ``obstacles``.

    Each obstacle must expose ``footprint_at(t)`` returning its (4, 2)
    corner array in world coordinates. A time sample produces a band only
    when the footprint's lateral extent overlaps ``path_l(s) +- half_width``
    (``path_l`` defaults to the reference line, l = 0).
    """
    if horizon <= 0 or dt <= 0:
        raise ValueError("horizon and dt must be positive")
    n = int(round(horizon / dt)) + 1
    times = np.arange(n) * dt
    out = []
    for ob in obstacles:
        # all time samples at once: (n, 4) corner stations and offsets
        corners = np.concatenate([ob.footprint_at(float(t)) for t in times])
        s, l = (v.reshape(n, -1) for v in line.project_many(corners))
        s_lo, s_hi = s.min(axis=1), s.max(axis=1)
        if path_l is None:
            p_lo = p_hi = np.zeros(n)
        else:
            probe = np.clip(np.linspace(s_lo, s_hi, 5, axis=1), 0.0, line.length)
            pl = np.asarray(path_l(probe.ravel()), dtype=float).reshape(n, -1)
            p_lo, p_hi = pl.min(axis=1), pl.max(axis=1)
        on_line = (s_hi >= 0.0) & (s_lo <= line.length)
        overlap = (l.max(axis=1) >= p_lo - half_width) & (l.min(axis=1) <= p_hi + half_width)
        hit = on_line & overlap
        lower = np.where(hit, s_lo - inflation - s_offset, np.nan)
        upper = np.where(hit, s_hi + inflation - s_offset, np.nan)
        out.append(StBlock(dt, lower, upper, getattr(ob, "name", "")))
    return out
