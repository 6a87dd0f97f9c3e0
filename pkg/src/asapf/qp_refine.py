"""QP refinement of the DP path and speed profiles.

Both problems use the piecewise-constant-jerk discretization: each knot
carries (value, first, second derivative) and consecutive knots are tied by
the third-order Taylor rows::

    [1, h, h^2/3, -1,  0, h^2/6] . (x_i, x_{i+1}) = 0
    [0, 1, h/2,    0, -1, h/2  ] . (x_i, x_{i+1}) = 0
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .apf_sampling import SlObstacle
from .dp_planner import DpResult, StBlock, sl_profile
from .errors import EmptyCorridor, Infeasible, StartOutsideCorridor
from .frenet import FrenetState
from .qp_solver import QpProblem, QpSolution, solve_qp

# re-exported so that callers can reach the solver through this module
__all__ = [
    "QpProblem",
    "QpSolution",
    "solve_qp",
    "VehicleFootprint",
    "CorridorBounds",
    "PathDecision",
    "PathWeights",
    "SpeedWeights",
    "SpeedLimits",
    "SpeedProfile",
    "build_corridor",
    "path_qp",
    "speed_qp",
    "taylor_rows",
]


@dataclass(frozen=True)
class VehicleFootprint:
    w: float = 1.9
    d1: float = 2.1
    d2: float = 2.3

    def __post_init__(self) -> None:
        if min(self.w, self.d1, self.d2) <= 0:
            raise ValueError("footprint dimensions must be positive")


@dataclass
class CorridorBounds:
    s: np.ndarray
    lb: np.ndarray
    ub: np.ndarray


@dataclass
class PathDecision:
    s: np.ndarray
    l: np.ndarray
    dl: np.ndarray
    ddl: np.ndarray
    ds: float
    solution: QpSolution | None = None
    problem: QpProblem | None = None

    def at(self, s):
        """(l, l', l'') at stations ``s`` by evaluating the constant-jerk
        segment that contains each station."""
        s = np.asarray(s, dtype=float)
        i = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self.s) - 2)
        u = np.clip(s - self.s[i], 0.0, None)
        jerk = (self.ddl[i + 1] - self.ddl[i]) / self.ds
        l = self.l[i] + self.dl[i] * u + 0.5 * self.ddl[i] * u**2 + jerk * u**3 / 6.0
        dl = self.dl[i] + self.ddl[i] * u + 0.5 * jerk * u**2
        ddl = self.ddl[i] + jerk * u
        return l, dl, ddl


@dataclass(frozen=True)
class PathWeights:
    w1: float = 1.0
    w2: float = 50.0
    w3: float = 500.0
    w4: float = 1.0


@dataclass(frozen=True)
class SpeedWeights:
    w1: float = 1.0
    w2: float = 1.0
    w3: float = 1.0


@dataclass(frozen=True)
class SpeedLimits:
    v_upper: float = 20.0
    a_min: float = -4.0
    a_max: float = 2.0
    j_min: float = -10.0
    j_max: float = 10.0


@dataclass
class SpeedProfile:
    t: np.ndarray
    s: np.ndarray
    v: np.ndarray
    a: np.ndarray
    dt: float
    solution: QpSolution | None = None
    problem: QpProblem | None = None

    def at(self, t):
        t = np.asarray(t, dtype=float)
        i = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, len(self.t) - 2)
        u = np.clip(t - self.t[i], 0.0, None)
        jerk = (self.a[i + 1] - self.a[i]) / self.dt
        s = self.s[i] + self.v[i] * u + 0.5 * self.a[i] * u**2 + jerk * u**3 / 6.0
        v = self.v[i] + self.a[i] * u + 0.5 * jerk * u**2
        a = self.a[i] + jerk * u
        return s, v, a


def taylor_rows(n: int, h: float) -> np.ndarray:
    """2(n-1) x 3n equality matrix coupling consecutive knots."""
    A = np.zeros((2 * (n - 1), 3 * n))
    for i in range(n - 1):
        c = 3 * i
        A[2 * i, c : c + 6] = [1.0, h, h * h / 3.0, -1.0, 0.0, h * h / 6.0]
        A[2 * i + 1, c : c + 6] = [0.0, 1.0, 0.5 * h, 0.0, -1.0, 0.5 * h]
    return A


def _smoothness_hessian(n: int, h: float, w_d1: float, w_d2: float, w_d3: float) -> np.ndarray:
    """Hessian (of 1/2 x'Hx) for w_d1 sum x'^2 h + w_d2 sum x''^2 h +
    w_d3 sum ((x''_{i+1} - x''_i)/h)^2 h."""
    H = np.zeros((3 * n, 3 * n))
    i1 = 3 * np.arange(n) + 1
    i2 = 3 * np.arange(n) + 2
    H[i1, i1] += 2.0 * w_d1 * h
    H[i2, i2] += 2.0 * w_d2 * h
    k = 2.0 * w_d3 / h
    for i in range(n - 1):
        a, b = i2[i], i2[i + 1]
        H[a, a] += k
        H[b, b] += k
        H[a, b] -= k
        H[b, a] -= k
    return H


# -- corridor ---------------------------------------------------------------


def pass_side(dp_path: DpResult, ob: SlObstacle) -> int:
    """+1 when the DP path passes ``ob`` on its left (larger l), else -1."""
    probe = np.linspace(ob.s_range[0], ob.s_range[1], 5)
    probe = np.clip(probe, dp_path.coords[0], dp_path.coords[-1])
    l = float(np.mean(sl_profile(dp_path, probe)))
    return 1 if l >= 0.5 * (ob.l_down + ob.l_up) else -1


def build_corridor(
    dp_path: DpResult,
    obstacles: Sequence[SlObstacle],
    road_bounds: tuple[float, float],
    footprint: VehicleFootprint,
    stations: np.ndarray | None = None,
    margin: float = 0.0,
) -> CorridorBounds:
    """Per-station lateral bounds from the road and the DP pass-side decision.

    Obstacle bounds (shifted outward by ``margin``) apply wherever any part
    of the body window ``[s - d2, s + d1]`` overlaps the obstacle.
    """
    if stations is None:
        stations = np.arange(dp_path.coords[0], dp_path.coords[-1] + 1e-9, 2.5)
    s = np.asarray(stations, dtype=float)
    lb = np.full(len(s), float(road_bounds[0]))
    ub = np.full(len(s), float(road_bounds[1]))
    for ob in obstacles:
        if ob.s_range[1] < dp_path.coords[0] - footprint.d2 or ob.s_range[0] > dp_path.coords[-1] + footprint.d1:
            continue
        active = (s >= ob.s_range[0] - footprint.d1) & (s <= ob.s_range[1] + footprint.d2)
        if not active.any():
            continue
        if pass_side(dp_path, ob) > 0:
            lb = np.where(active, np.maximum(lb, ob.l_up + margin), lb)
        else:
            ub = np.where(active, np.minimum(ub, ob.l_down - margin), ub)
    bad = np.flatnonzero(lb >= ub)
    if len(bad):
        raise EmptyCorridor(int(bad[0]))
    return CorridorBounds(s, lb, ub)


# -- path QP ----------------------------------------------------------------


def path_problem(
    ref: np.ndarray,
    corridor: CorridorBounds,
    footprint: VehicleFootprint,
    weights: PathWeights,
    ds: float,
    start: tuple[float, float, float],
    kappa_max: float = 0.2,
) -> QpProblem:
    n = len(ref)
    H = _smoothness_hessian(n, ds, weights.w1, weights.w2, weights.w3)
    il = 3 * np.arange(n)
    H[il, il] += 2.0 * weights.w4 * ds
    g = np.zeros(3 * n)
    g[il] = -2.0 * weights.w4 * ds * ref
    A_eq = taylor_rows(n, ds)
    b_eq = np.zeros(A_eq.shape[0])
    # corner block: each corner l + c*l' + e*w/2 within [lb, ub]
    rows, rhs = [], []
    half = 0.5 * footprint.w
    for i in range(1, n):
        for c in (footprint.d1, -footprint.d2):
            for e in (half, -half):
                r = np.zeros(3 * n)
                r[3 * i] = 1.0
                r[3 * i + 1] = c
                rows.append(r)
                rhs.append(corridor.ub[i] - e)
                rows.append(-r)
                rhs.append(-(corridor.lb[i] - e))
    lo = np.full(3 * n, -np.inf)
    hi = np.full(3 * n, np.inf)
    i2 = 3 * np.arange(1, n) + 2
    lo[i2], hi[i2] = -kappa_max, kappa_max
    lo[:3] = hi[:3] = start
    return QpProblem(H, g, A_eq, b_eq, np.array(rows), np.array(rhs), lo, hi)


def path_objective(l, dl, ddl, ref, weights: PathWeights, ds: float) -> float:
    """The discretized path objective (the QP's cost without its 1/2)."""
    jerk = np.diff(ddl) / ds
    return float(
        weights.w1 * np.sum(dl**2) * ds
        + weights.w2 * np.sum(ddl**2) * ds
        + weights.w3 * np.sum(jerk**2) * ds
        + weights.w4 * np.sum((l - ref) ** 2) * ds
    )


def path_qp(
    dp_path: DpResult,
    corridor: CorridorBounds,
    footprint: VehicleFootprint,
    weights: PathWeights,
    ds: float,
    start_state: FrenetState,
    kappa_max: float = 0.2,
    tol: float = 1e-6,
) -> PathDecision:
    s = corridor.s
    if len(s) < 3:
        raise ValueError("path QP needs at least 3 stations")
    l0 = start_state.l
    if l0 < corridor.lb[0] - tol or l0 > corridor.ub[0] + tol:
        raise StartOutsideCorridor(
            f"start l={l0:.3f} outside [{corridor.lb[0]:.3f}, {corridor.ub[0]:.3f}]"
        )
    ref = sl_profile(dp_path, s)
    ddl0 = float(np.clip(start_state.l_pprime, -kappa_max, kappa_max))
    prob = path_problem(ref, corridor, footprint, weights, ds, (l0, start_state.l_prime, ddl0), kappa_max)
    sol = solve_qp(prob, tol=tol)
    x = sol.x
    return PathDecision(s.copy(), x[0::3].copy(), x[1::3].copy(), x[2::3].copy(), ds, sol, prob)


# -- speed QP ---------------------------------------------------------------


def speed_bounds(
    dp_speed: DpResult, blocked: Sequence[StBlock], t: np.ndarray, margin: float
) -> tuple[np.ndarray, np.ndarray]:
    """Per-time station bounds on the side of each band the DP chose."""
    s_dp = np.interp(t, dp_speed.coords, dp_speed.values)
    lower = np.full(len(t), -np.inf)
    upper = np.full(len(t), np.inf)
    for band in blocked:
        lo, hi = band.at(t)
        present = ~np.isnan(lo)
        below = present & (s_dp <= np.where(present, lo, 0.0))
        above = present & ~below
        upper = np.where(below, np.minimum(upper, lo - margin), upper)
        lower = np.where(above, np.maximum(lower, hi + margin), lower)
    return lower, upper


def speed_problem(
    s_ref: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    limits: SpeedLimits,
    weights: SpeedWeights,
    dt: float,
    start: tuple[float, float, float],
    s_end: float = np.inf,
) -> QpProblem:
    n = len(s_ref)
    H = _smoothness_hessian(n, dt, 0.0, weights.w2, weights.w3)
    i0 = 3 * np.arange(n)
    H[i0, i0] += 2.0 * weights.w1 * dt
    g = np.zeros(3 * n)
    g[i0] = -2.0 * weights.w1 * dt * s_ref
    A_eq = taylor_rows(n, dt)
    b_eq = np.zeros(A_eq.shape[0])
    rows, rhs = [], []
    for i in range(n - 1):
        r = np.zeros(3 * n)
        r[3 * i] = 1.0
        r[3 * (i + 1)] = -1.0
        rows.append(r)  # s_i - s_{i+1} <= 0
        rhs.append(0.0)
        jr = np.zeros(3 * n)
        jr[3 * (i + 1) + 2] = 1.0 / dt
        jr[3 * i + 2] = -1.0 / dt
        rows.append(jr)
        rhs.append(limits.j_max)
        rows.append(-jr)
        rhs.append(-limits.j_min)
    lo = np.full(3 * n, -np.inf)
    hi = np.full(3 * n, np.inf)
    lo[i0] = lower
    hi[i0] = np.minimum(upper, s_end)
    lo[i0 + 1], hi[i0 + 1] = 0.0, limits.v_upper
    lo[i0 + 2], hi[i0 + 2] = limits.a_min, limits.a_max
    lo[:3] = hi[:3] = start
    return QpProblem(H, g, A_eq, b_eq, np.array(rows), np.array(rhs), lo, hi)


def speed_qp(
    dp_speed: DpResult,
    st_blocked: Sequence[StBlock],
    limits: SpeedLimits,
    weights: SpeedWeights,
    dt: float,
    start: tuple[float, float, float],
    horizon: float | None = None,
    margin: float = 1.0,
    s_end: float = np.inf,
    tol: float = 1e-6,
) -> SpeedProfile:
    """Refine the DP speed profile; ``start`` is (s0, v0, a0)."""
    T = float(dp_speed.coords[-1]) if horizon is None else horizon
    n = int(round(T / dt)) + 1
    t = np.arange(n) * dt
    s_ref = np.interp(t, dp_speed.coords, dp_speed.values)
    lower, upper = speed_bounds(dp_speed, st_blocked, t, margin)
    lower[0], upper[0] = -np.inf, np.inf
    s0, v0, a0 = start
    v0 = float(np.clip(v0, 0.0, limits.v_upper))
    a0 = float(np.clip(a0, limits.a_min, limits.a_max))
    if np.any(lower > upper):
        raise Infeasible("speed bounds cross")
    prob = speed_problem(s_ref, lower, upper, limits, weights, dt, (s0, v0, a0), s_end)
    sol = solve_qp(prob, tol=tol)
    x = sol.x
    return SpeedProfile(t, x[0::3].copy(), x[1::3].copy(), x[2::3].copy(), dt, sol, prob)
