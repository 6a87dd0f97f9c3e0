"""One planning cycle: reference window, SL path search and refinement, ST
speed search and refinement, and the merge into a Cartesian trajectory."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .apf_sampling import (
    ApfCoefficients,
    SlGridSpec,
    SlObstacle,
    StGridSpec,
    adapt_sl,
    st_constraint_prune,
    uniform_sl_grid,
)
from .dp_planner import (
    DpNode,
    DpResult,
    DpWeights,
    StLimits,
    project_dynamic_obstacles,
    sl_dp,
    st_dp,
)
from .errors import (
    EmptyCorridor,
    LayerBlocked,
    NoFeasiblePath,
    PlanningError,
    PlanningFailure,
    RangeMismatch,
    SolverFailure,
    StartOutsideCorridor,
)
from .frenet import CartesianState, FrenetState, cartesian_to_frenet, frenet_to_cartesian_many
from .qp_refine import (
    PathDecision,
    PathWeights,
    SpeedLimits,
    SpeedProfile,
    SpeedWeights,
    VehicleFootprint,
    build_corridor,
    path_qp,
    speed_qp,
)
from .reference_line import ReferenceLine, SmootherWeights, extract_window, smooth
from .trajectory import PlannedTrajectory
from .vehicle_models import VehicleParams

log = logging.getLogger(__name__)

MODES = ("average", "adaptive")
STATIC_SPEED = 0.5  # obstacles slower than this go into the SL graph


@dataclass(frozen=True)
class PlannerConfig:
    # reference window
    window_back: float = 30.0
    window_ahead: float = 150.0
    ref_spacing: float = 1.0
    smoother: SmootherWeights = field(default_factory=SmootherWeights)
    # SL lattice
    n_layers: int = 4
    m_rows: int = 11
    ds: float = 25.0
    k_retain: int = 5
    apf: ApfCoefficients = field(default_factory=ApfCoefficients)
    sl_w1: float = 1.0
    sl_w2: float = 10.0
    sl_w3: float = 100.0
    sl_w_obs: float = 1.0
    sl_w_ref: float = 1.0
    d_safety: float = 3.0
    d_collision: float = 1.25
    # path QP
    path_ds: float = 2.5
    path_w1: float = 1.0
    path_w2: float = 50.0
    path_w3: float = 500.0
    path_w_ref: float = 1.0
    kappa_max: float = 0.2
    corridor_buffer: float = 1.0
    corridor_relax: float = 0.2
    # ST lattice and speed QP
    horizon: float = 8.0
    st_dt: float = 1.0
    st_rows: int = 51
    v_ref_mps: float = 10.0
    v_max_mps: float = 20.0
    a_min: float = -4.0
    a_max: float = 2.0
    j_min: float = -10.0
    j_max: float = 10.0
    st_w_speed: float = 1.0
    st_w_accel: float = 1.0
    st_w_jerk: float = 0.1
    st_w_obs: float = 100.0
    st_d_safety: float = 10.0
    st_d_collision: float = 1.0
    speed_dt: float = 0.2
    speed_w_ref: float = 1.0
    speed_w_accel: float = 1.0
    speed_w_jerk: float = 1.0
    st_margin: float = 1.0
    st_sample_dt: float = 0.1
    # ego body
    width: float = 1.9
    front: float = 2.1
    rear: float = 2.3
    output_dt: float = 0.05

    def __post_init__(self) -> None:
        if self.k_retain < 1 or self.k_retain > self.m_rows:
            raise ValueError("need 1 <= k_retain <= m_rows")
        if self.v_ref_mps <= 0 or self.v_ref_mps > self.v_max_mps:
            raise ValueError("need 0 < v_ref_mps <= v_max_mps")
        if self.output_dt <= 0 or self.speed_dt <= 0 or self.st_dt <= 0:
            raise ValueError("time steps must be positive")

    @classmethod
    def for_vehicle(cls, p: VehicleParams, **kw) -> "PlannerConfig":
        return cls(width=p.w, front=p.d1, rear=p.d2, **kw)

    @property
    def path_length(self) -> float:
        return self.n_layers * self.ds

    @property
    def footprint(self) -> VehicleFootprint:
        return VehicleFootprint(self.width, self.front, self.rear)

    @property
    def sl_weights(self) -> DpWeights:
        return DpWeights(
            self.sl_w1, self.sl_w2, self.sl_w3, self.sl_w_obs, self.d_safety, self.d_collision, w_ref=self.sl_w_ref
        )

    @property
    def st_weights(self) -> DpWeights:
        return DpWeights(
            self.st_w_speed,
            self.st_w_accel,
            self.st_w_jerk,
            self.st_w_obs,
            self.st_d_safety,
            self.st_d_collision,
            v_ref=self.v_ref_mps,
        )

    @property
    def st_limits(self) -> StLimits:
        return StLimits(0.0, self.v_max_mps, self.a_min, self.a_max, self.j_min, self.j_max)

    @property
    def speed_limits(self) -> SpeedLimits:
        return SpeedLimits(self.v_max_mps, self.a_min, self.a_max, self.j_min, self.j_max)

    @property
    def corridor_margin(self) -> float:
        # corner constraints already keep the body out; the margin adds the
        # buffer plus whatever of d_collision the half width does not cover
        return self.corridor_buffer + max(self.d_collision - 0.5 * self.width, 0.0)


@dataclass
class BenchRecord:
    scenario_id: str
    mode: str
    dp_expansions: int
    dp_elapsed: int
    qp_elapsed: int
    cycle_elapsed: int
    dp_cost: float
    sampling_elapsed: int = 0
    st_expansions: int = 0
    fallback: bool = False

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class Snapshot:
    """What the planner sees in one cycle."""

    scenario_id: str
    route: object
    road_bounds: tuple[float, float]
    obstacles: Sequence = ()
    config: PlannerConfig = field(default_factory=PlannerConfig)
    t: float = 0.0


@dataclass
class CycleDetail:
    """Intermediate products of a cycle, kept for plotting and tests."""

    line: ReferenceLine
    ego: FrenetState
    sl_grid: object
    sl_obstacles: list
    sl_result: DpResult
    corridor: object
    path: PathDecision
    st_grid: object
    st_blocked: list
    st_result: DpResult
    speed: SpeedProfile


def _stage(name: str, t: float, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except PlanningFailure:
        raise
    except (PlanningError, ValueError, np.linalg.LinAlgError) as exc:
        raise PlanningFailure(name, exc, t) from exc


def sl_obstacles(obstacles, line: ReferenceLine) -> list[SlObstacle]:
    """Project slow obstacles into (s, l) bands on ``line``."""
    out = []
    for ob in obstacles:
        if getattr(ob, "speed", 0.0) >= STATIC_SPEED:
            continue
        s, l = line.project_many(np.asarray(ob.footprint_at(0.0), dtype=float))
        if s.max() < 0.0 or s.min() > line.length:
            continue
        if l.max() - l.min() < 1e-6:
            continue
        out.append(SlObstacle((float(s.min()), float(s.max())), float(l.min()), float(l.max())))
    return out


def previous_path(prev: PlannedTrajectory | None, line: ReferenceLine):
    """The previous trajectory as a function s -> l on the current line, or
    None when there is no usable previous trajectory."""
    if prev is None or len(prev) < 2:
        return None
    s, l = line.project_many(np.column_stack([prev.x, prev.y]))
    keep = np.concatenate([[True], np.diff(s) > 1e-6])
    s, l = s[keep], l[keep]
    if len(s) < 2 or np.any(np.diff(s) <= 0):
        order = np.argsort(s, kind="stable")
        s, l = s[order], l[order]
        s, idx = np.unique(s, return_index=True)
        l = l[idx]
    if len(s) < 2:
        return None
    return lambda q: np.interp(q, s, l)


def merge_profiles(
    path: PathDecision,
    speed: SpeedProfile,
    line: ReferenceLine,
    t0: float = 0.0,
    output_dt: float | None = None,
    tol: float = 1e-6,
) -> PlannedTrajectory:
    """Combine l(s) and s(t) into a time-indexed Cartesian trajectory.

    ``speed.s`` is measured from the path's first station.
    """
    dt = speed.dt if output_dt is None else output_dt
    T = float(speed.t[-1])
    n = int(math.floor(T / dt + 1e-9)) + 1
    tr = np.arange(n) * dt
    s_rel, v, a = speed.at(tr)
    s = path.s[0] + s_rel
    if s.min() < path.s[0] - tol or s.max() > path.s[-1] + tol:
        raise RangeMismatch(
            f"speed profile covers [{s.min():.3f}, {s.max():.3f}], path [{path.s[0]:.3f}, {path.s[-1]:.3f}]"
        )
    s = np.maximum.accumulate(np.clip(s, path.s[0], path.s[-1]))
    v = np.maximum(v, 0.0)
    l, lp, lpp = path.at(s)
    c = frenet_to_cartesian_many(s, l, lp, lpp, v, a, line)
    return PlannedTrajectory(
        t=t0 + tr, s=s, l=l, x=c["x"], y=c["y"], theta=c["theta"], v=c["v"], a=c["a"], kappa=c["kappa"]
    )


def _sl_grid(cfg: PlannerConfig, s0: float, bounds, obstacles, prev_fn, mode: str):
    spec = SlGridSpec(cfg.n_layers, cfg.m_rows, cfg.ds, bounds[0], bounds[1], s0)
    grid = uniform_sl_grid(spec)
    if mode == "average":
        return grid, False
    try:
        return adapt_sl(grid, cfg.k_retain, obstacles, bounds, prev_fn, cfg.apf), False
    except LayerBlocked as exc:
        log.warning("APF sampling blocked at layer %d; using the uniform grid", exc.layer)
        return grid, True


def _refine_path(cfg: PlannerConfig, res: DpResult, obstacles, bounds, ego: FrenetState, stations):
    last: Exception | None = None
    for margin in (cfg.corridor_margin, max(cfg.corridor_margin - cfg.corridor_relax, 0.0)):
        try:
            corridor = build_corridor(res, obstacles, bounds, cfg.footprint, stations, margin)
            path = path_qp(
                res,
                corridor,
                cfg.footprint,
                PathWeights(cfg.path_w1, cfg.path_w2, cfg.path_w3, cfg.path_w_ref),
                cfg.path_ds,
                ego,
                cfg.kappa_max,
            )
            return corridor, path
        except (EmptyCorridor, StartOutsideCorridor, SolverFailure) as exc:
            log.info("path refinement failed at margin %.2f: %s", margin, exc)
            last = exc
    raise last


def plan_cycle(
    snapshot: Snapshot,
    ego: CartesianState,
    prev: PlannedTrajectory | None = None,
    mode: str = "adaptive",
    detail: bool = False,
):
    """Run one planning cycle.

    Returns ``(trajectory, record)``, plus a :class:`CycleDetail` when
    ``detail`` is set. Stage errors surface as :class:`PlanningFailure`.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    cfg = snapshot.config
    t_now = snapshot.t
    clock0 = time.perf_counter_ns()

    window = _stage("window", t_now, extract_window, snapshot.route, (ego.x, ego.y), cfg.window_back, cfg.window_ahead)
    line = _stage("smooth", t_now, smooth, window, cfg.smoother, cfg.ref_spacing)
    ego_f = _stage("frenet", t_now, cartesian_to_frenet, ego, line)
    s0 = ego_f.s
    if s0 + cfg.path_length > line.length + 1e-6:
        raise PlanningFailure(
            "window", RangeMismatch(f"route ends {line.length - s0:.1f} m ahead, need {cfg.path_length:.1f}"), t_now
        )
    bounds = snapshot.road_bounds
    obstacles = list(snapshot.obstacles)
    sl_obs = sl_obstacles(obstacles, line)
    prev_fn = previous_path(prev, line)

    # SL: sampling and DP
    t_samp = time.perf_counter_ns()
    grid, fallback = _stage("sl_sampling", t_now, _sl_grid, cfg, s0, bounds, sl_obs, prev_fn, mode)
    sampling_elapsed = max(time.perf_counter_ns() - t_samp, 1)
    start = DpNode(s0, ego_f.l, ego_f.l_prime, ego_f.l_pprime)
    try:
        sl_res = sl_dp(grid, start, cfg.sl_weights, sl_obs)
    except NoFeasiblePath as exc:
        if mode == "average":
            raise PlanningFailure("sl_dp", exc, t_now) from exc
        log.warning("adaptive SL lattice has no feasible path; retrying on the uniform grid")
        fallback = True
        grid = uniform_sl_grid(SlGridSpec(cfg.n_layers, cfg.m_rows, cfg.ds, bounds[0], bounds[1], s0))
        sl_res = _stage("sl_dp", t_now, sl_dp, grid, start, cfg.sl_weights, sl_obs)

    # path refinement
    t_qp = time.perf_counter_ns()
    n_st = int(round(cfg.path_length / cfg.path_ds))
    stations = s0 + np.arange(n_st + 1) * cfg.path_ds
    corridor, path = _stage("path_qp", t_now, _refine_path, cfg, sl_res, sl_obs, bounds, ego_f, stations)
    qp_elapsed = time.perf_counter_ns() - t_qp

    # ST: projection on the fresh path, sampling, DP
    blocked = _stage(
        "st_projection",
        t_now,
        project_dynamic_obstacles,
        obstacles,
        line,
        cfg.horizon,
        cfg.st_sample_dt,
        path_l=lambda q: path.at(q)[0],
        half_width=0.5 * cfg.width,
        inflation=max(cfg.front, cfg.rear),
        s_offset=s0,
    )
    blocked = [b for b in blocked if not b.is_empty()]
    v0 = float(np.clip(ego_f.s_dot, 0.0, cfg.v_max_mps))
    a0 = float(np.clip(ego_f.s_ddot, cfg.a_min, cfg.a_max))
    st_spec = StGridSpec(
        cfg.horizon,
        cfg.st_dt,
        cfg.path_length,
        cfg.st_rows,
        (0.0, cfg.v_max_mps),
        (cfg.a_min, cfg.a_max),
        (cfg.j_min, cfg.j_max),
    )
    st_grid = _stage(
        "st_sampling", t_now, st_constraint_prune, st_spec, v0, a0, blocked, prune=(mode == "adaptive")
    )
    st_start = DpNode(0.0, 0.0, v0, a0)
    try:
        st_res = st_dp(st_grid, st_start, cfg.st_weights, blocked, cfg.st_dt, cfg.st_limits)
    except NoFeasiblePath as exc:
        if mode == "average":
            raise PlanningFailure("st_dp", exc, t_now) from exc
        fallback = True
        st_grid = st_constraint_prune(st_spec, v0, a0, blocked, prune=False)
        st_res = _stage("st_dp", t_now, st_dp, st_grid, st_start, cfg.st_weights, blocked, cfg.st_dt, cfg.st_limits)

    t_qp = time.perf_counter_ns()
    speed = _stage(
        "speed_qp",
        t_now,
        speed_qp,
        st_res,
        blocked,
        cfg.speed_limits,
        SpeedWeights(cfg.speed_w_ref, cfg.speed_w_accel, cfg.speed_w_jerk),
        cfg.speed_dt,
        (0.0, v0, a0),
        cfg.horizon,
        cfg.st_margin,
        cfg.path_length,
    )
    qp_elapsed += time.perf_counter_ns() - t_qp

    traj = _stage("merge", t_now, merge_profiles, path, speed, line, t_now, cfg.output_dt)
    record = BenchRecord(
        scenario_id=snapshot.scenario_id,
        mode=mode,
        dp_expansions=sl_res.expansions,
        dp_elapsed=sl_res.elapsed,
        qp_elapsed=max(qp_elapsed, 1),
        cycle_elapsed=max(time.perf_counter_ns() - clock0, 1),
        dp_cost=sl_res.total_cost,
        sampling_elapsed=sampling_elapsed,
        st_expansions=st_res.expansions,
        fallback=fallback,
    )
    if detail:
        info = CycleDetail(line, ego_f, grid, sl_obs, sl_res, corridor, path, st_grid, blocked, st_res, speed)
        return traj, record, info
    return traj, record
