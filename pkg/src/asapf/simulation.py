"""Closed-loop simulation: planner at 100 ms, controllers at 10 ms and the
bicycle plant at 1 ms."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .control import (
    CONTROL_PERIOD,
    LateralController,
    LongitudinalController,
    LqrConfig,
    PidConfig,
    tracking_error,
)
from .errors import PlanningFailure
from .frenet import CartesianState
from .planner import BenchRecord, plan_cycle
from .scenario import Scenario, snapshot
from .trajectory import COLUMNS, PlannedTrajectory
from .vehicle_models import (
    MIN_SPEED,
    DynamicState,
    KinematicState,
    VehicleParams,
    dynamic_step,
    kinematic_step,
)

log = logging.getLogger(__name__)

PLANT_DT = 0.001
PLAN_PERIOD = 0.1
LOG_COLUMNS = ("t", "x", "y", "theta", "vx", "vy", "phi_dot", "delta_cmd", "a_cmd", "e_d", "e_phi")


@dataclass
class SimResult:
    log: np.ndarray
    records: list[BenchRecord] = field(default_factory=list)
    trajectories: list[PlannedTrajectory] = field(default_factory=list)
    failure: PlanningFailure | None = None

    def column(self, name: str) -> np.ndarray:
        return self.log[:, LOG_COLUMNS.index(name)]

    @property
    def ok(self) -> bool:
        return self.failure is None

    def write(self, out_dir, trajectories: bool = True) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "log.csv", LOG_COLUMNS, self.log)
        if self.records:
            names = list(self.records[0].as_dict())
            write_csv(out / "cycles.csv", names, [list(r.as_dict().values()) for r in self.records])
        if trajectories:
            tdir = out / "trajectories"
            tdir.mkdir(exist_ok=True)
            for k, tr in enumerate(self.trajectories):
                write_csv(tdir / f"cycle_{k:04d}.csv", COLUMNS, tr.as_array())


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def plant_step(q: DynamicState, delta: float, accel: float, dt: float, p: VehicleParams) -> DynamicState:
    """Dynamic bicycle above the low-speed limit, kinematic bicycle below it.

    Speed never goes negative.
    """
    if q.vx > MIN_SPEED:
        nxt = dynamic_step(q, delta, dt, p, accel)
        if nxt.vx > MIN_SPEED or accel >= 0.0:
            return nxt
    k = kinematic_step(KinematicState(q.x, q.y, q.phi, q.vx), (accel, delta), dt, p)
    v = max(k.v, 0.0)
    return DynamicState(k.x, k.y, k.theta, v, 0.0, v * math.tan(p.clamp_steer(delta)) / p.L)


def ego_footprint(q: DynamicState, p: VehicleParams) -> np.ndarray:
    """Body corners (4, 2): front-left, rear-left, rear-right, front-right."""
    c, s = math.cos(q.phi), math.sin(q.phi)
    hw = 0.5 * p.w
    local = np.array([[p.d1, hw], [-p.d2, hw], [-p.d2, -hw], [p.d1, -hw]])
    return local @ np.array([[c, s], [-s, c]]) + np.array([q.x, q.y])


def _ego_cartesian(q: DynamicState, accel: float) -> CartesianState:
    kappa = q.phi_dot / q.vx if q.vx > MIN_SPEED else 0.0
    return CartesianState(q.x, q.y, q.phi, max(q.vx, 0.0), accel, kappa)


class _Loop:
    """Shared control/plant loop; ``replan`` is called every planning period."""

    def __init__(self, p: VehicleParams, lqr: LqrConfig, pid: PidConfig) -> None:
        self.p = p
        self.lat = LateralController(p, lqr)
        self.lon = LongitudinalController(p, pid, CONTROL_PERIOD)

    def run(self, state: DynamicState, duration: float, replan, plan_every: int | None):
        n = int(round(duration / PLANT_DT))
        ctrl_every = int(round(CONTROL_PERIOD / PLANT_DT))
        rows = np.empty((n, len(LOG_COLUMNS)))
        delta = accel = 0.0
        e_d = e_phi = 0.0
        traj = None
        failure = None
        done = 0
        for k in range(n):
            t = k * PLANT_DT
            if traj is None or (plan_every is not None and k % plan_every == 0):
                try:
                    traj = replan(t, state, accel, traj)
                except PlanningFailure as exc:
                    log.error("%s", exc)
                    failure = exc
                    break
            if k % ctrl_every == 0:
                delta = self.lat(state, traj)
                accel = self.lon(state, traj, t)
                err, _, _ = tracking_error(state, traj, 0.0)
                e_d, e_phi = err.e_d, err.e_phi
            state = plant_step(state, delta, accel, PLANT_DT, self.p)
            rows[k] = (
                t + PLANT_DT,
                state.x,
                state.y,
                state.phi,
                state.vx,
                state.vy,
                state.phi_dot,
                delta,
                accel,
                e_d,
                e_phi,
            )
            done = k + 1
        return rows[:done], failure


def simulate(scn: Scenario, mode: str = "adaptive", duration: float | None = None) -> SimResult:
    """Closed-loop run of ``scn``; planning failures stop the run and are
    returned with the partial log."""
    duration = scn.duration if duration is None else duration
    ego = scn.ego
    state = DynamicState(ego.x, ego.y, ego.theta_x, ego.v)
    records: list[BenchRecord] = []
    trajs: list[PlannedTrajectory] = []

    def replan(t, q, accel, prev):
        traj, rec = plan_cycle(snapshot(scn, t), _ego_cartesian(q, accel), prev, mode)
        records.append(rec)
        trajs.append(traj)
        return traj

    loop = _Loop(scn.vehicle, scn.lqr, scn.pid)
    rows, failure = loop.run(state, duration, replan, int(round(PLAN_PERIOD / PLANT_DT)))
    return SimResult(rows, records, trajs, failure)


def track_reference(
    traj: PlannedTrajectory,
    state: DynamicState,
    duration: float,
    p: VehicleParams = VehicleParams(),
    lqr: LqrConfig = LqrConfig(),
    pid: PidConfig = PidConfig(),
) -> SimResult:
    """Controllers and plant only, tracking a fixed trajectory."""
    loop = _Loop(p, lqr, pid)
    rows, failure = loop.run(state, duration, lambda t, q, a, prev: traj, None)
    return SimResult(rows, [], [traj], failure)


def circle_trajectory(radius: float, speed: float, duration: float, dt: float = 0.05) -> PlannedTrajectory:
    """Counter-clockwise circle starting at the origin heading +x (a straight
    line when ``radius`` is infinite)."""
    t = np.arange(int(round(duration / dt)) + 1) * dt
    s = speed * t
    if math.isinf(radius):
        x, y, th, k = s, np.zeros_like(s), np.zeros_like(s), np.zeros_like(s)
    else:
        th = s / radius
        x = radius * np.sin(th)
        y = radius * (1.0 - np.cos(th))
        k = np.full_like(s, 1.0 / radius)
    th = (th + np.pi) % (2 * np.pi) - np.pi
    return PlannedTrajectory(t, s, np.zeros_like(s), x, y, th, np.full_like(s, speed), np.zeros_like(s), k)
