"""Trajectory tracking: LQR steering with curvature feedforward and a
station/velocity PID cascade for acceleration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LowSpeedDomain, RiccatiDiverged, UnstableClosedLoop
from .trajectory import PlannedTrajectory
from .vehicle_models import MIN_SPEED, DynamicState, VehicleParams, error_dynamics_matrices

CONTROL_PERIOD = 0.01


@dataclass(frozen=True)
class LqrConfig:
    Q: np.ndarray = field(default_factory=lambda: np.diag([1.0, 0.0, 1.0, 0.0]))
    R: float = 10.0
    riccati_tol: float = 1e-10
    riccati_max_iter: int = 60
    period: float = CONTROL_PERIOD

    def __post_init__(self) -> None:
        Q = np.asarray(self.Q, dtype=float)
        if Q.ndim != 2 or not np.allclose(Q, np.diag(np.diag(Q))) or np.any(np.diag(Q) < 0):
            raise ValueError("Q must be diagonal with non-negative entries")
        if self.R <= 0:
            raise ValueError("R must be positive")
        object.__setattr__(self, "Q", Q)


@dataclass(frozen=True)
class LqrGain:
    K: np.ndarray
    P: np.ndarray
    vx: float = float("nan")
    iterations: int = 0

    @property
    def K3(self) -> float:
        return float(self.K[0, 2])


@dataclass(frozen=True)
class TrackingError:
    e_d: float
    e_d_dot: float
    e_phi: float
    e_phi_dot: float

    def as_array(self) -> np.ndarray:
        return np.array([self.e_d, self.e_d_dot, self.e_phi, self.e_phi_dot])


def care_residual(A, B, Q, R, P) -> np.ndarray:
    B = np.atleast_2d(B).reshape(A.shape[0], -1)
    R = np.atleast_2d(R)
    return A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T @ P) + Q


def solve_lqr(A, B, cfg: LqrConfig = LqrConfig()) -> LqrGain:
    """Continuous LQR gain from a doubling fixed-point iteration.

    The Riccati equation is mapped to discrete time by a Cayley (Tustin)
    transform at the controller period; the structured doubling recursion
    on that discrete form converges quadratically to the continuous
    solution, which the Cayley map preserves.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    R = np.atleast_2d(np.asarray(cfg.R, dtype=float))
    Q = np.asarray(cfg.Q, dtype=float)
    G = B @ np.linalg.solve(R, B.T)
    I = np.eye(n)
    gamma = 2.0 / cfg.period
    Ag = A - gamma * I
    Ag_inv = np.linalg.inv(Ag)
    Wg = Ag.T + Q @ Ag_inv @ G
    Vg = Ag + G @ Ag_inv.T @ Q
    Wg_inv = np.linalg.inv(Wg)
    Vg_inv = np.linalg.inv(Vg)
    E = I + 2.0 * gamma * Vg_inv
    Gk = 2.0 * gamma * Ag_inv @ G @ Wg_inv
    Pk = 2.0 * gamma * Wg_inv @ Q @ Ag_inv
    for it in range(1, cfg.riccati_max_iter + 1):
        M = np.linalg.solve(I + Gk @ Pk, np.hstack([E, Gk]))
        ME, MG = M[:, :n], M[:, n:]
        P_new = Pk + E.T @ Pk @ ME
        G_new = Gk + E @ MG @ E.T
        E = E @ ME
        P_new = 0.5 * (P_new + P_new.T)
        if not np.all(np.isfinite(P_new)):
            raise RiccatiDiverged("Riccati iteration produced non-finite values")
        delta = float(np.max(np.abs(P_new - Pk)))
        Pk, Gk = P_new, 0.5 * (G_new + G_new.T)
        if delta <= cfg.riccati_tol * max(1.0, float(np.max(np.abs(Pk)))):
            break
    else:
        raise RiccatiDiverged(f"no convergence in {cfg.riccati_max_iter} doubling steps")
    K = np.linalg.solve(R, B.T @ Pk)
    eig = np.linalg.eigvals(A - B @ K)
    if np.max(eig.real) >= 0.0:
        raise UnstableClosedLoop(f"closed-loop spectral abscissa {np.max(eig.real):.3e} >= 0")
    return LqrGain(K=K, P=Pk, iterations=it)


def lqr_gain(vx: float, p: VehicleParams, cfg: LqrConfig = LqrConfig()) -> LqrGain:
    A, B = error_dynamics_matrices(vx, p)
    g = solve_lqr(A, B, cfg)
    return LqrGain(K=g.K, P=g.P, vx=vx, iterations=g.iterations)


def feedforward_delta(theta_r_dot: float, vx: float, K3: float, p: VehicleParams) -> float:
    """Steady-state steering offset for a reference yaw rate; uses the signed
    stiffness convention c = -C_alpha."""
    if vx <= MIN_SPEED:
        raise LowSpeedDomain(f"vx={vx:.3f} <= {MIN_SPEED}")
    cf, cr = -p.c_alpha_f, -p.c_alpha_r
    L = p.a + p.b
    return theta_r_dot / vx * (
        L - p.b * K3 - p.m * vx * vx / L * (p.b / cf + p.a / cr * K3 - p.a / cr)
    )


def tracking_error(state: DynamicState, traj: PlannedTrajectory, horizon: float = CONTROL_PERIOD):
    """Errors against the trajectory point matched to the state predicted
    ``horizon`` seconds ahead. Returns ``(error, kappa_ref, matched_point)``."""
    c, s = math.cos(state.phi), math.sin(state.phi)
    xp = state.x + (state.vx * c - state.vy * s) * horizon
    yp = state.y + (state.vx * s + state.vy * c) * horizon
    php = state.phi + state.phi_dot * horizon
    ref, _ = traj.match(xp, yp)
    ct, st = math.cos(ref.theta), math.sin(ref.theta)
    e_d = -(xp - ref.x) * st + (yp - ref.y) * ct
    e_phi = (php - ref.theta + math.pi) % (2 * math.pi) - math.pi
    e_d_dot = state.vx * math.sin(e_phi) + state.vy * math.cos(e_phi)
    denom = 1.0 - ref.kappa * e_d
    s_dot = (state.vx * math.cos(e_phi) - state.vy * math.sin(e_phi)) / denom
    e_phi_dot = state.phi_dot - ref.kappa * s_dot
    return TrackingError(e_d, e_d_dot, e_phi, e_phi_dot), ref.kappa, ref


def lateral_control(
    state: DynamicState,
    traj: PlannedTrajectory,
    gain: LqrGain,
    p: VehicleParams,
    horizon: float = CONTROL_PERIOD,
) -> float:
    """u = -K e + delta_f, clamped to the steering limit."""
    err, kappa, _ = tracking_error(state, traj, horizon)
    vx = max(state.vx, MIN_SPEED + 1e-6)
    delta_f = feedforward_delta(kappa * vx, vx, gain.K3, p)
    u = float(-(gain.K @ err.as_array())[0]) + delta_f
    return p.clamp_steer(u)


class LateralController:
    """LQR steering with gain scheduling on vx."""

    def __init__(self, p: VehicleParams, cfg: LqrConfig = LqrConfig(), reschedule: float = 0.5) -> None:
        self.p = p
        self.cfg = cfg
        self.reschedule = reschedule
        self.gain: LqrGain | None = None
        self.syntheses = 0

    def gain_for(self, vx: float) -> LqrGain:
        vx = max(vx, MIN_SPEED + 1e-3)
        if self.gain is None or abs(vx - self.gain.vx) > self.reschedule:
            self.gain = lqr_gain(vx, self.p, self.cfg)
            self.syntheses += 1
        return self.gain

    def __call__(self, state: DynamicState, traj: PlannedTrajectory) -> float:
        return lateral_control(state, traj, self.gain_for(state.vx), self.p, self.cfg.period)


@dataclass
class Pid:
    """PID with anti-windup. ``[i_min, i_max]`` is the actuator range: the
    integral share is clamped to it, and integration stops while the output
    saturates in the direction of the error."""

    kp: float
    ki: float = 0.0
    kd: float = 0.0
    i_min: float = -math.inf
    i_max: float = math.inf
    integral: float = 0.0
    prev_error: float | None = None

    def step(self, error: float, dt: float, offset: float = 0.0) -> float:
        """Return ``offset`` (a feedforward term) plus the PID output; the
        caller clamps the result to the actuator range."""
        deriv = 0.0 if self.prev_error is None else (error - self.prev_error) / dt
        self.prev_error = error
        integral = self.integral + error * dt
        if self.ki > 0.0:
            integral = float(np.clip(integral, self.i_min / self.ki, self.i_max / self.ki))
        u = offset + self.kp * error + self.ki * integral + self.kd * deriv
        if not ((u > self.i_max and error > 0.0) or (u < self.i_min and error < 0.0)):
            self.integral = integral
        return offset + self.kp * error + self.ki * self.integral + self.kd * deriv

    def reset(self) -> None:
        self.integral = 0.0
        self.prev_error = None


@dataclass(frozen=True)
class PidConfig:
    station_kp: float = 0.5
    station_ki: float = 0.0
    station_kd: float = 0.0
    speed_kp: float = 1.5
    speed_ki: float = 0.1
    speed_kd: float = 0.0
    max_speed_correction: float = 5.0


class LongitudinalController:
    """Outer PID on station error gives a speed correction; inner PID on
    speed error gives acceleration on top of the planned feedforward."""

    def __init__(self, p: VehicleParams, cfg: PidConfig = PidConfig(), dt: float = CONTROL_PERIOD) -> None:
        self.p = p
        self.cfg = cfg
        self.dt = dt
        c = cfg.max_speed_correction
        ki_range = (-c, c)
        self.outer = Pid(cfg.station_kp, cfg.station_ki, cfg.station_kd, *ki_range)
        self.inner = Pid(cfg.speed_kp, cfg.speed_ki, cfg.speed_kd, p.a_min, p.a_max)

    def command(self, s: float, v: float, s_ref: float, v_ref: float, a_ref: float = 0.0) -> float:
        c = self.cfg.max_speed_correction
        dv = float(np.clip(self.outer.step(s_ref - s, self.dt), -c, c))
        return self.p.clamp_accel(self.inner.step(v_ref + dv - v, self.dt, a_ref))

    def __call__(self, state: DynamicState, traj: PlannedTrajectory, t: float) -> float:
        return longitudinal_control(state, traj, self, t)


def longitudinal_control(
    state: DynamicState, traj: PlannedTrajectory, ctrl: LongitudinalController, t: float
) -> float:
    """Acceleration command tracking the trajectory's station and speed at
    time ``t``."""
    ref = traj.at_time(t)
    matched, _ = traj.match(state.x, state.y)
    return ctrl.command(matched.s, state.vx, ref.s, ref.v, ref.a)
