"""Kinematic and linear dynamic bicycle models.

Cornering stiffnesses are stored as positive physical values (N/rad). The
lateral force on an axle is ``F = -C_alpha * alpha`` with slip angles
``alpha_f = (vy + a*phi_dot)/vx - delta`` and ``alpha_r = (vy - b*phi_dot)/vx``,
so a positive steering angle at positive speed produces a positive yaw
rate. Written with the signed stiffness ``c = -C_alpha`` the matrices take
the familiar ``(c_f + c_r)/(m vx)`` form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LowSpeedDomain

MIN_SPEED = 0.5


@dataclass(frozen=True)
class VehicleParams:
    m: float = 1500.0
    Iz: float = 2500.0
    a: float = 1.2
    b: float = 1.4
    c_alpha_f: float = 80000.0
    c_alpha_r: float = 80000.0
    w: float = 1.9
    d1: float = 2.1
    d2: float = 2.3
    delta_max: float = 0.5
    a_max: float = 3.0
    a_min: float = -6.0

    def __post_init__(self) -> None:
        pos = (self.m, self.Iz, self.a, self.b, self.c_alpha_f, self.c_alpha_r, self.w, self.d1, self.d2)
        if min(pos) <= 0 or self.delta_max <= 0 or self.a_max <= 0:
            raise ValueError("vehicle parameters must be positive")
        if self.a_min >= 0:
            raise ValueError("a_min must be negative")

    @property
    def L(self) -> float:
        return self.a + self.b

    @property
    def l_r(self) -> float:
        return self.b

    def clamp_steer(self, delta: float) -> float:
        return float(np.clip(delta, -self.delta_max, self.delta_max))

    def clamp_accel(self, acc: float) -> float:
        return float(np.clip(acc, self.a_min, self.a_max))


@dataclass(frozen=True)
class KinematicState:
    x: float
    y: float
    theta: float
    v: float


@dataclass(frozen=True)
class DynamicState:
    x: float
    y: float
    phi: float
    vx: float
    vy: float = 0.0
    phi_dot: float = 0.0


def _wrap(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def kinematic_step(q: KinematicState, u: tuple[float, float], dt: float, p: VehicleParams) -> KinematicState:
    """Forward-Euler step of the kinematic bicycle; ``u = (accel, delta)``."""
    if not 0.0 < dt <= 0.1:
        raise ValueError("dt must be in (0, 0.1]")
    acc = p.clamp_accel(u[0])
    delta = p.clamp_steer(u[1])
    beta = math.atan(p.l_r / p.L * math.tan(delta))
    x = q.x + q.v * math.cos(q.theta + beta) * dt
    y = q.y + q.v * math.sin(q.theta + beta) * dt
    theta = q.theta + q.v * math.tan(delta) * math.cos(beta) / p.L * dt
    return KinematicState(x, y, _wrap(theta), q.v + acc * dt)


def lateral_matrices(vx: float, p: VehicleParams) -> tuple[np.ndarray, np.ndarray]:
    """Body-frame lateral dynamics d/dt (vy, phi_dot) = A (vy, phi_dot) + B delta."""
    if vx <= MIN_SPEED:
        raise LowSpeedDomain(f"vx={vx:.3f} <= {MIN_SPEED}")
    cf, cr = -p.c_alpha_f, -p.c_alpha_r  # signed stiffness
    A = np.array(
        [
            [(cf + cr) / (p.m * vx), (p.a * cf - p.b * cr) / (p.m * vx) - vx],
            [(p.a * cf - p.b * cr) / (p.Iz * vx), (p.a**2 * cf + p.b**2 * cr) / (p.Iz * vx)],
        ]
    )
    B = np.array([-cf / p.m, -p.a * cf / p.Iz])
    return A, B


def dynamic_derivative(q: DynamicState, delta: float, p: VehicleParams, accel: float = 0.0) -> np.ndarray:
    A, B = lateral_matrices(q.vx, p)
    lat = A @ np.array([q.vy, q.phi_dot]) + B * delta
    c, s = math.cos(q.phi), math.sin(q.phi)
    return np.array(
        [
            q.vx * c - q.vy * s,
            q.vx * s + q.vy * c,
            q.phi_dot,
            accel,
            lat[0],
            lat[1],
        ]
    )


def dynamic_step(
    q: DynamicState, delta: float, dt: float, p: VehicleParams, accel: float = 0.0
) -> DynamicState:
    """RK4 step of the linear dynamic bicycle; ``accel`` drives vx."""
    if q.vx <= MIN_SPEED:
        raise LowSpeedDomain(f"vx={q.vx:.3f} <= {MIN_SPEED}")
    delta = p.clamp_steer(delta)
    accel = p.clamp_accel(accel)
    y0 = np.array([q.x, q.y, q.phi, q.vx, q.vy, q.phi_dot])

    def f(y):
        vx = max(y[3], MIN_SPEED + 1e-9)
        return dynamic_derivative(DynamicState(y[0], y[1], y[2], vx, y[4], y[5]), delta, p, accel)

    k1 = f(y0)
    k2 = f(y0 + 0.5 * dt * k1)
    k3 = f(y0 + 0.5 * dt * k2)
    k4 = f(y0 + dt * k3)
    y = y0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return DynamicState(y[0], y[1], _wrap(y[2]), y[3], y[4], y[5])


def error_dynamics_matrices(vx: float, p: VehicleParams) -> tuple[np.ndarray, np.ndarray]:
    """Tracking-error model e' = A e + B delta with e = (e_d, e_d', e_phi, e_phi')."""
    A, B, _ = error_dynamics_full(vx, p)
    return A, B


def error_dynamics_full(vx: float, p: VehicleParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """As :func:`error_dynamics_matrices` plus the reference yaw-rate column."""
    if vx <= MIN_SPEED:
        raise LowSpeedDomain(f"vx={vx:.3f} <= {MIN_SPEED}")
    cf, cr = -p.c_alpha_f, -p.c_alpha_r
    m, I = p.m, p.Iz
    k1 = p.a * cf - p.b * cr
    k2 = p.a**2 * cf + p.b**2 * cr
    A = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [0.0, (cf + cr) / (m * vx), -(cf + cr) / m, k1 / (m * vx)],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, k1 / (I * vx), -k1 / I, k2 / (I * vx)],
        ]
    )
    B = np.array([[0.0], [-cf / m], [0.0], [-p.a * cf / I]])
    C = np.array([[0.0], [k1 / (m * vx) - vx], [0.0], [k2 / (I * vx)]])
    return A, B, C


def steady_state_yaw_rate(vx: float, delta: float, p: VehicleParams) -> float:
    """Equilibrium yaw rate of the linear lateral model for constant delta."""
    A, B = lateral_matrices(vx, p)
    return float(np.linalg.solve(A, -B * delta)[1])
