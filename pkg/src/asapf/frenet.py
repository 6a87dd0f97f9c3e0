"""Cartesian <-> Frenet conversion of full kinematic states.

Derivation notes (``tau``, ``n`` are the reference tangent and left normal,
``one = 1 - kappa_r * l``)::

    s_dot  = v . tau / one
    l_dot  = v . n
    s_ddot = (a . tau + s_dot^2 (2 kappa_r l' + kappa_r' l)) / one
    l_ddot = a . n - kappa_r s_dot^2 one
    l''    = (l_ddot - l' s_ddot) / s_dot^2

where the Cartesian acceleration vector is ``a tau_x + v^2 kappa_x n_x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CurvatureSingularity, OutOfRange
from .reference_line import ReferenceLine, project, wrap_angle

SINGULARITY = 0.9
LOW_SPEED = 1e-3


@dataclass(frozen=True)
class CartesianState:
    x: float
    y: float
    theta_x: float
    v: float
    a: float = 0.0
    kappa_x: float = 0.0


@dataclass(frozen=True)
class FrenetState:
    s: float
    s_dot: float
    s_ddot: float
    l: float
    l_prime: float
    l_pprime: float
    l_dot: float = 0.0
    l_ddot: float = 0.0

    @classmethod
    def from_path(cls, s, s_dot, s_ddot, l, l_prime, l_pprime) -> "FrenetState":
        """Fill the time derivatives of ``l`` from the path derivatives."""
        l_dot = l_prime * s_dot
        l_ddot = l_pprime * s_dot * s_dot + l_prime * s_ddot
        return cls(s, s_dot, s_ddot, l, l_prime, l_pprime, l_dot, l_ddot)


def _guard(kappa_r: float, l: float) -> float:
    one = 1.0 - kappa_r * l
    if abs(kappa_r * l) >= SINGULARITY:
        raise CurvatureSingularity(f"|kappa_r * l| = {abs(kappa_r * l):.3f} >= {SINGULARITY}")
    return one


def cartesian_to_frenet(
    state: CartesianState, line: ReferenceLine, hint: int | None = None
) -> FrenetState:
    s, _, _ = project(line, (state.x, state.y), hint)
    xr, yr, thr, kr, dkr = (float(v) for v in line.frame(s))
    ct, st = math.cos(thr), math.sin(thr)
    dx, dy = state.x - xr, state.y - yr
    l = -dx * st + dy * ct
    one = _guard(kr, l)

    cx, sx = math.cos(state.theta_x), math.sin(state.theta_x)
    v = state.v
    vx, vy = v * cx, v * sx
    ax = state.a * cx - v * v * state.kappa_x * sx
    ay = state.a * sx + v * v * state.kappa_x * cx

    v_tau = vx * ct + vy * st
    s_dot = v_tau / one
    l_dot = -vx * st + vy * ct
    a_tau = ax * ct + ay * st
    a_n = -ax * st + ay * ct
    dtheta = float(wrap_angle(state.theta_x - thr))

    if v >= LOW_SPEED:
        l_p = l_dot / s_dot
    else:
        l_p = math.tan(dtheta) * one
    s_ddot = (a_tau + s_dot * s_dot * (2.0 * kr * l_p + dkr * l)) / one
    l_ddot = a_n - kr * s_dot * s_dot * one
    if v >= LOW_SPEED:
        l_pp = (l_ddot - l_p * s_ddot) / (s_dot * s_dot)
    else:
        cd = math.cos(dtheta)
        l_pp = -(dkr * l + kr * l_p) * math.tan(dtheta) + one / (cd * cd) * (
            state.kappa_x * one / cd - kr
        )
    return FrenetState(s, s_dot, s_ddot, l, l_p, l_pp, l_dot, l_ddot)


def frenet_to_cartesian(state: FrenetState, line: ReferenceLine) -> CartesianState:
    tol = 1e-9 * max(1.0, line.length)
    if state.s < -tol or state.s > line.length + tol:
        raise OutOfRange(f"station {state.s} outside [0, {line.length}]")
    xr, yr, thr, kr, dkr = (float(v) for v in line.frame(state.s))
    l, lp, lpp = state.l, state.l_prime, state.l_pprime
    one = _guard(kr, l)
    st, ct = math.sin(thr), math.cos(thr)
    x = xr - l * st
    y = yr + l * ct
    dtheta = math.atan2(lp, one)
    theta = float(wrap_angle(dtheta + thr))
    cd = math.cos(dtheta)
    td = math.tan(dtheta)
    kl = dkr * l + kr * lp
    kappa = ((lpp + kl * td) * cd * cd / one + kr) * cd / one
    sd = state.s_dot
    v = math.hypot(sd * one, sd * lp)
    a = state.s_ddot * one / cd + sd * sd / cd * (lp * (kappa * one / cd - kr) - kl)
    return CartesianState(x, y, theta, v, a, kappa)


def frenet_to_cartesian_many(s, l, l_prime, l_pprime, s_dot, s_ddot, line: ReferenceLine):
    """Vectorized Frenet-to-Cartesian conversion; returns a dict of arrays."""
    s = np.asarray(s, dtype=float)
    xr, yr, thr, kr, dkr = line.frame(s)
    l = np.asarray(l, dtype=float)
    lp = np.asarray(l_prime, dtype=float)
    lpp = np.asarray(l_pprime, dtype=float)
    one = 1.0 - kr * l
    if np.any(np.abs(kr * l) >= SINGULARITY):
        raise CurvatureSingularity("|kappa_r * l| >= 0.9 somewhere on the profile")
    dtheta = np.arctan2(lp, one)
    cd = np.cos(dtheta)
    td = np.tan(dtheta)
    kl = dkr * l + kr * lp
    kappa = ((lpp + kl * td) * cd * cd / one + kr) * cd / one
    sd = np.asarray(s_dot, dtype=float)
    v = np.hypot(sd * one, sd * lp)
    a = np.asarray(s_ddot) * one / cd + sd * sd / cd * (lp * (kappa * one / cd - kr) - kl)
    return {
        "x": xr - l * np.sin(thr),
        "y": yr + l * np.cos(thr),
        "theta": wrap_angle(dtheta + thr),
        "v": v,
        "a": a,
        "kappa": kappa,
    }
