"""Fifth-degree polynomial connectors with six boundary conditions.

The quintic is the minimum-jerk interpolant between two (value, rate,
curvature) triples; DP edges on both the SL and ST lattices use it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import IllConditioned, OutOfRange


@dataclass(frozen=True)
class BoundaryConditions:
    p0: float
    v0: float
    a0: float
    p1: float
    v1: float
    a1: float
    T: float

    def __post_init__(self) -> None:
        vals = (self.p0, self.v0, self.a0, self.p1, self.v1, self.a1, self.T)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("boundary conditions must be finite")


@dataclass(frozen=True)
class QuinticPoly:
    """f(t) = sum(coeffs[i] * t**i) on [0, duration]."""

    coeffs: np.ndarray
    duration: float

    def __call__(self, t, order: int = 0):
        return evaluate(self, t, order)


def fit(bc: BoundaryConditions) -> QuinticPoly:
    """Unique quintic matching value/rate/curvature at both ends.

    The system is assembled in u = t/T so that its entries are O(1), then
    the coefficients are rescaled back to t.
    """
    T = float(bc.T)
    if not T >= 1e-6:
        raise IllConditioned(f"span {T!r} too short for a stable quintic fit")
    # derivatives with respect to u are T-scaled
    v0, a0 = bc.v0 * T, bc.a0 * T * T
    v1, a1 = bc.v1 * T, bc.a1 * T * T
    c0, c1, c2 = bc.p0, v0, 0.5 * a0
    # closed-form inverse of the end rows [1 1 1], [3 4 5], [6 12 20]
    r0 = bc.p1 - (c0 + c1 + c2)
    r1 = v1 - (c1 + 2.0 * c2)
    r2 = a1 - 2.0 * c2
    c3 = 10.0 * r0 - 4.0 * r1 + 0.5 * r2
    c4 = -15.0 * r0 + 7.0 * r1 - r2
    c5 = 6.0 * r0 - 3.0 * r1 + 0.5 * r2
    scale = T ** -np.arange(6, dtype=float)
    return QuinticPoly(coeffs=np.array([c0, c1, c2, c3, c4, c5]) * scale, duration=T)


def _derivative_coeffs(coeffs: np.ndarray, order: int) -> np.ndarray:
    if order == 0:
        return coeffs
    return P.polyder(coeffs, order)


def evaluate(poly: QuinticPoly, t, order: int = 0):
    """Derivative of the requested order (0..3) at ``t`` by Horner's rule."""
    if order not in (0, 1, 2, 3):
        raise ValueError("order must be 0, 1, 2 or 3")
    t_arr = np.asarray(t, dtype=float)
    tol = 1e-12 * max(1.0, poly.duration)
    if np.any(t_arr < -tol) or np.any(t_arr > poly.duration + tol):
        raise OutOfRange(f"t outside [0, {poly.duration}]")
    c = _derivative_coeffs(np.asarray(poly.coeffs, dtype=float), order)
    out = np.zeros_like(t_arr)
    for ci in c[::-1]:
        out = out * t_arr + ci
    return float(out) if out.ndim == 0 else out


def derivative_energy(poly: QuinticPoly, order: int) -> float:
    """Closed form of the integral of (f^(order))^2 over [0, duration]."""
    d = _derivative_coeffs(np.asarray(poly.coeffs, dtype=float), order)
    sq = P.polymul(d, d)
    anti = P.polyint(sq)
    return float(P.polyval(poly.duration, anti))


def jerk_energy(poly: QuinticPoly) -> float:
    return derivative_energy(poly, 3)
