"""Local reference line: route windowing, QP smoothing and projection.

A :class:`ReferenceLine` is a uniformly sampled, arc-length parameterized
curve. Between samples, positions use cubic Hermite interpolation with the
sample headings as tangents; heading, curvature and curvature rate are
interpolated linearly (heading on its unwrapped form).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from .errors import AmbiguousProjection, EgoOffRoute, InvalidRoute, ProjectionError, SolverFailure
from .qp_solver import QpProblem, solve_qp

OFF_ROUTE_DISTANCE = 50.0
HINT_WINDOW = 20.0


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


@dataclass(frozen=True)
class RoutePolyline:
    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InvalidRoute("route points must be an (n, 2) array")
        if len(pts) < 3:
            raise InvalidRoute("route needs at least 3 points")
        if not np.all(np.isfinite(pts)):
            raise InvalidRoute("route contains non-finite coordinates")
        seg = np.hypot(*np.diff(pts, axis=0).T)
        if np.any(seg <= 1e-6):
            raise InvalidRoute("consecutive route points coincide")
        object.__setattr__(self, "points", pts)

    @property
    def cumulative(self) -> np.ndarray:
        seg = np.hypot(*np.diff(self.points, axis=0).T)
        return np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def length(self) -> float:
        return float(self.cumulative[-1])


@dataclass(frozen=True)
class ReferencePoint:
    s: float
    x: float
    y: float
    theta_r: float
    kappa_r: float
    dkappa_r: float


@dataclass(frozen=True)
class SmootherWeights:
    w_ref: float = 1.0
    w_smooth: float = 10.0
    w_length: float = 1.0

    def __post_init__(self) -> None:
        if min(self.w_ref, self.w_smooth, self.w_length) < 0:
            raise ValueError("smoother weights must be non-negative")
        if self.w_smooth <= 0:
            raise ValueError("w_smooth must be positive")


class ReferenceLine:
    """Uniformly sampled reference curve. Treat as immutable."""

    def __init__(self, s, x, y, theta, kappa, dkappa) -> None:
        self.s = np.asarray(s, dtype=float)
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.theta = wrap_angle(np.asarray(theta, dtype=float))
        self.kappa = np.asarray(kappa, dtype=float)
        self.dkappa = np.asarray(dkappa, dtype=float)
        self._tree = None
        n = len(self.s)
        if n < 2 or any(len(a) != n for a in (self.x, self.y, self.theta, self.kappa, self.dkappa)):
            raise InvalidRoute("reference line needs at least 2 aligned samples")
        if abs(self.s[0]) > 1e-12 or np.any(np.diff(self.s) <= 0):
            raise InvalidRoute("stations must start at 0 and increase strictly")
        self._theta_u = np.unwrap(self.theta)
        self.spacing = float(self.s[1] - self.s[0])
        for a in (self.s, self.x, self.y, self.theta, self.kappa, self.dkappa, self._theta_u):
            a.setflags(write=False)

    # -- construction ----------------------------------------------------
    @classmethod
    def from_xy(cls, points, spacing: float = 1.0) -> "ReferenceLine":
        """Resample a dense polyline at uniform arc length and differentiate."""
        pts = np.asarray(points, dtype=float)
        seg = np.hypot(*np.diff(pts, axis=0).T)
        keep = np.concatenate([[True], seg > 1e-9])
        pts = pts[keep]
        chord = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
        spline = CubicSpline(chord, pts, axis=0, bc_type="natural")
        # refine the parameter so that stations are true arc length
        fine = np.linspace(0.0, chord[-1], max(len(chord) * 10, 200))
        d = spline(fine, 1)
        speed = np.hypot(d[:, 0], d[:, 1])
        arc = np.concatenate(
            [[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(fine))]
        )
        total = arc[-1]
        n = int(math.floor(total / spacing + 1e-9))
        s = np.arange(n + 1) * spacing
        u = np.interp(s, arc, fine)
        xy = spline(u)
        d1 = spline(u, 1)
        d2 = spline(u, 2)
        theta = np.arctan2(d1[:, 1], d1[:, 0])
        sp = np.hypot(d1[:, 0], d1[:, 1])
        kappa = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / sp**3
        dkappa = np.gradient(kappa, spacing)
        return cls(s, xy[:, 0], xy[:, 1], theta, kappa, dkappa)

    @classmethod
    def from_samples(cls, points: list[ReferencePoint]) -> "ReferenceLine":
        cols = np.array([[p.s, p.x, p.y, p.theta_r, p.kappa_r, p.dkappa_r] for p in points])
        return cls(*cols.T)

    # -- queries ---------------------------------------------------------
    @property
    def length(self) -> float:
        return float(self.s[-1])

    @property
    def samples(self) -> list[ReferencePoint]:
        return [
            ReferencePoint(*map(float, row))
            for row in zip(self.s, self.x, self.y, self.theta, self.kappa, self.dkappa)
        ]

    def _locate(self, s):
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.length)
        i = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self.s) - 2)
        h = self.s[i + 1] - self.s[i]
        return s, i, (s - self.s[i]) / h, h

    def frame(self, s):
        """(x, y, theta, kappa, dkappa) at station(s) ``s``."""
        s, i, u, h = self._locate(s)
        j = i + 1
        th = self._theta_u[i] + u * (self._theta_u[j] - self._theta_u[i])
        # cubic Hermite on position with unit tangents scaled by h
        h00 = 2 * u**3 - 3 * u**2 + 1
        h10 = u**3 - 2 * u**2 + u
        h01 = -2 * u**3 + 3 * u**2
        h11 = u**3 - u**2
        ci, cj = np.cos(self._theta_u[i]), np.cos(self._theta_u[j])
        si, sj = np.sin(self._theta_u[i]), np.sin(self._theta_u[j])
        x = h00 * self.x[i] + h10 * h * ci + h01 * self.x[j] + h11 * h * cj
        y = h00 * self.y[i] + h10 * h * si + h01 * self.y[j] + h11 * h * sj
        k = self.kappa[i] + u * (self.kappa[j] - self.kappa[i])
        dk = self.dkappa[i] + u * (self.dkappa[j] - self.dkappa[i])
        return x, y, wrap_angle(th), k, dk

    def _tangent_residual(self, s: float, px: float, py: float) -> float:
        x, y, th, _, _ = self.frame(s)
        return float((px - x) * math.cos(th) + (py - y) * math.sin(th))

    def point_at(self, s: float) -> ReferencePoint:
        if s < -1e-9 or s > self.length + 1e-9:
            raise ProjectionError(f"station {s} outside [0, {self.length}]")
        x, y, th, k, dk = self.frame(s)
        return ReferencePoint(float(np.clip(s, 0.0, self.length)), float(x), float(y), float(th), float(k), float(dk))

    def project(self, xy, hint: int | None = None) -> tuple[float, float, int]:
        return project(self, xy, hint)

    def project_many(self, xy) -> tuple[np.ndarray, np.ndarray]:
        """Fast approximate projection of many points (nearest sample plus a
        first-order tangent correction)."""
        pts = np.atleast_2d(np.asarray(xy, dtype=float))
        if self._tree is None:
            self._tree = cKDTree(np.column_stack([self.x, self.y]))
        _, i = self._tree.query(pts)
        dx = pts[:, 0] - self.x[i]
        dy = pts[:, 1] - self.y[i]
        c, sn = np.cos(self.theta[i]), np.sin(self.theta[i])
        s = self.s[i] + dx * c + dy * sn
        l = -dx * sn + dy * c
        return s, l


def project(line: ReferenceLine, xy, hint: int | None = None) -> tuple[float, float, int]:
    """Nearest point on ``line`` to ``xy``.

    Returns ``(s, l, index)`` where ``l`` is positive to the left of the
    tangent and ``index`` is the nearest sample. With ``hint`` (a sample
    index from the previous cycle) the search is limited to +-20 m around it.
    """
    px, py = float(xy[0]), float(xy[1])
    d = np.hypot(line.x - px, line.y - py)
    n = len(d)
    if hint is not None:
        hint = int(np.clip(hint, 0, n - 1))
        lo = int(np.searchsorted(line.s, line.s[hint] - HINT_WINDOW))
        hi = int(np.searchsorted(line.s, line.s[hint] + HINT_WINDOW, side="right"))
        cand = np.arange(lo, hi)
        idx = int(cand[np.argmin(d[cand])])
    else:
        idx = int(np.argmin(d))
        # local minima of the sample distance
        left = np.concatenate([[np.inf], d[:-1]])
        right = np.concatenate([d[1:], [np.inf]])
        minima = np.flatnonzero((d <= left) & (d <= right))
        close = minima[d[minima] <= d[idx] * 1.01 + 1e-2]
        if len(close) > 1 and np.ptp(line.s[close]) > HINT_WINDOW:
            raise AmbiguousProjection(
                f"point ({px:.2f}, {py:.2f}) is equidistant from stations "
                f"{line.s[close].min():.1f} and {line.s[close].max():.1f}"
            )
    s = _refine(line, idx, px, py)
    x, y, th, _, _ = line.frame(s)
    l = -(px - x) * math.sin(th) + (py - y) * math.cos(th)
    near = int(np.clip(np.rint(s / line.spacing), 0, n - 1))
    return float(s), float(l), near


def _refine(line: ReferenceLine, idx: int, px: float, py: float) -> float:
    n = len(line.s)
    f = lambda s: line._tangent_residual(s, px, py)  # noqa: E731
    for width in (1, 2, 4):
        a = line.s[max(idx - width, 0)]
        b = line.s[min(idx + width, n - 1)]
        fa, fb = f(a), f(b)
        if fa == 0.0:
            return float(a)
        if fb == 0.0:
            return float(b)
        if fa > 0.0 > fb:
            return float(brentq(f, a, b, xtol=1e-12, rtol=1e-14))
    # beyond either end of the line: clamp
    if f(line.s[0]) <= 0.0 and idx <= 1:
        return 0.0
    if f(line.s[-1]) >= 0.0 and idx >= n - 2:
        return line.length
    return float(line.s[idx])


# -- route handling -------------------------------------------------------


def _project_polyline(pts: np.ndarray, xy) -> tuple[float, float]:
    """(station, distance) of the nearest point on a polyline."""
    p = np.asarray(xy, dtype=float)
    a, b = pts[:-1], pts[1:]
    ab = b - a
    L2 = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / L2, 0.0, 1.0)
    foot = a + t[:, None] * ab
    dist = np.hypot(*(p - foot).T)
    k = int(np.argmin(dist))
    cum = np.concatenate([[0.0], np.cumsum(np.sqrt(L2))])
    return float(cum[k] + t[k] * math.sqrt(L2[k])), float(dist[k])


def _slice_polyline(pts: np.ndarray, s0: float, s1: float) -> np.ndarray:
    cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
    eps = 1e-6
    inner = pts[(cum > s0 + eps) & (cum < s1 - eps)]
    ends = np.column_stack([np.interp([s0, s1], cum, pts[:, 0]), np.interp([s0, s1], cum, pts[:, 1])])
    return np.vstack([ends[:1], inner, ends[1:]])


def extract_window(
    route: RoutePolyline, ego_xy, back: float = 150.0, ahead: float = 30.0
) -> RoutePolyline:
    """Sub-polyline spanning ``back`` metres before and ``ahead`` metres after
    the ego's projection onto ``route``, clamped at the route ends."""
    s_ego, dist = _project_polyline(route.points, ego_xy)
    if dist >= OFF_ROUTE_DISTANCE:
        raise EgoOffRoute(f"ego is {dist:.1f} m from the route")
    total = route.length
    s0 = max(0.0, s_ego - back)
    s1 = min(total, s_ego + ahead)
    pts = _slice_polyline(route.points, s0, s1)
    if len(pts) < 3:
        pts = densify(pts, max((s1 - s0) / 2.0, 1e-3))
    return RoutePolyline(pts)


def densify(points, spacing: float) -> np.ndarray:
    """Resample a polyline at (approximately) uniform chord spacing."""
    pts = np.asarray(points, dtype=float)
    cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
    n = max(int(math.ceil(cum[-1] / spacing)), 2)
    s = np.linspace(0.0, cum[-1], n + 1)
    return np.column_stack([np.interp(s, cum, pts[:, 0]), np.interp(s, cum, pts[:, 1])])


def smoothing_objective(xy: np.ndarray, ref: np.ndarray, w: SmootherWeights) -> float:
    """The three-term reference/smoothness/length cost of a point sequence."""
    dref = xy - ref
    dd = xy[:-2] + xy[2:] - 2.0 * xy[1:-1]
    dl = np.diff(xy, axis=0)
    return float(w.w_ref * np.sum(dref**2) + w.w_smooth * np.sum(dd**2) + w.w_length * np.sum(dl**2))


def smoothing_qp(ref: np.ndarray, w: SmootherWeights) -> QpProblem:
    """QP over all point coordinates with the first and last two pinned."""
    n = len(ref)
    D = np.zeros((n - 2, n))
    idx = np.arange(n - 2)
    D[idx, idx] = 1.0
    D[idx, idx + 1] = -2.0
    D[idx, idx + 2] = 1.0
    E = np.zeros((n - 1, n))
    E[np.arange(n - 1), np.arange(n - 1)] = -1.0
    E[np.arange(n - 1), np.arange(1, n)] = 1.0
    Hs = 2.0 * (w.w_ref * np.eye(n) + w.w_smooth * D.T @ D + w.w_length * E.T @ E)
    H = np.kron(np.eye(2), Hs)
    g = -2.0 * w.w_ref * np.concatenate([ref[:, 0], ref[:, 1]])
    lo = np.full(2 * n, -np.inf)
    hi = np.full(2 * n, np.inf)
    pinned = [0, 1, n - 2, n - 1]
    for k in pinned:
        for c in range(2):
            lo[c * n + k] = hi[c * n + k] = ref[k, c]
    return QpProblem(H=H, g=g, lo=lo, hi=hi)


def smooth(
    route: RoutePolyline, weights: SmootherWeights | None = None, spacing: float = 1.0
) -> ReferenceLine:
    """Smooth ``route`` with the three-term QP and resample it uniformly.

    The route is first densified to ``spacing`` so that the smoothness term
    acts on evenly spaced points.
    """
    w = weights or SmootherWeights()
    ref = densify(route.points, spacing)
    if len(ref) < 5:
        return ReferenceLine.from_xy(ref, spacing)
    try:
        sol = solve_qp(smoothing_qp(ref, w))
    except SolverFailure:
        raise
    except np.linalg.LinAlgError as exc:
        raise SolverFailure(f"reference-line QP failed: {exc}") from exc
    n = len(ref)
    xy = np.column_stack([sol.x[:n], sol.x[n:]])
    return ReferenceLine.from_xy(xy, spacing)
