from __future__ import annotations

import numpy as np
import pytest

from asapf.apf_sampling import Layer, SampledGrid, SlObstacle
from asapf.dp_planner import DpNode, DpResult, DpWeights, StBlock, sl_dp, sl_profile
from asapf.errors import EmptyCorridor, StartOutsideCorridor
from asapf.frenet import FrenetState
from asapf.quintic import QuinticPoly
from asapf.qp_refine import (
    CorridorBounds,
    PathWeights,
    SpeedLimits,
    SpeedWeights,
    VehicleFootprint,
    build_corridor,
    path_objective,
    path_qp,
    speed_qp,
    taylor_rows,
)

FP = VehicleFootprint(1.9, 2.1, 2.3)
ROAD = (-5.0, 5.0)
TOL = 1e-6


def independent_kkt(p, sol) -> float:
    """Largest KKT violation recomputed from the raw problem and the duals,
    scaled by the problem magnitude."""
    x = sol.x
    grad = p.H @ x + p.g + p.A_eq.T @ sol.eq_dual + p.A_in.T @ sol.in_dual - sol.lo_dual + sol.hi_dual
    parts = [np.abs(grad)]
    if len(p.b_eq):
        parts.append(np.abs(p.A_eq @ x - p.b_eq))
    if len(p.b_in):
        slack = p.b_in - p.A_in @ x
        parts += [np.maximum(-slack, 0.0), np.maximum(-sol.in_dual, 0.0), np.abs(sol.in_dual * slack)]
    for bound, dual, gap in ((p.lo, sol.lo_dual, x - p.lo), (p.hi, sol.hi_dual, p.hi - x)):
        fin = np.isfinite(bound)
        parts += [np.maximum(-gap[fin], 0.0), np.maximum(-dual, 0.0), np.abs(dual[fin] * gap[fin]), np.abs(dual[~fin])]
    scale = max(1.0, float(np.max(np.abs(p.g))), float(np.max(np.abs(p.H))))
    return max(float(np.max(v)) if v.size else 0.0 for v in parts) / scale


def dp_through(values, ds=25.0, start=0.0) -> DpResult:
    """Run the SL search on a one-node-per-layer lattice so the DP path is
    the quintic chain through ``values``."""
    layers = [Layer((i + 1) * ds, np.array([v]), np.zeros(1), np.ones(1, bool)) for i, v in enumerate(values)]
    return sl_dp(SampledGrid(layers), DpNode(0.0, start), DpWeights())


def corridor(s, lb, ub):
    return CorridorBounds(np.asarray(s, float), np.full(len(s), lb, float), np.full(len(s), ub, float))


def start_state(l=0.0, dl=0.0, ddl=0.0):
    return FrenetState(0.0, 10.0, 0.0, l, dl, ddl)


def test_taylor_rows_exact_matrix():
    A = taylor_rows(3, 2.0)
    np.testing.assert_allclose(A[0, :6], [1, 2, 4 / 3, -1, 0, 4 / 6])
    np.testing.assert_allclose(A[1, :6], [0, 1, 1, 0, -1, 1])
    np.testing.assert_allclose(A[2, 3:], [1, 2, 4 / 3, -1, 0, 4 / 6])


def test_taylor_rows_hold_on_constant_jerk_samples(rng):
    # samples of a piecewise-constant-jerk function satisfy the rows exactly
    h, n = 0.5, 12
    jerk = rng.normal(size=n - 1)
    f, d1, d2 = [0.3], [0.1], [0.0]
    for j in jerk:
        f.append(f[-1] + d1[-1] * h + d2[-1] * h**2 / 2 + j * h**3 / 6)
        d1.append(d1[-1] + d2[-1] * h + j * h**2 / 2)
        d2.append(d2[-1] + j * h)
    x = np.column_stack([f, d1, d2]).ravel()
    assert np.max(np.abs(taylor_rows(n, h) @ x)) < 1e-12


def _solve(dp, w=PathWeights(), lb=-5.0, ub=5.0, ds=2.5, st=None):
    s = np.arange(0.0, dp.coords[-1] + 1e-9, ds)
    return path_qp(dp, corridor(s, lb, ub), FP, w, ds, st or start_state())


def test_path_solution_certified():
    dp = dp_through([1.0, 1.0, 0.0, -0.5])
    res = _solve(dp, st=start_state(0.0, 0.0, 0.0))
    x = res.solution.x
    A = taylor_rows(len(res.s), res.ds)
    assert np.max(np.abs(A @ x)) <= TOL
    assert res.solution.certificate.max_residual() <= TOL
    from asapf.qp_refine import path_problem

    prob = path_problem(sl_profile(dp, res.s), corridor(res.s, -5, 5), FP, PathWeights(), res.ds, (0.0, 0.0, 0.0))
    assert independent_kkt(prob, res.solution) <= TOL


def constant_jerk_dp(rng, n, h) -> DpResult:
    """DP result whose edges are cubic pieces of a constant-jerk chain, so
    the reference is exactly representable by the QP variables."""
    jerk = rng.uniform(-0.002, 0.002, n - 1)
    f, d1, d2 = [0.0], [0.0], [0.0]
    polys = []
    for j in jerk:
        polys.append(QuinticPoly(np.array([f[-1], d1[-1], d2[-1] / 2, j / 6, 0.0, 0.0]), h))
        f.append(f[-1] + d1[-1] * h + d2[-1] * h**2 / 2 + j * h**3 / 6)
        d1.append(d1[-1] + d2[-1] * h + j * h**2 / 2)
        d2.append(d2[-1] + j * h)
    nodes = [DpNode(i * h, v) for i, v in enumerate(f)]
    return DpResult(list(range(n)), nodes, [0.0] * (n - 1), 0.0, 0, 0, polys)


def test_zero_smoothness_returns_reference(rng):
    for _ in range(5):
        dp = constant_jerk_dp(rng, 21, 2.5)
        res = _solve(dp, PathWeights(0.0, 0.0, 0.0, 1.0), lb=-20.0, ub=20.0)
        assert np.max(np.abs(res.l - dp.values)) <= TOL


def test_offset_reference_reproduced():
    dp = dp_through([1.5] * 4, start=1.5)
    res = _solve(dp, PathWeights(0.0, 0.0, 0.0, 1.0), st=start_state(1.5))
    assert np.max(np.abs(res.l - 1.5)) <= TOL


def test_weight_sweep_tracks_reference():
    dp = dp_through([2.0, 2.0, -1.0, 0.0])
    devs = []
    for w4 in (1.0, 10.0, 100.0):
        res = _solve(dp, PathWeights(1.0, 50.0, 500.0, w4))
        devs.append(np.max(np.abs(res.l - sl_profile(dp, res.s))))
    assert devs[0] > devs[1] > devs[2]


def test_refinement_never_worse_than_dp_path():
    dp = dp_through([1.5, 0.0, -1.0, 0.0])
    w = PathWeights()
    res = _solve(dp, w)
    s = res.s
    # DP path derivatives by central differences of the quintic chain
    h = 1e-4
    ref = sl_profile(dp, s)
    d1 = (sl_profile(dp, s + h) - sl_profile(dp, s - h)) / (2 * h)
    d2 = (sl_profile(dp, s + h) - 2 * ref + sl_profile(dp, s - h)) / h**2
    d1[0] = d2[0] = 0.0
    obj_dp = path_objective(ref, d1, d2, ref, w, res.ds)
    obj_qp = path_objective(res.l, res.dl, res.ddl, ref, w, res.ds)
    assert obj_qp <= obj_dp


def test_corners_inside_corridor():
    dp = dp_through([2.5, 2.5, 2.5, 2.5])
    res = _solve(dp, PathWeights(1.0, 50.0, 500.0, 100.0), lb=-2.0, ub=3.5)
    for c in (FP.d1, -FP.d2):
        for e in (0.5 * FP.w, -0.5 * FP.w):
            corner = res.l[1:] + c * res.dl[1:] + e
            assert np.all(corner <= 3.5 + TOL)
            assert np.all(corner >= -2.0 - TOL)
    assert np.all(np.abs(res.ddl[1:]) <= 0.2 + TOL)


def test_start_outside_corridor():
    dp = dp_through([0.0] * 4)
    with pytest.raises(StartOutsideCorridor):
        _solve(dp, lb=0.5, ub=3.0)


def test_decision_interpolation_consistent():
    dp = dp_through([1.0, 0.0, 0.0, 0.0])
    res = _solve(dp)
    l, dl, ddl = res.at(res.s)
    np.testing.assert_allclose(l, res.l, atol=1e-9)
    np.testing.assert_allclose(dl, res.dl, atol=1e-9)
    np.testing.assert_allclose(ddl, res.ddl, atol=1e-9)


def window_oracle(s, raw_s, raw_lb, raw_ub, fp):
    lb = np.array([raw_lb[(raw_s >= si - fp.d2) & (raw_s <= si + fp.d1)].max() for si in s])
    ub = np.array([raw_ub[(raw_s >= si - fp.d2) & (raw_s <= si + fp.d1)].min() for si in s])
    return lb, ub


def test_corridor_without_obstacles():
    c = build_corridor(dp_through([0.0] * 4), [], ROAD, FP)
    np.testing.assert_array_equal(c.lb, -5.0)
    np.testing.assert_array_equal(c.ub, 5.0)


def test_corridor_window_matches_dense_oracle():
    ob = SlObstacle((30.0, 40.0), -1.0, 1.0)
    dp = dp_through([3.0, 3.0, 3.0, 3.0])  # passes on the left
    s = np.arange(0.0, 100.01, 0.5)
    c = build_corridor(dp, [ob], ROAD, FP, stations=s)
    raw_s = np.round(np.arange(-10.0, 110.0, 0.01), 6)
    raw_lb = np.where((raw_s >= 30.0) & (raw_s <= 40.0), 1.0, -5.0)
    raw_ub = np.full(len(raw_s), 5.0)
    lb, ub = window_oracle(s, raw_s, raw_lb, raw_ub, FP)
    np.testing.assert_array_equal(c.lb, lb)
    np.testing.assert_array_equal(c.ub, ub)
    # active window [30 - d1, 40 + d2] = [27.9, 42.3]
    assert c.lb[s == 27.5][0] == -5.0 and c.lb[s == 28.0][0] == 1.0
    assert c.lb[s == 42.0][0] == 1.0 and c.lb[s == 42.5][0] == -5.0


def test_corridor_pass_right_and_margin():
    ob = SlObstacle((30.0, 40.0), -1.0, 1.0)
    dp = dp_through([-3.0, -3.0, -3.0, -3.0])
    c = build_corridor(dp, [ob], ROAD, FP, stations=np.array([35.0, 80.0]), margin=0.5)
    np.testing.assert_allclose(c.ub, [-1.5, 5.0])


def test_full_width_obstacle_empties_corridor():
    ob = SlObstacle((30.0, 40.0), -6.0, 6.0)
    with pytest.raises(EmptyCorridor):
        build_corridor(dp_through([0.0] * 4), [ob], ROAD, FP)


def speed_dp(t, s) -> DpResult:
    nodes = [DpNode(float(a), float(b)) for a, b in zip(t, s)]
    return DpResult(list(range(len(nodes))), nodes, [0.0] * (len(nodes) - 1), 0.0, 0, 0)


def test_speed_tracks_reference():
    t = np.arange(9.0)
    res = speed_qp(speed_dp(t, 10.0 * t), [], SpeedLimits(), SpeedWeights(), 0.2, (0.0, 10.0, 0.0))
    np.testing.assert_allclose(res.s, 10.0 * res.t, atol=TOL)
    np.testing.assert_allclose(res.v, 10.0, atol=TOL)
    assert res.solution.certificate.max_residual() <= TOL


def test_speed_yields_to_lead_band():
    t = np.arange(9.0)
    lead_lo = 30.0 + 5.0 * t
    band = StBlock(1.0, lead_lo, lead_lo + 4.5)
    # DP profile behind the lead vehicle
    dp = speed_dp(t, np.minimum(10.0 * t, lead_lo - 8.0).clip(0.0))
    res = speed_qp(dp, [band], SpeedLimits(), SpeedWeights(), 0.2, (0.0, 10.0, 0.0), margin=1.0)
    lo_at = 30.0 + 5.0 * np.rint(res.t)
    assert np.all(res.s <= lo_at - 1.0 + TOL)
    assert np.all(np.diff(res.s) >= -TOL)
    lim = SpeedLimits()
    assert np.all((res.v >= -TOL) & (res.v <= lim.v_upper + TOL))
    assert np.all((res.a >= lim.a_min - TOL) & (res.a <= lim.a_max + TOL))
    j = np.diff(res.a) / res.dt
    assert np.all((j >= lim.j_min - TOL) & (j <= lim.j_max + TOL))


def test_acceleration_matches_trapezoid():
    # jerk-limited ramp to 10 m/s: 10/2 + 2/10 = 5.2 s
    t = np.arange(11.0)
    lim = SpeedLimits(v_upper=10.0, a_min=-4.0, a_max=2.0, j_min=-10.0, j_max=10.0)
    res = speed_qp(speed_dp(t, 10.0 * t), [], lim, SpeedWeights(10.0, 1.0, 1.0), 0.2, (0.0, 0.0, 0.0))
    t_reach = res.t[np.argmax(res.v >= 10.0 - 1e-3)]
    assert res.v.max() >= 10.0 - 1e-3
    assert abs(t_reach - 5.2) <= 0.05 * 5.2
