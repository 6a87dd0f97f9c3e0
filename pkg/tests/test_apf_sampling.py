from __future__ import annotations

import math

import numpy as np
import pytest

from asapf.apf_sampling import (
    ApfCoefficients,
    SlGridSpec,
    SlObstacle,
    StGridSpec,
    adapt_sl,
    boundary_field,
    obstacle_field,
    reach_bounds,
    sl_apf_cost,
    st_constraint_prune,
    uniform_sl_grid,
)
from asapf.errors import LayerBlocked

COEFF = ApfCoefficients()
ROAD = (-5.0, 5.0)


def test_uniform_grid_shape():
    g = uniform_sl_grid(SlGridSpec(4, 11, 25.0, -5.0, 5.0))
    assert g.n_nodes == 44
    assert [L.coord for L in g.layers] == [25.0, 50.0, 75.0, 100.0]
    np.testing.assert_allclose(np.diff(g.layers[0].rows), 1.0)
    assert all(L.retained.all() and not L.cost.any() for L in g.layers)


def test_uniform_grid_small():
    g = uniform_sl_grid(SlGridSpec(2, 3, 10.0, -2.0, 4.0))
    assert g.n_nodes == 6
    np.testing.assert_allclose(g.layers[1].rows, [-2.0, 1.0, 4.0])


def test_uniform_grid_nine_by_nine():
    g = uniform_sl_grid(SlGridSpec(9, 9, 5.0, -4.0, 4.0))
    np.testing.assert_allclose(g.layers[4].rows, np.arange(-4.0, 4.1, 1.0))


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        SlGridSpec(1, 11)
    with pytest.raises(ValueError):
        SlGridSpec(4, 2)
    with pytest.raises(ValueError):
        SlGridSpec(4, 11, l_min=1.0, l_max=1.0)


def test_centred_cost_by_hand():
    # boundary field 1/2 * gamma * (1/4^2 + 1/4^2), reference field zero
    u = sl_apf_cost(10.0, 0.0, [], ROAD, lambda s: 0.0, COEFF)
    assert u == pytest.approx(0.5 * 20.0 * (1 / 16 + 1 / 16))
    assert u == pytest.approx(1.25)


def test_infinite_branches():
    ob = SlObstacle((5.0, 15.0), -1.0, 1.0)
    assert math.isinf(sl_apf_cost(10.0, 0.5, [ob], ROAD, None, COEFF))
    # inflated band edges are part of the infinite branch
    assert math.isinf(sl_apf_cost(10.0, 2.0, [ob], ROAD, None, COEFF))
    assert math.isinf(sl_apf_cost(10.0, 4.0, [], ROAD, None, COEFF))
    assert math.isinf(sl_apf_cost(10.0, -4.0, [], ROAD, None, COEFF))
    # outside the obstacle's s range only the other terms remain
    assert math.isfinite(sl_apf_cost(20.0, 0.5, [ob], ROAD, None, COEFF))


def test_field_terms():
    ob = SlObstacle((0.0, 10.0), -1.0, 1.0)
    # d = 1 from the inflated upper edge at l = 3
    assert obstacle_field(5.0, 3.0, [ob], COEFF) == pytest.approx(0.5 * 1000.0)
    assert obstacle_field(20.0, 3.0, [ob], COEFF) == 0.0
    u = sl_apf_cost(5.0, 3.0, [ob], ROAD, lambda s: 1.0, COEFF)
    ref = 0.5 * 20.0 * (3.0 - 1.0) ** 2
    bnd = 0.5 * 20.0 * (1.0 / 1.0**2 + 1.0 / 7.0**2)
    assert u == pytest.approx(ref + 500.0 + bnd)


def test_bad_bounds():
    with pytest.raises(ValueError):
        sl_apf_cost(0.0, 0.0, [], (1.0, 1.0), None, COEFF)


def test_fields_continuous_on_finite_side():
    ob = SlObstacle((0.0, 10.0), -1.0, 1.0)
    for d in (0.05, 0.5, 1.0, 2.5):
        l = 2.0 + d
        a = float(obstacle_field(5.0, l, [ob], COEFF))
        b = float(obstacle_field(5.0, l + 1e-6, [ob], COEFF))
        assert abs(a - b) < 1e-3 * a
        a = float(boundary_field(4.0 - d, ROAD, COEFF))
        b = float(boundary_field(4.0 - d - 1e-6, ROAD, COEFF))
        assert abs(a - b) < 1e-3 * a
    # divergence towards the seam
    vals = [float(obstacle_field(5.0, 2.0 + d, [ob], COEFF)) for d in (1e-1, 1e-2, 1e-3)]
    assert vals[0] < vals[1] < vals[2]


def _grid():
    return uniform_sl_grid(SlGridSpec(4, 11, 25.0, -5.0, 5.0))


def test_no_obstacles_keeps_innermost():
    g = adapt_sl(_grid(), 5, [], ROAD, lambda s: 0.0, COEFF)
    for L in g.layers:
        np.testing.assert_allclose(L.rows[L.retained], [-2, -1, 0, 1, 2])


def test_retention_matches_brute_force_rank(rng):
    for _ in range(50):
        obs = [
            SlObstacle((float(a), float(a) + float(rng.uniform(2, 30))), float(lo), float(lo) + float(rng.uniform(0.3, 2)))
            for a, lo in zip(rng.uniform(0, 100, 2), rng.uniform(-4, 3, 2))
        ]
        off = float(rng.uniform(-2, 2))
        prev = lambda s, off=off: off + 0.01 * s  # noqa: E731
        k = int(rng.integers(1, 8))
        try:
            g = adapt_sl(_grid(), k, obs, ROAD, prev, COEFF)
        except LayerBlocked:
            continue
        for L in g.layers:
            cost = [sl_apf_cost(L.coord, l, obs, ROAD, prev, COEFF) for l in L.rows]
            finite = [i for i, c in enumerate(cost) if math.isfinite(c)]
            ranked = sorted(finite, key=lambda i: (cost[i], abs(L.rows[i] - prev(L.coord)), i))
            assert set(np.flatnonzero(L.retained)) == set(ranked[:k])
            assert L.retained.sum() == min(k, len(finite))
            kept = [cost[i] for i in np.flatnonzero(L.retained)]
            dropped = [cost[i] for i in finite if not L.retained[i]]
            assert not dropped or max(kept) <= min(dropped)
            assert set(L.rows) <= set(_grid().layers[0].rows)


def test_obstacle_clears_a_layer_band():
    ob = SlObstacle((45.0, 55.0), -1.0, 2.0)
    g = adapt_sl(_grid(), 5, [ob], ROAD, None, COEFF)
    L = g.layers[1]
    kept = L.rows[L.retained]
    assert not np.any((kept >= -2.0) & (kept <= 3.0))


def test_ties_prefer_previous_path():
    # no boundary term (huge road) and no attraction: all costs are tiny and
    # symmetric; tie-break pulls towards the previous path
    g = uniform_sl_grid(SlGridSpec(2, 5, 10.0, -2.0, 2.0))
    coeff = ApfCoefficients(alpha=0.0, gamma=0.0, buffer=0.0)
    out = adapt_sl(g, 2, [], (-100.0, 100.0), lambda s: 2.0, coeff)
    np.testing.assert_allclose(out.layers[0].rows[out.layers[0].retained], [1.0, 2.0])
    out = adapt_sl(g, 2, [], (-100.0, 100.0), None, coeff)
    # equidistant from the centre: the lower row wins
    np.testing.assert_allclose(out.layers[0].rows[out.layers[0].retained], [-1.0, 0.0])


def test_narrow_road_blocks():
    g = uniform_sl_grid(SlGridSpec(2, 5, 10.0, -0.8, 0.8))
    with pytest.raises(LayerBlocked) as info:
        adapt_sl(g, 3, [], (-0.8, 0.8), None, COEFF)
    assert info.value.layer == 0


def test_k_retain_validation():
    with pytest.raises(ValueError):
        adapt_sl(_grid(), 0, [], ROAD, None, COEFF)


ST = StGridSpec(horizon_T=8.0, dt=1.0, s_min=-40.0, s_max=40.0, m_rows=81, v_bounds=(-5.0, 5.0), a_bounds=(-2.0, 2.0))


def envelope_oracle(t, v0, v_lim, acc, h=1e-4):
    """Forward-Euler (midpoint in v) integration of the saturated ramp."""
    s, v = 0.0, v0
    for _ in range(int(round(t / h))):
        v_next = min(v + acc * h, v_lim) if acc > 0 else max(v + acc * h, v_lim)
        s += 0.5 * (v + v_next) * h
        v = v_next
    return s


def test_reach_bounds_example():
    lo, hi = reach_bounds(1.0, 0.0, ST)
    assert (lo, hi) == pytest.approx((-1.0, 1.0))
    lo, hi = reach_bounds(8.0, 0.0, ST)
    # ramp for 2.5 s, then cruise at 5 m/s
    assert hi == pytest.approx(0.5 * 2 * 2.5**2 + 5.0 * 5.5)
    assert lo == pytest.approx(-hi)
    assert hi == pytest.approx(envelope_oracle(8.0, 0.0, 5.0, 2.0), abs=1e-6)


def test_saturated_start():
    t = np.arange(1.0, 9.0)
    _, hi = reach_bounds(t, 5.0, ST)
    np.testing.assert_allclose(hi, 5.0 * t)


def test_prune_soundness(rng):
    for v0 in (0.0, 2.5, -3.0):
        g = st_constraint_prune(ST, v0, 0.0)
        assert g.origin == (0.0, 0.0)
        for L in g.layers:
            hi = envelope_oracle(L.coord, v0, 5.0, 2.0)
            lo = envelope_oracle(L.coord, v0, -5.0, -2.0)
            reach = (L.rows >= lo - 1e-6) & (L.rows <= hi + 1e-6)
            np.testing.assert_array_equal(L.retained, reach)


def test_prune_off_keeps_all():
    g = st_constraint_prune(ST, 0.0, 0.0, prune=False)
    assert all(L.retained.all() for L in g.layers)
    assert np.isfinite(g.layers[0].cost).all()


def test_prune_rejects_bad_speed():
    with pytest.raises(ValueError):
        st_constraint_prune(ST, 6.0)


def test_blocked_nodes_dropped():
    spec = StGridSpec(horizon_T=4.0, dt=1.0, s_max=40.0, m_rows=41, v_bounds=(0.0, 10.0))
    band = lambda t: (10.0, 14.0)  # noqa: E731
    g = st_constraint_prune(spec, 5.0, 0.0, [band])
    for L in g.layers:
        assert not np.any(L.retained & (L.rows >= 9.0) & (L.rows <= 15.0))
