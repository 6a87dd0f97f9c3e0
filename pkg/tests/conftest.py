from __future__ import annotations

import math

import numpy as np
import pytest

from asapf.reference_line import ReferenceLine


def arc_points(radius: float, length: float, step: float = 0.05, start=(0.0, 0.0)) -> np.ndarray:
    """Counter-clockwise arc from ``start`` heading +x."""
    s = np.arange(0.0, length + 1e-9, step)
    th = s / radius
    return np.column_stack([start[0] + radius * np.sin(th), start[1] + radius * (1 - np.cos(th))])


def s_curve_points(step: float = 0.05) -> np.ndarray:
    """Two opposite arcs of radius 60 joined by a straight lead-in."""
    pts = [np.column_stack([np.arange(-20.0, 0.0, step), np.zeros(int(round(20.0 / step)))])]
    a1 = arc_points(60.0, 60.0, step)
    pts.append(a1)
    th = 1.0
    x0, y0 = a1[-1]
    s = np.arange(step, 60.0 + 1e-9, step)
    # right-hand arc continuing from the end heading
    cx, cy = x0 + 60.0 * math.sin(th), y0 - 60.0 * math.cos(th)
    ang = th - s / 60.0
    pts.append(np.column_stack([cx - 60.0 * np.sin(ang), cy + 60.0 * np.cos(ang)]))
    return np.vstack(pts)


@pytest.fixture(scope="session")
def straight_line() -> ReferenceLine:
    x = np.linspace(0.0, 200.0, 201)
    return ReferenceLine.from_xy(np.column_stack([x, np.zeros_like(x)]), 1.0)


@pytest.fixture(scope="session")
def s_curve() -> ReferenceLine:
    return ReferenceLine.from_xy(s_curve_points(), 0.5)


@pytest.fixture(scope="session")
def s_curve_fine() -> ReferenceLine:
    return ReferenceLine.from_xy(s_curve_points(0.02), 0.1)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


def scenario_dict(points, ego_xy=(30.0, 0.0), heading=0.0, speed=10.0, half_width=5.0, **extra) -> dict:
    """Minimal valid scenario document on ``points``."""
    data = {
        "version": 1,
        "id": extra.pop("id", "test"),
        "route": {"points_m": [[float(x), float(y)] for x, y in points]},
        "road": {"half_width_left_m": half_width, "half_width_right_m": half_width},
        "ego": {"x_m": ego_xy[0], "y_m": ego_xy[1], "heading_rad": heading, "speed_mps": speed},
    }
    data.update(extra)
    return data


def straight_points(length: float = 400.0, step: float = 2.0) -> np.ndarray:
    x = np.arange(0.0, length + 1e-9, step)
    return np.column_stack([x, np.zeros_like(x)])


@pytest.fixture(scope="session")
def bundled_run():
    """Closed-loop runs of the bundled scenarios, cached for the session."""
    from asapf.scenario import bundled_scenario, load_scenario
    from asapf.simulation import simulate

    cache = {}

    def run(name: str, mode: str = "adaptive"):
        if (name, mode) not in cache:
            scn = load_scenario(bundled_scenario(name))
            cache[name, mode] = (scn, simulate(scn, mode))
        return cache[name, mode]

    return run
