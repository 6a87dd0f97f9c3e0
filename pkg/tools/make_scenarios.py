"""Regenerate the bundled scenario JSON files.

Run from the repository root: ``python3 tools/make_scenarios.py``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1] / "src" / "asapf" / "data"
STEP = 2.0


def straight(length=600.0):
    n = int(length / STEP)
    return [[i * STEP, 0.0] for i in range(n + 1)]


def _arc(pts, heading, radius, length, sign):
    x, y = pts[-1]
    n = int(round(length / STEP))
    for _ in range(n):
        mid = heading + sign * 0.5 * STEP / radius
        x += STEP * math.cos(mid)
        y += STEP * math.sin(mid)
        heading += sign * STEP / radius
        pts.append([round(x, 6), round(y, 6)])
    return heading


def _line(pts, heading, length):
    x, y = pts[-1]
    for _ in range(int(round(length / STEP))):
        x += STEP * math.cos(heading)
        y += STEP * math.sin(heading)
        pts.append([round(x, 6), round(y, 6)])


def curve(lead_in=40.0, radius=100.0, arc=300.0, lead_out=200.0):
    pts = [[0.0, 0.0]]
    _line(pts, 0.0, lead_in)
    h = _arc(pts, 0.0, radius, arc, +1)
    _line(pts, h, lead_out)
    return pts


def scurve():
    pts = [[0.0, 0.0]]
    _line(pts, 0.0, 40.0)
    h = _arc(pts, 0.0, 80.0, 100.0, +1)
    h = _arc(pts, h, 80.0, 100.0, -1)
    _line(pts, h, 300.0)
    return pts


def scenario(sid, route, description, statics=(), movers=(), ego_s=30.0, duration=10.0, half_width=5.0, **planner):
    x, y = route[int(ego_s / STEP)]
    x1, y1 = route[int(ego_s / STEP) + 1]
    heading = math.atan2(y1 - y, x1 - x)
    data = {
        "version": 1,
        "id": sid,
        "description": description,
        "route": {"points_m": route},
        "road": {"half_width_left_m": half_width, "half_width_right_m": half_width},
        "ego": {"x_m": x, "y_m": y, "heading_rad": round(heading, 9), "speed_mps": 10.0},
        "duration_s": duration,
    }
    if statics:
        data["static_obstacles"] = [
            {"name": f"band{k}", "sl_band": {"s_m": list(s), "l_m": list(l)}} for k, (s, l) in enumerate(statics)
        ]
    if movers:
        data["dynamic_obstacles"] = list(movers)
    data["planner"] = {"v_ref_mps": 10.0, **planner}
    return data


# suite roads are three lanes wide so that every SL layer keeps at least
# K finite-cost nodes next to an obstacle
SUITE_HALF_WIDTH = 7.0


def suite():
    st, cv, sc = straight(), curve(), scurve()
    items = [
        scenario("01_straight_free", st, "straight road, no obstacles"),
        scenario("02_straight_center", st, "centred static block", [((52.0, 60.0), (-1.0, 1.0))]),
        scenario("03_straight_right", st, "static block on the right", [((50.0, 58.0), (-3.0, -0.5))]),
        scenario("04_straight_left", st, "static block on the left", [((52.0, 62.0), (0.5, 3.0))]),
        scenario("05_curve_free", cv, "constant-curvature road, no obstacles"),
        scenario("06_curve_static", cv, "static block on a curve", [((76.0, 84.0), (-1.5, 0.5))]),
        scenario("07_scurve_free", sc, "S-curve, no obstacles"),
        scenario(
            "08_staggered",
            st,
            "two staggered static blocks",
            [((52.0, 58.0), (-2.5, 0.2)), ((100.0, 108.0), (-0.2, 2.5))],
        ),
        scenario(
            "09_lead_vehicle",
            st,
            "lead vehicle at 5 m/s",
            movers=[{"name": "lead", "x_m": 70.0, "y_m": 0.0, "heading_rad": 0.0, "speed_mps": 5.0}],
        ),
        scenario(
            "10_crossing",
            st,
            "pedestrian-speed obstacle crossing the road",
            movers=[
                {
                    "name": "crosser",
                    "x_m": 95.0,
                    "y_m": -12.0,
                    "heading_rad": round(math.pi / 2, 9),
                    "speed_mps": 2.0,
                    "length_m": 1.0,
                    "width_m": 1.0,
                }
            ],
        ),
    ]
    for item in items:
        item["road"] = {"half_width_left_m": SUITE_HALF_WIDTH, "half_width_right_m": SUITE_HALF_WIDTH}
    return items


def sims():
    st, cv = straight(), curve()
    return [
        scenario("straight", st, "straight road, no obstacles", duration=10.0),
        scenario("curve", cv, "constant-curvature road (kappa = 0.01)", duration=10.0),
        scenario("nudge", st, "static block that forces a nudge", [((80.0, 90.0), (-2.5, 0.5))], duration=10.0),
        scenario(
            "lead",
            st,
            "lead vehicle at constant 5 m/s",
            movers=[{"name": "lead", "x_m": 70.0, "y_m": 0.0, "heading_rad": 0.0, "speed_mps": 5.0}],
            duration=15.0,
        ),
    ]


def main() -> None:
    for sub, items in (("suite", suite()), ("scenarios", sims())):
        d = ROOT / sub
        d.mkdir(parents=True, exist_ok=True)
        for item in items:
            with open(d / f"{item['id']}.json", "w", encoding="utf-8") as fh:
                json.dump(item, fh, separators=(",", ":"))
                fh.write("\n")


if __name__ == "__main__":
    main()
