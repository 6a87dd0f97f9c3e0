"""Scenario files: JSON schema, validation and loading.

Field names carry their units (``_m``, ``_mps``, ``_rad`` ...). A scenario
holds the route, road width, obstacles, the ego start state and optional
overrides for vehicle, planner and control settings.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .control import LqrConfig, PidConfig
from .errors import ScenarioError
from .frenet import CartesianState
from .planner import PlannerConfig
from .reference_line import ReferenceLine, RoutePolyline, densify
from .vehicle_models import VehicleParams

SCHEMA_VERSION = 1

_point = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_pair = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "asapf scenario",
    "type": "object",
    "required": ["version", "id", "route", "road", "ego"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "id": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "route": {
            "type": "object",
            "required": ["points_m"],
            "additionalProperties": False,
            "properties": {"points_m": {"type": "array", "items": _point, "minItems": 3}},
        },
        "road": {
            "type": "object",
            "required": ["half_width_left_m", "half_width_right_m"],
            "additionalProperties": False,
            "properties": {
                "half_width_left_m": {"type": "number", "exclusiveMinimum": 0},
                "half_width_right_m": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "static_obstacles": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "sl_band": {
                        "type": "object",
                        "required": ["s_m", "l_m"],
                        "additionalProperties": False,
                        "properties": {"s_m": _pair, "l_m": _pair},
                    },
                    "polygon_m": {"type": "array", "items": _point, "minItems": 3},
                },
                "oneOf": [{"required": ["sl_band"]}, {"required": ["polygon_m"]}],
            },
        },
        "dynamic_obstacles": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["x_m", "y_m", "heading_rad", "speed_mps"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "x_m": {"type": "number"},
                    "y_m": {"type": "number"},
                    "heading_rad": {"type": "number"},
                    "speed_mps": {"type": "number", "minimum": 0},
                    "length_m": {"type": "number", "exclusiveMinimum": 0},
                    "width_m": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
        "ego": {
            "type": "object",
            "required": ["x_m", "y_m", "heading_rad", "speed_mps"],
            "additionalProperties": False,
            "properties": {
                "x_m": {"type": "number"},
                "y_m": {"type": "number"},
                "heading_rad": {"type": "number"},
                "speed_mps": {"type": "number", "minimum": 0},
                "accel_mps2": {"type": "number"},
            },
        },
        "vehicle": {"type": "object", "additionalProperties": {"type": "number"}},
        "planner": {"type": "object", "additionalProperties": {"type": ["number", "integer"]}},
        "control": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "q_diag": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 4, "maxItems": 4},
                "r": {"type": "number", "exclusiveMinimum": 0},
                "station_kp": {"type": "number"},
                "speed_kp": {"type": "number"},
                "speed_ki": {"type": "number"},
            },
        },
        "duration_s": {"type": "number", "exclusiveMinimum": 0},
    },
}


@dataclass(frozen=True)
class PolygonObstacle:
    polygon: np.ndarray
    name: str = ""

    speed = 0.0

    def footprint_at(self, t: float) -> np.ndarray:
        return self.polygon


@dataclass(frozen=True)
class MovingObstacle:
    x: float
    y: float
    heading: float
    speed: float
    length: float = 4.5
    width: float = 1.9
    name: str = ""

    def center_at(self, t: float) -> tuple[float, float]:
        return (
            self.x + self.speed * math.cos(self.heading) * t,
            self.y + self.speed * math.sin(self.heading) * t,
        )

    def footprint_at(self, t: float) -> np.ndarray:
        cx, cy = self.center_at(t)
        c, s = math.cos(self.heading), math.sin(self.heading)
        hl, hw = 0.5 * self.length, 0.5 * self.width
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([cx, cy])

    def shifted(self, t0: float) -> "MovingObstacle":
        """The same obstacle with its clock advanced by ``t0``."""
        x, y = self.center_at(t0)
        return dataclasses.replace(self, x=x, y=y)


@dataclass
class Scenario:
    id: str
    route: RoutePolyline
    half_width_left: float
    half_width_right: float
    ego: CartesianState
    static_obstacles: list[PolygonObstacle] = field(default_factory=list)
    dynamic_obstacles: list[MovingObstacle] = field(default_factory=list)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    lqr: LqrConfig = field(default_factory=LqrConfig)
    pid: PidConfig = field(default_factory=PidConfig)
    duration: float = 10.0
    description: str = ""

    @property
    def road_bounds(self) -> tuple[float, float]:
        return (-self.half_width_right, self.half_width_left)

    def obstacles_at(self, t: float) -> list:
        """Static polygons plus moving obstacles advanced to time ``t``."""
        return list(self.static_obstacles) + [ob.shifted(t) for ob in self.dynamic_obstacles]


def validate(data: dict) -> None:
    """Raise :class:`ScenarioError` if ``data`` does not match the schema."""
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"{where}: {exc.message}") from None


def _sl_band_polygon(line: ReferenceLine, s_range, l_range, step: float = 0.5) -> np.ndarray:
    s0, s1 = (float(v) for v in s_range)
    l0, l1 = (float(v) for v in l_range)
    if not (0.0 <= s0 < s1 <= line.length) or not l0 < l1:
        raise ScenarioError(f"sl_band s={s_range} l={l_range} outside the route or reversed")
    s = np.linspace(s0, s1, max(int(math.ceil((s1 - s0) / step)), 1) + 1)
    x, y, th, _, _ = line.frame(s)
    n = np.column_stack([-np.sin(th), np.cos(th)])
    base = np.column_stack([x, y])
    left = base + l1 * n
    right = base + l0 * n
    return np.vstack([right, left[::-1]])


def _replace_known(obj, overrides: dict, what: str):
    names = {f.name for f in dataclasses.fields(obj)}
    unknown = set(overrides) - names
    if unknown:
        raise ScenarioError(f"unknown {what} field(s): {', '.join(sorted(unknown))}")
    try:
        return dataclasses.replace(obj, **overrides)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid {what} settings: {exc}") from None


def from_dict(data: dict) -> Scenario:
    validate(data)
    try:
        route = RoutePolyline(np.asarray(data["route"]["points_m"], dtype=float))
    except ValueError as exc:
        raise ScenarioError(f"route: {exc}") from None
    ego_d = data["ego"]
    ego = CartesianState(
        float(ego_d["x_m"]),
        float(ego_d["y_m"]),
        float(ego_d["heading_rad"]),
        float(ego_d["speed_mps"]),
        float(ego_d.get("accel_mps2", 0.0)),
        0.0,
    )
    vehicle = _replace_known(VehicleParams(), data.get("vehicle", {}), "vehicle")
    planner_over = dict(data.get("planner", {}))
    for k in ("n_layers", "m_rows", "k_retain", "st_rows"):
        if k in planner_over:
            planner_over[k] = int(planner_over[k])
    planner = _replace_known(PlannerConfig.for_vehicle(vehicle), planner_over, "planner")
    ctl = data.get("control", {})
    lqr = LqrConfig(Q=np.diag(ctl.get("q_diag", [1.0, 0.0, 1.0, 0.0])), R=float(ctl.get("r", 10.0)))
    pid = PidConfig(
        station_kp=float(ctl.get("station_kp", 0.5)),
        speed_kp=float(ctl.get("speed_kp", 1.5)),
        speed_ki=float(ctl.get("speed_ki", 0.1)),
    )
    statics: list[PolygonObstacle] = []
    if data.get("static_obstacles"):
        raw_line = ReferenceLine.from_xy(densify(route.points, 1.0), 0.5)
        for k, ob in enumerate(data["static_obstacles"]):
            name = ob.get("name", f"static{k}")
            if "sl_band" in ob:
                poly = _sl_band_polygon(raw_line, ob["sl_band"]["s_m"], ob["sl_band"]["l_m"])
            else:
                poly = np.asarray(ob["polygon_m"], dtype=float)
            statics.append(PolygonObstacle(poly, name))
    movers = [
        MovingObstacle(
            float(ob["x_m"]),
            float(ob["y_m"]),
            float(ob["heading_rad"]),
            float(ob["speed_mps"]),
            float(ob.get("length_m", 4.5)),
            float(ob.get("width_m", 1.9)),
            ob.get("name", f"dynamic{k}"),
        )
        for k, ob in enumerate(data.get("dynamic_obstacles", []))
    ]
    road = data["road"]
    return Scenario(
        id=data["id"],
        route=route,
        half_width_left=float(road["half_width_left_m"]),
        half_width_right=float(road["half_width_right_m"]),
        ego=ego,
        static_obstacles=statics,
        dynamic_obstacles=movers,
        vehicle=vehicle,
        planner=planner,
        lqr=lqr,
        pid=pid,
        duration=float(data.get("duration_s", 10.0)),
        description=data.get("description", ""),
    )


def load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def load_scenario(path) -> Scenario:
    return from_dict(load_json(path))


def suite_files(suite_dir) -> list[Path]:
    files = sorted(Path(suite_dir).glob("*.json"))
    if not files:
        raise ScenarioError(f"no scenario files in {suite_dir}")
    return files


def bundled_suite_dir() -> Path:
    return Path(__file__).parent / "data" / "suite"


def bundled_scenario(name: str) -> Path:
    for d in (Path(__file__).parent / "data" / "scenarios", bundled_suite_dir()):
        p = d / f"{name}.json"
        if p.exists():
            return p
    raise ScenarioError(f"no bundled scenario named {name!r}")


def snapshot(scn: Scenario, t: float = 0.0):
    """Planner input at simulation time ``t``."""
    from .planner import Snapshot

    return Snapshot(scn.id, scn.route, scn.road_bounds, scn.obstacles_at(t), scn.planner, t)
