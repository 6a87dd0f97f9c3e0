"""Frenet-frame decoupled path and speed planning with potential-field
adaptive sampling, QP refinement and a closed-loop bicycle simulation."""

from __future__ import annotations

from .apf_sampling import (
    ApfCoefficients,
    SampledGrid,
    SlGridSpec,
    SlObstacle,
    StGridSpec,
    adapt_sl,
    sl_apf_cost,
    st_constraint_prune,
    uniform_sl_grid,
)
from .control import LateralController, LongitudinalController, LqrConfig, PidConfig, lqr_gain, solve_lqr
from .dp_planner import DpNode, DpResult, DpWeights, dp_search, sl_dp, st_dp
from .errors import PlanningError, PlanningFailure
from .frenet import CartesianState, FrenetState, cartesian_to_frenet, frenet_to_cartesian
from .planner import BenchRecord, PlannerConfig, Snapshot, merge_profiles, plan_cycle
from .qp_refine import build_corridor, path_qp, speed_qp
from .qp_solver import QpProblem, solve_qp
from .quintic import BoundaryConditions, QuinticPoly, fit
from .reference_line import ReferenceLine, RoutePolyline, smooth
from .scenario import Scenario, load_scenario
from .trajectory import PlannedTrajectory
from .vehicle_models import DynamicState, KinematicState, VehicleParams

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
