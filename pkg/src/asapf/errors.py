"""Exception hierarchy shared by the planning, control and simulation layers."""

from __future__ import annotations


class PlanningError(Exception):
    """Base class for every error raised by this package."""


# reference line
class InvalidRoute(PlanningError, ValueError):
    pass


class EgoOffRoute(PlanningError):
    pass


class AmbiguousProjection(PlanningError):
    pass


class ProjectionError(PlanningError):
    pass


class SolverFailure(PlanningError):
    pass


# frenet
class CurvatureSingularity(PlanningError):
    pass


class OutOfRange(PlanningError, ValueError):
    pass


# quintic
class IllConditioned(PlanningError, ValueError):
    pass


# sampling / dp
class LayerBlocked(PlanningError):
    def __init__(self, layer: int, message: str | None = None) -> None:
        self.layer = layer
        super().__init__(message or f"no finite-cost node in layer {layer}")


class NoFeasiblePath(PlanningError):
    pass


# qp
class Infeasible(SolverFailure):
    pass


class MaxIterations(SolverFailure):
    pass


class EmptyCorridor(PlanningError):
    def __init__(self, station: int, message: str | None = None) -> None:
        self.station = station
        super().__init__(message or f"corridor collapses at station {station}")


class StartOutsideCorridor(PlanningError):
    pass


# vehicle / control
class LowSpeedDomain(PlanningError, ValueError):
    pass


class RiccatiDiverged(PlanningError):
    pass


class UnstableClosedLoop(PlanningError):
    pass


# orchestration
class RangeMismatch(PlanningError):
    pass


class ScenarioError(PlanningError, ValueError):
    pass


class PlanningFailure(PlanningError):
    """A planning cycle failed; ``stage`` names the pipeline step."""

    def __init__(self, stage: str, cause: BaseException, t: float | None = None) -> None:
        self.stage = stage
        self.cause = cause
        self.t = t
        where = f" at t={t:.3f}s" if t is not None else ""
        super().__init__(f"{stage} failed{where}: {cause}")
