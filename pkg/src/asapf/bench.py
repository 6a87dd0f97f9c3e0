"""Adaptive-vs-uniform sampling benchmark over a scenario suite."""

from __future__ import annotations

import json
import logging
import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .errors import PlanningError, ScenarioError
from .planner import MODES, BenchRecord, plan_cycle
from .scenario import load_scenario, snapshot, suite_files
from .simulation import write_csv
from .trajectory import PlannedTrajectory

log = logging.getLogger(__name__)


@dataclass
class ScenarioSummary:
    scenario_id: str
    expansions: dict[str, int]
    dp_cost: dict[str, float]
    dp_elapsed_median: dict[str, float]
    cycle_elapsed_median: dict[str, float]
    qp_elapsed_median: dict[str, float]
    deterministic: bool

    @property
    def expansion_ratio(self) -> Fraction:
        return Fraction(self.expansions["adaptive"], self.expansions["average"])

    @property
    def dp_time_ratio(self) -> float:
        return self.dp_elapsed_median["adaptive"] / self.dp_elapsed_median["average"]

    @property
    def cost_rel_diff(self) -> float:
        a, b = self.dp_cost["adaptive"], self.dp_cost["average"]
        return abs(a - b) / max(abs(b), 1e-12) if (a or b) else 0.0

    def as_row(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "expansions_average": self.expansions["average"],
            "expansions_adaptive": self.expansions["adaptive"],
            "expansion_ratio": float(self.expansion_ratio),
            "dp_ms_average": self.dp_elapsed_median["average"] / 1e6,
            "dp_ms_adaptive": self.dp_elapsed_median["adaptive"] / 1e6,
            "dp_time_ratio": self.dp_time_ratio,
            "cycle_ms_average": self.cycle_elapsed_median["average"] / 1e6,
            "cycle_ms_adaptive": self.cycle_elapsed_median["adaptive"] / 1e6,
            "dp_cost_average": self.dp_cost["average"],
            "dp_cost_adaptive": self.dp_cost["adaptive"],
            "cost_rel_diff": self.cost_rel_diff,
        }


@dataclass
class BenchResult:
    repeats: int
    records: list[BenchRecord] = field(default_factory=list)
    summaries: list[ScenarioSummary] = field(default_factory=list)
    trajectories: dict[tuple[str, str], PlannedTrajectory] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)

    @property
    def median_dp_reduction(self) -> float:
        return 1.0 - statistics.median(s.dp_time_ratio for s in self.summaries)

    @property
    def max_cycle_ms(self) -> float:
        return max(max(s.cycle_elapsed_median.values()) for s in self.summaries) / 1e6

    def summary(self) -> dict:
        ratios = sorted({str(s.expansion_ratio) for s in self.summaries})
        return {
            "repeats": self.repeats,
            "scenarios": len(self.summaries),
            "failed": sorted(self.errors),
            "expansion_ratios": ratios,
            "median_dp_reduction": self.median_dp_reduction if self.summaries else None,
            "max_cost_rel_diff": max((s.cost_rel_diff for s in self.summaries), default=None),
            "max_median_cycle_ms": self.max_cycle_ms if self.summaries else None,
            "deterministic": all(s.deterministic for s in self.summaries),
            "per_scenario": [s.as_row() for s in self.summaries],
        }

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if self.records:
            names = list(self.records[0].as_dict())
            write_csv(out / "bench_records.csv", names, [list(r.as_dict().values()) for r in self.records])
        if self.summaries:
            rows = [s.as_row() for s in self.summaries]
            write_csv(out / "bench.csv", list(rows[0]), [list(r.values()) for r in rows])
        with open(out / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2)
            fh.write("\n")


def bench_scenario(path, repeats: int, result: BenchResult) -> None:
    scn = load_scenario(path)
    snap = snapshot(scn, 0.0)
    # the warm-up cycle supplies the previous path for the measured cycles
    warm, _ = plan_cycle(snap, scn.ego, None, "average")
    per_mode: dict[str, list[BenchRecord]] = {m: [] for m in MODES}
    arrays: dict[str, list] = {m: [] for m in MODES}
    for _ in range(repeats):
        for mode in MODES:
            traj, rec = plan_cycle(snap, scn.ego, warm, mode)
            per_mode[mode].append(rec)
            arrays[mode].append(traj.as_array())
            result.trajectories[(scn.id, mode)] = traj
    result.records.extend(r for m in MODES for r in per_mode[m])

    def same(recs, arrs):
        return (
            len({r.dp_expansions for r in recs}) == 1
            and len({r.dp_cost for r in recs}) == 1
            and all((a == arrs[0]).all() for a in arrs[1:])
        )

    result.summaries.append(
        ScenarioSummary(
            scenario_id=scn.id,
            expansions={m: per_mode[m][0].dp_expansions for m in MODES},
            dp_cost={m: per_mode[m][0].dp_cost for m in MODES},
            dp_elapsed_median={m: statistics.median(r.dp_elapsed for r in per_mode[m]) for m in MODES},
            cycle_elapsed_median={m: statistics.median(r.cycle_elapsed for r in per_mode[m]) for m in MODES},
            qp_elapsed_median={m: statistics.median(r.qp_elapsed for r in per_mode[m]) for m in MODES},
            deterministic=all(same(per_mode[m], arrays[m]) for m in MODES),
        )
    )


def bench(suite_dir, repeats: int = 5) -> BenchResult:
    """Plan every scenario of the suite ``repeats`` times in both modes.

    Failing scenarios are recorded in ``errors`` and skipped.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    result = BenchResult(repeats)
    for path in suite_files(suite_dir):
        try:
            bench_scenario(path, repeats, result)
        except (PlanningError, ScenarioError) as exc:
            log.error("%s: %s", path.name, exc)
            result.errors[path.stem] = str(exc)
    result.summaries.sort(key=lambda s: s.scenario_id)
    return result
