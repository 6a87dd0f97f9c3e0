"""Command-line interface: ``asapf plan|simulate|bench|validate``.

Exit status is 0 on success, 2 on a planning failure and 3 on a
configuration or scenario error. ``ASAPF_LOG_LEVEL`` sets log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .bench import bench
from .errors import PlanningError, ScenarioError
from .planner import MODES, plan_cycle
from .scenario import bundled_scenario, load_json, load_scenario, snapshot, validate
from .simulation import write_csv
from .trajectory import COLUMNS

EXIT_OK = 0
EXIT_PLANNING = 2
EXIT_CONFIG = 3

log = logging.getLogger("asapf")


def _scenario_path(arg: str) -> Path:
    p = Path(arg)
    if p.exists() or p.suffix == ".json":
        return p
    return bundled_scenario(arg)


def _emit_plot_data(out: Path, details: dict) -> None:
    avg, ada = details["average"], details["adaptive"]
    rows = []
    for i, (La, Lb) in enumerate(zip(avg.sl_grid.layers, ada.sl_grid.layers)):
        on_avg = avg.sl_result.nodes[i + 1].row
        on_ada = ada.sl_result.nodes[i + 1].row
        for r, l in enumerate(La.rows):
            rows.append([i, La.coord, l, Lb.cost[r], int(Lb.retained[r]), int(r == on_avg), int(r == on_ada)])
    write_csv(
        out / "sl_comparison.csv",
        ["layer", "s", "l", "apf_cost", "retained_adaptive", "dp_average", "dp_adaptive"],
        rows,
    )
    from .dp_planner import sl_profile

    s = ada.path.s
    write_csv(
        out / "path_performance.csv",
        ["s", "l_dp_average", "l_dp_adaptive", "l_qp", "dl_qp", "ddl_qp", "lb", "ub"],
        np.column_stack(
            [
                s,
                sl_profile(avg.sl_result, s),
                sl_profile(ada.sl_result, s),
                ada.path.l,
                ada.path.dl,
                ada.path.ddl,
                ada.corridor.lb,
                ada.corridor.ub,
            ]
        ),
    )
    rows = []
    for i, (La, Lb) in enumerate(zip(avg.st_grid.layers, ada.st_grid.layers)):
        on_avg = avg.st_result.nodes[i + 1].row
        on_ada = ada.st_result.nodes[i + 1].row
        for r, sv in enumerate(La.rows):
            rows.append([La.coord, sv, int(Lb.retained[r]), int(r == on_avg), int(r == on_ada)])
    write_csv(out / "st_comparison.csv", ["t", "s", "retained_pruned", "dp_average", "dp_adaptive"], rows)
    sp = ada.speed
    write_csv(out / "speed_profile.csv", ["t", "s", "v", "a"], np.column_stack([sp.t, sp.s, sp.v, sp.a]))


def cmd_plan(args) -> int:
    scn = load_scenario(_scenario_path(args.scenario))
    snap = snapshot(scn, 0.0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    modes = MODES if args.emit_plot_data else (args.mode,)
    details = {}
    for mode in modes:
        traj, rec, info = plan_cycle(snap, scn.ego, None, mode, detail=True)
        details[mode] = info
        if mode == args.mode:
            write_csv(out / "trajectory.csv", COLUMNS, traj.as_array())
            with open(out / "record.json", "w", encoding="utf-8") as fh:
                json.dump(rec.as_dict(), fh, indent=2)
                fh.write("\n")
            print(
                f"{scn.id} [{mode}] expansions={rec.dp_expansions} dp_cost={rec.dp_cost:.4f} "
                f"cycle={rec.cycle_elapsed / 1e6:.1f} ms"
            )
    if args.emit_plot_data:
        _emit_plot_data(out, details)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .simulation import simulate

    scn = load_scenario(_scenario_path(args.scenario))
    res = simulate(scn, args.mode, args.duration)
    res.write(args.out, trajectories=not args.no_trajectories)
    t_end = res.log[-1, 0] if len(res.log) else 0.0
    print(f"{scn.id} [{args.mode}] simulated {t_end:.3f} s in {len(res.records)} cycles")
    if res.failure is not None:
        print(f"error: {res.failure}", file=sys.stderr)
        return EXIT_PLANNING
    return EXIT_OK


def cmd_bench(args) -> int:
    res = bench(args.suite, args.repeats)
    res.write(args.out)
    s = res.summary()
    for row in s["per_scenario"]:
        print(
            f"{row['scenario_id']:24s} expansions {row['expansions_adaptive']}/{row['expansions_average']}"
            f"  dp {row['dp_ms_adaptive']:7.2f}/{row['dp_ms_average']:7.2f} ms"
            f"  cycle {row['cycle_ms_adaptive']:6.1f} ms  cost diff {100 * row['cost_rel_diff']:.2f}%"
        )
    if res.summaries:
        print(
            f"median SL-DP reduction {100 * s['median_dp_reduction']:.1f}%, "
            f"expansion ratios {', '.join(s['expansion_ratios'])}"
        )
    if res.errors:
        for k, v in sorted(res.errors.items()):
            print(f"error: {k}: {v}", file=sys.stderr)
        return EXIT_PLANNING
    return EXIT_OK


def cmd_validate(args) -> int:
    path = _scenario_path(args.scenario)
    validate(load_json(path))
    load_scenario(path)
    print(f"{path}: ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="asapf", description="Frenet-frame path/speed planner toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="run one planning cycle")
    p.add_argument("--scenario", required=True, help="scenario file or bundled scenario name")
    p.add_argument("--mode", choices=MODES, default="adaptive")
    p.add_argument("--out", required=True)
    p.add_argument("--emit-plot-data", action="store_true", help="also write per-figure CSVs")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="closed-loop simulation")
    p.add_argument("--scenario", required=True)
    p.add_argument("--duration", type=float, default=None, help="seconds (default: from the scenario)")
    p.add_argument("--mode", choices=MODES, default="adaptive")
    p.add_argument("--out", required=True)
    p.add_argument("--no-trajectories", action="store_true", help="skip the per-cycle trajectory CSVs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="adaptive vs uniform sampling benchmark")
    p.add_argument("--suite", required=True)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate", help="schema check of a scenario file")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("ASAPF_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PlanningError as exc:
        print(f"planning failed: {exc}", file=sys.stderr)
        return EXIT_PLANNING
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
