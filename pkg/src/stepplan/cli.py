"""Command-line interface: plan, bench, validate, export-mip.

Exit codes: 0 ok, 2 parse/configuration error, 3 infeasible, 4 not
converged, 5 solver limits hit without a usable plan.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .bnb import MiqpLimits, solve_miqp
from .errors import (
    ConfigurationError,
    ContractViolation,
    InfeasibleScenarioError,
    PlanningError,
    ScenarioParseError,
    StepPlanError,
)
from .formulation import assemble, make_rounding_heuristic
from .lp_export import save_lp
from .plan_io import load_plan, save_plan
from .planner import DEFAULT_CHUNK_GAP, DEFAULT_CHUNK_NODES, plan, validate_plan
from .scenario_io import load_scenario
from .svg import render_plan_svg

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_NOT_CONVERGED = 4
EXIT_LIMITS = 5

#: Mixed-integer variable counts reported for 12/24/36 steps by an external
#: baseline implementation of this formulation (solver- and scenario-config
#: dependent; printed for reference, never asserted).
BENCH_REFERENCE = {12: 312, 24: 552, 36: 828}


def _load(path: str):
    try:
        return load_scenario(path)
    except (ScenarioParseError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_PARSE)


def cmd_plan(args) -> int:
    scenario = _load(args.scenario)
    limits = MiqpLimits(
        gap=args.gap,
        max_nodes=args.node_limit,
        time_limit=args.time_limit,
    )
    try:
        result = plan(scenario, chunk_multiplier=args.chunk, limits=limits)
    except PlanningError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LIMITS if exc.reason == "limits" else EXIT_INFEASIBLE
    except InfeasibleScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if args.output:
        save_plan(result, scenario, args.output, include_timings=args.timings)
    if args.svg:
        Path(args.svg).write_text(render_plan_svg(result, scenario))
    state = "converged" if result.converged else f"not converged ({result.termination})"
    report = validate_plan(result, scenario)
    print(
        f"{scenario.name}: {state}, {result.n_steps} steps in {len(result.chunks)} chunk(s), "
        f"final CoC error {result.coc_error:.3f} m, yaw error {result.yaw_error:.3f} rad, "
        f"validation {'clean' if report.ok else f'{len(report.issues)} issue(s)'}"
    )
    for c in result.chunks:
        print(
            f"  chunk {c.index}: {c.status}, objective {c.objective:.3f}, gap {c.gap:.4f}, "
            f"{c.nodes} nodes, kept {c.kept_count}/{c.chunk_steps} steps"
        )
    if not report.ok:
        print(report.summary(), file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_bench(args) -> int:
    scenario = _load(args.scenario)
    try:
        horizons = [int(h) for h in args.horizons.split(",") if h.strip()]
    except ValueError:
        print("error: --horizons expects a comma-separated integer list", file=sys.stderr)
        return EXIT_PARSE
    if not horizons:
        print("error: --horizons list is empty", file=sys.stderr)
        return EXIT_PARSE
    n = scenario.robot.n_legs
    for h in horizons:
        if h <= 0 or h % n != 0:
            print(f"error: horizon {h} is not a positive multiple of n_legs={n}", file=sys.stderr)
            return EXIT_PARSE
    rows = []
    header = f"{'steps':>6} {'binaries':>9} {'continuous':>11} {'nodes':>6} {'gap':>8} {'time_s':>8} {'status':>11}"
    print(header)
    print("-" * len(header))
    for h in horizons:
        scn = scenario.with_overrides(max_steps=h)
        problem = assemble(scn)
        n_bin = len(problem.binary_indices)
        n_cont = problem.n_vars - n_bin
        limits = MiqpLimits(gap=args.gap, max_nodes=args.node_limit, time_limit=args.time_limit)
        t0 = time.perf_counter()
        sol = solve_miqp(problem, limits=limits, rounding=make_rounding_heuristic(scn, problem))
        elapsed = time.perf_counter() - t0
        gap = sol.gap if sol.feasible else float("inf")
        print(f"{h:>6} {n_bin:>9} {n_cont:>11} {sol.nodes:>6} {gap:>8.4f} {elapsed:>8.2f} {sol.status:>11}")
        rows.append((h, n_bin, n_cont, sol.nodes, gap, elapsed, sol.status))
    ref = ", ".join(f"{k}:{v}" for k, v in sorted(BENCH_REFERENCE.items()))
    print(f"# external baseline mixed-integer variable counts for comparison: {ref}")
    if args.output:
        lines = ["steps,binaries,continuous,nodes,gap,time_s,status"]
        lines += [
            f"{h},{b},{c},{nd},{g:.6f},{t:.3f},{st}" for h, b, c, nd, g, t, st in rows
        ]
        Path(args.output).write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_validate(args) -> int:
    scenario = _load(args.scenario)
    try:
        loaded = load_plan(args.plan, scenario)
    except ScenarioParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    report = validate_plan(loaded, scenario)
    print(report.summary())
    return EXIT_OK if report.ok else EXIT_INFEASIBLE


def cmd_export_mip(args) -> int:
    scenario = _load(args.scenario)
    if args.horizon is not None:
        if args.horizon <= 0 or args.horizon % scenario.robot.n_legs != 0:
            print("error: --horizon must be a positive multiple of n_legs", file=sys.stderr)
            return EXIT_PARSE
        scenario = scenario.with_overrides(max_steps=args.horizon)
    try:
        problem = assemble(scenario)
    except (InfeasibleScenarioError, ContractViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    save_lp(problem, args.output, name=scenario.name)
    print(
        f"wrote {args.output}: {problem.n_vars} variables "
        f"({len(problem.binary_indices)} binary), {problem.n_ineq} inequalities, "
        f"{problem.n_eq} equalities"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stepplan",
        description="Footstep planning for multilegged robots via mixed-integer QP",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan footsteps for a scenario")
    p.add_argument("scenario")
    p.add_argument("-o", "--output", help="write the plan file here")
    p.add_argument("--svg", help="render the plan to this SVG file")
    p.add_argument("--chunk", type=int, default=4, help="chunk size in configurations (default 4)")
    p.add_argument("--gap", type=float, default=DEFAULT_CHUNK_GAP, help="per-chunk optimality gap")
    p.add_argument("--node-limit", type=int, default=DEFAULT_CHUNK_NODES,
                   help="per-chunk branch-and-bound node cap")
    p.add_argument("--time-limit", type=float, default=None,
                   help="per-chunk wall-clock cap in seconds (breaks determinism)")
    p.add_argument("--timings", action="store_true",
                   help="embed measured solve times in the plan file (breaks determinism)")
    p.set_defaults(func=cmd_plan)

    b = sub.add_parser("bench", help="assemble and solve one problem per horizon")
    b.add_argument("scenario")
    b.add_argument("--horizons", required=True, help="comma-separated step counts, e.g. 12,24,36")
    b.add_argument("-o", "--output", help="write machine-readable CSV here")
    b.add_argument("--gap", type=float, default=DEFAULT_CHUNK_GAP)
    b.add_argument("--node-limit", type=int, default=DEFAULT_CHUNK_NODES)
    b.add_argument("--time-limit", type=float, default=None)
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("validate", help="re-check a plan file against exact geometry")
    v.add_argument("plan")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_validate)

    e = sub.add_parser("export-mip", help="write the assembled problem in LP format")
    e.add_argument("scenario")
    e.add_argument("-o", "--output", required=True)
    e.add_argument("--horizon", type=int, default=None, help="override max_steps")
    e.set_defaults(func=cmd_export_mip)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    except StepPlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
