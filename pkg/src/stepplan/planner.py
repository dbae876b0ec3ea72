"""Chunked end-to-end planning and exact-geometry plan validation.

Long horizons are solved as consecutive chunks of ``chunk_multiplier * n_legs``
steps; each chunk starts from the previous chunk's final stance (handed off
bitwise) with the yaw linearization range re-centered on the handoff yaw, so
cumulative rotation can exceed a single chunk's range. Trailing
configurations that are trimmed and do not move any foot are padding and are
dropped from the concatenated plan; the arrival configuration (trimmed but
moving) is kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bnb import MiqpLimits, MiqpSolution, solve_miqp
from .errors import ContractViolation, PlanningError
from .formulation import MiqpProblem, assemble, make_rounding_heuristic
from .model import (
    Footstep,
    Scenario,
    coc,
    config_of,
    derive_leg_goals,
    leg_of,
    nominal_position,
    wrap_angle,
)
from .qp import QpSettings


@dataclass(frozen=True)
class ChunkRecord:
    """One solved chunk: enough context to re-assemble and re-validate it."""

    index: int
    start_footholds: np.ndarray
    start_yaw: float
    theta_range: tuple[float, float]
    n_segments: int
    chunk_steps: int
    kept_count: int
    n_variables: int
    n_binaries: int
    scenario: Scenario | None = None
    solution: MiqpSolution | None = None
    nodes: int = 0
    gap: float = 0.0
    objective: float = 0.0
    status: str = ""
    solve_time: float = 0.0


@dataclass(frozen=True)
class FootstepPlan:
    """Concatenated footsteps plus per-chunk statistics and convergence record."""

    steps: tuple[Footstep, ...]
    chunks: tuple[ChunkRecord, ...]
    converged: bool
    termination: str  # "goal" | "no-progress" | "max-steps"
    coc_error: float
    yaw_error: float

    @property
    def n_steps(self) -> int:
        return len(self.steps)


def _extract_chunk_steps(problem: MiqpProblem, x: np.ndarray, scenario: Scenario) -> list[Footstep]:
    layout = problem.layout
    n = scenario.robot.n_legs
    steps = []
    for i in range(1, scenario.max_steps + 1):
        cfg = config_of(i, n)
        region_name = None
        for r in range(1, len(scenario.regions) + 1):
            if x[layout.region(i, r)] > 0.5:
                region_name = scenario.regions[r - 1].name
                break
        steps.append(
            Footstep(
                x=float(x[layout.foot(i, 0)]),
                y=float(x[layout.foot(i, 1)]),
                z=float(x[layout.foot(i, 2)]),
                theta=float(x[layout.theta(cfg)]),
                leg=leg_of(i, n),
                trimmed=bool(x[layout.trim(i)] > 0.5),
                region=region_name,
            )
        )
    return steps


def _drop_standing_tail(
    steps: list[Footstep], start_holds: np.ndarray, n_legs: int, tol: float = 1e-7
) -> list[Footstep]:
    """Drop trailing configurations that are trimmed and keep every foot in place."""
    n_cfg = len(steps) // n_legs
    kept = n_cfg
    while kept > 0:
        block = steps[(kept - 1) * n_legs : kept * n_legs]
        if not all(s.trimmed for s in block):
            break
        if kept == 1:
            prev = {j + 1: start_holds[j] for j in range(n_legs)}
        else:
            prev_block = steps[(kept - 2) * n_legs : (kept - 1) * n_legs]
            prev = {s.leg: s.xyz() for s in prev_block}
        if any(np.max(np.abs(s.xyz() - prev[s.leg])) > tol for s in block):
            break
        kept -= 1
    return steps[: kept * n_legs]


#: Chunks are solved to this relative optimality gap by default, with a node
#: cap as a deterministic stop for the big-M bound tail. Plan feasibility is
#: always exact; these limits only affect step placement quality.
DEFAULT_CHUNK_GAP = 0.01
DEFAULT_CHUNK_NODES = 4


def plan(
    scenario: Scenario,
    chunk_multiplier: int = 4,
    limits: MiqpLimits | None = None,
    settings: QpSettings | None = None,
    goal_tol: float = 0.05,
    yaw_tol: float = 0.05,
    progress_tol: float = 0.01,
) -> FootstepPlan:
    """Plan footsteps from the scenario start to its goal by chunked solves.

    Terminates when the CoC and yaw reach the goal within the tolerances,
    when a chunk fails to make ``progress_tol`` of progress, or when the
    scenario's step budget is exhausted. Raises PlanningError if a chunk is
    infeasible or hits solver limits without any feasible incumbent.
    """
    robot = scenario.robot
    n = robot.n_legs
    chunk_steps = chunk_multiplier * n
    if chunk_steps <= 0 or chunk_steps > scenario.max_steps:
        raise ContractViolation(
            f"chunk of {chunk_steps} steps does not fit max_steps {scenario.max_steps}"
        )
    if limits is None:
        limits = MiqpLimits(gap=DEFAULT_CHUNK_GAP, max_nodes=DEFAULT_CHUNK_NODES)
    width = scenario.theta_range[1] - scenario.theta_range[0]
    goal_xy = scenario.goal_position[:2]

    cur_holds = np.array(scenario.start_footholds, dtype=float)
    cur_yaw = float(scenario.start_yaw)
    cur_range = scenario.theta_range
    steps: list[Footstep] = []
    chunks: list[ChunkRecord] = []

    dist = float(np.linalg.norm(coc(cur_holds) - goal_xy))
    yaw_err = abs(wrap_angle(cur_yaw - scenario.goal_yaw))
    if dist <= goal_tol and yaw_err <= yaw_tol:
        return FootstepPlan((), (), True, "goal", dist, yaw_err)

    converged = False
    termination = "max-steps"
    used = 0
    index = 0
    while used + chunk_steps <= scenario.max_steps:
        chunk_scn = scenario.with_overrides(
            start_footholds=cur_holds,
            start_yaw=cur_yaw,
            max_steps=chunk_steps,
            theta_range=cur_range,
            name=f"{scenario.name}#chunk{index}",
        )
        problem = assemble(chunk_scn)
        rounding = make_rounding_heuristic(chunk_scn, problem)
        sol = solve_miqp(problem, limits=limits, settings=settings, rounding=rounding)
        if sol.status == "infeasible":
            raise PlanningError(
                f"chunk {index} is infeasible", index, chunk_scn, reason="infeasible"
            )
        if not sol.feasible:
            raise PlanningError(
                f"chunk {index} hit solver limits ({sol.status}) with no feasible plan",
                index,
                chunk_scn,
                reason="limits",
            )
        chunk_all = _extract_chunk_steps(problem, sol.x, chunk_scn)
        kept = _drop_standing_tail(chunk_all, cur_holds, n)
        chunks.append(
            ChunkRecord(
                index=index,
                start_footholds=cur_holds,
                start_yaw=cur_yaw,
                theta_range=cur_range,
                n_segments=scenario.n_segments,
                chunk_steps=chunk_steps,
                kept_count=len(kept),
                n_variables=problem.n_vars,
                n_binaries=len(problem.binary_indices),
                scenario=chunk_scn,
                solution=sol,
                nodes=sol.nodes,
                gap=sol.gap,
                objective=sol.objective,
                status=sol.status,
                solve_time=sol.wall_time,
            )
        )
        steps.extend(kept)
        used += chunk_steps
        index += 1
        if kept:
            tail = kept[-n:]
            new_holds = np.empty((n, 3))
            for s in tail:
                new_holds[s.leg - 1] = s.xyz()
            cur_holds = new_holds
            cur_yaw = tail[-1].theta
        new_dist = float(np.linalg.norm(coc(cur_holds) - goal_xy))
        yaw_err = abs(wrap_angle(cur_yaw - scenario.goal_yaw))
        if new_dist <= goal_tol and yaw_err <= yaw_tol:
            converged = True
            termination = "goal"
            dist = new_dist
            break
        if dist - new_dist < progress_tol:
            termination = "no-progress"
            dist = new_dist
            break
        dist = new_dist
        cur_range = (cur_yaw - 0.5 * width, cur_yaw + 0.5 * width)
    return FootstepPlan(
        tuple(steps), tuple(chunks), converged, termination, dist, yaw_err
    )


# --------------------------------------------------------------------------
# exact-geometry validation


@dataclass(frozen=True)
class PlanIssue:
    family: str
    chunk: int
    step: int  # 1-based within the chunk (0 for chunk-level issues)
    amount: float
    allowed: float
    detail: str


@dataclass(frozen=True)
class PlanValidationReport:
    issues: tuple[PlanIssue, ...]
    family_worst: dict[str, float]

    @property
    def ok(self) -> bool:
        return not self.issues

    def summary(self) -> str:
        lines = [f"plan validation: {len(self.issues)} issue(s)"]
        for fam in sorted(self.family_worst):
            lines.append(f"  {fam:<14} worst={self.family_worst[fam]:.3e}")
        for iss in self.issues[:20]:
            lines.append(
                f"  [{iss.family}] chunk {iss.chunk} step {iss.step}: "
                f"{iss.amount:.3e} > {iss.allowed:.3e} ({iss.detail})"
            )
        return "\n".join(lines)


def validate_plan(plan_obj: FootstepPlan, scenario: Scenario) -> PlanValidationReport:
    """Re-check a plan against the exact (non-linearized) geometry.

    Geometric and reachability boxes are widened by the worst-case chord
    error of the trig approximation (h^2/8 scaled by leg reach); region
    membership, height changes, yaw sharing and trim pins are checked at
    fixed tolerances.
    """
    robot = scenario.robot
    n = robot.n_legs
    issues: list[PlanIssue] = []
    worst: dict[str, float] = {
        f: 0.0 for f in ("geometric", "reachability", "dz", "region", "yaw-sharing", "trim")
    }

    def note(family, chunk, step, amount, allowed, detail):
        worst[family] = max(worst[family], amount)
        if amount > allowed:
            issues.append(PlanIssue(family, chunk, step, amount, allowed, detail))

    goals = derive_leg_goals(scenario.goal_position, scenario.goal_yaw, robot)
    regions = {r.name: r for r in scenario.regions}
    offset = 0
    for chunk in plan_obj.chunks:
        kept = plan_obj.steps[offset : offset + chunk.kept_count]
        offset += chunk.kept_count
        start = np.asarray(chunk.start_footholds, dtype=float)
        table_h = (chunk.theta_range[1] - chunk.theta_range[0]) / chunk.n_segments
        chord_err = table_h * table_h / 8.0
        start_coc = coc(start)

        def foot_at(k: int) -> np.ndarray:
            if k >= 1:
                return kept[k - 1].xyz()
            leg = (k - 1) % n + 1
            return start[leg - 1]

        if chunk.kept_count % n != 0:
            note("yaw-sharing", chunk.index, 0, float(chunk.kept_count % n), 0.0,
                 "steps not grouped in complete configurations")
            continue
        for i in range(1, chunk.kept_count + 1):
            step = kept[i - 1]
            leg = leg_of(i, n)
            cfg_first = kept[(config_of(i, n) - 1) * n]
            phi = robot.leg_offsets[leg - 1]
            slack = robot.l_leg * (abs(math.cos(phi)) + abs(math.sin(phi))) * chord_err

            note("yaw-sharing", chunk.index, i, abs(step.theta - cfg_first.theta), 1e-9,
                 "yaw differs within configuration")
            below = chunk.theta_range[0] - step.theta
            above = step.theta - chunk.theta_range[1]
            note("yaw-sharing", chunk.index, i, max(below, above, 0.0), 1e-9,
                 "yaw outside the chunk range")
            if step.leg != leg:
                note("yaw-sharing", chunk.index, i, 1.0, 0.0, "leg out of cyclic order")

            # reference box around the linearized nominal position, checked exactly
            if scenario.coc_convention == "include-current":
                window = range(i - n + 1, i + 1)
            else:
                window = range(i - n + 1, i)
            p_i = np.mean([foot_at(k)[:2] for k in window], axis=0)
            r_nom = nominal_position(p_i, step.theta, leg, robot)
            dev = float(np.max(np.abs(step.xy() - r_nom)))
            note("geometric", chunk.index, i, dev, robot.l_bnd + slack + 1e-9,
                 f"leg {leg} outside reference box")

            # reachability from the previous placement of the same leg
            prev = i - n
            if prev >= 1:
                prev_step = kept[prev - 1]
                if scenario.coc_convention == "include-current":
                    pwindow = range(prev - n + 1, prev + 1)
                else:
                    pwindow = range(prev - n + 1, prev)
                p_prev = np.mean([foot_at(k)[:2] for k in pwindow], axis=0)
                anchor = nominal_position(p_prev, prev_step.theta, leg, robot)
                prev_z = prev_step.z
            else:
                anchor = nominal_position(start_coc, chunk.start_yaw, leg, robot)
                prev_z = start[leg - 1][2]
            dev = float(np.max(np.abs(step.xy() - anchor)))
            note("reachability", chunk.index, i, dev, robot.d_lim + slack + 1e-9,
                 f"leg {leg} outside reachability box")
            note("dz", chunk.index, i, abs(step.z - prev_z), robot.dz_max + 1e-9,
                 f"leg {leg} height change")

            if step.region is None:
                note("region", chunk.index, i, math.inf, 0.0, "no region assigned")
            else:
                reg = regions.get(step.region)
                if reg is None:
                    note("region", chunk.index, i, math.inf, 0.0,
                         f"unknown region {step.region!r}")
                else:
                    note("region", chunk.index, i, max(reg.violation(step.xyz()), 0.0),
                         1e-6, f"outside region {step.region!r}")

            if step.trimmed:
                dev = float(np.max(np.abs(step.xyz() - goals[leg - 1])))
                note("trim", chunk.index, i, dev, 1e-6, f"trimmed leg {leg} off its goal")
    return PlanValidationReport(tuple(issues), worst)
