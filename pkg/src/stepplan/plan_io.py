"""Plan file reading and writing.

Plan files are JSON documents carrying the concatenated footsteps, enough
per-chunk context (start stance, yaw range) to re-validate the plan against
exact geometry, and solver statistics. Solve times are written as null by
default so identical runs produce byte-identical files; pass
``include_timings=True`` for measured wall times.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ScenarioParseError
from .model import Footstep, Scenario
from .planner import ChunkRecord, FootstepPlan

PLAN_VERSION = 1


def plan_to_dict(plan: FootstepPlan, scenario: Scenario, include_timings: bool = False) -> dict:
    robot = scenario.robot
    return {
        "version": PLAN_VERSION,
        "scenario": scenario.name,
        "robot": {
            "n_legs": robot.n_legs,
            "leg_offsets": list(robot.leg_offsets),
            "l_leg": robot.l_leg,
            "l_bnd": robot.l_bnd,
            "d_lim": robot.d_lim,
            "dz_max": robot.dz_max,
        },
        "convergence": {
            "converged": plan.converged,
            "termination": plan.termination,
            "coc_error": plan.coc_error,
            "yaw_error": plan.yaw_error,
        },
        "steps": [
            {
                "index": i + 1,
                "leg": s.leg,
                "x": s.x,
                "y": s.y,
                "z": s.z,
                "theta": s.theta,
                "region": s.region,
                "trimmed": s.trimmed,
            }
            for i, s in enumerate(plan.steps)
        ],
        "chunks": [
            {
                "index": c.index,
                "start_footholds": [list(map(float, p)) for p in c.start_footholds],
                "start_yaw": c.start_yaw,
                "theta_range": list(c.theta_range),
                "n_segments": c.n_segments,
                "chunk_steps": c.chunk_steps,
                "kept": c.kept_count,
                "variables": c.n_variables,
                "binaries": c.n_binaries,
                "nodes": c.nodes,
                "gap": c.gap,
                "objective": c.objective,
                "status": c.status,
                "time_s": round(c.solve_time, 3) if include_timings else None,
            }
            for c in plan.chunks
        ],
    }


def plan_to_json(plan: FootstepPlan, scenario: Scenario, include_timings: bool = False) -> str:
    return json.dumps(plan_to_dict(plan, scenario, include_timings), indent=2, sort_keys=True) + "\n"


def save_plan(plan: FootstepPlan, scenario: Scenario, path, include_timings: bool = False) -> None:
    Path(path).write_text(plan_to_json(plan, scenario, include_timings))


def _need(doc: dict, key: str, path: str):
    if key not in doc:
        raise ScenarioParseError(f"missing key {key!r}", path)
    return doc[key]


def plan_from_dict(doc: dict, scenario: Scenario, source: str = "") -> FootstepPlan:
    """Rebuild a FootstepPlan (without solver state) and cross-check the robot block."""
    if _need(doc, "version", source) != PLAN_VERSION:
        raise ScenarioParseError(f"unsupported plan version {doc['version']!r}", source)
    rb = _need(doc, "robot", source)
    robot = scenario.robot
    same = (
        rb.get("n_legs") == robot.n_legs
        and np.allclose(rb.get("leg_offsets", []), robot.leg_offsets)
        and np.isclose(rb.get("l_leg", -1), robot.l_leg)
    )
    if not same:
        raise ScenarioParseError("plan robot block does not match the scenario robot", source)
    steps = []
    for i, s in enumerate(_need(doc, "steps", source)):
        steps.append(
            Footstep(
                x=float(s["x"]), y=float(s["y"]), z=float(s["z"]),
                theta=float(s["theta"]), leg=int(s["leg"]),
                trimmed=bool(s["trimmed"]), region=s.get("region"),
            )
        )
    chunks = []
    for c in _need(doc, "chunks", source):
        chunks.append(
            ChunkRecord(
                index=int(c["index"]),
                start_footholds=np.array(c["start_footholds"], dtype=float),
                start_yaw=float(c["start_yaw"]),
                theta_range=(float(c["theta_range"][0]), float(c["theta_range"][1])),
                n_segments=int(c["n_segments"]),
                chunk_steps=int(c["chunk_steps"]),
                kept_count=int(c["kept"]),
                n_variables=int(c["variables"]),
                n_binaries=int(c["binaries"]),
                nodes=int(c["nodes"]),
                gap=float(c["gap"]),
                objective=float(c["objective"]),
                status=c["status"],
                solve_time=float(c["time_s"]) if c.get("time_s") is not None else 0.0,
            )
        )
    if sum(c.kept_count for c in chunks) != len(steps):
        raise ScenarioParseError("chunk kept counts do not match the step list", source)
    if len(steps) % robot.n_legs != 0:
        raise ScenarioParseError("steps are not grouped in complete configurations", source)
    for i, s in enumerate(steps):
        if s.leg != i % robot.n_legs + 1:
            raise ScenarioParseError(f"step {i + 1} breaks the cyclic leg order", source)
    conv = _need(doc, "convergence", source)
    return FootstepPlan(
        steps=tuple(steps),
        chunks=tuple(chunks),
        converged=bool(conv["converged"]),
        termination=conv["termination"],
        coc_error=float(conv["coc_error"]),
        yaw_error=float(conv["yaw_error"]),
    )


def load_plan(path, scenario: Scenario) -> FootstepPlan:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ScenarioParseError(f"cannot read file: {exc}", str(path)) from exc
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"invalid JSON: {exc}", str(path)) from exc
    return plan_from_dict(doc, scenario, source=str(path))
