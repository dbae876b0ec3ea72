"""Best-first branch-and-bound over the binary set of a MIQP.

Nodes are ordered by their convex relaxation bound; branching picks the most
fractional binary (|v - 0.5| minimal, ties to the lowest index). Everything
is deterministic: identical problems and limits reproduce identical node
counts and solutions (time limits excepted). A brute-force enumerator over
all binary patterns serves as the testing oracle for small instances.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, StepPlanError
from .formulation import MiqpProblem
from .qp import BoxQp, QpSettings

INT_TOL = 1e-5
PRUNE_EPS = 1e-9
OPTIMAL_GAP = 1e-4
BRUTE_FORCE_MAX_BINARIES = 20


@dataclass(frozen=True)
class MiqpLimits:
    gap: float = 1e-4
    max_nodes: int | None = None
    time_limit: float | None = None
    heuristic_interval: int = 8  # rounding heuristic every k popped nodes (0 = off)
    dive_rounds: int = 6  # partial-fix re-solves when one-shot rounding fails


@dataclass(frozen=True)
class BnbNode:
    """A subtree: partial binary fixings plus the relaxation bound proving it."""

    fixings: dict[int, float]
    bound: float
    depth: int


@dataclass
class MiqpSolution:
    """Incumbent (exactly integral binaries) plus solve statistics."""

    x: np.ndarray | None
    objective: float
    status: str  # "optimal" | "gap-limit" | "infeasible" | "node-limit" | "time-limit"
    gap: float
    nodes: int
    wall_time: float
    best_bound: float
    refix_solves: int = 0

    @property
    def feasible(self) -> bool:
        return self.x is not None


def _relative_gap(incumbent: float, bound: float) -> float:
    if not math.isfinite(incumbent):
        return math.inf
    return (incumbent - bound) / max(1.0, abs(incumbent))


def _choice_groups(problem: MiqpProblem) -> list[np.ndarray]:
    """Equality rows of the form sum(binary subset) == 1, used by the rounding heuristic."""
    groups = []
    bins = set(problem.binary_indices.tolist())
    a = problem.a_eq.tocsr()
    for r in range(problem.n_eq):
        if problem.b_eq[r] != 1.0:
            continue
        cols = a.indices[a.indptr[r] : a.indptr[r + 1]]
        vals = a.data[a.indptr[r] : a.indptr[r + 1]]
        if len(cols) and np.all(vals == 1.0) and all(int(c) in bins for c in cols):
            groups.append(np.sort(cols.astype(int)))
    return groups


class _Tree:
    def __init__(
        self,
        problem: MiqpProblem,
        limits: MiqpLimits,
        settings: QpSettings | None,
        rounding=None,
    ):
        self.problem = problem
        self.limits = limits
        self.rounding = rounding
        self.ws = BoxQp.from_miqp(problem, settings)
        lb, ub = problem.lower, problem.upper
        self.free_bins = np.array(
            [i for i in problem.binary_indices if lb[i] < ub[i]], dtype=int
        )
        self.groups = _choice_groups(problem)
        self.incumbent_x: np.ndarray | None = None
        self.incumbent_obj = math.inf
        self.nodes = 0  # relaxation solves of tree nodes
        self.refix_solves = 0  # integral snap + heuristic solves
        self.heap: list[tuple[float, int, BnbNode, np.ndarray]] = []
        self.tick = 0

    def node_solve(self, fixings: dict[int, float], warm=None):
        sol = self.ws.solve(fixings=fixings, warm_start=warm)
        self.nodes += 1
        return sol

    def fractional_var(self, x: np.ndarray, fixings: dict[int, float]) -> int | None:
        best_i, best_d = None, math.inf
        for i in self.free_bins:
            i = int(i)
            if i in fixings:
                continue
            v = x[i]
            if min(abs(v), abs(v - 1.0)) <= INT_TOL:
                continue
            d = abs(v - 0.5)
            if d < best_d - 1e-15:
                best_d, best_i = d, i
        return best_i

    def try_incumbent(self, fixings: dict[int, float]) -> bool:
        """Fix every free binary per ``fixings``, resolve tightly, snap and maybe update."""
        sol = self.ws.solve(fixings=fixings, eps_abs=min(1e-8, self.ws.settings.eps_abs))
        self.refix_solves += 1
        if sol.status != "optimal":
            return False
        x = sol.x.copy()
        x[self.problem.binary_indices] = np.round(x[self.problem.binary_indices])
        obj = self.problem.objective_value(x)
        if obj < self.incumbent_obj - 1e-12:
            self.incumbent_obj = obj
            self.incumbent_x = x
        return True

    def dive(self, x: np.ndarray, fixings: dict[int, float]) -> None:
        """Progressively fix confident choice groups when one-shot rounding fails.

        Each round fixes the groups whose largest indicator is confident (or
        the single most confident group as a fallback), re-solves the
        relaxation and retries the full completions. Bounded by dive_rounds.
        """
        fix = dict(fixings)
        cur = x
        for _ in range(self.limits.dive_rounds):
            confident: dict[int, float] = {}
            best_group = None
            best_conf = -1.0
            for g in self.groups:
                free = [int(i) for i in g if int(i) not in fix]
                if not free or any(fix.get(int(i), 0.0) == 1.0 for i in g):
                    continue
                pick = max(free, key=lambda i: (cur[i], -i))
                conf = float(cur[pick])
                assignment = {i: (1.0 if i == pick else 0.0) for i in free}
                if conf >= 0.65:
                    confident.update(assignment)
                if conf > best_conf:
                    best_conf = conf
                    best_group = assignment
            if not confident:
                if best_group is None:
                    return
                confident = best_group
            fix.update(confident)
            sol = self.ws.solve(fixings=fix)
            self.refix_solves += 1
            if sol.status == "infeasible":
                return
            cur = sol.x
            done = False
            for cand in self.rounding_candidates(cur, fix):
                if self.try_incumbent(cand):
                    done = True
            if done:
                return

    def rounding_candidates(self, x: np.ndarray, fixings: dict[int, float]) -> list[dict[int, float]]:
        """Deterministic integral completions to try as incumbents.

        A model-aware ``rounding`` hook replaces the generic rule when given;
        it may propose several candidates."""
        if self.rounding is not None:
            cands = []
            for cand in self.rounding(x, fixings):
                out = dict(cand)
                for i in self.free_bins:
                    out.setdefault(int(i), 1.0 if x[int(i)] > 0.5 else 0.0)
                cands.append(out)
            return cands
        return [self._generic_rounding(x, fixings)]

    def _generic_rounding(self, x: np.ndarray, fixings: dict[int, float]) -> dict[int, float]:
        """Argmax within choice groups, threshold elsewhere."""
        out = dict(fixings)
        for g in self.groups:
            free = [int(i) for i in g if int(i) not in fixings]
            if not free:
                continue
            if any(fixings.get(int(i), 0.0) == 1.0 for i in g):
                for i in free:
                    out[i] = 0.0
                continue
            pick = max(free, key=lambda i: (x[i], -i))
            for i in free:
                out[i] = 1.0 if i == pick else 0.0
        for i in self.free_bins:
            i = int(i)
            if i not in out:
                out[i] = 1.0 if x[i] > 0.5 else 0.0
        return out

    def result(self, status: str | None, t0: float) -> MiqpSolution:
        wall = time.perf_counter() - t0
        if self.heap:
            best_bound = min(self.heap[0][0], self.incumbent_obj)
        else:
            best_bound = self.incumbent_obj
        if self.incumbent_x is None:
            status = status or "infeasible"
            return MiqpSolution(
                None, math.inf, status, math.inf, self.nodes, wall,
                best_bound if self.heap else math.inf, self.refix_solves,
            )
        gap = max(_relative_gap(self.incumbent_obj, best_bound), 0.0)
        if status is None:
            status = "optimal" if gap <= OPTIMAL_GAP else "gap-limit"
        return MiqpSolution(
            self.incumbent_x, self.incumbent_obj, status, gap,
            self.nodes, wall, best_bound, self.refix_solves,
        )

    def run(self) -> MiqpSolution:
        t0 = time.perf_counter()
        limits = self.limits
        root = self.node_solve({}, warm="cold")
        if root.status == "infeasible":
            return self.result("infeasible", t0)
        if self.free_bins.size == 0:
            x = root.x.copy()
            x[self.problem.binary_indices] = np.round(x[self.problem.binary_indices])
            self.incumbent_x = x
            self.incumbent_obj = self.problem.objective_value(x)
            return self.result(None, t0)
        var = self.fractional_var(root.x, {})
        for cand in self.rounding_candidates(root.x, {}):
            self.try_incumbent(cand)
        root_gap = _relative_gap(self.incumbent_obj, root.objective)
        if (
            var is not None
            and limits.dive_rounds > 0
            and root_gap > max(3.0 * limits.gap, 0.02)
        ):
            self.dive(root.x, {})
        if var is not None:
            # ties on the bound pop newest-first: equal-bound plateaus are
            # traversed depth-first instead of exhaustively breadth-first
            node = BnbNode(fixings={}, bound=root.objective, depth=0)
            heapq.heappush(self.heap, (node.bound, -self.tick, node, root.x))
            self.tick += 1

        status = None
        pops = 0
        while self.heap:
            gap = _relative_gap(self.incumbent_obj, self.heap[0][0])
            if gap <= limits.gap:
                status = "optimal" if gap <= OPTIMAL_GAP else "gap-limit"
                break
            if limits.max_nodes is not None and self.nodes >= limits.max_nodes:
                status = "node-limit"
                break
            if limits.time_limit is not None and time.perf_counter() - t0 > limits.time_limit:
                status = "time-limit"
                break
            bound, _, node, x = heapq.heappop(self.heap)
            if bound >= self.incumbent_obj - PRUNE_EPS:
                self.heap.clear()  # best-first: all remaining nodes are prunable
                break
            pops += 1
            fixings = node.fixings
            var = self.fractional_var(x, fixings)
            if var is None:
                for cand in self.rounding_candidates(x, fixings):
                    self.try_incumbent(cand)
                continue
            for val in (0.0, 1.0):
                child_fix = dict(fixings)
                child_fix[var] = val
                sol = self.node_solve(child_fix, warm=x)
                if sol.status == "infeasible":
                    continue
                if sol.status == "max-iterations":
                    # unresolved relaxation: inherit the parent bound (still valid)
                    child_bound = bound
                else:
                    child_bound = max(sol.objective, bound)
                if child_bound >= self.incumbent_obj - PRUNE_EPS:
                    continue
                child_var = self.fractional_var(sol.x, child_fix)
                if child_var is None:
                    for cand in self.rounding_candidates(sol.x, child_fix):
                        self.try_incumbent(cand)
                    continue
                child = BnbNode(fixings=child_fix, bound=child_bound, depth=node.depth + 1)
                heapq.heappush(self.heap, (child.bound, -self.tick, child, sol.x))
                self.tick += 1
            if limits.heuristic_interval and pops % limits.heuristic_interval == 0:
                for cand in self.rounding_candidates(x, fixings):
                    self.try_incumbent(cand)
        return self.result(status, t0)


def solve_miqp(
    problem: MiqpProblem,
    limits: MiqpLimits | None = None,
    settings: QpSettings | None = None,
    rounding=None,
) -> MiqpSolution:
    """Solve a MIQP by best-first branch-and-bound over its binary variables.

    ``rounding`` is an optional model-aware completion hook
    ``fn(x, fixings) -> fixings`` used by the incumbent heuristic.
    """
    return _Tree(problem, limits or MiqpLimits(), settings, rounding=rounding).run()


def brute_force_solve(
    problem: MiqpProblem, settings: QpSettings | None = None
) -> MiqpSolution:
    """Enumerate every assignment of the free binaries and keep the best QP.

    Exact up to QP tolerance; refuses more than BRUTE_FORCE_MAX_BINARIES free
    binaries.
    """
    t0 = time.perf_counter()
    lb, ub = problem.lower, problem.upper
    free = [int(i) for i in problem.binary_indices if lb[i] < ub[i]]
    if len(free) > BRUTE_FORCE_MAX_BINARIES:
        raise ContractViolation(
            f"brute force refused: {len(free)} free binaries exceeds {BRUTE_FORCE_MAX_BINARIES}"
        )
    ws = BoxQp.from_miqp(problem, settings)
    best_x = None
    best_obj = math.inf
    solves = 0
    for pattern in itertools.product((0.0, 1.0), repeat=len(free)):
        fixings = dict(zip(free, pattern))
        sol = ws.solve(fixings=fixings)
        solves += 1
        if sol.status == "max-iterations":
            # warm start may stall near an infeasible pattern; retry cold
            sol = ws.solve(fixings=fixings, warm_start="cold", max_iter=3 * ws.settings.max_iter)
            solves += 1
        if sol.status == "infeasible":
            continue
        if sol.status != "optimal":
            raise StepPlanError(
                f"brute force relaxation did not converge for pattern {pattern}"
            )
        x = sol.x.copy()
        x[problem.binary_indices] = np.round(x[problem.binary_indices])
        obj = problem.objective_value(x)
        if obj < best_obj - 1e-12:
            best_obj = obj
            best_x = x
    wall = time.perf_counter() - t0
    if best_x is None:
        return MiqpSolution(None, math.inf, "infeasible", math.inf, solves, wall, math.inf)
    return MiqpSolution(best_x, best_obj, "optimal", 0.0, solves, wall, best_obj)
