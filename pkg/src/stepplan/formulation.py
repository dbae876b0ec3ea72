"""Translation of a Scenario into a canonical mixed-integer quadratic program.

The assembled problem minimizes  x' Q x + c' x + const  subject to linear
inequalities, linear equalities, variable bounds and integrality of the
binary index set. Constraint rows carry a family tag (geometric,
reachability, region, trig, trim) so violations can be reported per family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, ContractViolation, InfeasibleScenarioError
from .model import Scenario, coc, derive_leg_goals, leg_of, nominal_position, wrap_angle
from .pwl import PwlTable, build_table

_COMP = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class VariableLayout:
    """Index map of the flat decision vector.

    Order: footstep coordinates (x, y, z per step), yaw / sine / cosine per
    configuration, region binaries (step-major), sine segment binaries
    (configuration-major), cosine segment binaries, trim binaries. Steps,
    configurations, regions, segments and legs are all 1-based here, matching
    the planning domain; returned indices are 0-based positions in the vector.
    """

    n_steps: int
    n_legs: int
    n_regions: int
    n_segments: int

    def __post_init__(self):
        if self.n_steps % self.n_legs != 0:
            raise ContractViolation(
                f"step count {self.n_steps} is not a multiple of n_legs {self.n_legs}"
            )

    @property
    def n_configs(self) -> int:
        return self.n_steps // self.n_legs

    # block starts
    @property
    def _theta0(self) -> int:
        return 3 * self.n_steps

    @property
    def _sin0(self) -> int:
        return self._theta0 + self.n_configs

    @property
    def _cos0(self) -> int:
        return self._sin0 + self.n_configs

    @property
    def _region0(self) -> int:
        return self._cos0 + self.n_configs

    @property
    def _sinseg0(self) -> int:
        return self._region0 + self.n_steps * self.n_regions

    @property
    def _cosseg0(self) -> int:
        return self._sinseg0 + self.n_configs * self.n_segments

    @property
    def _trim0(self) -> int:
        return self._cosseg0 + self.n_configs * self.n_segments

    @property
    def size(self) -> int:
        return self._trim0 + self.n_steps

    @property
    def continuous_count(self) -> int:
        return 3 * self.n_steps + 3 * self.n_configs

    @property
    def binary_count(self) -> int:
        return self.n_steps * self.n_regions + 2 * self.n_configs * self.n_segments + self.n_steps

    def foot(self, step: int, comp) -> int:
        c = _COMP[comp] if isinstance(comp, str) else int(comp)
        self._check(step, self.n_steps, "step")
        return 3 * (step - 1) + c

    def theta(self, config: int) -> int:
        self._check(config, self.n_configs, "config")
        return self._theta0 + config - 1

    def sin(self, config: int) -> int:
        self._check(config, self.n_configs, "config")
        return self._sin0 + config - 1

    def cos(self, config: int) -> int:
        self._check(config, self.n_configs, "config")
        return self._cos0 + config - 1

    def region(self, step: int, region: int) -> int:
        self._check(step, self.n_steps, "step")
        self._check(region, self.n_regions, "region")
        return self._region0 + (step - 1) * self.n_regions + region - 1

    def sin_segment(self, config: int, segment: int) -> int:
        self._check(config, self.n_configs, "config")
        self._check(segment, self.n_segments, "segment")
        return self._sinseg0 + (config - 1) * self.n_segments + segment - 1

    def cos_segment(self, config: int, segment: int) -> int:
        self._check(config, self.n_configs, "config")
        self._check(segment, self.n_segments, "segment")
        return self._cosseg0 + (config - 1) * self.n_segments + segment - 1

    def trim(self, step: int) -> int:
        self._check(step, self.n_steps, "step")
        return self._trim0 + step - 1

    def binary_indices(self) -> np.ndarray:
        """All binary variable positions, enumerated block by block."""
        idx = []
        for i in range(1, self.n_steps + 1):
            idx.extend(self.region(i, r) for r in range(1, self.n_regions + 1))
        for c in range(1, self.n_configs + 1):
            idx.extend(self.sin_segment(c, k) for k in range(1, self.n_segments + 1))
        for c in range(1, self.n_configs + 1):
            idx.extend(self.cos_segment(c, k) for k in range(1, self.n_segments + 1))
        idx.extend(self.trim(i) for i in range(1, self.n_steps + 1))
        return np.array(sorted(idx), dtype=int)

    def var_name(self, index: int) -> str:
        """Stable human-readable name of a flat index (used by the MIP export)."""
        if index < self._theta0:
            step, c = divmod(index, 3)
            return f"f{step + 1}{'xyz'[c]}"
        if index < self._sin0:
            return f"th{index - self._theta0 + 1}"
        if index < self._cos0:
            return f"s{index - self._sin0 + 1}"
        if index < self._region0:
            return f"c{index - self._cos0 + 1}"
        if index < self._sinseg0:
            step, r = divmod(index - self._region0, self.n_regions)
            return f"H{step + 1}_{r + 1}"
        if index < self._cosseg0:
            cfg, k = divmod(index - self._sinseg0, self.n_segments)
            return f"S{cfg + 1}_{k + 1}"
        if index < self._trim0:
            cfg, k = divmod(index - self._cosseg0, self.n_segments)
            return f"C{cfg + 1}_{k + 1}"
        if index < self.size:
            return f"t{index - self._trim0 + 1}"
        raise ContractViolation(f"index {index} outside layout of size {self.size}")

    @staticmethod
    def _check(value: int, limit: int, what: str) -> None:
        if not 1 <= value <= limit:
            raise ContractViolation(f"{what} {value} outside 1..{limit}")


@dataclass(frozen=True)
class MiqpProblem:
    """Canonical MIQP: minimize x'Qx + c'x + const over the constraint system."""

    q_matrix: sp.csr_matrix
    c_vector: np.ndarray
    objective_constant: float
    a_ineq: sp.csr_matrix
    b_ineq: np.ndarray
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    binary_indices: np.ndarray
    layout: VariableLayout
    ineq_families: tuple[str, ...]
    ineq_labels: tuple[str, ...]
    eq_families: tuple[str, ...]
    eq_labels: tuple[str, ...]

    @property
    def n_vars(self) -> int:
        return self.c_vector.shape[0]

    @property
    def n_ineq(self) -> int:
        return self.b_ineq.shape[0]

    @property
    def n_eq(self) -> int:
        return self.b_eq.shape[0]

    def objective_value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ (self.q_matrix @ x) + self.c_vector @ x + self.objective_constant)

    def is_binary(self, index: int) -> bool:
        return index in set(self.binary_indices.tolist())


class _LinExpr:
    """Sparse linear expression  sum(coef * x[col]) + const."""

    __slots__ = ("coefs", "const")

    def __init__(self, coefs: dict[int, float] | None = None, const: float = 0.0):
        self.coefs = dict(coefs) if coefs else {}
        self.const = float(const)

    def add(self, col: int, coef: float) -> "_LinExpr":
        if coef != 0.0:
            self.coefs[col] = self.coefs.get(col, 0.0) + coef
        return self

    def add_expr(self, other: "_LinExpr", scale: float = 1.0) -> "_LinExpr":
        for col, coef in other.coefs.items():
            self.add(col, scale * coef)
        self.const += scale * other.const
        return self

    def scaled(self, scale: float) -> "_LinExpr":
        return _LinExpr({c: v * scale for c, v in self.coefs.items()}, self.const * scale)

    def minus(self, other: "_LinExpr") -> "_LinExpr":
        out = _LinExpr(self.coefs, self.const)
        return out.add_expr(other, -1.0)


class _RowBag:
    """Accumulates sparse constraint rows with family/label metadata."""

    def __init__(self):
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.rhs: list[float] = []
        self.families: list[str] = []
        self.labels: list[str] = []

    def add(self, expr: _LinExpr, rhs: float, family: str, label: str) -> None:
        """Append the row  expr <= rhs  (or == rhs for equality bags)."""
        r = len(self.rhs)
        for col, coef in sorted(expr.coefs.items()):
            if coef != 0.0:
                self.rows.append(r)
                self.cols.append(col)
                self.vals.append(coef)
        self.rhs.append(rhs - expr.const)
        self.families.append(family)
        self.labels.append(label)

    def matrix(self, n_vars: int) -> tuple[sp.csr_matrix, np.ndarray]:
        a = sp.coo_matrix(
            (self.vals, (self.rows, self.cols)), shape=(len(self.rhs), n_vars)
        ).tocsr()
        return a, np.asarray(self.rhs, dtype=float)


def big_m_for_row(coefficients, rhs: float, lower, upper) -> float:
    """Smallest constant M such that  a.x <= rhs + M  holds across the whole box.

    ``coefficients`` is either a mapping {index: coef} or a dense vector
    aligned with ``lower``/``upper``. Computed by interval arithmetic, which
    for a linear functional equals the maximum over the box corners.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if isinstance(coefficients, dict):
        items = coefficients.items()
    else:
        vec = np.asarray(coefficients, dtype=float)
        items = ((i, v) for i, v in enumerate(vec) if v != 0.0)
    total = -float(rhs)
    for idx, coef in items:
        if coef == 0.0:
            continue
        lo, hi = lower[idx], upper[idx]
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise AssemblyError(f"variable {idx} in big-M row has unbounded range")
        total += max(coef * lo, coef * hi)
    return total


def scenario_tables(scenario: Scenario) -> tuple[PwlTable, PwlTable]:
    """Sine and cosine chord tables for the scenario's yaw range."""
    return (
        build_table("sin", scenario.theta_range, scenario.n_segments),
        build_table("cos", scenario.theta_range, scenario.n_segments),
    )


def _coc_window(step: int, n_legs: int, convention: str) -> tuple[range, int]:
    """Step indices (possibly <= 0, meaning start footholds) averaged for the CoC."""
    if convention == "include-current":
        return range(step - n_legs + 1, step + 1), n_legs
    return range(step - n_legs + 1, step), n_legs - 1


def _interval_scale(coef: float, rng: tuple[float, float]) -> tuple[float, float]:
    a, b = coef * rng[0], coef * rng[1]
    return (a, b) if a <= b else (b, a)


def _graph_hull_edges(table: PwlTable) -> list[tuple[float, float, bool]]:
    """Edges (slope, intercept, is_upper) of the convex hull of the chord graph.

    Every chord segment connects consecutive knots, so the hull of the knot
    points contains the whole piecewise-linear graph; the resulting rows are
    valid for any (theta, value) pair the segment constraints allow.
    """
    pts = [(float(t), float(table.eval(t))) for t in table.breakpoints]

    def half_hull(points):
        hull = []
        for p in points:
            while len(hull) >= 2 and (
                (hull[-1][0] - hull[-2][0]) * (p[1] - hull[-2][1])
                - (hull[-1][1] - hull[-2][1]) * (p[0] - hull[-2][0])
            ) >= 0:
                hull.pop()
            hull.append(p)
        return hull

    upper = half_hull(pts)
    lower = half_hull(list(reversed(pts)))
    edges = []
    for chain, is_upper in ((upper, True), (lower, False)):
        for (x0, y0), (x1, y1) in zip(chain, chain[1:]):
            if abs(x1 - x0) < 1e-14:
                continue
            m = (y1 - y0) / (x1 - x0)
            edges.append((m, y0 - m * x0, is_upper))
    return edges


def _propagate_step_boxes(
    scenario: Scenario, s_rng: tuple[float, float], c_rng: tuple[float, float]
) -> tuple[np.ndarray, np.ndarray]:
    """Sound per-step coordinate boxes from forward interval propagation.

    Every feasible footstep satisfies the reachability rows (trimming keeps
    them active), so intervals propagated through the CoC / nominal-position
    expressions and clipped to the workspace box are valid variable bounds.
    An empty interval proves the scenario cannot place that step at all.
    """
    robot = scenario.robot
    n = robot.n_legs
    n_steps = scenario.max_steps
    box_lo, box_hi = scenario.workspace_box
    start = scenario.start_footholds
    start_coc = coc(start)
    lo = np.empty((n_steps, 3))
    hi = np.empty((n_steps, 3))

    trig_rng = []
    for j in range(n):
        phi = robot.leg_offsets[j]
        cx = _interval_scale(math.cos(phi), c_rng)
        sx = _interval_scale(-math.sin(phi), s_rng)
        cy = _interval_scale(math.cos(phi), s_rng)
        sy = _interval_scale(math.sin(phi), c_rng)
        trig_rng.append(
            (
                (cx[0] + sx[0], cx[1] + sx[1]),  # range of cos(theta + phi)
                (cy[0] + sy[0], cy[1] + sy[1]),  # range of sin(theta + phi)
            )
        )

    def step_box(k: int, comp: int) -> tuple[float, float]:
        if k >= 1:
            return lo[k - 1, comp], hi[k - 1, comp]
        v = start[(k - 1) % n + 1 - 1][comp]
        return v, v

    def nominal_box(k: int) -> tuple[np.ndarray, np.ndarray]:
        """Interval hull of the linearized nominal position of step k (k may be <= 0)."""
        leg = (k - 1) % n + 1
        if k < 1:
            p = nominal_position(start_coc, scenario.start_yaw, leg, robot)
            return p.copy(), p.copy()
        window, divisor = _coc_window(k, n, scenario.coc_convention)
        p_lo = np.zeros(2)
        p_hi = np.zeros(2)
        for w in window:
            for comp in range(2):
                a, b = step_box(w, comp)
                p_lo[comp] += a / divisor
                p_hi[comp] += b / divisor
        rng_x, rng_y = trig_rng[leg - 1]
        return (
            p_lo + robot.l_leg * np.array([rng_x[0], rng_y[0]]),
            p_hi + robot.l_leg * np.array([rng_x[1], rng_y[1]]),
        )

    exclude_current = scenario.coc_convention != "include-current"
    for i in range(1, n_steps + 1):
        prev = i - n
        # boxes are filled in step order, so nominal_box(prev) only reads
        # boxes of steps before i under either CoC convention
        anchor_lo, anchor_hi = nominal_box(prev)
        z_lo, z_hi = step_box(prev, 2)
        for comp in range(2):
            lo[i - 1, comp] = max(anchor_lo[comp] - robot.d_lim, box_lo[comp])
            hi[i - 1, comp] = min(anchor_hi[comp] + robot.d_lim, box_hi[comp])
        if exclude_current:
            # the reference box around this step's own (lagged) nominal
            # position binds too and caps the per-configuration travel
            geom_lo, geom_hi = nominal_box(i)
            for comp in range(2):
                lo[i - 1, comp] = max(lo[i - 1, comp], geom_lo[comp] - robot.l_bnd)
                hi[i - 1, comp] = min(hi[i - 1, comp], geom_hi[comp] + robot.l_bnd)
        lo[i - 1, 2] = max(z_lo - robot.dz_max, box_lo[2])
        hi[i - 1, 2] = min(z_hi + robot.dz_max, box_hi[2])
        if np.any(lo[i - 1] > hi[i - 1]):
            raise InfeasibleScenarioError(
                f"step {i} has no reachable position inside the workspace box"
            )
    return lo, hi


def assemble(scenario: Scenario) -> MiqpProblem:
    """Build the complete mixed-integer quadratic program for ``scenario``."""
    robot = scenario.robot
    n = robot.n_legs
    n_steps = scenario.max_steps
    if n_steps % n != 0:
        raise ContractViolation("max_steps must be a multiple of n_legs")
    n_regions = len(scenario.regions)
    if n_regions == 0:
        raise AssemblyError("scenario has no safe regions")

    sin_table, cos_table = scenario_tables(scenario)
    layout = VariableLayout(n_steps, n, n_regions, scenario.n_segments)
    n_vars = layout.size
    lo_t, hi_t = scenario.theta_range

    # ---- bounds -----------------------------------------------------------
    # Chord values interpolate the function at the knots, so each trig
    # variable lives between the extreme knot values; footstep coordinates
    # live in forward-propagated reachability boxes intersected with the
    # workspace box, which keeps every derived big-M as small as possible.
    lower = np.empty(n_vars)
    upper = np.empty(n_vars)
    box_lo, box_hi = scenario.workspace_box
    s_rng = (float(np.min(np.sin(sin_table.breakpoints))), float(np.max(np.sin(sin_table.breakpoints))))
    c_rng = (float(np.min(np.cos(cos_table.breakpoints))), float(np.max(np.cos(cos_table.breakpoints))))
    for c in range(1, layout.n_configs + 1):
        lower[layout.theta(c)], upper[layout.theta(c)] = lo_t, hi_t
        lower[layout.sin(c)], upper[layout.sin(c)] = s_rng
        lower[layout.cos(c)], upper[layout.cos(c)] = c_rng
    foot_lo, foot_hi = _propagate_step_boxes(scenario, s_rng, c_rng)
    for i in range(1, n_steps + 1):
        for comp in range(3):
            lower[layout.foot(i, comp)] = foot_lo[i - 1, comp]
            upper[layout.foot(i, comp)] = foot_hi[i - 1, comp]
    binaries = layout.binary_indices()
    lower[binaries] = 0.0
    upper[binaries] = 1.0

    # ---- goal footholds (trim targets / goal cost), region membership gate -
    goals = derive_leg_goals(scenario.goal_position, scenario.goal_yaw, robot)
    for j in range(n):
        if not any(reg.contains(goals[j], tol=1e-9) for reg in scenario.regions):
            raise InfeasibleScenarioError(
                f"goal foothold of leg {j + 1} at {goals[j].tolist()} lies outside every safe region"
            )

    # ---- start configuration constants ------------------------------------
    start = scenario.start_footholds
    start_coc = coc(start)
    start_nominal = np.array(
        [nominal_position(start_coc, scenario.start_yaw, j + 1, robot) for j in range(n)]
    )

    def foot_expr(step: int, comp: int) -> _LinExpr:
        """Coordinate of a (possibly virtual, step <= 0) footstep."""
        if step >= 1:
            return _LinExpr({layout.foot(step, comp): 1.0})
        leg = (step - 1) % n + 1
        return _LinExpr(const=start[leg - 1][comp])

    def coc_expr(step: int, comp: int) -> _LinExpr:
        window, divisor = _coc_window(step, n, scenario.coc_convention)
        out = _LinExpr()
        for k in window:
            out.add_expr(foot_expr(k, comp), 1.0 / divisor)
        return out

    def nominal_expr(step: int, comp: int) -> _LinExpr:
        """Linearized nominal foothold using the shared per-configuration trig vars."""
        cfg = (step - 1) // n + 1
        phi = robot.leg_offsets[leg_of(step, n) - 1]
        out = coc_expr(step, comp)
        s_idx, c_idx = layout.sin(cfg), layout.cos(cfg)
        if comp == 0:  # cos(theta + phi) = c*cos(phi) - s*sin(phi)
            out.add(c_idx, robot.l_leg * math.cos(phi))
            out.add(s_idx, -robot.l_leg * math.sin(phi))
        else:  # sin(theta + phi) = s*cos(phi) + c*sin(phi)
            out.add(s_idx, robot.l_leg * math.cos(phi))
            out.add(c_idx, robot.l_leg * math.sin(phi))
        return out

    ineq = _RowBag()
    eq = _RowBag()

    def add_row(expr: _LinExpr, rhs: float, family: str, label: str) -> None:
        """Add an inequality row unless the bounds already imply it."""
        if big_m_for_row(expr.coefs, rhs, lower, upper) <= 1e-12:
            return
        ineq.add(expr, rhs, family, label)

    # ---- (a) geometric: footstep inside the reference box around r_nom ----
    for i in range(1, n_steps + 1):
        for comp, tag in ((0, "x"), (1, "y")):
            diff = foot_expr(i, comp).minus(nominal_expr(i, comp))
            add_row(diff, robot.l_bnd, "geometric", f"step {i} ref box +{tag}")
            add_row(diff.scaled(-1.0), robot.l_bnd, "geometric", f"step {i} ref box -{tag}")

    # ---- (b) reachability from the same leg's previous nominal position ----
    for i in range(1, n_steps + 1):
        prev = i - n
        for comp, tag in ((0, "x"), (1, "y")):
            if prev >= 1:
                anchor = nominal_expr(prev, comp)
            else:
                anchor = _LinExpr(const=start_nominal[leg_of(i, n) - 1][comp])
            diff = foot_expr(i, comp).minus(anchor)
            add_row(diff, robot.d_lim, "reachability", f"step {i} reach +{tag}")
            add_row(diff.scaled(-1.0), robot.d_lim, "reachability", f"step {i} reach -{tag}")
        prev_z = foot_expr(prev, 2) if prev >= 1 else _LinExpr(const=start[leg_of(i, n) - 1][2])
        dz = foot_expr(i, 2).minus(prev_z)
        add_row(dz, robot.dz_max, "reachability", f"step {i} dz +")
        add_row(dz.scaled(-1.0), robot.dz_max, "reachability", f"step {i} dz -")

    # ---- (c) safe-region assignment with per-row big-M ---------------------
    # when every region carries a bounding box, hull rows confine each
    # footstep to the H-weighted mix of region boxes, tightening the
    # relaxation without cutting any integral point
    region_boxes = [reg.bbox for reg in scenario.regions]
    add_hull = all(b is not None for b in region_boxes)
    for i in range(1, n_steps + 1):
        choice = _LinExpr({layout.region(i, r): 1.0 for r in range(1, n_regions + 1)})
        eq.add(choice, 1.0, "region", f"step {i} region choice")
        reachable = 0
        for r, reg in enumerate(scenario.regions, start=1):
            h_idx = layout.region(i, r)
            # a region some halfspace of which excludes the whole step box can
            # never host this step: pin its binary and omit its big-M rows
            excluded = False
            for row in range(reg.n_rows):
                coefs = {layout.foot(i, comp): reg.a_matrix[row, comp] for comp in range(3)}
                worst = -big_m_for_row(
                    {k: -v for k, v in coefs.items()}, -reg.b_vector[row], lower, upper
                )
                if worst > 1e-12:
                    excluded = True
                    break
            if excluded:
                upper[h_idx] = 0.0
                continue
            reachable += 1
            for row in range(reg.n_rows):
                coefs = {layout.foot(i, comp): reg.a_matrix[row, comp] for comp in range(3)}
                m_val = big_m_for_row(coefs, reg.b_vector[row], lower, upper)
                expr = _LinExpr(coefs).add(h_idx, m_val)
                add_row(
                    expr,
                    reg.b_vector[row] + m_val,
                    "region",
                    f"step {i} in {reg.name} row {row}",
                )
        if reachable == 0:
            raise InfeasibleScenarioError(
                f"step {i} cannot reach any safe region inside its bounds"
            )
        if add_hull:
            for comp, tag in ((0, "x"), (1, "y"), (2, "z")):
                hi_expr = _LinExpr({layout.foot(i, comp): 1.0})
                lo_expr = _LinExpr({layout.foot(i, comp): -1.0})
                for r in range(1, n_regions + 1):
                    lo_r, hi_r = region_boxes[r - 1]
                    hi_expr.add(layout.region(i, r), -float(hi_r[comp]))
                    lo_expr.add(layout.region(i, r), float(lo_r[comp]))
                add_row(hi_expr, 0.0, "region", f"step {i} region hull +{tag}")
                add_row(lo_expr, 0.0, "region", f"step {i} region hull -{tag}")

    # ---- (d) piecewise-linear trig segment selection ------------------------
    for cfg in range(1, layout.n_configs + 1):
        th = layout.theta(cfg)
        for table, val_idx, seg_of, tag in (
            (sin_table, layout.sin(cfg), layout.sin_segment, "sin"),
            (cos_table, layout.cos(cfg), layout.cos_segment, "cos"),
        ):
            choice = _LinExpr({seg_of(cfg, k): 1.0 for k in range(1, scenario.n_segments + 1)})
            eq.add(choice, 1.0, "trig", f"config {cfg} {tag} segment choice")
            for k in range(1, scenario.n_segments + 1):
                b_idx = seg_of(cfg, k)
                bp_lo = float(table.breakpoints[k - 1])
                bp_hi = float(table.breakpoints[k])
                m_k = float(table.slopes[k - 1])
                n_k = float(table.intercepts[k - 1])
                rows = (
                    ({th: 1.0}, bp_hi, f"config {cfg} {tag} seg {k} theta hi"),
                    ({th: -1.0}, -bp_lo, f"config {cfg} {tag} seg {k} theta lo"),
                    ({val_idx: 1.0, th: -m_k}, n_k, f"config {cfg} {tag} seg {k} chord +"),
                    ({val_idx: -1.0, th: m_k}, -n_k, f"config {cfg} {tag} seg {k} chord -"),
                )
                for coefs, rhs, label in rows:
                    m_val = big_m_for_row(coefs, rhs, lower, upper)
                    expr = _LinExpr(coefs).add(b_idx, m_val)
                    add_row(expr, rhs + m_val, "trig", label)
            # aggregated envelope rows over the one-hot segment choice; they
            # are implied for integral selections and tighten the relaxation
            theta_hi = _LinExpr({th: 1.0})
            theta_lo = _LinExpr({th: -1.0})
            val_hi = _LinExpr({val_idx: 1.0})
            val_lo = _LinExpr({val_idx: -1.0})
            for k in range(1, scenario.n_segments + 1):
                b_idx = seg_of(cfg, k)
                bp_lo = float(table.breakpoints[k - 1])
                bp_hi = float(table.breakpoints[k])
                v_lo = float(min(table.eval(bp_lo), table.eval(bp_hi)))
                v_hi = float(max(table.eval(bp_lo), table.eval(bp_hi)))
                theta_hi.add(b_idx, -bp_hi)
                theta_lo.add(b_idx, bp_lo)
                val_hi.add(b_idx, -v_hi)
                val_lo.add(b_idx, v_lo)
            add_row(theta_hi, 0.0, "trig", f"config {cfg} {tag} envelope theta hi")
            add_row(theta_lo, 0.0, "trig", f"config {cfg} {tag} envelope theta lo")
            add_row(val_hi, 0.0, "trig", f"config {cfg} {tag} envelope value hi")
            add_row(val_lo, 0.0, "trig", f"config {cfg} {tag} envelope value lo")
            # hull of the chord graph couples the value variable to theta for
            # fractional segment choices as well
            for e, (m_e, b_e, is_up) in enumerate(_graph_hull_edges(table)):
                if is_up:
                    add_row(
                        _LinExpr({val_idx: 1.0, th: -m_e}), b_e,
                        "trig", f"config {cfg} {tag} hull upper {e}",
                    )
                else:
                    add_row(
                        _LinExpr({val_idx: -1.0, th: m_e}), -b_e,
                        "trig", f"config {cfg} {tag} hull lower {e}",
                    )

    # ---- (e) trimming: pin trimmed steps to leg goals, monotone per leg ----
    # a step whose goal foothold lies outside its reachable box (or whose
    # configuration cannot take the goal yaw) can never be trimmed; fixing
    # those binaries up front removes their reward from the relaxation
    yaw_ok = lo_t - 1e-9 <= scenario.goal_yaw <= hi_t + 1e-9
    can_trim = [False] * (n_steps + 1)
    for i in range(1, n_steps + 1):
        g = goals[leg_of(i, n) - 1]
        can_trim[i] = yaw_ok and all(
            lower[layout.foot(i, comp)] - 1e-9 <= g[comp] <= upper[layout.foot(i, comp)] + 1e-9
            for comp in range(3)
        )
    for i in range(n_steps - n, 0, -1):
        can_trim[i] = can_trim[i] and can_trim[i + n]
    for i in range(1, n_steps + 1):
        if not can_trim[i]:
            upper[layout.trim(i)] = 0.0
    for i in range(1, n_steps + 1):
        t_idx = layout.trim(i)
        cfg = (i - 1) // n + 1
        target = goals[leg_of(i, n) - 1]
        pins = [
            ({layout.foot(i, comp): 1.0}, target[comp], f"step {i} trim pin +{'xyz'[comp]}")
            for comp in range(3)
        ]
        pins += [
            ({layout.foot(i, comp): -1.0}, -target[comp], f"step {i} trim pin -{'xyz'[comp]}")
            for comp in range(3)
        ]
        pins.append(({layout.theta(cfg): 1.0}, scenario.goal_yaw, f"step {i} trim pin +yaw"))
        pins.append(({layout.theta(cfg): -1.0}, -scenario.goal_yaw, f"step {i} trim pin -yaw"))
        for coefs, rhs, label in pins:
            m_val = big_m_for_row(coefs, rhs, lower, upper)
            expr = _LinExpr(coefs).add(t_idx, m_val)
            add_row(expr, rhs + m_val, "trim", label)
        if i + n <= n_steps:
            mono = _LinExpr({t_idx: 1.0, layout.trim(i + n): -1.0})
            add_row(mono, 0.0, "trim", f"trim monotone {i} <= {i + n}")

    # ---- objective ---------------------------------------------------------
    q_entries: dict[tuple[int, int], float] = {}
    c_vec = np.zeros(n_vars)
    constant = 0.0

    def add_quadratic(exprs: list[_LinExpr], weight: np.ndarray) -> None:
        """Accumulate  e' W e  for the stacked expression vector e."""
        nonlocal constant
        k = len(exprs)
        for a in range(k):
            for b in range(k):
                w = weight[a, b]
                if w == 0.0:
                    continue
                ea, eb = exprs[a], exprs[b]
                for ca, va in ea.coefs.items():
                    for cb, vb in eb.coefs.items():
                        key = (ca, cb)
                        q_entries[key] = q_entries.get(key, 0.0) + w * va * vb
                    c_vec[ca] += w * va * eb.const
                for cb, vb in eb.coefs.items():
                    c_vec[cb] += w * ea.const * vb
                constant += w * ea.const * eb.const

    # final-configuration goal cost over (x, y, z, yaw)
    last_cfg = layout.n_configs
    for i in range(n_steps - n + 1, n_steps + 1):
        g = goals[leg_of(i, n) - 1]
        exprs = [
            _LinExpr({layout.foot(i, 0): 1.0}, -g[0]),
            _LinExpr({layout.foot(i, 1): 1.0}, -g[1]),
            _LinExpr({layout.foot(i, 2): 1.0}, -g[2]),
            _LinExpr({layout.theta(last_cfg): 1.0}, -scenario.goal_yaw),
        ]
        add_quadratic(exprs, scenario.q_goal)

    # trim reward
    for i in range(1, n_steps + 1):
        c_vec[layout.trim(i)] += scenario.q_t

    # CoC drift between consecutive configurations (xy)
    def config_coc_expr(cfg: int, comp: int) -> _LinExpr:
        out = _LinExpr()
        first = (cfg - 1) * n + 1
        for i in range(first, first + n):
            out.add(layout.foot(i, comp), 1.0 / n)
        return out

    prev_coc = [_LinExpr(const=start_coc[0]), _LinExpr(const=start_coc[1])]
    for cfg in range(1, layout.n_configs + 1):
        cur = [config_coc_expr(cfg, 0), config_coc_expr(cfg, 1)]
        add_quadratic([cur[0].minus(prev_coc[0]), cur[1].minus(prev_coc[1])], scenario.q_r)
        prev_coc = cur

    # symmetrize Q
    sym: dict[tuple[int, int], float] = {}
    for (a, b), v in q_entries.items():
        key = (a, b) if a <= b else (b, a)
        sym[key] = sym.get(key, 0.0) + v
    rows, cols, vals = [], [], []
    for (a, b), v in sorted(sym.items()):
        if a == b:
            rows.append(a)
            cols.append(b)
            vals.append(v)
        else:
            rows.extend((a, b))
            cols.extend((b, a))
            vals.extend((0.5 * v, 0.5 * v))
    q_matrix = sp.coo_matrix((vals, (rows, cols)), shape=(n_vars, n_vars)).tocsr()

    a_ineq, b_ineq = ineq.matrix(n_vars)
    a_eq, b_eq = eq.matrix(n_vars)
    return MiqpProblem(
        q_matrix=q_matrix,
        c_vector=c_vec,
        objective_constant=constant,
        a_ineq=a_ineq,
        b_ineq=b_ineq,
        a_eq=a_eq,
        b_eq=b_eq,
        lower=lower,
        upper=upper,
        binary_indices=binaries,
        layout=layout,
        ineq_families=tuple(ineq.families),
        ineq_labels=tuple(ineq.labels),
        eq_families=tuple(eq.families),
        eq_labels=tuple(eq.labels),
    )


def make_rounding_heuristic(scenario: Scenario, problem: MiqpProblem):
    """Model-aware integral completion used by the branch-and-bound heuristic.

    Rounds a relaxation solution to a consistent binary assignment: trim
    chains are closed per leg (monotone suffixes), configurations containing
    a trimmed step take the goal yaw, trig segments are chosen from the yaw
    value, and regions by largest indicator. Node fixings are respected;
    infeasible completions are simply rejected by the re-fix solve.
    """
    layout = problem.layout
    sin_table, cos_table = scenario_tables(scenario)
    n = layout.n_legs
    n_steps = layout.n_steps
    lo_t, hi_t = scenario.theta_range
    goal_yaw = float(scenario.goal_yaw)
    yaw_ok = lo_t - 1e-9 <= goal_yaw <= hi_t + 1e-9

    def complete(
        x: np.ndarray, fixings: dict[int, float], with_trims: bool = True
    ) -> dict[int, float]:
        out = dict(fixings)

        def value_of(idx: int) -> float:
            if idx in fixings:
                return fixings[idx]
            if problem.lower[idx] == problem.upper[idx]:
                return float(problem.lower[idx])
            return float(x[idx])

        # trim suffixes per leg, honoring monotonicity from the tail inward
        trimmed = [False] * (n_steps + 1)
        for leg in range(1, n + 1):
            allowed = yaw_ok
            for i in range(n_steps - n + leg, 0, -n):
                idx = layout.trim(i)
                if with_trims:
                    want = value_of(idx) > 0.5
                else:
                    want = fixings.get(idx) == 1.0
                trimmed[i] = want and allowed
                allowed = trimmed[i]
                out[idx] = 1.0 if trimmed[i] else 0.0

        for cfg in range(1, layout.n_configs + 1):
            first = (cfg - 1) * n + 1
            if any(trimmed[i] for i in range(first, first + n)):
                theta = goal_yaw
            else:
                theta = min(max(float(x[layout.theta(cfg)]), lo_t), hi_t)
            for table, seg_of in (
                (sin_table, layout.sin_segment),
                (cos_table, layout.cos_segment),
            ):
                indices = [seg_of(cfg, k) for k in range(1, layout.n_segments + 1)]
                pick = None
                for k, idx in enumerate(indices, start=1):
                    if fixings.get(idx) == 1.0:
                        pick = k
                        break
                if pick is None:
                    pick = table.segment_of(theta) + 1
                    if fixings.get(indices[pick - 1]) == 0.0:
                        free = [
                            k
                            for k, idx in enumerate(indices, start=1)
                            if fixings.get(idx) != 0.0 and problem.upper[idx] > 0.0
                        ]
                        if free:
                            pick = min(free, key=lambda k: abs(k - (sin_table.segment_of(theta) + 1)))
                for k, idx in enumerate(indices, start=1):
                    if idx not in fixings:
                        out[idx] = 1.0 if k == pick else 0.0

        for i in range(1, n_steps + 1):
            indices = [layout.region(i, r) for r in range(1, layout.n_regions + 1)]
            pick = None
            for r, idx in enumerate(indices, start=1):
                if fixings.get(idx) == 1.0:
                    pick = r
                    break
            if pick is None:
                # choose the region geometrically closest to the relaxed
                # position; the indicator value only breaks ties
                point = np.array([x[layout.foot(i, comp)] for comp in range(3)])
                candidates = [
                    (-scenario.regions[r - 1].violation(point), value_of(idx), -r, r)
                    for r, idx in enumerate(indices, start=1)
                    if fixings.get(idx) != 0.0 and problem.upper[idx] > 0.0
                ]
                if candidates:
                    pick = max(candidates)[3]
            for r, idx in enumerate(indices, start=1):
                if idx not in fixings:
                    out[idx] = 1.0 if r == pick else 0.0
        return out

    robot = scenario.robot
    start_coc = coc(scenario.start_footholds)
    goal_xy = scenario.goal_position[:2]
    # travel per configuration is limited by the window-lagged reference box
    speed_budget = 0.5 * (robot.d_lim + robot.l_bnd - robot.l_leg / max(n - 1, 1))

    def assignment_for_path(path: list[tuple[np.ndarray, float]]) -> dict[int, float] | None:
        """Segment/region/trim assignment for a given per-configuration
        (CoC, yaw) path with feet at their nominal positions."""
        out = {}
        for cfg, (coc_c, theta) in enumerate(path, start=1):
            theta = min(max(theta, lo_t), hi_t)
            k = sin_table.segment_of(theta) + 1
            for kk in range(1, layout.n_segments + 1):
                out[layout.sin_segment(cfg, kk)] = 1.0 if kk == k else 0.0
                out[layout.cos_segment(cfg, kk)] = 1.0 if kk == k else 0.0
            for j in range(1, n + 1):
                i = (cfg - 1) * n + j
                foot = nominal_position(coc_c, theta, j, robot)
                point = np.array([foot[0], foot[1], scenario.goal_position[2]])
                best_r, best_v = None, math.inf
                for r in range(1, layout.n_regions + 1):
                    idx = layout.region(i, r)
                    if problem.upper[idx] <= 0.0:
                        continue
                    v = scenario.regions[r - 1].violation(point)
                    if v < best_v - 1e-12:
                        best_v, best_r = v, r
                if best_r is None:
                    return None
                for r in range(1, layout.n_regions + 1):
                    out[layout.region(i, r)] = 1.0 if r == best_r else 0.0
                out[layout.trim(i)] = 0.0
        return out

    def straight_walk(stride_factor: float) -> dict[int, float] | None:
        """Walk the CoC straight at the goal while ramping the yaw."""
        direction = goal_xy - start_coc
        dist = float(np.linalg.norm(direction))
        direction = direction / dist if dist > 1e-12 else np.zeros(2)
        want_turn = wrap_angle(goal_yaw - scenario.start_yaw)
        turn_rate = min(
            0.3 * speed_budget / robot.l_leg,
            abs(want_turn) / max(layout.n_configs - 1, 1),
        )
        path = []
        travel = 0.0
        for cfg in range(1, layout.n_configs + 1):
            stride = max(stride_factor * speed_budget - robot.l_leg * turn_rate, 0.15 * speed_budget)
            travel = min(travel + stride, dist)
            turn = min(max(want_turn, -turn_rate * cfg), turn_rate * cfg)
            path.append((start_coc + travel * direction, scenario.start_yaw + turn))
        return assignment_for_path(path)

    def relaxed_path(x: np.ndarray) -> dict[int, float] | None:
        """Nominal-stance walk along the relaxation's own CoC/yaw path."""
        path = []
        for cfg in range(1, layout.n_configs + 1):
            first = (cfg - 1) * n + 1
            coc_c = np.array(
                [
                    np.mean([x[layout.foot(i, comp)] for i in range(first, first + n)])
                    for comp in range(2)
                ]
            )
            path.append((coc_c, float(x[layout.theta(cfg)])))
        return assignment_for_path(path)

    def candidates(x: np.ndarray, fixings: dict[int, float]) -> list[dict[int, float]]:
        outs = [complete(x, fixings, with_trims=True)]
        second = complete(x, fixings, with_trims=False)
        if second != outs[0]:
            outs.append(second)
        if not fixings:
            for cand in (
                relaxed_path(x),
                straight_walk(1.0),
                straight_walk(0.8),
                straight_walk(0.6),
            ):
                if cand is not None and cand not in outs:
                    outs.append(cand)
        return outs

    return candidates


@dataclass(frozen=True)
class Violation:
    family: str
    kind: str  # "ineq" | "eq" | "bound" | "integrality"
    index: int
    amount: float
    label: str


@dataclass(frozen=True)
class AssignmentReport:
    """Constraint violations of a candidate assignment, grouped by family."""

    violations: tuple[Violation, ...]
    tol: float
    family_worst: dict[str, float]

    @property
    def ok(self) -> bool:
        return not self.violations

    def count(self, family: str | None = None) -> int:
        if family is None:
            return len(self.violations)
        return sum(1 for v in self.violations if v.family == family)

    def summary(self) -> str:
        lines = [f"violations beyond tol={self.tol:g}: {len(self.violations)}"]
        for fam in sorted(self.family_worst):
            lines.append(f"  {fam:<12} worst={self.family_worst[fam]:.3e}")
        for v in self.violations[:20]:
            lines.append(f"  [{v.family}] {v.label}: {v.amount:.3e}")
        if len(self.violations) > 20:
            lines.append(f"  ... and {len(self.violations) - 20} more")
        return "\n".join(lines)


def validate_assignment(problem: MiqpProblem, x, tol: float = 1e-6) -> AssignmentReport:
    """Report every constraint row, bound and integrality condition violated beyond tol."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != problem.n_vars:
        raise ContractViolation(f"assignment has {x.shape[0]} entries, expected {problem.n_vars}")
    violations: list[Violation] = []
    worst: dict[str, float] = {}

    def note(family: str, kind: str, index: int, amount: float, label: str) -> None:
        worst[family] = max(worst.get(family, 0.0), amount)
        if amount > tol:
            violations.append(Violation(family, kind, index, amount, label))

    resid = problem.a_ineq @ x - problem.b_ineq
    for i in np.nonzero(resid > 0)[0]:
        note(problem.ineq_families[i], "ineq", int(i), float(resid[i]), problem.ineq_labels[i])
    for fam in set(problem.ineq_families):
        worst.setdefault(fam, 0.0)
    eq_resid = np.abs(problem.a_eq @ x - problem.b_eq)
    for i in np.nonzero(eq_resid > 0)[0]:
        note(problem.eq_families[i], "eq", int(i), float(eq_resid[i]), problem.eq_labels[i])
    low = problem.lower - x
    high = x - problem.upper
    for i in np.nonzero(low > 0)[0]:
        note("bounds", "bound", int(i), float(low[i]), f"{problem.layout.var_name(int(i))} below lower")
    for i in np.nonzero(high > 0)[0]:
        note("bounds", "bound", int(i), float(high[i]), f"{problem.layout.var_name(int(i))} above upper")
    worst.setdefault("bounds", 0.0)
    frac = np.minimum(np.abs(x[problem.binary_indices]), np.abs(x[problem.binary_indices] - 1.0))
    for pos, i in enumerate(problem.binary_indices):
        if frac[pos] > 0:
            note(
                "integrality",
                "integrality",
                int(i),
                float(frac[pos]),
                f"{problem.layout.var_name(int(i))} not 0/1",
            )
    worst.setdefault("integrality", 0.0)
    return AssignmentReport(tuple(violations), tol, worst)
