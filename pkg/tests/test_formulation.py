import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stepplan.errors import AssemblyError, ContractViolation, InfeasibleScenarioError
from stepplan.formulation import (
    VariableLayout,
    assemble,
    big_m_for_row,
    scenario_tables,
    validate_assignment,
)
from stepplan.model import (
    RobotModel,
    SafeRegion,
    Scenario,
    derive_leg_goals,
    leg_of,
    nominal_position,
)


def box_region(name, x0, x1, y0, y1, z0=-0.05, z1=0.05, bbox=True):
    a = np.array(
        [[1.0, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]]
    )
    b = np.array([x1, -x0, y1, -y0, z1, -z0])
    bb = (np.array([x0, y0, z0]), np.array([x1, y1, z1])) if bbox else None
    return SafeRegion(a, b, name, bbox=bb)


def quadruped():
    return RobotModel(
        n_legs=4,
        leg_offsets=(math.pi / 4, 3 * math.pi / 4, -3 * math.pi / 4, -math.pi / 4),
        l_leg=0.2 * math.sqrt(2.0),
        l_bnd=0.13,
        d_lim=0.22,
        dz_max=0.1,
    )


def nominal_stance(robot, coc_xy=(0.0, 0.0), yaw=0.0, z=0.0):
    return np.array(
        [list(nominal_position(coc_xy, yaw, j + 1, robot)) + [z] for j in range(robot.n_legs)]
    )


def small_scenario(**overrides):
    robot = quadruped()
    kw = dict(
        robot=robot,
        regions=(box_region("ground", -0.7, 1.6, -0.7, 0.7),),
        start_footholds=nominal_stance(robot),
        start_yaw=0.0,
        goal_position=np.array([0.5, 0.0, 0.0]),
        goal_yaw=0.0,
        max_steps=8,
        theta_range=(-0.8, 0.8),
        n_segments=4,
        q_goal=np.diag([8.0, 8.0, 8.0, 3.0]),
        q_t=-0.2,
        q_r=0.05 * np.eye(2),
        workspace_box=(np.array([-0.7, -0.7, -0.06]), np.array([1.6, 0.7, 0.06])),
    )
    kw.update(overrides)
    return Scenario(**kw)


class TestVariableLayout:
    def test_counts_match_closed_form(self):
        # 12 steps, 13 regions, 8 segments, 6 legs
        layout = VariableLayout(12, 6, 13, 8)
        assert layout.binary_count == 12 * 13 + 2 * 2 * 8 + 12 == 200
        assert layout.continuous_count == 3 * 12 + 3 * 2 == 42
        assert layout.size == 242

    def test_enumerated_indices_cross_check(self):
        # independent counting routine: enumerate every index block
        layout = VariableLayout(12, 6, 13, 8)
        indices = layout.binary_indices()
        assert len(indices) == layout.binary_count
        assert len(set(indices.tolist())) == len(indices)
        all_idx = set(indices.tolist())
        for i in range(1, 13):
            for comp in range(3):
                assert layout.foot(i, comp) not in all_idx
        assert layout.size == layout.binary_count + layout.continuous_count

    @given(st.integers(2, 8), st.integers(1, 5), st.integers(1, 13), st.integers(2, 9))
    @settings(max_examples=40, deadline=None)
    def test_counts_for_any_shape(self, n_legs, n_cfg, n_regions, n_segments):
        n_steps = n_legs * n_cfg
        layout = VariableLayout(n_steps, n_legs, n_regions, n_segments)
        expected = n_steps * n_regions + 2 * n_cfg * n_segments + n_steps
        assert layout.binary_count == expected
        assert len(layout.binary_indices()) == expected
        assert layout.size == expected + 3 * n_steps + 3 * n_cfg

    def test_index_ranges_disjoint_and_contiguous(self):
        layout = VariableLayout(8, 4, 3, 4)
        seen = set()
        for i in range(1, 9):
            for comp in range(3):
                seen.add(layout.foot(i, comp))
        for c in range(1, 3):
            seen.update({layout.theta(c), layout.sin(c), layout.cos(c)})
            for k in range(1, 5):
                seen.update({layout.sin_segment(c, k), layout.cos_segment(c, k)})
        for i in range(1, 9):
            seen.add(layout.trim(i))
            for r in range(1, 4):
                seen.add(layout.region(i, r))
        assert seen == set(range(layout.size))

    def test_var_names_roundtrip_blocks(self):
        layout = VariableLayout(8, 4, 3, 4)
        assert layout.var_name(layout.foot(3, "y")) == "f3y"
        assert layout.var_name(layout.theta(2)) == "th2"
        assert layout.var_name(layout.region(8, 3)) == "H8_3"
        assert layout.var_name(layout.trim(1)) == "t1"

    def test_rejects_bad_indices(self):
        layout = VariableLayout(8, 4, 3, 4)
        with pytest.raises(ContractViolation):
            layout.foot(9, 0)
        with pytest.raises(ContractViolation):
            layout.region(1, 4)

    def test_steps_must_be_configuration_multiple(self):
        with pytest.raises(ContractViolation):
            VariableLayout(7, 4, 3, 4)


class TestBigM:
    def test_single_variable(self):
        assert big_m_for_row({0: 1.0}, 0.0, [-1.0], [2.0]) == pytest.approx(2.0)

    def test_corner_evaluation(self):
        assert big_m_for_row({0: 1.0, 1: 1.0}, 1.0, [0.0, 0.0], [3.0, 4.0]) == pytest.approx(6.0)

    def test_accepts_dense_vector(self):
        assert big_m_for_row(np.array([1.0, 1.0]), 1.0, [0.0, 0.0], [3.0, 4.0]) == pytest.approx(6.0)

    def test_unbounded_variable_rejected(self):
        with pytest.raises(AssemblyError):
            big_m_for_row({0: 1.0}, 0.0, [-np.inf], [1.0])

    def test_random_rows_match_corner_enumeration(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            d = int(rng.integers(1, 11))
            a = rng.normal(size=d)
            lo = rng.uniform(-3, 0, d)
            hi = lo + rng.uniform(0.1, 3, d)
            b = float(rng.normal())
            brute = max(
                float(a @ np.array(corner)) - b
                for corner in itertools.product(*zip(lo, hi))
            )
            assert big_m_for_row(a, b, lo, hi) == pytest.approx(brute, abs=1e-10)


class TestAssemble:
    def test_variable_counts(self):
        scn = small_scenario()
        prob = assemble(scn)
        layout = prob.layout
        assert prob.n_vars == layout.size
        assert len(prob.binary_indices) == layout.binary_count
        assert np.all(prob.lower[prob.binary_indices] >= 0.0)
        assert np.all(prob.upper[prob.binary_indices] <= 1.0)

    def test_q_matrix_is_psd(self):
        prob = assemble(small_scenario())
        w = np.linalg.eigvalsh(prob.q_matrix.toarray())
        assert w.min() >= -1e-9

    def test_goal_outside_regions_rejected(self):
        with pytest.raises(InfeasibleScenarioError):
            assemble(small_scenario(goal_position=np.array([1.55, 0.6, 0.0])))

    def test_all_trimmed_solution_when_start_equals_goal(self):
        robot = quadruped()
        goal = np.array([0.0, 0.0, 0.0])
        goals = derive_leg_goals(goal, 0.0, robot)
        scn = small_scenario(
            start_footholds=goals,
            goal_position=goal,
        )
        prob = assemble(scn)
        layout = prob.layout
        sin_t, cos_t = scenario_tables(scn)
        x = np.zeros(prob.n_vars)
        for i in range(1, 9):
            leg = leg_of(i, robot)
            for comp in range(3):
                x[layout.foot(i, comp)] = goals[leg - 1][comp]
            x[layout.trim(i)] = 1.0
            x[layout.region(i, 1)] = 1.0
        for c in (1, 2):
            x[layout.theta(c)] = 0.0
            x[layout.sin(c)] = sin_t.eval(0.0)
            x[layout.cos(c)] = cos_t.eval(0.0)
            k = sin_t.segment_of(0.0) + 1
            x[layout.sin_segment(c, k)] = 1.0
            x[layout.cos_segment(c, k)] = 1.0
        report = validate_assignment(prob, x, 1e-9)
        assert report.ok, report.summary()
        # objective is exactly the trim reward: q_t * N
        assert prob.objective_value(x) == pytest.approx(scn.q_t * 8, abs=1e-12)

    def test_fixing_binaries_keeps_problem_convex(self):
        prob = assemble(small_scenario())
        w = np.linalg.eigvalsh(prob.q_matrix.toarray())
        assert w.min() >= -1e-9  # Q unchanged by fixing binaries: still PSD

    def test_big_m_rows_vacuous_when_region_unselected(self):
        # random workspace points must satisfy every region row with H = 0
        scn = small_scenario()
        prob = assemble(scn)
        layout = prob.layout
        rng = np.random.default_rng(3)
        lo, hi = scn.workspace_box
        a = prob.a_ineq.tocsr()
        region_rows = [
            r for r, fam in enumerate(prob.ineq_families)
            if fam == "region" and "hull" not in prob.ineq_labels[r] and " in " in prob.ineq_labels[r]
        ]
        for _ in range(20):
            x = np.zeros(prob.n_vars)
            for i in range(1, 9):
                for comp in range(3):
                    # within the per-step bound box, which big-M rows use
                    x[layout.foot(i, comp)] = rng.uniform(
                        prob.lower[layout.foot(i, comp)], prob.upper[layout.foot(i, comp)]
                    )
            resid = a[region_rows] @ x - prob.b_ineq[region_rows]
            assert np.max(resid) <= 1e-9

    def test_counting_example_formula(self):
        # binary count for a 12-step hexapod with 13 regions and 8 segments
        robot = RobotModel(
            n_legs=6,
            leg_offsets=(0.0, math.pi / 3, 2 * math.pi / 3, -math.pi, -2 * math.pi / 3, -math.pi / 3),
            l_leg=0.25,
            l_bnd=0.13,
            d_lim=0.26,
            dz_max=0.1,
        )
        regions = tuple(
            box_region(f"r{k}", -0.8 + 0.25 * k, -0.5 + 0.25 * k, -0.7, 0.7) for k in range(13)
        )
        scn = Scenario(
            robot=robot,
            regions=regions,
            start_footholds=nominal_stance(robot),
            start_yaw=0.0,
            goal_position=np.array([1.9, 0.0, 0.0]),
            goal_yaw=0.0,
            max_steps=12,
            theta_range=(-0.9, 0.9),
            n_segments=8,
            q_goal=np.diag([8.0, 8.0, 8.0, 3.0]),
            q_t=-0.2,
            q_r=0.05 * np.eye(2),
            workspace_box=(np.array([-0.9, -0.8, -0.06]), np.array([2.8, 0.8, 0.06])),
        )
        prob = assemble(scn)
        assert len(prob.binary_indices) == 200
        assert prob.n_vars - len(prob.binary_indices) == 42

    def test_max_steps_not_multiple_rejected(self):
        scn = small_scenario()
        object.__setattr__(scn, "max_steps", 9)
        with pytest.raises(ContractViolation):
            assemble(scn)

    def test_include_current_convention_solves(self):
        from stepplan.bnb import MiqpLimits, solve_miqp
        from stepplan.formulation import make_rounding_heuristic

        scn = small_scenario(coc_convention="include-current", goal_position=np.array([0.3, 0.0, 0.0]))
        prob = assemble(scn)
        sol = solve_miqp(
            prob,
            limits=MiqpLimits(gap=0.05, max_nodes=6),
            rounding=make_rounding_heuristic(scn, prob),
        )
        assert sol.feasible
        assert validate_assignment(prob, sol.x, 1e-6).ok


class TestValidateAssignment:
    def test_flags_region_choice_row(self):
        scn = small_scenario()
        prob = assemble(scn)
        x = np.zeros(prob.n_vars)
        report = validate_assignment(prob, x, 1e-6)
        assert not report.ok
        assert any(v.family == "region" and v.kind == "eq" for v in report.violations)

    def test_flags_dz_rows_after_perturbation(self):
        scn = small_scenario()
        prob = assemble(scn)
        layout = prob.layout
        goals = derive_leg_goals(scn.goal_position, scn.goal_yaw, scn.robot)
        # build the feasible all-trim assignment of the start=goal variant
        scn2 = small_scenario(start_footholds=goals, goal_position=scn.goal_position)
        prob2 = assemble(scn2)
        from stepplan.formulation import scenario_tables

        sin_t, cos_t = scenario_tables(scn2)
        x = np.zeros(prob2.n_vars)
        for i in range(1, 9):
            leg = leg_of(i, scn2.robot)
            for comp in range(3):
                x[layout.foot(i, comp)] = goals[leg - 1][comp]
            x[layout.trim(i)] = 1.0
            x[layout.region(i, 1)] = 1.0
        for c in (1, 2):
            x[layout.sin(c)] = sin_t.eval(0.0)
            x[layout.cos(c)] = cos_t.eval(0.0)
            k = sin_t.segment_of(0.0) + 1
            x[layout.sin_segment(c, k)] = 1.0
            x[layout.cos_segment(c, k)] = 1.0
        assert validate_assignment(prob2, x, 1e-6).ok
        x2 = x.copy()
        x2[layout.foot(5, 2)] += 2 * scn2.robot.dz_max
        report = validate_assignment(prob2, x2, 1e-6)
        assert any(v.family == "reachability" and "dz" in v.label for v in report.violations)

    def test_flags_fractional_binaries(self):
        scn = small_scenario()
        prob = assemble(scn)
        x = np.zeros(prob.n_vars)
        x[prob.layout.region(1, 1)] = 0.4
        report = validate_assignment(prob, x, 1e-6)
        assert any(v.family == "integrality" for v in report.violations)

    def test_wrong_length_rejected(self):
        prob = assemble(small_scenario())
        with pytest.raises(ContractViolation):
            validate_assignment(prob, np.zeros(3), 1e-6)
