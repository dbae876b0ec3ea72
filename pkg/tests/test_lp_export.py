import math
import re

import numpy as np
import pytest

from stepplan.formulation import assemble
from stepplan.lp_export import problem_to_lp
from stepplan.model import RobotModel, SafeRegion, Scenario, nominal_position


@pytest.fixture(scope="module")
def problem():
    robot = RobotModel(
        n_legs=4,
        leg_offsets=(math.pi / 4, 3 * math.pi / 4, -3 * math.pi / 4, -math.pi / 4),
        l_leg=0.2 * math.sqrt(2.0),
        l_bnd=0.13,
        d_lim=0.22,
        dz_max=0.1,
    )
    holds = np.array(
        [list(nominal_position((0, 0), 0.0, j + 1, robot)) + [0.0] for j in range(4)]
    )
    region = SafeRegion(
        np.array([[1.0, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]]),
        np.array([1.2, 0.7, 0.7, 0.7, 0.05, 0.05]),
        "ground",
        bbox=(np.array([-0.7, -0.7, -0.05]), np.array([1.2, 0.7, 0.05])),
    )
    scn = Scenario(
        robot=robot,
        regions=(region,),
        start_footholds=holds,
        start_yaw=0.0,
        goal_position=np.array([0.4, 0.0, 0.0]),
        goal_yaw=0.0,
        max_steps=8,
        theta_range=(-0.8, 0.8),
        n_segments=4,
        q_goal=np.diag([8.0, 8.0, 8.0, 3.0]),
        q_t=-0.2,
        q_r=0.05 * np.eye(2),
        workspace_box=(np.array([-0.75, -0.75, -0.06]), np.array([1.25, 0.75, 0.06])),
    )
    return assemble(scn)


class TestLpFormat:
    def test_sections_present_in_order(self, problem):
        text = problem_to_lp(problem)
        positions = [text.index(s) for s in ("Minimize", "Subject To", "Bounds", "Binaries", "End")]
        assert positions == sorted(positions)

    def test_row_counts(self, problem):
        text = problem_to_lp(problem)
        assert len(re.findall(r"^ c\d+:", text, re.M)) == problem.n_ineq
        assert len(re.findall(r"^ e\d+:", text, re.M)) == problem.n_eq

    def test_quadratic_bracket_convention(self, problem):
        text = problem_to_lp(problem)
        assert "[" in text and "] / 2" in text
        # a diagonal entry q appears as 2q inside the bracket
        q = problem.q_matrix.tocoo()
        diag = {(r, c): v for r, c, v in zip(q.row, q.col, q.data) if r == c and v != 0.0}
        (r, _), v = next(iter(diag.items()))
        name = problem.layout.var_name(r)
        m = re.search(rf"([0-9.e+-]+) {re.escape(name)} \^2", text)
        assert m is not None
        assert float(m.group(1)) == pytest.approx(2.0 * v, rel=1e-12)

    def test_binaries_listed(self, problem):
        text = problem_to_lp(problem)
        binaries_section = text.split("Binaries", 1)[1].split("End", 1)[0]
        names = binaries_section.split()
        free = [
            problem.layout.var_name(int(i))
            for i in problem.binary_indices
            if problem.lower[i] < problem.upper[i]
        ]
        for nm in free:
            assert nm in names

    def test_deterministic(self, problem):
        assert problem_to_lp(problem) == problem_to_lp(problem)

    def test_all_variables_bounded(self, problem):
        text = problem_to_lp(problem)
        bounds = text.split("Bounds", 1)[1].split("Binaries", 1)[0]
        # every continuous variable gets a range line
        n_cont = problem.n_vars - len(problem.binary_indices)
        assert len(re.findall(r"<=", bounds)) >= n_cont
