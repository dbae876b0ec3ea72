import math

import numpy as np
import pytest
import scipy.sparse as sp

from stepplan.errors import ContractViolation
from stepplan.formulation import MiqpProblem
from stepplan.qp import BoxQp, QpSettings, solve_qp


def make_problem(Q, c, const=0.0, lb=None, ub=None, bins=(), a_in=None, b_in=None,
                 a_eq=None, b_eq=None):
    n = len(c)
    lb = np.full(n, -50.0) if lb is None else np.asarray(lb, float)
    ub = np.full(n, 50.0) if ub is None else np.asarray(ub, float)
    return MiqpProblem(
        q_matrix=sp.csr_matrix(np.atleast_2d(np.asarray(Q, float))),
        c_vector=np.asarray(c, float),
        objective_constant=const,
        a_ineq=sp.csr_matrix(np.atleast_2d(np.asarray(a_in, float))) if a_in is not None else sp.csr_matrix((0, n)),
        b_ineq=np.asarray(b_in, float) if b_in is not None else np.zeros(0),
        a_eq=sp.csr_matrix(np.atleast_2d(np.asarray(a_eq, float))) if a_eq is not None else sp.csr_matrix((0, n)),
        b_eq=np.asarray(b_eq, float) if b_eq is not None else np.zeros(0),
        lower=lb,
        upper=ub,
        binary_indices=np.asarray(bins, int),
        layout=None,
        ineq_families=tuple("r" for _ in range(len(b_in) if b_in is not None else 0)),
        ineq_labels=tuple(f"r{i}" for i in range(len(b_in) if b_in is not None else 0)),
        eq_families=tuple("e" for _ in range(len(b_eq) if b_eq is not None else 0)),
        eq_labels=tuple(f"e{i}" for i in range(len(b_eq) if b_eq is not None else 0)),
    )


class TestSolveQp:
    def test_active_bound(self):
        # min x^2 with x >= 3
        prob = make_problem([[1.0]], [0.0], lb=[3.0], ub=[100.0])
        sol = solve_qp(prob)
        assert sol.status == "optimal"
        assert sol.x[0] == pytest.approx(3.0, abs=1e-6)
        assert sol.objective == pytest.approx(9.0, abs=1e-5)

    def test_unconstrained_quadratic(self):
        # min (x-1)^2 + (y-2)^2 written as x'Qx + c'x + const
        prob = make_problem(np.eye(2), [-2.0, -4.0], const=5.0)
        sol = solve_qp(prob)
        assert sol.status == "optimal"
        assert np.allclose(sol.x, [1.0, 2.0], atol=1e-6)
        assert sol.objective == pytest.approx(0.0, abs=1e-6)

    def test_kkt_residuals_within_tolerance(self):
        rng = np.random.default_rng(11)
        G = rng.normal(size=(4, 4))
        prob = make_problem(G.T @ G + 0.1 * np.eye(4), rng.normal(size=4),
                            a_in=rng.normal(size=(3, 4)), b_in=rng.normal(size=3) + 2.0,
                            lb=np.full(4, -5.0), ub=np.full(4, 5.0))
        sol = solve_qp(prob)
        assert sol.status == "optimal"
        assert sol.prim_res <= 1e-6
        assert sol.dual_res <= 1e-6

    def test_infeasible_detection(self):
        prob = make_problem([[1.0]], [0.0], a_in=[[1.0], [-1.0]], b_in=[-1.0, -1.0],
                            lb=[-5.0], ub=[5.0])
        sol = solve_qp(prob)
        assert sol.status == "infeasible"
        assert sol.certificate_residual is not None
        assert math.isinf(sol.objective)

    def test_equality_constraints(self):
        # min x^2 + y^2 s.t. x + y = 2 -> (1, 1)
        prob = make_problem(np.eye(2), [0.0, 0.0], a_eq=[[1.0, 1.0]], b_eq=[2.0])
        sol = solve_qp(prob)
        assert np.allclose(sol.x, [1.0, 1.0], atol=1e-6)

    def test_unbounded_variables_rejected(self):
        prob = make_problem([[1.0]], [0.0], lb=[-np.inf], ub=[np.inf])
        with pytest.raises(ContractViolation):
            solve_qp(prob)

    def test_matches_projected_gradient_oracle(self):
        # strictly convex box QPs, checked against a projected-gradient oracle
        rng = np.random.default_rng(2023)
        for _ in range(12):
            d = int(rng.integers(2, 7))
            G = rng.normal(size=(d, d))
            Q = G.T @ G + 0.2 * np.eye(d)
            c = rng.normal(size=d)
            lo = rng.uniform(-2, -0.2, d)
            hi = rng.uniform(0.2, 2, d)
            prob = make_problem(Q, c, lb=lo, ub=hi)
            sol = solve_qp(prob)
            assert sol.status == "optimal"
            # oracle: projected gradient to high accuracy
            P = 2.0 * Q
            L = float(np.linalg.eigvalsh(P).max())
            x = np.clip(np.zeros(d), lo, hi)
            for _ in range(200_000):
                g = P @ x + c
                x_new = np.clip(x - g / L, lo, hi)
                if np.max(np.abs(x_new - x)) < 1e-12:
                    x = x_new
                    break
                x = x_new
            oracle_obj = float(x @ Q @ x + c @ x)
            assert sol.objective == pytest.approx(oracle_obj, abs=1e-5)


class TestWorkspaceReuse:
    def test_fixings_pin_variables(self):
        prob = make_problem(np.eye(2), [0.0, 0.0], lb=[-1, -1], ub=[1, 1])
        ws = BoxQp.from_miqp(prob)
        sol = ws.solve(fixings={1: 0.75})
        assert sol.x[1] == pytest.approx(0.75, abs=1e-6)
        # workspace reusable with different fixings
        sol2 = ws.solve(fixings={1: -0.5})
        assert sol2.x[1] == pytest.approx(-0.5, abs=1e-6)

    def test_warm_start_paths(self):
        prob = make_problem(np.eye(3), [1.0, -2.0, 0.5])
        ws = BoxQp.from_miqp(prob)
        cold = ws.solve(warm_start="cold")
        carried = ws.solve()  # carry
        primal = ws.solve(warm_start=cold.x)
        for sol in (cold, carried, primal):
            assert sol.status == "optimal"
            assert np.allclose(sol.x, cold.x, atol=1e-5)

    def test_polish_gives_high_accuracy(self):
        prob = make_problem([[1.0]], [0.0], lb=[3.0], ub=[100.0])
        sol = solve_qp(prob, settings=QpSettings(polish=True))
        assert sol.polished
        assert max(sol.prim_res, sol.dual_res) < 1e-9

    def test_deterministic_repeat(self):
        rng = np.random.default_rng(5)
        G = rng.normal(size=(5, 5))
        prob = make_problem(G.T @ G + 0.05 * np.eye(5), rng.normal(size=5),
                            a_in=rng.normal(size=(4, 5)), b_in=rng.normal(size=4) + 3.0)
        a = solve_qp(prob)
        b = solve_qp(prob)
        assert a.iterations == b.iterations
        assert np.array_equal(a.x, b.x)
