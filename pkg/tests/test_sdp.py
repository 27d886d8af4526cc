"""
SDP layer tests.

Tests:
- AffineMatrix arithmetic and block assembly
- Small problems with known optimum, feasibility and infeasibility
- Backend accuracy settings and inaccurate infeasibility
- Post-solve residual check
- SDPA export format
"""

import cvxpy as cp
import numpy as np
import pytest

from app import config
from app.errors import DimensionError
from app.services.sdp import (
    AffineMatrix,
    SdpProblem,
    SdpSolution,
    SolveStatus,
    check_solution,
    export_sdpa,
    solve_sdp,
    solver_options,
    to_sdpa,
)


# ============ Expressions ============

def test_affine_evaluate_and_pack():
    """Test pack/unpack round trip and evaluation of a symmetric variable."""
    problem = SdpProblem()
    P = problem.symmetric("P", 2)
    t = problem.scalar("t")
    values = {"P": np.array([[1.0, 2.0], [2.0, 3.0]]), "t": 4.0}
    y = problem.pack(values)
    assert problem.num_coordinates == 4
    np.testing.assert_array_equal(P.evaluate(y), values["P"])
    assert t.evaluate(y)[0, 0] == 4.0
    np.testing.assert_array_equal(problem.unpack(y)["P"], values["P"])


def test_affine_products_with_arrays():
    """Test left and right products with constant arrays."""
    problem = SdpProblem()
    X = problem.matrix("X", 2, 2)
    A = np.array([[1.0, 2.0], [0.0, 1.0]])
    value = np.array([[0.5, -1.0], [2.0, 3.0]])
    y = problem.pack({"X": value})
    np.testing.assert_allclose((A @ X @ A.T).evaluate(y), A @ value @ A.T)
    np.testing.assert_allclose((X.T - 2.0 * X).evaluate(y), value.T - 2.0 * value)
    np.testing.assert_allclose(X.kron_identity(2).evaluate(y), np.kron(value, np.eye(2)))
    assert (X.trace()).evaluate(y)[0, 0] == pytest.approx(3.5)


def test_block_assembly():
    """Test block matrices mix variables and constant arrays."""
    problem = SdpProblem()
    t = problem.scalar("t")
    M = AffineMatrix.block([[t, np.ones((1, 1))], [np.ones((1, 1)), 2.0 * t]])
    np.testing.assert_array_equal(M.evaluate(np.array([3.0])), [[3.0, 1.0], [1.0, 6.0]])


def test_shape_mismatch():
    """Test adding expressions of different shapes fails."""
    problem = SdpProblem()
    with pytest.raises(DimensionError):
        problem.symmetric("P", 2) + np.eye(3)


def test_nonsymmetric_lmi_rejected():
    """Test an LMI with a nonsymmetric constant is rejected."""
    problem = SdpProblem()
    t = problem.scalar("t")
    with pytest.raises(DimensionError):
        problem.add_lmi("bad", AffineMatrix.block([[t, np.ones((1, 1))], [np.zeros((1, 1)), t]]))


def test_default_margin_scales_with_constant():
    """Test the margin is eps * max(1, ||C0||_2)."""
    problem = SdpProblem(eps=1e-6)
    t = problem.scalar("t")
    assert problem.add_lmi("small", t).margin == pytest.approx(1e-6)
    assert problem.add_lmi("large", t + 50.0).margin == pytest.approx(5e-5)


# ============ Solving ============

def test_scalar_minimum():
    """Test min t s.t. [t] >= 0 is 0 up to the margin."""
    problem = SdpProblem("scalar", eps=1e-8)
    t = problem.scalar("t")
    problem.add_lmi("t nonnegative", t)
    problem.minimize(t)
    solution = solve_sdp(problem)
    assert solution.status == SolveStatus.OPTIMAL
    assert abs(solution.values["t"]) <= 1e-6


def _lyapunov_problem(a):
    problem = SdpProblem(f"lyapunov-{a}")
    P = problem.symmetric("P", 1)
    problem.add_lmi("P >= 1", P - np.eye(1))
    problem.add_lmi("decrease", P - a * a * P - np.eye(1))
    return problem


def test_feasible_scalar_lyapunov():
    """Test P - a^2 P >= 1 is feasible for a = 0.5."""
    problem = _lyapunov_problem(0.5)
    assert problem.is_feasibility
    solution = solve_sdp(problem)
    assert solution.status == SolveStatus.OPTIMAL
    assert solution.values["P"][0, 0] >= 4.0 / 3.0 - 1e-6


def test_infeasible_scalar_lyapunov():
    """Test P - a^2 P >= 1 is infeasible for a = 2."""
    solution = solve_sdp(_lyapunov_problem(2.0))
    assert solution.status == SolveStatus.INFEASIBLE
    assert solution.values == {}


def test_two_by_two_trace_minimum():
    """Test min tr P s.t. P >= diag(1, 2) reaches 3."""
    problem = SdpProblem("trace")
    P = problem.symmetric("P", 2)
    problem.add_lmi("lower bound", P - np.diag([1.0, 2.0]))
    problem.minimize(P.trace())
    solution = solve_sdp(problem)
    assert solution.status == SolveStatus.OPTIMAL
    assert solution.objective == pytest.approx(3.0, abs=1e-5)
    assert solution.worst_violation >= -1e-7


def test_unknown_solver_is_numerical_failure():
    """Test a backend error becomes numerical-failure, not infeasibility."""
    problem = _lyapunov_problem(0.5)
    solution = solve_sdp(problem, solver="NO_SUCH_SOLVER")
    assert solution.status == SolveStatus.NUMERICAL_FAILURE


def test_backend_runs_at_configured_accuracy():
    """Test the backend tolerances sit well below the residual check and are recorded."""
    options = solver_options("clarabel")
    assert max(options["tol_feas"], options["tol_gap_abs"], options["tol_gap_rel"]) <= 1e-9
    assert solver_options("NO_SUCH_SOLVER") == {}
    solution = solve_sdp(_lyapunov_problem(0.5))
    assert solution.diagnostics["backend_options"]["tol_feas"] == config.SDP_SOLVER_TOL


def test_inaccurate_infeasibility_is_numerical_failure(monkeypatch):
    """Test an uncertified infeasible status is not reported as proven infeasibility."""
    def fake_solve(self, *args, **kwargs):
        self._status = cp.INFEASIBLE_INACCURATE

    monkeypatch.setattr(cp.Problem, "solve", fake_solve)
    solution = solve_sdp(_lyapunov_problem(2.0))
    assert solution.status == SolveStatus.NUMERICAL_FAILURE
    assert solution.diagnostics["inaccurate_infeasibility"] is True


# ============ Residual check ============

def test_check_solution_flags_perturbation():
    """Test a solution pushed outside the feasible set is flagged."""
    problem = _lyapunov_problem(0.5)
    good = SdpSolution(SolveStatus.OPTIMAL, {"P": np.array([[2.0]])})
    assert check_solution(problem, good).ok
    bad = SdpSolution(SolveStatus.OPTIMAL, {"P": np.array([[0.9]])})
    report = check_solution(problem, bad)
    assert not report.ok
    assert "P >= 1" in report.flagged
    assert report.worst == pytest.approx(-0.325)


# ============ SDPA export ============

def test_sdpa_text():
    """Test the sparse SDPA layout of a one-variable problem."""
    problem = SdpProblem("tiny", eps=0.0)
    t = problem.scalar("t")
    problem.add_lmi("bound", t - 1.0)
    problem.minimize(t)
    lines = to_sdpa(problem).splitlines()
    assert lines[0].startswith('"tiny')
    assert lines[1:5] == ["1", "1", "1", "1.0"]
    assert "0 1 1 1 1.0" in lines
    assert "1 1 1 1 1.0" in lines


def test_export_sdpa_writes_file(tmp_path):
    """Test export writes the same text to disk."""
    problem = _lyapunov_problem(0.5)
    path = export_sdpa(problem, tmp_path / "lyapunov.dat-s")
    assert path.read_text() == to_sdpa(problem)
    assert path.read_text().splitlines()[3] == "1 1"
