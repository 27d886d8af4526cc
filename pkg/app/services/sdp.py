"""
Solver-neutral semidefinite programs.

Decision variables are flattened into one coordinate vector y. Every LMI
is stored as an affine matrix C0 + sum_i y_i C_i that must satisfy
C0 + sum_i y_i C_i >= margin * I, with margin = eps * max(1, ||C0||_2).
Problems are assembled with AffineMatrix expressions, solved through cvxpy,
and every optimal answer is re-checked here independently of the backend.
"""

import enum
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import cvxpy as cp
import numpy as np

from app import config
from app.errors import DimensionError

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-7


class AffineMatrix:
    """
    Matrix expression affine in the coordinate vector y.

    Attributes:
        constant: Constant part
        terms: Coordinate index -> coefficient matrix
    """

    # make numpy defer `ndarray @ AffineMatrix` and friends to the reflected methods
    __array_ufunc__ = None

    def __init__(self, constant, terms: Optional[Dict[int, np.ndarray]] = None):
        self.constant = np.atleast_2d(np.asarray(constant, dtype=float))
        self.terms = dict(terms or {})

    @property
    def shape(self):
        return self.constant.shape

    @staticmethod
    def wrap(value) -> "AffineMatrix":
        return value if isinstance(value, AffineMatrix) else AffineMatrix(value)

    def _map(self, fn) -> "AffineMatrix":
        return AffineMatrix(fn(self.constant), {i: fn(c) for i, c in self.terms.items()})

    def __add__(self, other) -> "AffineMatrix":
        other = AffineMatrix.wrap(other)
        if other.shape != self.shape:
            raise DimensionError(f"Cannot add {self.shape} and {other.shape} expressions")
        terms = dict(self.terms)
        for i, c in other.terms.items():
            terms[i] = terms[i] + c if i in terms else c
        return AffineMatrix(self.constant + other.constant, terms)

    __radd__ = __add__

    def __neg__(self) -> "AffineMatrix":
        return self._map(lambda m: -m)

    def __sub__(self, other) -> "AffineMatrix":
        return self + (-AffineMatrix.wrap(other))

    def __rsub__(self, other) -> "AffineMatrix":
        return AffineMatrix.wrap(other) - self

    def __mul__(self, factor: float) -> "AffineMatrix":
        return self._map(lambda m: factor * m)

    __rmul__ = __mul__

    def __matmul__(self, other) -> "AffineMatrix":
        other = np.atleast_2d(np.asarray(other, dtype=float))
        return self._map(lambda m: m @ other)

    def __rmatmul__(self, other) -> "AffineMatrix":
        other = np.atleast_2d(np.asarray(other, dtype=float))
        return self._map(lambda m: other @ m)

    @property
    def T(self) -> "AffineMatrix":
        return self._map(lambda m: m.T)

    def kron_identity(self, r: int) -> "AffineMatrix":
        """self kron I_r."""
        eye = np.eye(r)
        return self._map(lambda m: np.kron(m, eye))

    def trace(self) -> "AffineMatrix":
        return self._map(lambda m: np.atleast_2d(np.trace(m)))

    def evaluate(self, y: np.ndarray) -> np.ndarray:
        out = self.constant.copy()
        for i, c in self.terms.items():
            out = out + y[i] * c
        return out

    @staticmethod
    def block(rows: Sequence[Sequence[Union["AffineMatrix", np.ndarray]]]) -> "AffineMatrix":
        """Assemble a block matrix; constant blocks may be plain arrays."""
        grid = [[AffineMatrix.wrap(b) for b in row] for row in rows]
        indices = sorted({i for row in grid for b in row for i in b.terms})

        def assemble(pick):
            return np.block([[pick(b) for b in row] for row in grid])

        constant = assemble(lambda b: b.constant)
        terms = {
            i: assemble(lambda b, i=i: b.terms.get(i, np.zeros(b.shape))) for i in indices
        }
        return AffineMatrix(constant, terms)


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str  # "scalar", "symmetric" or "matrix"
    shape: tuple
    offset: int
    size: int


@dataclass(frozen=True)
class LmiConstraint:
    name: str
    expr: AffineMatrix
    margin: float


class SolveStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical-failure"


class SdpProblem:
    """
    Canonical LMI problem: minimize c.y subject to LMIs, or feasibility only.

    Example:
        problem = SdpProblem("lyapunov")
        P = problem.symmetric("P", 2)
        problem.add_lmi("P positive", P)
        problem.add_lmi("decrease", P - A.T @ P @ A)
    """

    def __init__(self, name: str = "sdp", eps: float = config.SDP_EPS):
        self.name = name
        self.eps = eps
        self.variables: Dict[str, Variable] = {}
        self.constraints: List[LmiConstraint] = []
        self.objective: Optional[AffineMatrix] = None
        self._size = 0

    @property
    def num_coordinates(self) -> int:
        return self._size

    @property
    def is_feasibility(self) -> bool:
        return self.objective is None

    def _declare(self, name: str, kind: str, shape: tuple, size: int) -> Variable:
        if name in self.variables:
            raise ValueError(f"Variable {name!r} already declared")
        variable = Variable(name, kind, shape, self._size, size)
        self.variables[name] = variable
        self._size += size
        return variable

    def scalar(self, name: str) -> AffineMatrix:
        v = self._declare(name, "scalar", (1, 1), 1)
        return AffineMatrix(np.zeros((1, 1)), {v.offset: np.ones((1, 1))})

    def symmetric(self, name: str, n: int) -> AffineMatrix:
        v = self._declare(name, "symmetric", (n, n), n * (n + 1) // 2)
        terms = {}
        for k, (i, j) in enumerate(zip(*np.triu_indices(n))):
            basis = np.zeros((n, n))
            basis[i, j] = basis[j, i] = 1.0
            terms[v.offset + k] = basis
        return AffineMatrix(np.zeros((n, n)), terms)

    def matrix(self, name: str, rows: int, cols: int) -> AffineMatrix:
        v = self._declare(name, "matrix", (rows, cols), rows * cols)
        terms = {}
        for k in range(rows * cols):
            basis = np.zeros((rows, cols))
            basis.flat[k] = 1.0
            terms[v.offset + k] = basis
        return AffineMatrix(np.zeros((rows, cols)), terms)

    def add_lmi(self, name: str, expr: AffineMatrix, margin: Optional[float] = None) -> LmiConstraint:
        """
        Require expr >= margin * I.

        The default margin is eps * max(1, ||constant block||_2).

        Raises:
            DimensionError: If expr is not square and symmetric
        """
        expr = AffineMatrix.wrap(expr)
        rows, cols = expr.shape
        if rows != cols:
            raise DimensionError(f"LMI {name!r} is not square: {expr.shape}")
        for c in [expr.constant, *expr.terms.values()]:
            if not np.allclose(c, c.T, atol=1e-10 * max(1.0, float(np.abs(c).max(initial=0.0))), rtol=0):
                raise DimensionError(f"LMI {name!r} is not symmetric")
        expr = 0.5 * (expr + expr.T)
        unknown = [i for i in expr.terms if i >= self._size]
        if unknown:
            raise ValueError(f"LMI {name!r} references undeclared coordinates {unknown}")
        if margin is None:
            margin = self.eps * max(1.0, float(np.linalg.norm(expr.constant, 2)))
        constraint = LmiConstraint(name, expr, margin)
        self.constraints.append(constraint)
        return constraint

    def minimize(self, expr: AffineMatrix):
        expr = AffineMatrix.wrap(expr)
        if expr.shape != (1, 1):
            raise DimensionError("Objective must be a scalar expression")
        self.objective = expr

    def unpack(self, y: np.ndarray) -> Dict[str, Union[float, np.ndarray]]:
        values = {}
        for v in self.variables.values():
            chunk = y[v.offset:v.offset + v.size]
            if v.kind == "scalar":
                values[v.name] = float(chunk[0])
            elif v.kind == "symmetric":
                n = v.shape[0]
                M = np.zeros((n, n))
                M[np.triu_indices(n)] = chunk
                values[v.name] = M + np.triu(M, 1).T
            else:
                values[v.name] = chunk.reshape(v.shape).copy()
        return values

    def pack(self, values: Dict[str, Union[float, np.ndarray]]) -> np.ndarray:
        y = np.zeros(self._size)
        for v in self.variables.values():
            value = np.atleast_2d(np.asarray(values[v.name], dtype=float))
            if v.kind == "symmetric":
                value = 0.5 * (value + value.T)
                y[v.offset:v.offset + v.size] = value[np.triu_indices(v.shape[0])]
            else:
                y[v.offset:v.offset + v.size] = value.ravel()
        return y


@dataclass
class ResidualReport:
    """Minimum eigenvalue of every instantiated LMI."""
    residuals: Dict[str, float]
    flagged: List[str]

    @property
    def worst(self) -> float:
        return min(self.residuals.values(), default=0.0)

    @property
    def ok(self) -> bool:
        return not self.flagged


@dataclass
class SdpSolution:
    status: SolveStatus
    values: Dict[str, Union[float, np.ndarray]] = field(default_factory=dict)
    objective: Optional[float] = None
    worst_violation: Optional[float] = None
    diagnostics: Dict[str, object] = field(default_factory=dict)


def check_solution(problem: SdpProblem, solution: SdpSolution) -> ResidualReport:
    """
    Instantiate every LMI at the solution values and report its minimum eigenvalue.

    A constraint is flagged when its minimum eigenvalue is below
    -1e-7 * max(1, ||instantiated matrix||_2).
    """
    y = problem.pack(solution.values)
    residuals, flagged = {}, []
    for c in problem.constraints:
        S = c.expr.evaluate(y)
        S = 0.5 * (S + S.T)
        lam_min = float(np.linalg.eigvalsh(S)[0])
        residuals[c.name] = lam_min
        if lam_min < -RESIDUAL_TOL * max(1.0, float(np.linalg.norm(S, 2))):
            flagged.append(c.name)
    return ResidualReport(residuals, flagged)


def _cvx_affine(expr: AffineMatrix, y: cp.Variable):
    rows, cols = expr.shape
    K = np.zeros((y.shape[0], rows * cols))
    for i, c in expr.terms.items():
        K[i] = c.ravel()
    return cp.reshape(expr.constant.ravel() + K.T @ y, (rows, cols), order="C")


# infeasible_inaccurate is absent: it maps to numerical-failure
_STATUS = {
    cp.OPTIMAL: SolveStatus.OPTIMAL,
    cp.OPTIMAL_INACCURATE: SolveStatus.OPTIMAL,
    cp.INFEASIBLE: SolveStatus.INFEASIBLE,
}


def solver_options(
    solver: str,
    tol: float = config.SDP_SOLVER_TOL,
    max_iter: int = config.SDP_MAX_ITER,
) -> Dict[str, object]:
    """Backend keyword arguments for the configured accuracy; unknown backends run at their defaults."""
    name = solver.upper()
    if name == "CLARABEL":
        return {"tol_feas": tol, "tol_gap_abs": tol, "tol_gap_rel": tol, "max_iter": max_iter}
    if name == "SCS":
        return {"eps_abs": tol, "eps_rel": tol, "max_iters": 100 * max_iter}
    return {}


def solve_sdp(problem: SdpProblem, solver: str = config.SDP_SOLVER, verbose: bool = False) -> SdpSolution:
    """
    Solve through cvxpy and verify the answer.

    Each LMI gets a PSD slack S_j = expr_j - margin_j * I. An optimal backend
    status whose post-solve residual check fails is reported as
    numerical-failure, as is an infeasibility the backend could not certify
    to full accuracy.
    """
    y = cp.Variable(problem.num_coordinates)
    constraints = []
    for c in problem.constraints:
        k = c.expr.shape[0]
        slack = cp.Variable((k, k), PSD=True)
        constraints.append(slack == _cvx_affine(c.expr, y) - c.margin * np.eye(k))
    if problem.objective is None:
        objective = cp.Minimize(0)
    else:
        objective = cp.Minimize(_cvx_affine(problem.objective, y)[0, 0])

    cvx_problem = cp.Problem(objective, constraints)
    options = solver_options(solver)
    try:
        cvx_problem.solve(solver=solver, verbose=verbose, **options)
    except cp.error.SolverError as exc:
        logger.warning("SDP %s: solver %s failed: %s", problem.name, solver, exc)
        return SdpSolution(SolveStatus.NUMERICAL_FAILURE, diagnostics={"solver": solver, "message": str(exc)})

    status = _STATUS.get(cvx_problem.status, SolveStatus.NUMERICAL_FAILURE)
    diagnostics = {"solver": solver, "backend_status": cvx_problem.status, "backend_options": options}
    if cvx_problem.status == cp.INFEASIBLE_INACCURATE:
        diagnostics["inaccurate_infeasibility"] = True
    logger.debug("SDP %s: backend status %s", problem.name, cvx_problem.status)
    if status != SolveStatus.OPTIMAL or y.value is None:
        if status == SolveStatus.OPTIMAL:
            status = SolveStatus.NUMERICAL_FAILURE
        return SdpSolution(status, diagnostics=diagnostics)

    values = problem.unpack(np.asarray(y.value, dtype=float))
    objective_value = None
    if problem.objective is not None:
        objective_value = float(problem.objective.evaluate(problem.pack(values))[0, 0])
    solution = SdpSolution(status, values, objective_value, diagnostics=diagnostics)
    report = check_solution(problem, solution)
    solution.worst_violation = report.worst
    diagnostics["residuals"] = report.residuals
    if not report.ok:
        logger.warning("SDP %s: post-solve check flagged %s", problem.name, report.flagged)
        solution.status = SolveStatus.NUMERICAL_FAILURE
        diagnostics["flagged"] = report.flagged
    return solution


# ============ SDPA export ============

def to_sdpa(problem: SdpProblem) -> str:
    """
    Sparse SDPA text of the problem.

    SDPA minimizes c.x subject to sum_i x_i F_i - F_0 >= 0, so each LMI
    becomes one diagonal block with F_0 = -(C0 - margin * I) and F_i = C_i.
    A constant objective offset is not representable and is dropped.
    """
    out = io.StringIO()
    out.write(f'"{problem.name}: {len(problem.constraints)} LMI blocks\n')
    out.write(f"{problem.num_coordinates}\n")
    out.write(f"{len(problem.constraints)}\n")
    out.write(" ".join(str(c.expr.shape[0]) for c in problem.constraints) + "\n")
    c_vec = np.zeros(problem.num_coordinates)
    if problem.objective is not None:
        for i, coefficient in problem.objective.terms.items():
            c_vec[i] = coefficient[0, 0]
    out.write(" ".join(repr(float(v)) for v in c_vec) + "\n")

    for block, c in enumerate(problem.constraints, start=1):
        k = c.expr.shape[0]
        matrices = {0: -(c.expr.constant - c.margin * np.eye(k))}
        matrices.update({i + 1: m for i, m in c.expr.terms.items()})
        for matno in sorted(matrices):
            m = matrices[matno]
            for i, j in zip(*np.triu_indices(k)):
                if m[i, j] != 0.0:
                    out.write(f"{matno} {block} {i + 1} {j + 1} {float(m[i, j])!r}\n")
    return out.getvalue()


def export_sdpa(problem: SdpProblem, path: Union[str, Path]) -> Path:
    """Write the SDPA sparse file (conventionally *.dat-s)."""
    path = Path(path)
    path.write_text(to_sdpa(problem))
    logger.info("Exported SDP %s to %s", problem.name, path)
    return path
