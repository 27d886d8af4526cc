"""
State-feedback design for generalized plants.

With X = P^{-1} and Y = F X, the closed-loop H2 conditions become LMIs in
(X, Y, R, t) once E[.] terms are lifted through joint tilde factors of
[A_o, B_ou] and [C_o, D_ou]. The decay-rate design is a quasi-convex
problem in lambda and is solved by bisection over LMI feasibility tests.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy.linalg import LinAlgError, solve

from app import config
from app.errors import InfeasibleError, SolverError
from app.models import GeneralizedPlant, close_loop
from app.services.analysis import H2Result, h2_norm
from app.services.factorize import TildeMatrix, joint_tilde_of, tilde_of
from app.services.moments import MomentMap, gram_matrix
from app.services.sdp import AffineMatrix, SdpProblem, SdpSolution, SolveStatus, solve_sdp

logger = logging.getLogger(__name__)

DECAY_UPPER = 1.0 - 1e-6
MAX_BISECTIONS = 40
ROUND_TRIP_TOL = 1e-3


@dataclass
class SynthesisResult:
    """
    Optimal H2 state feedback u = F x.

    Attributes:
        F: p_u x n gain, F = Y X^{-1}
        gamma: Guaranteed bound on the closed-loop H2 norm
        X, Y, R: LMI certificate
        certified_norm: Closed-loop norm from re-analysis, once certified
    """
    F: np.ndarray
    gamma: float
    X: np.ndarray
    Y: np.ndarray
    R: np.ndarray
    certified_norm: Optional[float] = None
    diagnostics: Dict[str, object] = field(default_factory=dict)


@dataclass
class DecayResult:
    F: np.ndarray
    lam: float
    X: np.ndarray
    Y: np.ndarray
    iterations: int
    diagnostics: Dict[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class _PlantTildes:
    A: TildeMatrix
    B_u: TildeMatrix
    C: TildeMatrix
    D_u: TildeMatrix
    B_w: TildeMatrix


def _plant_tildes(plant: GeneralizedPlant, rank_tol: float) -> _PlantTildes:
    A, B_u = joint_tilde_of(plant.A_o, plant.B_ou, plant.dist, rank_tol)
    C, D_u = joint_tilde_of(plant.C_o, plant.D_ou, plant.dist, rank_tol)
    B_w = tilde_of(plant.B_ow, plant.dist, rank_tol)
    return _PlantTildes(A, B_u, C, D_u, B_w)


def recover_gain(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """
    F with F X = Y, solved as X^T F^T = Y^T.

    Raises:
        SolverError: If X is singular
    """
    try:
        return solve(X.T, Y.T).T
    except LinAlgError as exc:
        raise SolverError(f"Cannot recover the gain: {exc}") from exc


def h2_synthesize(
    plant: GeneralizedPlant,
    eps: float = config.SDP_EPS,
    rank_tol: float = config.RANK_TOL,
    solver: str = config.SDP_SOLVER,
) -> SynthesisResult:
    """
    Minimize t subject to

        [[X, *, *], [A~X + B~Y, X kron I, *], [C~X + D~Y, 0, I]] >= eps I
        [[R - E[D_ow^T D_ow], *], [B~_ow, X kron I]] >= eps I
        t - tr R >= eps

    and return F = Y X^{-1}, gamma = sqrt(t).

    Raises:
        InfeasibleError: If the plant is not second-moment stabilizable
        SolverError: If the backend fails
    """
    n, pu, pw = plant.n, plant.pu, plant.pw
    tildes = _plant_tildes(plant, rank_tol)
    ra, rc, rw = tildes.A.bar_rank, tildes.C.bar_rank, tildes.B_w.bar_rank
    qc = plant.qz * rc
    gram_D = gram_matrix([plant.D_ow], plant.dist).G.reshape(plant.qz, pw, plant.qz, pw)
    E_D = np.einsum("rirj->ij", gram_D)

    problem = SdpProblem("h2-synthesis", eps)
    X = problem.symmetric("X", n)
    Y = problem.matrix("Y", pu, n)
    R = problem.symmetric("R", pw)
    t = problem.scalar("t")

    AXBY = tildes.A.Tmat @ X + tildes.B_u.Tmat @ Y
    CXDY = tildes.C.Tmat @ X + tildes.D_u.Tmat @ Y
    problem.add_lmi("X positive", X)
    problem.add_lmi(
        "performance",
        AffineMatrix.block([
            [X, AXBY.T, CXDY.T],
            [AXBY, X.kron_identity(ra), np.zeros((n * ra, qc))],
            [CXDY, np.zeros((qc, n * ra)), np.eye(qc)],
        ]),
    )
    problem.add_lmi(
        "disturbance",
        AffineMatrix.block([
            [R - E_D, tildes.B_w.Tmat.T],
            [tildes.B_w.Tmat, X.kron_identity(rw)],
        ]),
    )
    problem.add_lmi("trace bound", t - R.trace())
    problem.minimize(t)
    solution = solve_sdp(problem, solver)
    _raise_for_status(solution, "H2 synthesis")

    X_opt, Y_opt = solution.values["X"], solution.values["Y"]
    F = recover_gain(X_opt, Y_opt)
    gamma = float(np.sqrt(solution.values["t"]))
    logger.info("H2 synthesis: gamma = %.6f, F = %s", gamma, np.array2string(F, precision=4))
    diagnostics = {
        "status": solution.status.value,
        "bar_ranks": {"A_B_u": ra, "C_D_u": rc, "B_w": rw},
        "gain_residual": float(np.abs(F @ X_opt - Y_opt).max()),
        **solution.diagnostics,
    }
    return SynthesisResult(F, gamma, X_opt, Y_opt, solution.values["R"], diagnostics=diagnostics)


def _raise_for_status(solution: SdpSolution, what: str):
    if solution.status == SolveStatus.INFEASIBLE:
        raise InfeasibleError(f"{what} LMIs are infeasible; the plant is not second-moment stabilizable")
    if solution.status != SolveStatus.OPTIMAL:
        raise SolverError(f"{what} SDP ended with status {solution.status.value}")


def certify_synthesis(
    plant: GeneralizedPlant,
    result: SynthesisResult,
    eps: float = config.SDP_EPS,
    rank_tol: float = config.RANK_TOL,
    solver: str = config.SDP_SOLVER,
) -> H2Result:
    """
    Re-analyze the closed loop under result.F and record the certified norm.

    diagnostics["certified"] is False when the norm falls outside
    gamma * (1 +- 1e-3); the analysis result is returned either way so
    callers can report both numbers.
    """
    analysis = h2_norm(close_loop(plant, result.F), eps, rank_tol, solver)
    result.certified_norm = analysis.norm
    ratio = analysis.norm / result.gamma if result.gamma > 0 else 1.0
    result.diagnostics["round_trip_ratio"] = ratio
    result.diagnostics["certified"] = abs(ratio - 1.0) <= ROUND_TRIP_TOL
    if not result.diagnostics["certified"]:
        logger.warning(
            "Closed-loop norm %.6f differs from synthesized gamma %.6f by more than %.0e",
            analysis.norm, result.gamma, ROUND_TRIP_TOL,
        )
    return analysis


# ============ Decay-rate stabilization ============

def _decay_feasible(
    tildes: _PlantTildes,
    plant: GeneralizedPlant,
    lam: float,
    eps: float,
    solver: str,
) -> Optional[SdpSolution]:
    """Solution of [[lam^2 X, *], [A~X + B~Y, X kron I]] >= eps I, X >= I, or None."""
    n, ra = plant.n, tildes.A.bar_rank
    problem = SdpProblem(f"decay-{lam:.6f}", eps)
    X = problem.symmetric("X", n)
    Y = problem.matrix("Y", plant.pu, n)
    AXBY = tildes.A.Tmat @ X + tildes.B_u.Tmat @ Y
    problem.add_lmi("X >= I", X - np.eye(n))
    problem.add_lmi("decay", AffineMatrix.block([[lam**2 * X, AXBY.T], [AXBY, X.kron_identity(ra)]]))
    problem.minimize(X.trace())
    solution = solve_sdp(problem, solver)
    if solution.status == SolveStatus.NUMERICAL_FAILURE:
        logger.warning("Decay test at lambda=%.6f failed numerically; treated as infeasible", lam)
    logger.debug("Decay test lambda=%.6f: %s", lam, solution.status.value)
    return solution if solution.status == SolveStatus.OPTIMAL else None


def stabilize_decay(
    plant: GeneralizedPlant,
    bisect_tol: float = config.BISECT_TOL,
    eps: float = config.SDP_EPS,
    rank_tol: float = config.RANK_TOL,
    solver: str = config.SDP_SOLVER,
) -> DecayResult:
    """
    Smallest decay rate lambda in (0, 1) achievable by state feedback.

    Bisects on lambda, keeping the upper end feasible; returns the upper end
    once the bracket is narrower than bisect_tol (at most 40 halvings).

    Raises:
        InfeasibleError: If lambda = 1 - 1e-6 is already infeasible
    """
    tildes = _plant_tildes(plant, rank_tol)
    best = _decay_feasible(tildes, plant, DECAY_UPPER, eps, solver)
    if best is None:
        raise InfeasibleError(
            "No state feedback achieves second-moment decay; the plant is not stabilizable",
            lam=DECAY_UPPER,
        )
    lo, hi = 0.0, DECAY_UPPER
    iterations = 0
    while hi - lo > bisect_tol and iterations < MAX_BISECTIONS:
        iterations += 1
        mid = 0.5 * (lo + hi)
        solution = _decay_feasible(tildes, plant, mid, eps, solver)
        if solution is None:
            lo = mid
        else:
            hi, best = mid, solution
        logger.debug("Bisection %d: bracket [%.6f, %.6f]", iterations, lo, hi)

    X_opt, Y_opt = best.values["X"], best.values["Y"]
    F = recover_gain(X_opt, Y_opt)
    logger.info("Decay stabilization: lambda = %.6f after %d bisections", hi, iterations)
    diagnostics = {"bracket": [lo, hi], "bar_rank": tildes.A.bar_rank, **best.diagnostics}
    return DecayResult(F, hi, X_opt, Y_opt, iterations, diagnostics)


def verify_decay(plant: GeneralizedPlant, result: DecayResult) -> float:
    """
    Minimum eigenvalue of lambda^2 P - E[A_cl^T P A_cl] with P = X^{-1}.

    Nonnegative (up to roundoff) when the decay certificate is valid.
    """
    P = np.linalg.inv(result.X)
    P = 0.5 * (P + P.T)
    moment_map = MomentMap.from_system(close_loop(plant, result.F))
    gap = result.lam**2 * P - moment_map.apply(P)
    return float(np.linalg.eigvalsh(0.5 * (gap + gap.T))[0])
