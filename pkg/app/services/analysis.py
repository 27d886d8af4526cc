"""
Second-moment stability and H2 norm of closed-loop systems.

Two independent routes to the H2 norm are provided: the LMI route
(h2_norm), which lifts expectations through the tilde factor and solves an
SDP, and the moment-iteration oracle (h2_oracle), which sums the impulse
energy series exactly and never touches the SDP layer.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from app import config
from app.errors import DivergenceError, SolverError, ToolkitError, UnstableSystemError
from app.models import ClosedLoopSystem, stream_rng
from app.services.factorize import TildeMatrix, tilde_of
from app.services.moments import MomentMap, expectation_matrix
from app.services.sdp import AffineMatrix, SdpProblem, SolveStatus, solve_sdp

logger = logging.getLogger(__name__)

POWER_ITERATIONS = 200
CERTIFICATE_TOL = 1e-7
DIVERGENCE_RUN = 10
MIN_ORACLE_TERMS = 10
MAX_ORACLE_TERMS = 10**6


@dataclass
class StabilityReport:
    """
    Verdict of the second-moment stability test.

    Attributes:
        stable: Whether a Lyapunov certificate was found
        P: Certificate with P - E[A^T P A] >= I (None when unstable)
        moment_map_spectral_radius: Power-iteration estimate of rho(T)
        decay_rate_estimate: sqrt(rho(T)), the smallest admissible decay rate
    """
    stable: bool
    P: Optional[np.ndarray]
    moment_map_spectral_radius: float
    decay_rate_estimate: float
    diagnostics: Dict[str, object] = field(default_factory=dict)


@dataclass
class H2Result:
    norm: float
    gamma_sq: float
    P: np.ndarray
    diagnostics: Dict[str, object] = field(default_factory=dict)


@dataclass
class OracleSeries:
    """
    Partial sums s_0..s_K of the impulse energy series.

    Attributes:
        partial_sums: s_k for k = 0..K
        norm: sqrt of the last partial sum
    """
    partial_sums: List[float]

    @property
    def s_infinity(self) -> float:
        return self.partial_sums[-1]

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.s_infinity))

    @property
    def terms(self) -> int:
        return len(self.partial_sums) - 1


def lift(tilde: TildeMatrix, P: AffineMatrix) -> AffineMatrix:
    """T^T (P kron I_r) T for a matrix variable, the LMI form of E[A^T P A]."""
    return tilde.Tmat.T @ P.kron_identity(tilde.bar_rank) @ tilde.Tmat


def moment_map_spectral_radius(system: ClosedLoopSystem, iterations: int = POWER_ITERATIONS, seed: int = 0) -> float:
    """
    Spectral radius of M -> E[A^T M A] by power iteration from a random PD start.

    The map is positive, so its dominant eigenvector is PSD and a PD start
    cannot be orthogonal to it. The growth rate is averaged over the last
    quarter of the iterations.
    """
    moment_map = MomentMap.from_system(system)
    rng = stream_rng(seed)
    R = rng.standard_normal((system.n, system.n))
    M = R @ R.T + np.eye(system.n)
    M /= np.linalg.norm(M)
    log_growth = []
    for _ in range(iterations):
        M = moment_map.apply(M)
        scale = np.linalg.norm(M)
        if scale == 0.0:
            return 0.0
        log_growth.append(np.log(scale))
        M /= scale
    tail = log_growth[-max(1, iterations // 4):]
    return float(np.exp(np.mean(tail)))


def check_stability(
    system: ClosedLoopSystem,
    eps: float = config.SDP_EPS,
    rank_tol: float = config.RANK_TOL,
    solver: str = config.SDP_SOLVER,
    tilde: Optional[TildeMatrix] = None,
) -> StabilityReport:
    """
    Search for P >= I with P - E[A^T P A] >= I, minimizing tr P.

    A tilde factor of system.A computed by the caller is reused when given.

    Raises:
        SolverError: If the backend fails (never reported as instability)
    """
    rho = moment_map_spectral_radius(system)
    if tilde is None:
        tilde = tilde_of(system.A, system.dist, rank_tol)

    problem = SdpProblem("stability", eps)
    P = problem.symmetric("P", system.n)
    eye = np.eye(system.n)
    problem.add_lmi("P >= I", P - eye)
    problem.add_lmi("second-moment decrease", P - lift(tilde, P) - eye)
    problem.minimize(P.trace())
    solution = solve_sdp(problem, solver)

    diagnostics = {"status": solution.status.value, "bar_rank": tilde.bar_rank, **solution.diagnostics}
    if solution.status == SolveStatus.NUMERICAL_FAILURE:
        # an uncertified infeasibility still counts when rho(T) confirms it
        if not (diagnostics.get("inaccurate_infeasibility") and rho >= 1.0):
            raise SolverError("Stability SDP did not converge", **_jsonable(diagnostics))
        logger.warning("Stability SDP infeasibility is inaccurate; accepted because rho(T) = %.6f >= 1", rho)
    stable = solution.status == SolveStatus.OPTIMAL
    logger.info("Stability: %s (rho(T) ~ %.6f)", "stable" if stable else "unstable", rho)
    if stable == (rho >= 1.0):
        logger.warning("LMI verdict disagrees with rho(T) = %.6f; system is near the stability boundary", rho)
    return StabilityReport(
        stable=stable,
        P=solution.values["P"] if stable else None,
        moment_map_spectral_radius=rho,
        decay_rate_estimate=float(np.sqrt(rho)),
        diagnostics=diagnostics,
    )


def h2_norm(
    system: ClosedLoopSystem,
    eps: float = config.SDP_EPS,
    rank_tol: float = config.RANK_TOL,
    solver: str = config.SDP_SOLVER,
    report: Optional[StabilityReport] = None,
    tilde: Optional[TildeMatrix] = None,
) -> H2Result:
    """
    H2 norm through the lifted LMI.

    Minimizes t subject to
        P >= eps I
        P - T^T (P kron I) T - E[C^T C] >= eps I
        t - tr E[D^T D] - tr(E[B B^T] P) >= eps

    A stability report and a tilde factor of system.A from the caller are
    reused instead of being recomputed.

    Raises:
        UnstableSystemError: If the system is not second-moment stable
        SolverError: If the SDP fails or the certificate does not verify
    """
    if tilde is None:
        tilde = tilde_of(system.A, system.dist, rank_tol)
    if report is None:
        report = check_stability(system, eps, rank_tol, solver, tilde)
    if not report.stable:
        raise UnstableSystemError(
            "System is not exponentially stable in the second moment",
            moment_map_spectral_radius=report.moment_map_spectral_radius,
        )

    Q = expectation_matrix("CtC", system)
    EBB = expectation_matrix("BBt", system)
    tr_ED = float(np.trace(expectation_matrix("DtD", system)))

    problem = SdpProblem("h2-analysis", eps)
    P = problem.symmetric("P", system.n)
    t = problem.scalar("t")
    problem.add_lmi("P positive", P)
    problem.add_lmi("lyapunov", P - lift(tilde, P) - Q)
    problem.add_lmi("energy", t - (EBB @ P).trace() - tr_ED)
    problem.minimize(t)
    solution = solve_sdp(problem, solver)
    if solution.status != SolveStatus.OPTIMAL:
        raise SolverError(f"H2 SDP ended with status {solution.status.value}", **_jsonable(solution.diagnostics))

    P_opt = solution.values["P"]
    gamma_sq = solution.values["t"]
    certificate = verify_certificate(system, P_opt, gamma_sq)
    scale = max(1.0, float(np.linalg.norm(P_opt, 2)))
    if min(certificate.values()) < -CERTIFICATE_TOL * scale:
        raise SolverError("H2 certificate failed moment verification", **certificate)

    norm = float(np.sqrt(gamma_sq))
    logger.info("H2 norm %.6f (bar rank %d)", norm, tilde.bar_rank)
    diagnostics = {
        "status": solution.status.value,
        "bar_rank": tilde.bar_rank,
        "certificate": certificate,
        "stability": report.diagnostics,
        **solution.diagnostics,
    }
    return H2Result(norm=norm, gamma_sq=float(gamma_sq), P=P_opt, diagnostics=diagnostics)


def verify_certificate(system: ClosedLoopSystem, P: np.ndarray, gamma_sq: float) -> Dict[str, float]:
    """
    Re-evaluate the H2 inequalities with exact moments instead of the lift.

    Returns:
        Minimum eigenvalue of P - T(P) - E[C^T C] and the scalar trace slack
    """
    Q = expectation_matrix("CtC", system)
    EBB = expectation_matrix("BBt", system)
    tr_ED = float(np.trace(expectation_matrix("DtD", system)))
    gap = P - MomentMap.from_system(system).apply(P) - Q
    return {
        "lyapunov_min_eigenvalue": float(np.linalg.eigvalsh(0.5 * (gap + gap.T))[0]),
        "trace_slack": float(gamma_sq - tr_ED - np.trace(EBB @ P)),
    }


# ============ Moment-iteration oracle ============

def oracle_series(
    system: ClosedLoopSystem,
    rel_tol: float = config.ORACLE_TOL,
    horizon: Optional[int] = None,
    max_terms: int = MAX_ORACLE_TERMS,
) -> OracleSeries:
    """
    Exact partial sums s_K = tr E[D^T D] + sum_{k=1}^K tr(E[B B^T] T^{k-1}(E[C^T C])).

    Without a horizon the series runs until an increment falls below
    rel_tol times the current sum (and at least 10 terms were added).
    With a horizon exactly K = horizon terms are summed.

    Raises:
        DivergenceError: If the increment ratio stays >= 1 for 10 consecutive
            terms or the term cap is exceeded
    """
    moment_map = MomentMap.from_system(system)
    EBB = expectation_matrix("BBt", system)
    M = expectation_matrix("CtC", system)
    s = float(np.trace(expectation_matrix("DtD", system)))
    partial_sums = [s]
    previous, growing = None, 0
    k = 0
    while True:
        k += 1
        if horizon is not None and k > horizon:
            break
        if k > max_terms:
            raise DivergenceError(f"Energy series did not converge within {max_terms} terms", partial_sum=s)
        term = float(np.trace(EBB @ M))
        if term < -1e-12 * max(1.0, s):
            raise ToolkitError("Energy series partial sums decreased", k=k, term=term)
        term = max(term, 0.0)
        s += term
        partial_sums.append(s)

        if previous is not None and previous > 0.0 and term >= previous:
            growing += 1
            if growing >= DIVERGENCE_RUN:
                raise DivergenceError(
                    "Energy series increments stopped shrinking; system is not second-moment stable",
                    k=k,
                    partial_sum=s,
                )
        else:
            growing = 0
        previous = term
        if horizon is None and k >= MIN_ORACLE_TERMS and term <= rel_tol * s:
            break
        M = moment_map.apply(M)

    logger.info("Oracle summed %d terms, s = %.12g", len(partial_sums) - 1, s)
    return OracleSeries(partial_sums)


def h2_oracle(system: ClosedLoopSystem, rel_tol: float = config.ORACLE_TOL) -> float:
    """sqrt(s_infinity) by moment iteration."""
    return oracle_series(system, rel_tol).norm


def state_second_moment(system: ClosedLoopSystem, x0, K: int) -> np.ndarray:
    """
    Exact E[||x_k||^2] for k = 0..K with w = 0.

    Propagates Sigma_{k+1} = E[A Sigma_k A^T] from Sigma_0 = x0 x0^T.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    moment_map = MomentMap.from_system(system)
    sigma = np.outer(x0, x0)
    out = np.empty(K + 1)
    for k in range(K + 1):
        out[k] = np.trace(sigma)
        sigma = moment_map.adjoint_apply(sigma)
    return out


def _jsonable(diagnostics: Dict[str, object]) -> Dict[str, object]:
    return {k: v for k, v in diagnostics.items() if isinstance(v, (str, int, float, bool, dict, list))}
