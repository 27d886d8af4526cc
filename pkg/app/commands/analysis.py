"""
Analysis commands: `analyze` and `oracle`.
"""

import logging

from app.commands.dependencies import CommandOutcome, System, closed_loop_for
from app.documents import matrix_out
from app.errors import EXIT_VERDICT
from app.schemas import AnalyzeResults, H2Out, OracleOut, OracleResults, RunConfig, StabilityOut
from app.services.analysis import check_stability, h2_norm, oracle_series
from app.services.factorize import tilde_of

logger = logging.getLogger(__name__)


def analyze(config: RunConfig, system: System) -> CommandOutcome:
    """
    Stability verdict and, for stable systems, the H2 norm.

    An unstable system is a valid answer: the stability section is filled,
    the H2 section is null and the exit code is 2.
    """
    closed = closed_loop_for(config, system)
    tilde = tilde_of(closed.A, closed.dist, config.rank_tol)
    report = check_stability(closed, config.eps, config.rank_tol, tilde=tilde)
    stability = StabilityOut(
        stable=report.stable,
        P=matrix_out(report.P),
        moment_map_spectral_radius=report.moment_map_spectral_radius,
        decay_rate_estimate=report.decay_rate_estimate,
    )
    if not report.stable:
        return CommandOutcome(
            AnalyzeResults(stability=stability, h2=None),
            {"stability": report.diagnostics},
            EXIT_VERDICT,
        )

    result = h2_norm(closed, config.eps, config.rank_tol, report=report, tilde=tilde)
    h2 = H2Out(norm=result.norm, gamma_sq=result.gamma_sq, P=matrix_out(result.P))
    return CommandOutcome(AnalyzeResults(stability=stability, h2=h2), {"h2": result.diagnostics})


def oracle(config: RunConfig, system: System) -> CommandOutcome:
    """Exact impulse-energy partial sums by moment iteration."""
    series = oracle_series(closed_loop_for(config, system), config.oracle_tol)
    out = OracleOut(
        norm=series.norm,
        s_infinity=series.s_infinity,
        terms=series.terms,
        partial_sums=series.partial_sums,
    )
    return CommandOutcome(OracleResults(oracle=out), {"rel_tol": config.oracle_tol})
