"""
Design commands: `synthesize` and `stabilize`.
"""

import logging

from app.commands.dependencies import CommandOutcome, System, require_plant
from app.documents import matrix_out
from app.schemas import DecayOut, RunConfig, StabilizeResults, SynthesisOut, SynthesizeResults
from app.services.synthesis import certify_synthesis, h2_synthesize, stabilize_decay, verify_decay

logger = logging.getLogger(__name__)


def synthesize(config: RunConfig, system: System) -> CommandOutcome:
    """H2-optimal gain followed by a round-trip analysis of the closed loop."""
    plant = require_plant(config, system)
    result = h2_synthesize(plant, config.eps, config.rank_tol)
    certification = certify_synthesis(plant, result, config.eps, config.rank_tol)
    out = SynthesisOut(
        F=matrix_out(result.F),
        gamma=result.gamma,
        X=matrix_out(result.X),
        Y=matrix_out(result.Y),
        R=matrix_out(result.R),
        certified_norm=result.certified_norm,
        certified=result.diagnostics.get("certified"),
    )
    diagnostics = {"synthesis": result.diagnostics, "certification": certification.diagnostics}
    return CommandOutcome(SynthesizeResults(synthesis=out), diagnostics)


def stabilize(config: RunConfig, system: System) -> CommandOutcome:
    """Smallest achievable second-moment decay rate and its gain."""
    plant = require_plant(config, system)
    result = stabilize_decay(plant, config.bisect_tol, config.eps, config.rank_tol)
    out = DecayOut(
        F=matrix_out(result.F),
        lam=result.lam,
        X=matrix_out(result.X),
        Y=matrix_out(result.Y),
        iterations=result.iterations,
    )
    diagnostics = {**result.diagnostics, "decay_certificate_min_eigenvalue": verify_decay(plant, result)}
    return CommandOutcome(StabilizeResults(decay=out), diagnostics)
