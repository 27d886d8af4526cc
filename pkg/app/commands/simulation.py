"""
Simulation command: `simulate`.
"""

import logging

from app.commands.dependencies import CommandOutcome, System, closed_loop_for
from app.documents import write_trace_csv
from app.schemas import EnergyOut, RunConfig, SimulateResults, TracePointOut
from app.services.sim import impulse_response_statistics

logger = logging.getLogger(__name__)


def simulate(config: RunConfig, system: System) -> CommandOutcome:
    """Monte-Carlo impulse energy and E[||z_k||^2] trace; the trace also goes to CSV with --trace."""
    closed = closed_loop_for(config, system)
    energy, trace = impulse_response_statistics(closed, config.horizon, config.n_paths, config.seed)
    if config.trace_path is not None:
        write_trace_csv(trace, config.trace_path)
    results = SimulateResults(
        energy=EnergyOut(mean=energy.mean, std_error=energy.std_error, n_paths=energy.n_paths, K=energy.K),
        trace=[TracePointOut(k=p.k, mean=p.mean, std_error=p.std_error) for p in trace],
    )
    diagnostics = {"trace_csv": str(config.trace_path) if config.trace_path else None}
    return CommandOutcome(results, diagnostics)
