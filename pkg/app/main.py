"""
Command-line entry point.

Usage:
    python -m app.main analyze --input data/scalar_uniform.json
    python -m app.main synthesize --input data/benchmark_plant.json --output gain.json
    python -m app.main simulate --input data/benchmark_plant.json --gain gain.json --trace trace.csv

Every run writes one JSON result document. Exit codes: 0 on success,
2 on an infeasible, unstable or divergent verdict, 1 on errors.
"""

import argparse
import logging
import sys
from typing import Callable, Dict, List, Optional, Tuple

from numpy.linalg import LinAlgError
from pydantic import ValidationError

from app import config as defaults
from app.commands.analysis import analyze, oracle
from app.commands.dependencies import CommandOutcome, System
from app.commands.simulation import simulate
from app.commands.synthesis import stabilize, synthesize
from app.documents import read_input, versions, write_document
from app.errors import EXIT_ERROR, OutputError, SolverError, ToolkitError
from app.models import load_system
from app.schemas import RunConfig, ResultDocument

logger = logging.getLogger(__name__)

COMMANDS: Dict[str, Callable[[RunConfig, System], CommandOutcome]] = {
    "analyze": analyze,
    "synthesize": synthesize,
    "stabilize": stabilize,
    "simulate": simulate,
    "oracle": oracle,
}


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1; 2 is reserved for verdicts."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="h2toolkit",
        description="H2 analysis and state-feedback synthesis for systems with i.i.d. random coefficients",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--input", required=True, dest="input_path", help="system-description JSON file")
    parser.add_argument("--output", dest="output_path", help="result document path (default: stdout)")
    parser.add_argument("--gain", dest="gain_path", help="gain file for a plant (analyze, simulate, oracle)")
    parser.add_argument("--trace", dest="trace_path", help="CSV path for the simulate trace")
    parser.add_argument("--seed", type=int, default=defaults.SEED)
    parser.add_argument("--paths", type=int, dest="n_paths", default=defaults.N_PATHS)
    parser.add_argument("--horizon", type=int, default=defaults.HORIZON)
    parser.add_argument("--eps", type=float, default=defaults.SDP_EPS)
    parser.add_argument("--rank-tol", type=float, dest="rank_tol", default=defaults.RANK_TOL)
    parser.add_argument("--bisect-tol", type=float, dest="bisect_tol", default=defaults.BISECT_TOL)
    parser.add_argument("--oracle-tol", type=float, dest="oracle_tol", default=defaults.ORACLE_TOL)
    parser.add_argument("--verbose", action="store_true", help="log solver and iteration details")
    return parser


def parse_config(argv: Optional[List[str]] = None) -> RunConfig:
    """Parse flags into a validated RunConfig."""
    namespace = build_parser().parse_args(argv)
    values = {k: v for k, v in vars(namespace).items() if v is not None}
    return RunConfig(**values)


def run(config: RunConfig) -> Tuple[int, ResultDocument]:
    """
    Execute one command.

    Library errors never escape: they are recorded in the document's
    "error" field and mapped to the error's exit code. File-system and
    linear-algebra failures are recorded as OutputError and SolverError.
    """
    raw, digest = read_input(config.input_path)
    outcome, error, exit_code = None, None, EXIT_ERROR
    try:
        try:
            system = load_system(raw)
            outcome = COMMANDS[config.command](config, system)
        except OSError as exc:
            raise OutputError(f"I/O failure: {exc}") from exc
        except LinAlgError as exc:
            raise SolverError(f"Linear algebra failure: {exc}") from exc
        exit_code = outcome.exit_code
    except ToolkitError as exc:
        logger.error("%s failed: %s", config.command, exc.detail)
        error, exit_code = exc.to_record(), exc.exit_code

    document = ResultDocument(
        command=config.command,
        input_sha256=digest,
        results=outcome.results if outcome else None,
        diagnostics=outcome.diagnostics if outcome else {},
        versions=versions(),
        seed=config.seed,
        error=error,
    )
    return exit_code, document


def main(argv: Optional[List[str]] = None) -> int:
    try:
        config = parse_config(argv)
    except ValidationError as exc:
        sys.stderr.write(f"invalid arguments: {exc}\n")
        return EXIT_ERROR
    defaults.configure_logging("DEBUG" if config.verbose else None)
    exit_code, document = run(config)
    try:
        write_document(document, config.output_path)
    except OutputError as exc:
        logger.error("%s", exc.detail)
        document.error = document.error or exc.to_record()
        write_document(document)
        return EXIT_ERROR
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
