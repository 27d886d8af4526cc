"""
Runtime configuration.

Defaults for every numerical tolerance live here and can be overridden
through environment variables (or a `.env` file). The CLI overrides them
again per invocation from its flags.
"""

import logging
import os

from dotenv import load_dotenv

load_dotenv()

# SDP strictness margin, scaled per constraint by max(1, ||constant block||)
SDP_EPS = float(os.getenv("H2_SDP_EPS", "1e-8"))
SDP_SOLVER = os.getenv("H2_SDP_SOLVER", "CLARABEL")
# Backend feasibility and gap tolerance; must sit well below the 1e-7 post-solve residual check
SDP_SOLVER_TOL = float(os.getenv("H2_SDP_SOLVER_TOL", "1e-10"))
SDP_MAX_ITER = int(os.getenv("H2_SDP_MAX_ITER", "400"))

RANK_TOL = float(os.getenv("H2_RANK_TOL", "1e-12"))
BISECT_TOL = float(os.getenv("H2_BISECT_TOL", "1e-4"))
ORACLE_TOL = float(os.getenv("H2_ORACLE_TOL", "1e-12"))

# Monte-Carlo defaults (10^3 paths, horizon 100)
N_PATHS = int(os.getenv("H2_PATHS", "1000"))
HORIZON = int(os.getenv("H2_HORIZON", "100"))
SEED = int(os.getenv("H2_SEED", "0"))

LOG_LEVEL = os.getenv("H2_LOG_LEVEL", "WARNING")


def configure_logging(level=None):
    """
    Install a single stream handler on the package logger.

    Args:
        level: Logging level name or number; defaults to H2_LOG_LEVEL
    """
    logger = logging.getLogger("app")
    logger.setLevel(level or LOG_LEVEL)
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        logger.addHandler(handler)
    return logger
