"""
Shared inputs of the command handlers.

Handlers receive a validated RunConfig and the loaded system; these helpers
turn that into the object each handler needs, the way request dependencies
are resolved before a route runs.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Union

import numpy as np
from pydantic import BaseModel

from app.documents import load_gain
from app.errors import EXIT_OK, SchemaError
from app.models import ClosedLoopSystem, GeneralizedPlant, close_loop
from app.schemas import RunConfig

logger = logging.getLogger(__name__)

System = Union[ClosedLoopSystem, GeneralizedPlant]


@dataclass
class CommandOutcome:
    """Results section, diagnostics and exit code of one command."""
    results: BaseModel
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    exit_code: int = EXIT_OK


def closed_loop_for(config: RunConfig, system: System) -> ClosedLoopSystem:
    """
    The closed loop a command should act on.

    A plant is closed with the gain file, or with F = 0 (open loop) when no
    gain is given. A closed-loop file cannot take a gain.
    """
    if isinstance(system, ClosedLoopSystem):
        if config.gain_path is not None:
            raise SchemaError("--gain needs a plant file with B_ou; the input is already closed-loop")
        return system
    if config.gain_path is None:
        logger.info("No gain given; analyzing the open-loop plant (F = 0)")
        return close_loop(system, np.zeros((system.pu, system.n)))
    return close_loop(system, load_gain(config.gain_path))


def require_plant(config: RunConfig, system: System) -> GeneralizedPlant:
    if not isinstance(system, GeneralizedPlant):
        raise SchemaError(f"{config.command} needs a plant file with a control input B_ou")
    return system
