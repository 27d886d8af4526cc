"""
Reading and writing the CLI's documents.

Inputs are hashed exactly as read so a result document can be traced back
to the bytes it was computed from. Outputs use the same JSON format as the
inputs, which lets a synthesis result be passed back as a gain file.
"""

import hashlib
import json
import logging
import platform
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import cvxpy
import numpy as np
import pydantic
import scipy

import app
from app.errors import DimensionError, OutputError, SchemaError
from app.schemas import ResultDocument

logger = logging.getLogger(__name__)


def input_digest(raw: bytes) -> str:
    """SHA-256 hex digest of the raw input bytes."""
    return hashlib.sha256(raw).hexdigest()


def read_input(path: Path) -> Tuple[bytes, str]:
    """Raw bytes of an input file and their digest."""
    raw = Path(path).read_bytes()
    return raw, input_digest(raw)


def versions() -> Dict[str, str]:
    return {
        "h2toolkit": app.__version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "cvxpy": cvxpy.__version__,
        "pydantic": pydantic.VERSION,
    }


def matrix_out(M: Optional[np.ndarray]) -> Optional[List[List[float]]]:
    """Nested lists for JSON; 1-D input becomes a single row."""
    if M is None:
        return None
    return np.atleast_2d(np.asarray(M, dtype=float)).tolist()


def load_gain(path: Path) -> np.ndarray:
    """
    Read a gain matrix F.

    Accepted layouts: {"F": [[...]]}, or a result document of synthesize or
    stabilize where F sits under results.synthesis or results.decay.

    Raises:
        SchemaError: If no gain is found or it is not numeric
    """
    try:
        document = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise SchemaError(f"Cannot read gain file {path}: {exc}") from exc

    candidates = [document]
    results = document.get("results") if isinstance(document, dict) else None
    if isinstance(results, dict):
        candidates += [results.get("synthesis"), results.get("decay")]
    for candidate in candidates:
        if isinstance(candidate, dict) and "F" in candidate:
            try:
                F = np.atleast_2d(np.asarray(candidate["F"], dtype=float))
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"Gain in {path} is not a numeric matrix") from exc
            if F.ndim != 2:
                raise DimensionError(f"Gain in {path} must be a matrix, got {F.ndim} dimensions")
            return F
    raise SchemaError(f"No gain \"F\" found in {path}")


def dump_document(document: ResultDocument) -> str:
    return json.dumps(document.model_dump(mode="json", by_alias=True), indent=2) + "\n"


def write_document(document: ResultDocument, path: Optional[Path] = None) -> str:
    """
    Write the result document to path, or to stdout when path is None.

    Raises:
        OutputError: If the file cannot be written
    """
    text = dump_document(document)
    if path is None:
        sys.stdout.write(text)
    else:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise OutputError(f"Cannot write result document {path}: {exc}", path=str(path)) from exc
        logger.info("Wrote %s result to %s", document.command, path)
    return text


def write_trace_csv(points: Sequence[Any], path: Path) -> Path:
    """
    CSV with columns k, mean, std_error.

    Raises:
        OutputError: If the file cannot be written
    """
    table = np.array([[p.k, p.mean, p.std_error] for p in points], dtype=float).reshape(-1, 3)
    try:
        np.savetxt(path, table, fmt=["%d", "%.17g", "%.17g"], delimiter=",", header="k,mean,std_error", comments="")
    except OSError as exc:
        raise OutputError(f"Cannot write trace CSV {path}: {exc}", path=str(path)) from exc
    logger.info("Wrote %d trace rows to %s", len(table), path)
    return Path(path)
