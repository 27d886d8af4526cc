"""
Test configuration and fixtures.

Provides the bundled system files, a document-based system builder, and
the hypothesis profiles used by the property tests.
"""

import json
import os
from pathlib import Path

import hypothesis
import pytest

from app.models import load_system

hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=200, deadline=None)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "fast"))

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture
def data_dir():
    return DATA_DIR


@pytest.fixture
def benchmark_plant():
    """Three-state plant with x1 ~ N(0, 0.2^2), x2 ~ U(-0.5, 0.5)."""
    return load_system((DATA_DIR / "benchmark_plant.json").read_text())


@pytest.fixture
def scalar_deterministic():
    """A = 0.5, B = C = 1, D = 0: s_inf = 4/3."""
    return load_system((DATA_DIR / "scalar_deterministic.json").read_text())


@pytest.fixture
def scalar_uniform():
    """A = x1 ~ U(-1, 1), B = C = 1, D = 0: s_inf = 3/2."""
    return load_system((DATA_DIR / "scalar_uniform.json").read_text())


@pytest.fixture
def scalar_plant():
    """Deterministic A_o = 2 with full control authority."""
    return load_system((DATA_DIR / "scalar_plant.json").read_text())


@pytest.fixture
def make_system():
    """
    Factory building a system from a document.

    Matrices are given as nested lists of expression strings (or bare
    scalars); xi as distribution records.
    """
    def _make(matrices, xi=None, **dims):
        first = matrices.get("A", matrices.get("A_o"))
        n = len(first) if isinstance(first, list) else 1
        defaults = {"n": n, "pw": 1, "qz": 1}
        if "B_ou" in matrices:
            defaults["pu"] = 1
        document = {"dims": {**defaults, **dims}, "matrices": matrices}
        if xi:
            document["xi"] = xi
        return load_system(json.dumps(document))

    return _make
