"""
System model tests.

Tests:
- Loading plant and closed-loop documents (aliases, scalars, point mass)
- Schema and dimension errors
- Closing the loop with a state-feedback gain
- Sampling and matrix realization
"""

import json

import numpy as np
import pytest

from app.errors import DimensionError, ExpressionError, SchemaError
from app.models import (
    ClosedLoopSystem,
    DiscreteFinite,
    DistributionSpec,
    GeneralizedPlant,
    Normal,
    Uniform,
    close_loop,
    eval_matrix,
    load_system,
    sample_xi,
    sample_xi_batch,
    stream_rng,
)
from tests.factories import BENCHMARK_H2_GAIN

BENCHMARK_A_AT_ORIGIN = np.array([[1.3, 0.8, -0.5], [0.5, 0.3, -1.2], [-0.2, 0.8, 0.6]])


def test_load_benchmark_plant(benchmark_plant):
    """Test the benchmark document loads as a plant with the right dimensions."""
    assert isinstance(benchmark_plant, GeneralizedPlant)
    assert (benchmark_plant.n, benchmark_plant.pw, benchmark_plant.pu, benchmark_plant.qz) == (3, 1, 1, 1)
    assert benchmark_plant.dist.num_vars == 2
    assert benchmark_plant.dist.components == (Normal(0.0, 0.2), Uniform(-0.5, 0.5))


def test_load_scalar_closed_loop_with_point_mass(scalar_deterministic):
    """Test 1x1 bare entries and an empty xi list give a scalar closed loop."""
    assert isinstance(scalar_deterministic, ClosedLoopSystem)
    assert scalar_deterministic.dist == DistributionSpec((DiscreteFinite((0.0,), (1.0,)),))
    assert scalar_deterministic.dist.is_deterministic
    np.testing.assert_array_equal(eval_matrix(scalar_deterministic.A, [0.0]), [[0.5]])


def test_numeric_entries_are_accepted(make_system):
    """Test JSON numbers are read as constant entries."""
    system = make_system({"A": [[1e-5]], "B": [[1]], "C": [[2.5]]})
    assert eval_matrix(system.A, [0.0])[0, 0] == 1e-5
    assert eval_matrix(system.C, [0.0])[0, 0] == 2.5


def test_distribution_parameters_block(make_system):
    """Test distribution parameters may be nested under "parameters"."""
    system = make_system(
        {"A": "x1", "B": "1", "C": "1"},
        xi=[{"type": "uniform", "parameters": {"lo": -1, "hi": 1}}],
    )
    assert system.dist.components == (Uniform(-1.0, 1.0),)


def test_missing_d_is_zero(make_system):
    """Test an omitted D matrix is the zero matrix."""
    system = make_system({"A": "0.5", "B": "1", "C": "1"})
    assert system.D.entries[0].is_zero


def test_dimension_mismatch_names_matrix(data_dir):
    """Test a C_o with two columns against a 3x3 A_o is rejected."""
    document = json.loads((data_dir / "benchmark_plant.json").read_text())
    document["matrices"]["C_o"] = [["0", "x1"]]
    with pytest.raises(DimensionError) as exc_info:
        load_system(document)
    assert exc_info.value.context["matrix"] == "C_o"


def test_expression_error_names_entry(data_dir):
    """Test a bad entry reports its matrix and entry index."""
    document = json.loads((data_dir / "benchmark_plant.json").read_text())
    document["matrices"]["A_o"][1][2] = "-1.2 + x1^^2"
    with pytest.raises(ExpressionError) as exc_info:
        load_system(document)
    assert exc_info.value.context["matrix"] == "A_o"
    assert exc_info.value.context["entry"] == 5


@pytest.mark.parametrize(
    "record",
    [
        {"type": "normal", "mean": 0.0, "stddev": 0.0},
        {"type": "uniform", "lo": 1.0, "hi": 1.0},
        {"type": "discrete", "values": [0, 1], "probabilities": [0.5, 0.6]},
        {"type": "gamma", "shape": 2.0},
    ],
)
def test_invalid_distribution_records(make_system, record):
    """Test malformed distribution records are schema errors."""
    with pytest.raises(SchemaError):
        make_system({"A": "x1", "B": "1", "C": "1"}, xi=[record])


def test_dims_z_must_match_records(make_system):
    """Test dims.Z disagreeing with the record count is rejected."""
    with pytest.raises(SchemaError):
        make_system({"A": "x1", "B": "1", "C": "1"}, xi=[{"type": "normal", "stddev": 1.0}], Z=2)


def test_unknown_matrix_key_rejected(make_system):
    """Test unexpected keys in "matrices" are schema errors."""
    with pytest.raises(SchemaError):
        make_system({"A": "0.5", "B": "1", "C": "1", "E": "1"})


def test_variable_beyond_z_rejected(make_system):
    """Test an entry using x2 with a single component fails to parse."""
    with pytest.raises(ExpressionError):
        make_system({"A": "x2", "B": "1", "C": "1"}, xi=[{"type": "normal", "stddev": 1.0}])


def test_close_loop_zero_gain_keeps_matrices(benchmark_plant):
    """Test F = 0 leaves A_o and C_o unchanged."""
    closed = close_loop(benchmark_plant, np.zeros((1, 3)))
    assert closed.A == benchmark_plant.A_o
    assert closed.C == benchmark_plant.C_o


def test_close_loop_benchmark_gain(benchmark_plant):
    """Test the gain enters the third row of A through B_ou = e3."""
    closed = close_loop(benchmark_plant, BENCHMARK_H2_GAIN)
    A0 = eval_matrix(closed.A, [0.0, 0.0])
    np.testing.assert_allclose(A0[2], [-0.2 + 1.6739, 0.8 + 0.1027, 0.6 - 1.7100], rtol=0, atol=1e-15)
    np.testing.assert_allclose(A0[:2], BENCHMARK_A_AT_ORIGIN[:2], rtol=0, atol=0)


def test_close_loop_scalar(make_system):
    """Test A_o = x1 with gain c becomes x1 + c."""
    plant = make_system(
        {"A_o": "x1", "B_ow": "1", "B_ou": "1", "C_o": "1"},
        xi=[{"type": "normal", "stddev": 1.0}],
    )
    closed = close_loop(plant, [[0.25]])
    assert closed.A.entry(0, 0).as_dict() == {(0,): 0.25, (1,): 1.0}


def test_close_loop_gain_shape(benchmark_plant):
    """Test a gain of the wrong shape is rejected."""
    with pytest.raises(DimensionError):
        close_loop(benchmark_plant, np.zeros((3, 1)))


def test_eval_benchmark_matrix(benchmark_plant):
    """Test realizations of A_o at fixed xi."""
    np.testing.assert_allclose(eval_matrix(benchmark_plant.A_o, [0.0, 0.0]), BENCHMARK_A_AT_ORIGIN, atol=0)
    assert eval_matrix(benchmark_plant.A_o, [0.2, 0.0])[1, 2] == pytest.approx(-1.16, abs=1e-15)
    np.testing.assert_array_equal(eval_matrix(benchmark_plant.D_ou, [0.3, -0.1]), [[0.0]])


def test_eval_matrix_dimension(benchmark_plant):
    """Test realizing with a wrong-length xi fails."""
    with pytest.raises(DimensionError):
        eval_matrix(benchmark_plant.A_o, [0.0])


def test_point_mass_sample():
    """Test a point mass always returns its value."""
    dist = DistributionSpec((DiscreteFinite((2.0,), (1.0,)),))
    rng = stream_rng(5)
    assert all(sample_xi(dist, rng)[0] == 2.0 for _ in range(10))


def test_stream_rng_reproducible(benchmark_plant):
    """Test equal (seed, stream) pairs give equal draws and different streams differ."""
    dist = benchmark_plant.dist
    first = sample_xi_batch(dist, stream_rng(7, 3), 50)
    again = sample_xi_batch(dist, stream_rng(7, 3), 50)
    other = sample_xi_batch(dist, stream_rng(7, 4), 50)
    np.testing.assert_array_equal(first, again)
    assert not np.array_equal(first, other)
    assert first.shape == (50, 2)


def test_sample_ranges(benchmark_plant):
    """Test uniform draws stay inside their bounds."""
    draws = sample_xi_batch(benchmark_plant.dist, stream_rng(1), 2000)
    assert draws[:, 1].min() >= -0.5 and draws[:, 1].max() <= 0.5
    assert abs(draws[:, 0].std() - 0.2) < 0.02
