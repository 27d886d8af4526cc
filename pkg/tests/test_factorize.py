"""
Gram factorization tests.

Tests:
- Rank of the factor for full-rank, rank-one and zero Gram matrices
- Reconstruction residual on the benchmark plant
- The lift identity E[A^T M A] = T^T (M kron I) T, single and joint,
  on the benchmark and on random plants
"""

import numpy as np
import pytest

from app.errors import DimensionError, FactorizationError
from app.models import DistributionSpec, StochasticMatrix, close_loop
from app.services.factorize import (
    BarFactor,
    joint_tilde_of,
    psd_factor,
    stack_tilde,
    tilde_of,
)
from app.services.moments import GramMatrix, MomentMap, gram_matrix
from tests.factories import random_plant


def test_identity_keeps_full_rank():
    """Test I_4 factors with rank 4 and reconstructs exactly."""
    factor = psd_factor(GramMatrix(np.eye(4), (4,)))
    assert factor.rank == 4
    np.testing.assert_allclose(factor.Bbar.T @ factor.Bbar, np.eye(4), atol=1e-14)


def test_rank_one_gram():
    """Test [[1, 1], [1, 1]] has a single-row factor."""
    factor = psd_factor(GramMatrix(np.ones((2, 2)), (2,)))
    assert factor.rank == 1
    np.testing.assert_allclose(factor.Bbar.T @ factor.Bbar, np.ones((2, 2)), atol=1e-14)


def test_zero_gram_gives_single_zero_row():
    """Test an all-zero Gram matrix yields one zero row."""
    factor = psd_factor(GramMatrix(np.zeros((3, 3)), (3,)))
    assert factor.Bbar.shape == (1, 3)
    assert not factor.Bbar.any()


def test_indefinite_gram_rejected():
    """Test a clearly indefinite matrix raises FactorizationError."""
    with pytest.raises(FactorizationError):
        psd_factor(GramMatrix(np.diag([1.0, -0.5]), (2,)))


def test_roundoff_negatives_are_dropped():
    """Test tiny negative eigenvalues are treated as zero."""
    G = np.diag([1.0, -1e-15])
    factor = psd_factor(GramMatrix(G, (2,)))
    assert factor.rank == 1


def test_benchmark_residual(benchmark_plant):
    """Test ||Bbar^T Bbar - G||_F <= 1e-9 ||G||_F for the joint benchmark Gram."""
    G = gram_matrix([benchmark_plant.A_o, benchmark_plant.B_ou], benchmark_plant.dist)
    factor = psd_factor(G)
    residual = np.linalg.norm(factor.Bbar.T @ factor.Bbar - G.G)
    assert residual <= 1e-9 * np.linalg.norm(G.G)
    assert factor.rank <= 12
    assert factor.source_layout == (9, 3)


def test_stack_tilde_shape_check():
    """Test restacking with a wrong block layout fails."""
    with pytest.raises(DimensionError):
        stack_tilde(BarFactor(np.ones((1, 6)), (6,)), 4, 2)


def test_deterministic_tilde_is_the_matrix():
    """Test a point-mass A gives T^T T = A^T A and bar rank 1."""
    A = np.array([[0.5, 1.0], [-0.3, 0.2]])
    tilde = tilde_of(StochasticMatrix.from_constant(A, 1), DistributionSpec.point_mass([0.0]))
    assert tilde.bar_rank == 1
    M = np.array([[2.0, 0.5], [0.5, 1.0]])
    np.testing.assert_allclose(tilde.lift(M), A.T @ M @ A, atol=1e-12)


def test_lift_matches_moment_map(benchmark_plant):
    """Test the tilde lift of A_o equals E[A_o^T M A_o] for random M."""
    tilde = tilde_of(benchmark_plant.A_o, benchmark_plant.dist)
    moment_map = MomentMap(benchmark_plant.A_o, benchmark_plant.dist)
    rng = np.random.default_rng(4)
    for _ in range(5):
        R = rng.normal(size=(3, 3))
        M = R + R.T
        np.testing.assert_allclose(tilde.lift(M), moment_map.apply(M), atol=1e-10 * max(1.0, np.abs(M).max()))


def test_joint_lift_matches_closed_loop(benchmark_plant):
    """Test (A~ + B~F)^T (M kron I)(A~ + B~F) equals the closed-loop moment map for random F."""
    tilde_a, tilde_b = joint_tilde_of(benchmark_plant.A_o, benchmark_plant.B_ou, benchmark_plant.dist)
    assert tilde_a.bar_rank == tilde_b.bar_rank
    rng = np.random.default_rng(8)
    for _ in range(5):
        F = rng.normal(size=(1, 3))
        R = rng.normal(size=(3, 3))
        M = R @ R.T
        T_cl = tilde_a.Tmat + tilde_b.Tmat @ F
        lifted = T_cl.T @ np.kron(M, np.eye(tilde_a.bar_rank)) @ T_cl
        expected = MomentMap.from_system(close_loop(benchmark_plant, F)).apply(M)
        np.testing.assert_allclose(lifted, expected, atol=1e-9 * max(1.0, np.abs(expected).max()))


@pytest.mark.parametrize("seed", range(50))
def test_lift_on_random_plants(seed):
    """Test the single and joint lifts equal the exact moment maps for a random (plant, M, F)."""
    plant = random_plant(seed)
    rng = np.random.default_rng(1000 + seed)
    R = rng.normal(size=(plant.n, plant.n))
    M = R @ R.T
    F = rng.normal(size=(plant.pu, plant.n))

    expected = MomentMap(plant.A_o, plant.dist).apply(M)
    scale = max(1.0, np.abs(expected).max())
    np.testing.assert_allclose(tilde_of(plant.A_o, plant.dist).lift(M), expected, atol=1e-9 * scale)

    tilde_a, tilde_b = joint_tilde_of(plant.A_o, plant.B_ou, plant.dist)
    T_cl = tilde_a.Tmat + tilde_b.Tmat @ F
    lifted = T_cl.T @ np.kron(M, np.eye(tilde_a.bar_rank)) @ T_cl
    expected = MomentMap.from_system(close_loop(plant, F)).apply(M)
    np.testing.assert_allclose(lifted, expected, atol=1e-9 * max(1.0, np.abs(expected).max()))


def test_joint_tilde_needs_equal_rows(benchmark_plant):
    """Test joint factors of matrices with different row counts are rejected."""
    with pytest.raises(DimensionError):
        joint_tilde_of(benchmark_plant.A_o, benchmark_plant.C_o, benchmark_plant.dist)


def test_lift_dimension(benchmark_plant):
    """Test a weight of the wrong size is rejected by lift."""
    tilde = tilde_of(benchmark_plant.A_o, benchmark_plant.dist)
    with pytest.raises(DimensionError):
        tilde.lift(np.eye(2))
