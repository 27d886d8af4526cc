"""
Builders for randomized test systems.
"""

import numpy as np

from app.models import (
    ClosedLoopSystem,
    DiscreteFinite,
    DistributionSpec,
    GeneralizedPlant,
    Normal,
    StochasticMatrix,
    Uniform,
)
from app.services.analysis import moment_map_spectral_radius
from app.services.expr import Polynomial

# Gains reported for the benchmark plant
BENCHMARK_H2_GAIN = np.array([[1.6739, 0.1027, -1.7100]])
BENCHMARK_DECAY_GAIN = np.array([[2.1622, 0.4018, -2.0782]])


def random_polynomial_matrix(rng, rows, cols, num_vars, max_degree=2, scale=0.3):
    """Dense random matrix with polynomial entries of total degree <= max_degree."""
    degrees = [d for d in np.ndindex(*(max_degree + 1,) * num_vars) if sum(d) <= max_degree]
    entries = []
    for _ in range(rows * cols):
        chosen = rng.choice(len(degrees), size=min(3, len(degrees)), replace=False)
        terms = {degrees[i]: float(rng.normal(0.0, scale)) for i in chosen}
        entries.append(Polynomial.from_dict(terms, num_vars))
    return StochasticMatrix(rows, cols, tuple(entries))


def random_distribution(rng, num_vars):
    components = []
    for i in range(num_vars):
        kind = i % 3
        if kind == 0:
            components.append(Normal(float(rng.uniform(-0.2, 0.2)), float(rng.uniform(0.1, 0.4))))
        elif kind == 1:
            components.append(Uniform(-0.5, float(rng.uniform(0.0, 0.6))))
        else:
            components.append(DiscreteFinite((-0.3, 0.1, 0.4), (0.25, 0.5, 0.25)))
    return DistributionSpec(tuple(components))


def random_stable_system(seed, deterministic=False, target_rho=0.7):
    """Random closed loop (n <= 4, Z <= 2, degree <= 2) rescaled so rho(T) = target_rho."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    pw = int(rng.integers(1, 3))
    qz = int(rng.integers(1, 3))
    if deterministic:
        dist = DistributionSpec.point_mass([0.0])
        Z, degree = 1, 0
    else:
        Z = int(rng.integers(1, 3))
        dist = random_distribution(rng, Z)
        degree = 2
    A = random_polynomial_matrix(rng, n, n, Z, degree, scale=0.5)
    A = A + StochasticMatrix.from_constant(np.diag(rng.uniform(-0.5, 0.5, n)), Z)
    B = random_polynomial_matrix(rng, n, pw, Z, degree)
    C = random_polynomial_matrix(rng, qz, n, Z, degree)
    D = random_polynomial_matrix(rng, qz, pw, Z, min(degree, 1), scale=0.1)
    system = ClosedLoopSystem(dist, A, B, C, D)
    rho = moment_map_spectral_radius(system)
    if rho > 0:
        system = ClosedLoopSystem(dist, A.scale(np.sqrt(target_rho / rho)), B, C, D)
    return system


def random_deterministic_plant(seed):
    """
    Deterministic plant with orthogonal, normalized control penalty.

    C_o = [C1; 0] and D_ou = [0; I], so the optimal H2 state feedback is
    the LQR gain and the Riccati equation gives the optimal cost.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    q1 = int(rng.integers(1, 3))
    A = rng.normal(0.0, 0.6, (n, n))
    Bu = rng.normal(0.0, 1.0, (n, 1))
    Bw = rng.normal(0.0, 1.0, (n, 1))
    C1 = rng.normal(0.0, 1.0, (q1, n))
    Co = np.vstack([C1, np.zeros((1, n))])
    Dou = np.vstack([np.zeros((q1, 1)), np.ones((1, 1))])
    Dow = np.zeros((q1 + 1, 1))
    dist = DistributionSpec.point_mass([0.0])

    def const(M):
        return StochasticMatrix.from_constant(M, 1)

    return GeneralizedPlant(dist, const(A), const(Bw), const(Bu), const(Co), const(Dow), const(Dou))


def random_plant(seed):
    """Random generalized plant (n <= 4, p_u <= 2, Z <= 2, degree <= 2); not rescaled."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    pu = int(rng.integers(1, 3))
    qz = int(rng.integers(1, 3))
    Z = int(rng.integers(1, 3))
    dist = random_distribution(rng, Z)
    return GeneralizedPlant(
        dist,
        random_polynomial_matrix(rng, n, n, Z, 2, scale=0.5),
        random_polynomial_matrix(rng, n, 1, Z, 1),
        random_polynomial_matrix(rng, n, pu, Z, 2),
        random_polynomial_matrix(rng, qz, n, Z, 2),
        random_polynomial_matrix(rng, qz, 1, Z, 1, scale=0.1),
        random_polynomial_matrix(rng, qz, pu, Z, 1),
    )
