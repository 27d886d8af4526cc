"""
Monte-Carlo simulation of systems with i.i.d. random coefficients.

Every sample path owns a generator derived from (seed, path index), so
estimates do not depend on how paths are batched. Paths are simulated in
vectorized chunks and reduced in path-index order.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from app import config
from app.errors import DimensionError, NonFiniteStateError
from app.models import ClosedLoopSystem, eval_matrix, sample_xi_batch, stream_rng

logger = logging.getLogger(__name__)

STATE_LIMIT = 1e15
CHUNK_PATHS = 4096


@dataclass(frozen=True)
class Trajectory:
    """
    One sample path.

    Attributes:
        states: x_0..x_K, shape (K + 1, n)
        outputs: z_0..z_K, shape (K + 1, q_z)
        xi_draws: xi_0..xi_K, shape (K + 1, Z)
    """
    states: np.ndarray
    outputs: np.ndarray
    xi_draws: np.ndarray


@dataclass(frozen=True)
class EnergyEstimate:
    mean: float
    std_error: float
    n_paths: int
    K: int


@dataclass(frozen=True)
class TracePoint:
    k: int
    mean: float
    std_error: float


def _std_error(samples: np.ndarray, axis: int = 0) -> np.ndarray:
    n = samples.shape[axis]
    if n < 2:
        return np.zeros(np.delete(samples.shape, axis))
    return samples.std(axis=axis, ddof=1) / np.sqrt(n)


def _path_draws(system: ClosedLoopSystem, seed: int, start: int, stop: int, steps: int) -> np.ndarray:
    """xi draws of paths start..stop-1, shape (stop - start, steps, Z)."""
    return np.stack([
        sample_xi_batch(system.dist, stream_rng(seed, path), steps) for path in range(start, stop)
    ])


def _guard(states: np.ndarray, start: int, k: int):
    """Abort when any path in the chunk left the finite range."""
    norms = np.sqrt(np.sum(states.reshape(states.shape[0], -1) ** 2, axis=1))
    bad = ~np.isfinite(norms) | (norms > STATE_LIMIT)
    if bad.any():
        path = start + int(np.argmax(bad))
        raise NonFiniteStateError(
            f"State of path {path} diverged at step {k}; the system is likely unstable",
            path=path,
            step=k,
        )


def simulate_path(
    system: ClosedLoopSystem,
    x0,
    w: Optional[np.ndarray],
    K: int,
    rng: Union[np.random.Generator, int, None] = None,
) -> Trajectory:
    """
    Forward recursion x_{k+1} = A(xi_k) x_k + B(xi_k) w_k, z_k = C(xi_k) x_k + D(xi_k) w_k.

    Args:
        x0: Initial state (n,)
        w: Inputs w_0..w_K of shape (K + 1, p_w); None means w = 0
        K: Final time step
        rng: Generator or seed for the xi draws

    Raises:
        DimensionError: If x0 or w have the wrong shape
        NonFiniteStateError: If the state exceeds 1e15 in norm
    """
    if K < 0:
        raise ValueError("K must be non-negative")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != system.n:
        raise DimensionError(f"x0 has length {x0.shape[0]}, expected {system.n}")
    w = np.zeros((K + 1, system.pw)) if w is None else np.asarray(w, dtype=float).reshape(-1, system.pw)
    if w.shape[0] != K + 1:
        raise DimensionError(f"w has {w.shape[0]} steps, expected {K + 1}")
    if not isinstance(rng, np.random.Generator):
        rng = stream_rng(config.SEED if rng is None else rng)

    draws = sample_xi_batch(system.dist, rng, K + 1)
    states = np.empty((K + 1, system.n))
    outputs = np.empty((K + 1, system.qz))
    x = x0
    for k in range(K + 1):
        xi = draws[k]
        states[k] = x
        outputs[k] = eval_matrix(system.C, xi) @ x + eval_matrix(system.D, xi) @ w[k]
        if k < K:
            x = eval_matrix(system.A, xi) @ x + eval_matrix(system.B, xi) @ w[k]
            _guard(x[None, :], 0, k + 1)
    return Trajectory(states, outputs, draws)


def _impulse_step_energies(system: ClosedLoopSystem, K: int, n_paths: int, seed: int) -> np.ndarray:
    """
    Channel-summed ||z_k||^2 under impulse inputs, shape (n_paths, K + 1).

    All p_w impulse channels share each path's xi draws: z_0 = D(xi_0),
    x_1 = B(xi_0), then z_k = C(xi_k) x_k and x_{k+1} = A(xi_k) x_k.
    """
    energies = np.empty((n_paths, K + 1))
    for start in range(0, n_paths, CHUNK_PATHS):
        stop = min(start + CHUNK_PATHS, n_paths)
        draws = _path_draws(system, seed, start, stop, K + 1)
        xi0 = draws[:, 0, :]
        energies[start:stop, 0] = np.sum(system.D.evaluate_batch(xi0) ** 2, axis=(1, 2))
        X = system.B.evaluate_batch(xi0)  # (paths, n, p_w)
        for k in range(1, K + 1):
            _guard(X, start, k)
            xi = draws[:, k, :]
            Z = system.C.evaluate_batch(xi) @ X
            energies[start:stop, k] = np.sum(Z**2, axis=(1, 2))
            if k < K:
                X = system.A.evaluate_batch(xi) @ X
    return energies


def _trace_points(samples: np.ndarray) -> List[TracePoint]:
    means = samples.mean(axis=0)
    errors = _std_error(samples)
    return [TracePoint(k, float(means[k]), float(errors[k])) for k in range(samples.shape[1])]


def _energy_estimate(energies: np.ndarray, n_paths: int, K: int) -> EnergyEstimate:
    # sum of per-step means, identical to summing the trace
    mean = float(np.sum(energies.mean(axis=0)))
    std_error = float(_std_error(energies.sum(axis=1)))
    logger.info("Impulse energy over %d paths, K=%d: %.6g +- %.2g", n_paths, K, mean, std_error)
    return EnergyEstimate(mean, std_error, n_paths, K)


def second_moment_trace(
    system: ClosedLoopSystem,
    K: int = config.HORIZON,
    n_paths: int = config.N_PATHS,
    seed: int = config.SEED,
) -> List[TracePoint]:
    """Per-step sample means of ||z_k||^2 under impulse input, k = 0..K."""
    return _trace_points(_impulse_step_energies(system, K, n_paths, seed))


def impulse_energy_mc(
    system: ClosedLoopSystem,
    K: int = config.HORIZON,
    n_paths: int = config.N_PATHS,
    seed: int = config.SEED,
) -> EnergyEstimate:
    """
    Unbiased estimate of s_K, the impulse energy up to step K.

    The mean is the sum of the per-step means, so it equals the sum of
    second_moment_trace exactly for the same (seed, n_paths, K).
    """
    return _energy_estimate(_impulse_step_energies(system, K, n_paths, seed), n_paths, K)


def state_moment_trace(
    system: ClosedLoopSystem,
    x0,
    K: int = config.HORIZON,
    n_paths: int = config.N_PATHS,
    seed: int = config.SEED,
) -> List[TracePoint]:
    """Sample means of ||x_k||^2 with w = 0 from a fixed x0, k = 0..K."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != system.n:
        raise DimensionError(f"x0 has length {x0.shape[0]}, expected {system.n}")
    squares = np.empty((n_paths, K + 1))
    for start in range(0, n_paths, CHUNK_PATHS):
        stop = min(start + CHUNK_PATHS, n_paths)
        draws = _path_draws(system, seed, start, stop, max(K, 1))
        x = np.broadcast_to(x0, (stop - start, system.n))[:, :, None]
        squares[start:stop, 0] = float(x0 @ x0)
        for k in range(1, K + 1):
            x = system.A.evaluate_batch(draws[:, k - 1, :]) @ x
            _guard(x, start, k)
            squares[start:stop, k] = np.sum(x[:, :, 0] ** 2, axis=1)
    return _trace_points(squares)


def impulse_response_statistics(
    system: ClosedLoopSystem,
    K: int = config.HORIZON,
    n_paths: int = config.N_PATHS,
    seed: int = config.SEED,
) -> Tuple[EnergyEstimate, List[TracePoint]]:
    """impulse_energy_mc and second_moment_trace from a single simulation run."""
    energies = _impulse_step_energies(system, K, n_paths, seed)
    return _energy_estimate(energies, n_paths, K), _trace_points(energies)
