"""
Exact expectations of products of polynomial matrix entries.

Scalar moments of each component come from closed forms; independence
factorizes monomial moments. Gram matrices of stacked row-vectorizations
are assembled through the monomial basis: if every entry is written as
c_a . m(xi) over a shared list of monomials m, then
E[entry_a entry_b] = c_a^T E[m m^T] c_b.

A Monte-Carlo estimator with the same outputs exists for cross-checks and
for user-supplied samplers.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import comb

from app.errors import DimensionError
from app.models import (
    ClosedLoopSystem,
    DiscreteFinite,
    DistributionSpec,
    Normal,
    StochasticMatrix,
    Uniform,
    sample_xi_batch,
    stream_rng,
)
from app.services.expr import Multidegree, Polynomial, poly_product_monomials

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MomentTable:
    """
    Scalar moments E[xi_i^d] for d = 0..max_degree of every component.

    Attributes:
        moments: One array of length max_degree + 1 per component
        max_degree: Largest tabulated degree
    """
    moments: Tuple[np.ndarray, ...]
    max_degree: int

    def monomial(self, multidegree: Multidegree) -> float:
        value = 1.0
        for table, d in zip(self.moments, multidegree):
            value *= table[d]
        return float(value)


@dataclass(frozen=True)
class GramMatrix:
    """
    Second-moment matrix of stacked row-vectorized entries.

    Attributes:
        G: Symmetric PSD matrix
        block_widths: Number of entries contributed by each stacked block
    """
    G: np.ndarray
    block_widths: Tuple[int, ...]

    @property
    def num_blocks(self) -> int:
        return len(self.block_widths)


def _normal_moments(c: Normal, max_degree: int) -> np.ndarray:
    # standard normal moments: 1, 0, 1, 0, 3, 0, 15, ...
    standard = np.zeros(max_degree + 1)
    standard[0] = 1.0
    for j in range(2, max_degree + 1, 2):
        standard[j] = (j - 1) * standard[j - 2]
    out = np.zeros(max_degree + 1)
    for d in range(max_degree + 1):
        j = np.arange(d + 1)
        # (mean + sd Z)^d expanded; 0.0**positive is exactly 0 for zero-mean components
        out[d] = np.sum(comb(d, j) * c.mean ** (d - j) * c.stddev ** j * standard[j])
    return out


def _uniform_moments(c: Uniform, max_degree: int) -> np.ndarray:
    d = np.arange(max_degree + 1)
    return (c.hi ** (d + 1) - c.lo ** (d + 1)) / ((d + 1) * (c.hi - c.lo))


def _discrete_moments(c: DiscreteFinite, max_degree: int) -> np.ndarray:
    values = np.asarray(c.values)
    probabilities = np.asarray(c.probabilities)
    d = np.arange(max_degree + 1)
    powers = values[None, :] ** d[:, None]
    powers[0, :] = 1.0
    return powers @ probabilities


@lru_cache(maxsize=128)
def moment_table(dist: DistributionSpec, max_degree: int) -> MomentTable:
    """Moments up to max_degree; cached per (distribution, degree)."""
    tables = []
    for c in dist.components:
        if isinstance(c, Normal):
            tables.append(_normal_moments(c, max_degree))
        elif isinstance(c, Uniform):
            tables.append(_uniform_moments(c, max_degree))
        else:
            tables.append(_discrete_moments(c, max_degree))
    for table in tables:
        table[0] = 1.0
        table.setflags(write=False)
    return MomentTable(tuple(tables), max_degree)


def monomial_moment(dist: DistributionSpec, multidegree: Multidegree) -> float:
    """E[prod_i xi_i^{d_i}] for independent components."""
    if len(multidegree) != dist.num_vars:
        raise DimensionError(f"Multidegree has length {len(multidegree)}, expected {dist.num_vars}")
    return moment_table(dist, max(multidegree, default=0)).monomial(tuple(multidegree))


def expect_product(p: Polynomial, q: Polynomial, dist: DistributionSpec) -> float:
    """E[p(xi) q(xi)]."""
    terms = poly_product_monomials(p, q)
    if not terms:
        return 0.0
    table = moment_table(dist, max(max(d) for _, d in terms))
    return float(sum(c * table.monomial(d) for c, d in terms))


# ============ Gram matrices ============

GramBlock = Union[StochasticMatrix, Tuple[StochasticMatrix, Optional[range]]]


def _stacked_entries(blocks: Sequence[GramBlock]) -> Tuple[List[Polynomial], Tuple[int, ...]]:
    """Concatenated row-major vectorizations of the requested row ranges."""
    entries: List[Polynomial] = []
    widths = []
    for block in blocks:
        matrix, rows = block if isinstance(block, tuple) else (block, None)
        rows = range(matrix.rows) if rows is None else rows
        chunk = [p for i in rows for p in matrix.row_entries(i)]
        entries.extend(chunk)
        widths.append(len(chunk))
    return entries, tuple(widths)


def _gram_from_entries(entries: Sequence[Polynomial], dist: DistributionSpec) -> np.ndarray:
    monomials = sorted({d for p in entries for _, d in p.terms})
    if not monomials:
        return np.zeros((len(entries), len(entries)))
    index = {d: k for k, d in enumerate(monomials)}
    coefficients = np.zeros((len(entries), len(monomials)))
    for a, p in enumerate(entries):
        for c, d in p.terms:
            coefficients[a, index[d]] = c
    degrees = np.array(monomials)
    table = moment_table(dist, int(2 * degrees.max()))
    second = np.array([[table.monomial(tuple(u + v)) for v in degrees] for u in degrees])
    G = coefficients @ second @ coefficients.T
    return 0.5 * (G + G.T)


def gram_matrix(blocks: Sequence[GramBlock], dist: DistributionSpec) -> GramMatrix:
    """
    Exact E[v^T v] for v = [row(M_1), row(M_2), ...].

    Args:
        blocks: Stochastic matrices, optionally paired with a row range
        dist: Distribution of xi

    Returns:
        GramMatrix whose index runs over the concatenated row-major entries
    """
    entries, widths = _stacked_entries(blocks)
    return GramMatrix(_gram_from_entries(entries, dist), widths)


def expectation_matrix(kind: str, system: ClosedLoopSystem) -> np.ndarray:
    """
    Constant expectation matrices of a system.

    Args:
        kind: "CtC" for E[C^T C], "BBt" for E[B B^T], "DtD" for E[D^T D]
        system: Closed-loop (or autonomous) system
    """
    if kind == "CtC":
        q, n = system.C.shape
        G = gram_matrix([system.C], system.dist).G.reshape(q, n, q, n)
        out = np.einsum("rirj->ij", G)
    elif kind == "BBt":
        n, p = system.B.shape
        G = gram_matrix([system.B], system.dist).G.reshape(n, p, n, p)
        out = np.einsum("icjc->ij", G)
    elif kind == "DtD":
        q, p = system.D.shape
        G = gram_matrix([system.D], system.dist).G.reshape(q, p, q, p)
        out = np.einsum("rirj->ij", G)
    else:
        raise ValueError(f"Unknown expectation kind {kind!r}")
    return 0.5 * (out + out.T)


class MomentMap:
    """
    The second-moment map T(M) = E[A^T M A] and its adjoint S -> E[A S A^T].

    Both are evaluated from the row Gram matrix of A, which is computed once.
    """

    def __init__(self, A: StochasticMatrix, dist: DistributionSpec):
        self.n = A.rows
        self.gram = gram_matrix([A], dist)
        # G4[i, k, j, l] = E[A_ik A_jl]
        self._G4 = self.gram.G.reshape(self.n, self.n, self.n, self.n)

    @classmethod
    def from_system(cls, system: ClosedLoopSystem) -> "MomentMap":
        return cls(system.A, system.dist)

    def apply(self, M: np.ndarray) -> np.ndarray:
        M = np.asarray(M, dtype=float)
        if M.shape != (self.n, self.n):
            raise DimensionError(f"Weight has shape {M.shape}, expected {(self.n, self.n)}")
        out = np.einsum("ij,ikjl->kl", M, self._G4)
        return 0.5 * (out + out.T)

    def adjoint_apply(self, S: np.ndarray) -> np.ndarray:
        S = np.asarray(S, dtype=float)
        if S.shape != (self.n, self.n):
            raise DimensionError(f"Covariance has shape {S.shape}, expected {(self.n, self.n)}")
        out = np.einsum("ikjl,kl->ij", self._G4, S)
        return 0.5 * (out + out.T)


def moment_map_apply(system: ClosedLoopSystem, M: np.ndarray) -> np.ndarray:
    """T(M) = E[A(xi)^T M A(xi)], exact."""
    return MomentMap.from_system(system).apply(M)


# ============ Monte-Carlo estimation ============

Sampler = Callable[[np.random.Generator, int], np.ndarray]


def _draws(dist: Optional[DistributionSpec], sampler: Optional[Sampler], n_samples: int, seed: int):
    rng = stream_rng(seed)
    if sampler is not None:
        return np.asarray(sampler(rng, n_samples), dtype=float)
    return sample_xi_batch(dist, rng, n_samples)


def estimate_gram_matrix(
    blocks: Sequence[GramBlock],
    dist: Optional[DistributionSpec] = None,
    n_samples: int = 100_000,
    seed: int = 0,
    sampler: Optional[Sampler] = None,
) -> Tuple[GramMatrix, np.ndarray]:
    """
    Monte-Carlo estimate of gram_matrix.

    Args:
        sampler: Optional callable (rng, n) -> (n, Z) draws replacing dist,
            e.g. for jointly dependent components

    Returns:
        (GramMatrix estimate, entry-wise standard errors)
    """
    entries, widths = _stacked_entries(blocks)
    xs = _draws(dist, sampler, n_samples, seed)
    values = np.column_stack([p.evaluate_batch(xs) for p in entries])
    G = values.T @ values / n_samples
    # E[(v_a v_b)^2]
    fourth = (values**2).T @ values**2 / n_samples
    variance = np.maximum(fourth - G**2, 0.0) * n_samples / max(n_samples - 1, 1)
    std_error = np.sqrt(variance / n_samples)
    return GramMatrix(0.5 * (G + G.T), widths), std_error


def estimate_product(
    p: Polynomial,
    q: Polynomial,
    dist: Optional[DistributionSpec] = None,
    n_samples: int = 100_000,
    seed: int = 0,
    sampler: Optional[Sampler] = None,
) -> Tuple[float, float]:
    """Monte-Carlo estimate of E[p q] as (mean, standard error)."""
    xs = _draws(dist, sampler, n_samples, seed)
    values = p.evaluate_batch(xs) * q.evaluate_batch(xs)
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(n_samples))

