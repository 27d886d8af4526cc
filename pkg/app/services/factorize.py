"""
Gram factorization and the tilde lift.

A Gram matrix G = E[v^T v] of the row-vectorized entries is factored as
G = Bbar^T Bbar with the fewest rows the numerical rank allows. Splitting
Bbar into column blocks [Bbar_1, ..., Bbar_m] (one per matrix row) and
stacking them vertically gives the tilde matrix T, for which

    E[A^T M A] = T^T (M kron I_r) T

holds for every symmetric M. This turns expectation inequalities that are
linear in M into ordinary LMIs.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.linalg import eigh

from app import config
from app.errors import DimensionError, FactorizationError
from app.models import DistributionSpec, StochasticMatrix
from app.services.moments import GramMatrix, gram_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BarFactor:
    """
    Rank-revealing factor of a Gram matrix.

    Attributes:
        Bbar: r x m matrix with Bbar^T Bbar = G
        source_layout: Widths of the vectorized blocks the columns came from
    """
    Bbar: np.ndarray
    source_layout: Tuple[int, ...]

    @property
    def rank(self) -> int:
        return self.Bbar.shape[0]


@dataclass(frozen=True)
class TildeMatrix:
    """
    Vertical stack [Bbar_1; ...; Bbar_blocks] of the column blocks of a factor.

    Attributes:
        Tmat: (blocks * bar_rank) x cols matrix
        bar_rank: Row count r of the factor
        blocks: Number of stacked blocks (rows of the source matrix)
        cols: Columns per block
    """
    Tmat: np.ndarray
    bar_rank: int
    blocks: int
    cols: int

    def lift(self, M: np.ndarray) -> np.ndarray:
        """T^T (M kron I_r) T."""
        M = np.asarray(M, dtype=float)
        if M.shape != (self.blocks, self.blocks):
            raise DimensionError(f"Weight has shape {M.shape}, expected {(self.blocks, self.blocks)}")
        out = self.Tmat.T @ np.kron(M, np.eye(self.bar_rank)) @ self.Tmat
        return 0.5 * (out + out.T)


def psd_factor(G: GramMatrix, rank_tol: float = config.RANK_TOL) -> BarFactor:
    """
    Factor G = Bbar^T Bbar through a symmetric eigendecomposition.

    Eigenvalues above rank_tol * lambda_max are kept; smaller ones (and
    roundoff negatives) are dropped. An all-zero Gram matrix yields a single
    zero row so downstream block shapes stay uniform.

    Raises:
        FactorizationError: If G has an eigenvalue below -1e-8 * lambda_max
    """
    matrix = np.asarray(G.G, dtype=float)
    m = matrix.shape[0]
    eigenvalues, eigenvectors = eigh(matrix)
    lam_max = max(float(eigenvalues[-1]), 0.0)
    if eigenvalues[0] < -1e-8 * lam_max:
        raise FactorizationError(
            f"Gram matrix is not positive semidefinite (min eigenvalue {eigenvalues[0]:.3e})",
            min_eigenvalue=float(eigenvalues[0]),
        )
    keep = eigenvalues > rank_tol * lam_max if lam_max > 0 else np.zeros(m, dtype=bool)
    if not keep.any():
        logger.debug("Gram matrix of size %d is identically zero", m)
        return BarFactor(np.zeros((1, m)), G.block_widths)
    Bbar = np.sqrt(eigenvalues[keep])[:, None] * eigenvectors[:, keep].T
    logger.debug("Gram matrix of size %d has numerical rank %d", m, Bbar.shape[0])
    return BarFactor(Bbar, G.block_widths)


def stack_tilde(f: BarFactor, blocks: int, cols: int) -> TildeMatrix:
    """
    Restack a factor of a single matrix (blocks x cols) into its tilde matrix.

    Raises:
        DimensionError: If the factor does not have blocks * cols columns
    """
    r, m = f.Bbar.shape
    if m != blocks * cols:
        raise DimensionError(f"Factor has {m} columns, expected {blocks}*{cols}")
    Tmat = f.Bbar.reshape(r, blocks, cols).transpose(1, 0, 2).reshape(blocks * r, cols)
    return TildeMatrix(Tmat, r, blocks, cols)


def stack_joint_tilde(f: BarFactor, blocks: int, cols_a: int, cols_b: int) -> Tuple[TildeMatrix, TildeMatrix]:
    """
    Split a joint factor of [row(M_a), row(M_b)] into the two tilde matrices.

    The columns are ordered with all rows of M_a first, then all rows of M_b;
    the two results share the same bar rank.
    """
    r, m = f.Bbar.shape
    if m != blocks * (cols_a + cols_b):
        raise DimensionError(f"Joint factor has {m} columns, expected {blocks}*({cols_a}+{cols_b})")
    split = blocks * cols_a
    tilde_a = stack_tilde(BarFactor(f.Bbar[:, :split], f.source_layout), blocks, cols_a)
    tilde_b = stack_tilde(BarFactor(f.Bbar[:, split:], f.source_layout), blocks, cols_b)
    return tilde_a, tilde_b


def tilde_of(M: StochasticMatrix, dist: DistributionSpec, rank_tol: float = config.RANK_TOL) -> TildeMatrix:
    """Tilde matrix of a single stochastic matrix."""
    return stack_tilde(psd_factor(gram_matrix([M], dist), rank_tol), M.rows, M.cols)


def joint_tilde_of(
    Ma: StochasticMatrix,
    Mb: StochasticMatrix,
    dist: DistributionSpec,
    rank_tol: float = config.RANK_TOL,
) -> Tuple[TildeMatrix, TildeMatrix]:
    """Tilde matrices of [row(Ma), row(Mb)] factored jointly (Ma and Mb share rows)."""
    if Ma.rows != Mb.rows:
        raise DimensionError(f"Joint factor needs equal row counts, got {Ma.rows} and {Mb.rows}")
    factor = psd_factor(gram_matrix([Ma, Mb], dist), rank_tol)
    return stack_joint_tilde(factor, Ma.rows, Ma.cols, Mb.cols)
