"""
Domain models for systems driven by an i.i.d. random vector.

These classes describe the random process xi_k, matrices whose entries are
polynomials of xi_k, the generalized plant with disturbance and control
inputs, and the closed-loop system obtained with a static state feedback.
All models are immutable after construction.
"""

import enum
import json
import logging
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from app.errors import DimensionError, ExpressionError, SchemaError
from app.services.expr import Polynomial, parse_expr

logger = logging.getLogger(__name__)


class DistributionType(str, enum.Enum):
    """
    Supported distribution families for the components of xi.

    The string values are the "type" tags used in system files.
    """
    NORMAL = "normal"
    UNIFORM = "uniform"
    DISCRETE = "discrete"


@dataclass(frozen=True)
class Normal:
    mean: float
    stddev: float
    kind = DistributionType.NORMAL

    def __post_init__(self):
        if not self.stddev > 0:
            raise SchemaError(f"Normal stddev must be positive, got {self.stddev}")

    def sample(self, rng: np.random.Generator, size=None):
        return rng.normal(self.mean, self.stddev, size)


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float
    kind = DistributionType.UNIFORM

    def __post_init__(self):
        if not self.lo < self.hi:
            raise SchemaError(f"Uniform bounds must satisfy lo < hi, got ({self.lo}, {self.hi})")

    def sample(self, rng: np.random.Generator, size=None):
        return rng.uniform(self.lo, self.hi, size)


@dataclass(frozen=True)
class DiscreteFinite:
    values: Tuple[float, ...]
    probabilities: Tuple[float, ...]
    kind = DistributionType.DISCRETE

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "probabilities", tuple(float(p) for p in self.probabilities))
        if len(self.values) == 0 or len(self.values) != len(self.probabilities):
            raise SchemaError("Discrete distribution needs equally many values and probabilities")
        if any(p < 0 for p in self.probabilities):
            raise SchemaError("Discrete probabilities must be non-negative")
        if abs(sum(self.probabilities) - 1.0) > 1e-12:
            raise SchemaError(f"Discrete probabilities sum to {sum(self.probabilities)}, not 1")

    def sample(self, rng: np.random.Generator, size=None):
        if len(self.values) == 1:
            # point mass: no draw, so deterministic components never consume the stream
            return np.full(size, self.values[0]) if size is not None else self.values[0]
        return rng.choice(np.asarray(self.values), size=size, p=np.asarray(self.probabilities))


Component = Union[Normal, Uniform, DiscreteFinite]


@dataclass(frozen=True)
class DistributionSpec:
    """
    Distribution of xi_k: independent components, identical across time.

    Attributes:
        components: One distribution per component of xi (Z >= 1)
    """
    components: Tuple[Component, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.components) < 1:
            raise SchemaError("The random vector needs at least one component")

    @property
    def num_vars(self) -> int:
        return len(self.components)

    @classmethod
    def point_mass(cls, values: Sequence[float]) -> "DistributionSpec":
        """Deterministic xi encoded as point masses."""
        return cls(tuple(DiscreteFinite((float(v),), (1.0,)) for v in values))

    @property
    def is_deterministic(self) -> bool:
        return all(isinstance(c, DiscreteFinite) and len(c.values) == 1 for c in self.components)


@dataclass(frozen=True)
class StochasticMatrix:
    """
    Matrix whose entries are polynomials of xi.

    Attributes:
        rows: Number of rows
        cols: Number of columns
        entries: Row-major tuple of Polynomial entries (all over the same Z)
    """
    rows: int
    cols: int
    entries: Tuple[Polynomial, ...]

    def __post_init__(self):
        if len(self.entries) != self.rows * self.cols:
            raise DimensionError(
                f"{self.rows}x{self.cols} matrix needs {self.rows * self.cols} entries, got {len(self.entries)}"
            )
        if len({p.num_vars for p in self.entries}) > 1:
            raise DimensionError("Matrix entries are polynomials over different numbers of variables")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def num_vars(self) -> int:
        return self.entries[0].num_vars if self.entries else 0

    @classmethod
    def from_constant(cls, matrix, num_vars: int) -> "StochasticMatrix":
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        rows, cols = matrix.shape
        entries = tuple(Polynomial.constant(v, num_vars) for v in matrix.ravel())
        return cls(rows, cols, entries)

    @classmethod
    def zeros(cls, rows: int, cols: int, num_vars: int) -> "StochasticMatrix":
        return cls(rows, cols, tuple(Polynomial.zero(num_vars) for _ in range(rows * cols)))

    def entry(self, i: int, j: int) -> Polynomial:
        return self.entries[i * self.cols + j]

    def row_entries(self, i: int) -> Tuple[Polynomial, ...]:
        return self.entries[i * self.cols:(i + 1) * self.cols]

    def max_degrees(self) -> Tuple[int, ...]:
        degrees = [p.max_degrees() for p in self.entries]
        return tuple(int(v) for v in np.max(degrees, axis=0)) if degrees else ()

    def __add__(self, other: "StochasticMatrix") -> "StochasticMatrix":
        if self.shape != other.shape:
            raise DimensionError(f"Cannot add {self.shape} and {other.shape} matrices")
        return StochasticMatrix(
            self.rows, self.cols, tuple(a + b for a, b in zip(self.entries, other.entries))
        )

    def scale(self, factor: float) -> "StochasticMatrix":
        return StochasticMatrix(self.rows, self.cols, tuple(p.scale(factor) for p in self.entries))

    def matmul_constant(self, F) -> "StochasticMatrix":
        """Right product M(xi) @ F with a constant matrix F."""
        F = np.atleast_2d(np.asarray(F, dtype=float))
        if F.shape[0] != self.cols:
            raise DimensionError(f"Cannot multiply {self.shape} matrix by {F.shape} gain")
        entries = []
        for i in range(self.rows):
            for j in range(F.shape[1]):
                acc = Polynomial.zero(self.num_vars)
                for k in range(self.cols):
                    if F[k, j] != 0.0:
                        acc = acc + self.entry(i, k).scale(F[k, j])
                entries.append(acc)
        return StochasticMatrix(self.rows, F.shape[1], tuple(entries))

    def evaluate_batch(self, points: np.ndarray) -> np.ndarray:
        """Realizations at each row of an (N, Z) array, shape (N, rows, cols)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        values = np.stack([p.evaluate_batch(points) for p in self.entries], axis=-1) \
            if self.entries else np.zeros((points.shape[0], 0))
        return values.reshape(points.shape[0], self.rows, self.cols)


@dataclass(frozen=True)
class ClosedLoopSystem:
    """
    System x_{k+1} = A x_k + B w_k, z_k = C x_k + D w_k with xi-dependent matrices.

    Also used for open-loop (autonomous) analysis.
    """
    dist: DistributionSpec
    A: StochasticMatrix
    B: StochasticMatrix
    C: StochasticMatrix
    D: StochasticMatrix

    def __post_init__(self):
        n = self.A.rows
        _check_shapes({
            "A": (self.A, (n, n)),
            "B": (self.B, (n, self.B.cols)),
            "C": (self.C, (self.C.rows, n)),
            "D": (self.D, (self.C.rows, self.B.cols)),
        }, self.dist.num_vars)

    @property
    def n(self) -> int:
        return self.A.rows

    @property
    def pw(self) -> int:
        return self.B.cols

    @property
    def qz(self) -> int:
        return self.C.rows


@dataclass(frozen=True)
class GeneralizedPlant:
    """Open-loop plant with disturbance input w and control input u."""
    dist: DistributionSpec
    A_o: StochasticMatrix
    B_ow: StochasticMatrix
    B_ou: StochasticMatrix
    C_o: StochasticMatrix
    D_ow: StochasticMatrix
    D_ou: StochasticMatrix

    def __post_init__(self):
        n, pw, pu, qz = self.A_o.rows, self.B_ow.cols, self.B_ou.cols, self.C_o.rows
        _check_shapes({
            "A_o": (self.A_o, (n, n)),
            "B_ow": (self.B_ow, (n, pw)),
            "B_ou": (self.B_ou, (n, pu)),
            "C_o": (self.C_o, (qz, n)),
            "D_ow": (self.D_ow, (qz, pw)),
            "D_ou": (self.D_ou, (qz, pu)),
        }, self.dist.num_vars)

    @property
    def n(self) -> int:
        return self.A_o.rows

    @property
    def pw(self) -> int:
        return self.B_ow.cols

    @property
    def pu(self) -> int:
        return self.B_ou.cols

    @property
    def qz(self) -> int:
        return self.C_o.rows


def _check_shapes(matrices: dict, num_vars: int):
    for name, (matrix, expected) in matrices.items():
        if matrix.shape != expected:
            raise DimensionError(
                f"{name} has shape {matrix.shape}, expected {expected}", matrix=name
            )
        if matrix.entries and matrix.num_vars != num_vars:
            raise DimensionError(
                f"{name} entries use {matrix.num_vars} variables, distribution has {num_vars}",
                matrix=name,
            )


def close_loop(plant: GeneralizedPlant, F) -> ClosedLoopSystem:
    """
    Close the plant with the state feedback u_k = F x_k.

    Returns:
        ClosedLoopSystem with A = A_o + B_ou F, B = B_ow, C = C_o + D_ou F, D = D_ow

    Raises:
        DimensionError: If F is not p_u x n
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.shape != (plant.pu, plant.n):
        raise DimensionError(f"Gain has shape {F.shape}, expected {(plant.pu, plant.n)}")
    return ClosedLoopSystem(
        dist=plant.dist,
        A=plant.A_o + plant.B_ou.matmul_constant(F),
        B=plant.B_ow,
        C=plant.C_o + plant.D_ou.matmul_constant(F),
        D=plant.D_ow,
    )


def stream_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for (seed, stream-index), stable across platforms."""
    return np.random.default_rng([int(stream), int(seed)])


def sample_xi(dist: DistributionSpec, rng: np.random.Generator) -> np.ndarray:
    """One draw of xi with independent components; advances rng."""
    return np.array([float(c.sample(rng)) for c in dist.components])


def sample_xi_batch(dist: DistributionSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draws of shape (size, Z); component-major consumption of rng."""
    return np.column_stack([np.asarray(c.sample(rng, size), dtype=float) for c in dist.components])


def eval_matrix(M: StochasticMatrix, xi) -> np.ndarray:
    """
    Realize M at one sample of xi.

    Raises:
        DimensionError: If xi has the wrong length
    """
    xi = np.asarray(xi, dtype=float).ravel()
    if M.entries and xi.shape[0] != M.num_vars:
        raise DimensionError(f"xi has length {xi.shape[0]}, expected {M.num_vars}")
    return M.evaluate_batch(xi[None, :])[0]


# ============ System-description files ============

def _build_component(record) -> Component:
    from app.schemas import DiscreteRecord, NormalRecord

    if isinstance(record, NormalRecord):
        return Normal(record.mean, record.stddev)
    if isinstance(record, DiscreteRecord):
        return DiscreteFinite(tuple(record.values), tuple(record.probabilities))
    return Uniform(record.lo, record.hi)


def _build_matrix(name: str, raw, shape: Tuple[int, int], num_vars: int) -> StochasticMatrix:
    if raw is None:
        return StochasticMatrix.zeros(shape[0], shape[1], num_vars)
    rows = [[raw]] if not isinstance(raw, list) else raw
    if len(rows) != shape[0] or any(len(r) != shape[1] for r in rows):
        found = (len(rows), len(rows[0]) if rows else 0)
        raise DimensionError(f"{name} has shape {found}, expected {shape}", matrix=name)
    entries = []
    for index, value in enumerate(value for row in rows for value in row):
        if isinstance(value, (int, float)):
            entries.append(Polynomial.constant(value, num_vars))
            continue
        try:
            entries.append(parse_expr(value, num_vars))
        except ExpressionError as exc:
            raise ExpressionError(
                f"{name}[{index}]: {exc.detail}", position=exc.position, matrix=name, entry=index
            ) from exc
    return StochasticMatrix(shape[0], shape[1], tuple(entries))


def load_system(document) -> Union[GeneralizedPlant, ClosedLoopSystem]:
    """
    Load a system-description document.

    Args:
        document: JSON text, bytes, or an already decoded dict

    Returns:
        GeneralizedPlant when B_ou is present, otherwise ClosedLoopSystem

    Raises:
        SchemaError: If the document violates the schema
        DimensionError: If a matrix shape disagrees with "dims"
        ExpressionError: If an entry does not parse (matrix name and entry index attached)
    """
    from pydantic import ValidationError

    from app.schemas import SystemDocument

    try:
        if isinstance(document, (str, bytes)):
            document = json.loads(document)
        doc = SystemDocument.model_validate(document)
    except (ValidationError, ValueError) as exc:
        raise SchemaError(f"Invalid system document: {exc}") from exc

    dims = doc.dims
    if doc.xi:
        dist = DistributionSpec(tuple(_build_component(r) for r in doc.xi))
    else:
        dist = DistributionSpec.point_mass([0.0])
    allowed_Z = {len(doc.xi)} if doc.xi else {0, 1}
    if dims.Z is not None and dims.Z not in allowed_Z:
        raise SchemaError(f"dims.Z = {dims.Z} but {len(doc.xi)} distribution records given")

    Z = dist.num_vars
    m = doc.matrices
    A = _build_matrix("A_o", m.A_o, (dims.n, dims.n), Z)
    B_ow = _build_matrix("B_ow", m.B_ow, (dims.n, dims.pw), Z)
    C_o = _build_matrix("C_o", m.C_o, (dims.qz, dims.n), Z)
    D_ow = _build_matrix("D_ow", m.D_ow, (dims.qz, dims.pw), Z)

    if m.B_ou is None:
        if m.D_ou is not None:
            raise SchemaError("D_ou given without B_ou")
        logger.debug("Loaded closed-loop system n=%d pw=%d qz=%d Z=%d", dims.n, dims.pw, dims.qz, Z)
        return ClosedLoopSystem(dist, A, B_ow, C_o, D_ow)

    if dims.pu is None:
        raise SchemaError("dims.pu is required when B_ou is given")
    B_ou = _build_matrix("B_ou", m.B_ou, (dims.n, dims.pu), Z)
    D_ou = _build_matrix("D_ou", m.D_ou, (dims.qz, dims.pu), Z)
    logger.debug(
        "Loaded plant n=%d pw=%d pu=%d qz=%d Z=%d", dims.n, dims.pw, dims.pu, dims.qz, Z
    )
    return GeneralizedPlant(dist, A, B_ow, B_ou, C_o, D_ow, D_ou)
