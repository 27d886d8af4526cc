"""
Pydantic schemas for input validation and result documents.

System-description files, the run configuration assembled from CLI flags,
and every result document emitted by the CLI are defined here. Result
documents always carry the full field set of their command (absent values
are emitted as null) so downstream tooling can rely on a stable shape.
"""

from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Union

from pydantic import (
    AliasChoices,
    BaseModel,
    ConfigDict,
    Field,
    field_validator,
    model_validator,
)

from app import config

MatrixEntry = Union[str, float, int]
RawMatrix = Union[MatrixEntry, List[List[MatrixEntry]]]


# ============ System-description documents ============

class _Record(BaseModel):
    """Distribution record; parameters may be inline or under "parameters"."""
    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="before")
    @classmethod
    def flatten_parameters(cls, data: Any) -> Any:
        if isinstance(data, dict) and isinstance(data.get("parameters"), dict):
            data = {**{k: v for k, v in data.items() if k != "parameters"}, **data["parameters"]}
        return data


class NormalRecord(_Record):
    type: Literal["normal"]
    mean: float = 0.0
    stddev: float = Field(..., gt=0, description="Standard deviation (> 0)")


class UniformRecord(_Record):
    type: Literal["uniform"]
    lo: float
    hi: float

    @model_validator(mode="after")
    def check_bounds(self):
        if not self.lo < self.hi:
            raise ValueError("uniform record needs lo < hi")
        return self


class DiscreteRecord(_Record):
    type: Literal["discrete"]
    values: List[float] = Field(..., min_length=1)
    probabilities: List[float] = Field(..., min_length=1)

    @model_validator(mode="after")
    def check_probabilities(self):
        if len(self.values) != len(self.probabilities):
            raise ValueError("values and probabilities must have equal length")
        if any(p < 0 for p in self.probabilities):
            raise ValueError("probabilities must be non-negative")
        if abs(sum(self.probabilities) - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1")
        return self


DistributionRecord = Annotated[
    Union[NormalRecord, UniformRecord, DiscreteRecord], Field(discriminator="type")
]


class Dims(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(..., ge=1, description="State dimension")
    pw: int = Field(..., ge=1, description="Disturbance input dimension")
    pu: Optional[int] = Field(None, ge=1, description="Control input dimension")
    qz: int = Field(..., ge=1, description="Performance output dimension")
    Z: Optional[int] = Field(None, ge=0, description="Dimension of xi")


class Matrices(BaseModel):
    """Matrix entries as expression strings; closed-loop files may use A/B/C/D."""
    model_config = ConfigDict(extra="forbid")

    A_o: RawMatrix = Field(..., validation_alias=AliasChoices("A_o", "A"))
    B_ow: RawMatrix = Field(..., validation_alias=AliasChoices("B_ow", "B"))
    B_ou: Optional[RawMatrix] = None
    C_o: RawMatrix = Field(..., validation_alias=AliasChoices("C_o", "C"))
    D_ow: Optional[RawMatrix] = Field(None, validation_alias=AliasChoices("D_ow", "D"))
    D_ou: Optional[RawMatrix] = None


class SystemDocument(BaseModel):
    """Top-level system-description file."""
    model_config = ConfigDict(extra="forbid")

    dims: Dims
    xi: List[DistributionRecord] = Field(default_factory=list)
    matrices: Matrices


# ============ Run configuration ============

Command = Literal["analyze", "synthesize", "stabilize", "simulate", "oracle"]


class RunConfig(BaseModel):
    """
    Validated configuration of one CLI invocation.

    Attributes:
        command: Subcommand to run
        input_path: System-description file
        output_path: Result document path (stdout when omitted)
        gain_path: Gain file for analyze/simulate/oracle on a plant
        trace_path: CSV path for the simulate trace
        seed, n_paths, horizon: Monte-Carlo settings
        eps, rank_tol, bisect_tol, oracle_tol: Numerical tolerances (all > 0)
    """
    command: Command
    input_path: Path
    output_path: Optional[Path] = None
    gain_path: Optional[Path] = None
    trace_path: Optional[Path] = None
    seed: int = config.SEED
    n_paths: int = Field(config.N_PATHS, ge=1)
    horizon: int = Field(config.HORIZON, ge=0)
    eps: float = Field(config.SDP_EPS, gt=0)
    rank_tol: float = Field(config.RANK_TOL, gt=0)
    bisect_tol: float = Field(config.BISECT_TOL, gt=0)
    oracle_tol: float = Field(config.ORACLE_TOL, gt=0)
    verbose: bool = False

    @field_validator("input_path")
    @classmethod
    def input_must_exist(cls, v: Path) -> Path:
        if not v.is_file():
            raise ValueError(f"input file {v} does not exist")
        return v

    @model_validator(mode="after")
    def check_command_fields(self):
        if self.command in ("synthesize", "stabilize") and self.gain_path is not None:
            raise ValueError(f"{self.command} designs its own gain; --gain is not accepted")
        if self.trace_path is not None and self.command != "simulate":
            raise ValueError("--trace is only meaningful for simulate")
        return self


# ============ Result documents ============

Matrix = List[List[float]]


class StabilityOut(BaseModel):
    stable: bool
    P: Optional[Matrix]
    moment_map_spectral_radius: float
    decay_rate_estimate: float


class H2Out(BaseModel):
    norm: float
    gamma_sq: float
    P: Matrix


class SynthesisOut(BaseModel):
    F: Matrix
    gamma: float
    X: Matrix
    Y: Matrix
    R: Matrix
    certified_norm: Optional[float]
    certified: Optional[bool] = None


class DecayOut(BaseModel):
    F: Matrix
    lam: float = Field(..., serialization_alias="lambda")
    X: Matrix
    Y: Matrix
    iterations: int


class EnergyOut(BaseModel):
    mean: float
    std_error: float
    n_paths: int
    K: int


class TracePointOut(BaseModel):
    k: int
    mean: float
    std_error: float


class OracleOut(BaseModel):
    norm: float
    s_infinity: float
    terms: int
    partial_sums: List[float]


class AnalyzeResults(BaseModel):
    stability: StabilityOut
    h2: Optional[H2Out]


class SynthesizeResults(BaseModel):
    synthesis: Optional[SynthesisOut]


class StabilizeResults(BaseModel):
    decay: Optional[DecayOut]


class SimulateResults(BaseModel):
    energy: EnergyOut
    trace: List[TracePointOut]


class OracleResults(BaseModel):
    oracle: Optional[OracleOut]


class ResultDocument(BaseModel):
    """Envelope shared by every command."""
    command: str
    input_sha256: str
    results: Optional[Union[AnalyzeResults, SynthesizeResults, StabilizeResults, SimulateResults, OracleResults]]
    diagnostics: Dict[str, Any] = Field(default_factory=dict)
    versions: Dict[str, str]
    seed: Optional[int]
    error: Optional[Dict[str, Any]] = None
