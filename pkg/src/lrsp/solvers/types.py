"""
Problem, configuration, state and trace types shared by the solvers.
"""

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from lrsp._compat import StrEnum
from lrsp.chrono import TimeUnit
from lrsp.converter import EnumConverter, convert_fields
from lrsp.exc import ArgumentError
from lrsp.matrix import SubspaceBasis, SupportSet, as_matrix
from lrsp.operators import MeasurementOperator, as_observations
from lrsp.solvers.lsq import LeastSquaresMethod
from lrsp.typing import FloatArray, Shape

__all__ = (
    "ProjectorKind",
    "SolverName",
    "ProblemSpec",
    "SolverConfig",
    "SolverState",
    "TraceRecord",
    "SolverTrace",
    "SolveResult",
    "GroundTruth",
    "TRACE_HEADER",
)

TRACE_HEADER = ("iter", "residual", "rel_change", "mu_L", "mu_M", "err_L", "err_M", "millis")


class ProjectorKind(StrEnum):
    """
    Rank-k projection used inside the solvers.
    """

    EXACT = "exact"
    RANDOMIZED = "randomized"


class SolverName(StrEnum):
    SPARCS = "sparcs"
    ALPS = "alps"


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """
    Recover ``L + M`` with ``rank(L) <= rank`` and ``|M|_0 <= sparsity``
    from ``observations = operator(L + M) + noise``.

    ``sparsity == 0`` disables the sparse phase (pure low-rank recovery).
    """

    operator: MeasurementOperator
    observations: FloatArray
    rank: int
    sparsity: int

    def __post_init__(self) -> None:
        y = as_observations(self.observations, self.operator.output_dim)
        y.setflags(write=False)
        object.__setattr__(self, "observations", y)

        rows, cols = self.operator.input_shape
        if not 1 <= self.rank <= min(rows, cols):
            raise ArgumentError(f"rank budget {self.rank} out of range [1, {min(rows, cols)}]")
        if not 0 <= self.sparsity <= rows * cols:
            raise ArgumentError(f"sparsity budget {self.sparsity} out of range [0, {rows * cols}]")

    @property
    def shape(self) -> Shape:
        return self.operator.input_shape


_CONFIG_CONVERTERS: Mapping[str, Any] = {
    "tolerance": float,
    "max_iterations": int,
    "momentum": float,
    "cg_tolerance": float,
    "cg_max_iters": int,
    "least_squares": EnumConverter(LeastSquaresMethod),
    "projector": EnumConverter(ProjectorKind),
    "projector_seed": int,
    "oversample": int,
    "power_iters": int,
}


@dataclass(frozen=True)
class SolverConfig:
    """
    Solver tunables.

    The randomized projector fields (``projector_seed``, ``oversample``,
    ``power_iters``) only apply with :attr:`ProjectorKind.RANDOMIZED`.
    """

    tolerance: float = 1e-4
    max_iterations: int = 700
    momentum: float = 0.25
    cg_tolerance: float = 1e-8
    cg_max_iters: int = 200
    least_squares: LeastSquaresMethod = LeastSquaresMethod.AUTO
    projector: ProjectorKind = ProjectorKind.EXACT
    projector_seed: int = 0
    oversample: int = 5
    power_iters: int = 2

    def __post_init__(self) -> None:
        if not self.tolerance > 0:
            raise ArgumentError(f"tolerance must be positive: {self.tolerance!r}")
        if self.max_iterations < 1:
            raise ArgumentError(f"max_iterations must be positive: {self.max_iterations!r}")
        if not 0 <= self.momentum < 1:
            raise ArgumentError(f"momentum must be in [0, 1): {self.momentum!r}")
        if not self.cg_tolerance > 0:
            raise ArgumentError(f"cg_tolerance must be positive: {self.cg_tolerance!r}")
        if self.cg_max_iters < 1:
            raise ArgumentError(f"cg_max_iters must be positive: {self.cg_max_iters!r}")
        if self.oversample < 0 or self.power_iters < 0:
            raise ArgumentError("oversample and power_iters must be nonnegative")

        object.__setattr__(self, "projector", ProjectorKind(self.projector))
        object.__setattr__(self, "least_squares", LeastSquaresMethod(self.least_squares))

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "SolverConfig":
        """
        Build from a mapping of field names, e.g. a decoded JSON object.

        String values are converted, so ``{"projector": "randomized"}`` works.
        """
        return cls(**convert_fields(values, _CONFIG_CONVERTERS))

    def replace(self, **changes: Any) -> "SolverConfig":
        """Copy with the given fields replaced; ``None`` values are ignored."""
        changes = {k: v for k, v in changes.items() if v is not None}
        if not changes:
            return self
        return dataclasses.replace(self, **convert_fields(changes, _CONFIG_CONVERTERS))


@dataclass(frozen=True, eq=False)
class SolverState:
    """
    Iterate of a solver.

    ``low_rank`` has rank at most ``rank`` with column space ``basis``;
    ``sparse`` is zero outside ``support``.
    ``q_low_rank`` and ``q_sparse`` are the momentum points of Matrix ALPS.
    SpaRCS keeps them equal to ``low_rank`` and ``sparse``.
    """

    low_rank: FloatArray
    sparse: FloatArray
    basis: SubspaceBasis
    support: SupportSet
    q_low_rank: FloatArray
    q_sparse: FloatArray
    iteration: int = 0

    @classmethod
    def zeros(cls, shape: Shape) -> "SolverState":
        zero = np.zeros(shape)
        return cls(
            low_rank=zero,
            sparse=zero,
            basis=SubspaceBasis.empty(shape[0]),
            support=SupportSet.empty(shape),
            q_low_rank=zero,
            q_sparse=zero,
        )

    @property
    def estimate(self) -> FloatArray:
        """``X = L + M``"""
        return self.low_rank + self.sparse

    @property
    def momentum_point(self) -> FloatArray:
        """``Q = Q_L + Q_M``"""
        return self.q_low_rank + self.q_sparse

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.low_rank))
            and np.all(np.isfinite(self.sparse))
            and np.all(np.isfinite(self.q_low_rank))
            and np.all(np.isfinite(self.q_sparse))
        )


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Planted ``(L*, M*)`` used to report per-iteration errors."""

    low_rank: FloatArray
    sparse: FloatArray

    def __post_init__(self) -> None:
        low_rank = as_matrix(self.low_rank, name="L*")
        sparse = as_matrix(self.sparse, name="M*")
        if low_rank.shape != sparse.shape:
            raise ArgumentError(f"L* {low_rank.shape} and M* {sparse.shape} differ in shape")
        object.__setattr__(self, "low_rank", low_rank)
        object.__setattr__(self, "sparse", sparse)

    @classmethod
    def of(cls, truth: Optional[Tuple[Any, Any]]) -> Optional["GroundTruth"]:
        if truth is None or isinstance(truth, GroundTruth):
            return truth
        low_rank, sparse = truth
        return cls(low_rank, sparse)


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    residual: float
    rel_change: float
    mu_low_rank: Optional[float]
    mu_sparse: Optional[float]
    err_low_rank: Optional[float]
    err_sparse: Optional[float]
    millis: float

    def as_row(self) -> Tuple[str, ...]:
        """CSV fields in :data:`TRACE_HEADER` order. Missing values are empty."""

        def fmt(value: Optional[float]) -> str:
            return "" if value is None else repr(float(value))

        return (
            str(self.iteration),
            fmt(self.residual),
            fmt(self.rel_change),
            fmt(self.mu_low_rank),
            fmt(self.mu_sparse),
            fmt(self.err_low_rank),
            fmt(self.err_sparse),
            f"{self.millis:.3f}",
        )


@dataclass
class SolverTrace:
    """
    Per-iteration records of a solver run.

    Iteration indices are strictly increasing.
    ``warnings`` collects non-fatal events such as inner CG stagnation.
    """

    records: List[TraceRecord] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    def append(self, record: TraceRecord) -> None:
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ArgumentError(
                f"iteration {record.iteration} does not follow {self.records[-1].iteration}"
            )
        self.records.append(record)

    def warn(self, message: str) -> None:
        self.warnings.append(message)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    def __getitem__(self, index: int) -> TraceRecord:
        return self.records[index]

    def column(self, name: str) -> Sequence[Optional[float]]:
        """Values of one record attribute across iterations."""
        return [getattr(r, name) for r in self.records]

    @property
    def total_millis(self) -> float:
        return float(sum(r.millis for r in self.records))


@dataclass(frozen=True, eq=False)
class SolveResult:
    solver: SolverName
    state: SolverState
    trace: SolverTrace
    converged: bool

    @property
    def iterations(self) -> int:
        return self.state.iteration

    @property
    def estimate(self) -> FloatArray:
        return self.state.estimate

    @property
    def low_rank(self) -> FloatArray:
        return self.state.low_rank

    @property
    def sparse(self) -> FloatArray:
        return self.state.sparse

    @property
    def seconds(self) -> float:
        return TimeUnit.convert(self.trace.total_millis, TimeUnit.MILLISECONDS, TimeUnit.SECONDS)

    def __iter__(self) -> Iterator[Any]:
        # unpack as ``state, trace``
        yield self.state
        yield self.trace
