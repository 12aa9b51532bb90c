"""
Synthetic instances and benchmark experiments.
"""

import asyncio
import hashlib
import json
import logging
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from lrsp.chrono import Stopwatch
from lrsp.converter import Converter, EnumConverter, ShapeConverter
from lrsp.exc import ArgumentError, LRSError
from lrsp.matrix import as_matrix
from lrsp.operators import (
    IdentityOperator,
    MaskOperator,
    MeasurementOperator,
    OperatorKind,
    make_gaussian_operator,
    make_identity_operator,
    make_mask_operator,
)
from lrsp.solvers import ProblemSpec, SolverConfig, SolveResult, SolverName, solve
from lrsp.typing import FloatArray, Shape

__all__ = (
    "ObservationModel",
    "ObservationModelConverter",
    "BenchmarkRow",
    "BenchRowConverter",
    "SyntheticInstance",
    "RunRecord",
    "ReportRow",
    "ExperimentReport",
    "RpcaResult",
    "REPORT_HEADER",
    "generate_instance",
    "relative_error",
    "run_completion_benchmark",
    "run_completion_benchmark_async",
    "run_rpca",
    "stack_frames",
    "unstack_frames",
)

REPORT_HEADER = (
    "config",
    "solver",
    "median_iters",
    "median_rel_err",
    "median_secs",
    "reps",
    "failures",
)

DEFAULT_SPARSE_SCALE = 10.0

Seed = Union[int, Sequence[int]]

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObservationModel:
    """
    How observations of an ``m x n`` matrix are taken.

    ``fraction`` applies to masks, ``p`` to Gaussian operators.
    """

    kind: OperatorKind
    fraction: Optional[float] = None
    p: Optional[int] = None

    def __post_init__(self) -> None:
        kind = OperatorKind(self.kind)
        object.__setattr__(self, "kind", kind)

        if kind is OperatorKind.MASK:
            if self.fraction is None or not 0 < self.fraction <= 1:
                raise ArgumentError(f"mask fraction must be in (0, 1]: {self.fraction!r}")
        elif kind is OperatorKind.GAUSSIAN:
            if self.p is None or self.p < 1:
                raise ArgumentError(f"gaussian measurement count must be positive: {self.p!r}")

    @classmethod
    def mask(cls, fraction: float) -> "ObservationModel":
        return cls(OperatorKind.MASK, fraction=fraction)

    @classmethod
    def gaussian(cls, p: int) -> "ObservationModel":
        return cls(OperatorKind.GAUSSIAN, p=p)

    @classmethod
    def identity(cls) -> "ObservationModel":
        return cls(OperatorKind.IDENTITY)

    def build(
        self,
        shape: Shape,
        seed: Optional[int],
        *,
        max_coefficients: Optional[int] = None,
    ) -> MeasurementOperator:
        if self.kind is OperatorKind.MASK:
            assert self.fraction is not None
            return make_mask_operator(shape, self.fraction, seed)
        elif self.kind is OperatorKind.GAUSSIAN:
            assert self.p is not None
            return make_gaussian_operator(shape, self.p, seed, max_coefficients=max_coefficients)
        else:
            return make_identity_operator(shape)

    def __str__(self) -> str:
        if self.kind is OperatorKind.MASK:
            return f"mask:{self.fraction:g}"
        elif self.kind is OperatorKind.GAUSSIAN:
            return f"gaussian:{self.p}"
        return "identity"


class ObservationModelConverter(Converter):
    """
    Convert ``mask:0.3``, ``gaussian:600``, ``identity`` or a mapping
    like ``{"kind": "mask", "fraction": 0.3}`` to :class:`ObservationModel`.
    """

    _kind = EnumConverter(OperatorKind)

    def __call__(self, value: Any, context: Mapping[Any, Any]) -> ObservationModel:
        if isinstance(value, ObservationModel):
            return value

        if isinstance(value, Mapping):
            kind = self._kind(value.get("kind"), context)
            fraction = value.get("fraction")
            p = value.get("p")
            return ObservationModel(
                kind,
                fraction=None if fraction is None else float(fraction),
                p=None if p is None else int(p),
            )

        name, _, arg = str(value).partition(":")
        kind = self._kind(name.strip().lower(), context)
        try:
            if kind is OperatorKind.MASK:
                return ObservationModel.mask(float(arg))
            elif kind is OperatorKind.GAUSSIAN:
                return ObservationModel.gaussian(int(arg))
        except ValueError:
            raise ArgumentError(f"bad observation model {value!r}") from None

        if arg:
            raise ArgumentError(f"identity takes no argument: {value!r}")
        return ObservationModel.identity()


@dataclass(frozen=True)
class BenchmarkRow:
    """One benchmark configuration ``(m, n, k, noise_norm)``."""

    shape: Shape
    rank: int
    noise_norm: float = 0.0
    sparsity: int = 0
    model: ObservationModel = field(default_factory=lambda: ObservationModel.mask(0.3))

    @property
    def label(self) -> str:
        m, n = self.shape
        label = f"{m}x{n}:{self.rank}:{self.noise_norm:g}"
        if self.sparsity:
            label += f":{self.sparsity}"
        return label


class BenchRowConverter(Converter):
    """
    Convert ``200x400:5:0.01`` (optionally ``:SPARSITY``) to :class:`BenchmarkRow`.

    The observation model is taken from ``context["model"]`` if present.
    """

    _shape = ShapeConverter()

    def __call__(self, value: Any, context: Mapping[Any, Any]) -> BenchmarkRow:
        if isinstance(value, BenchmarkRow):
            return value

        parts = str(value).split(":")
        if not 2 <= len(parts) <= 4:
            raise ArgumentError(f"bad benchmark row {value!r}, expect MxN:K[:NOISE[:S]]")

        try:
            shape = self._shape(parts[0], context)
            rank = int(parts[1])
            noise_norm = float(parts[2]) if len(parts) > 2 else 0.0
            sparsity = int(parts[3]) if len(parts) > 3 else 0
        except ValueError:
            raise ArgumentError(f"bad benchmark row {value!r}") from None

        model = context.get("model") or ObservationModel.mask(0.3)
        return BenchmarkRow(shape, rank, noise_norm, sparsity, model)


@dataclass(frozen=True, eq=False)
class SyntheticInstance:
    """
    Planted ``X* = L* + M*`` with observations ``y = A X* + noise``.
    """

    low_rank: FloatArray
    sparse: FloatArray
    operator: MeasurementOperator
    observations: FloatArray
    noise: FloatArray
    rank: int
    sparsity: int
    seed: Optional[Seed] = None

    @property
    def shape(self) -> Shape:
        return self.operator.input_shape

    @property
    def truth(self) -> FloatArray:
        return self.low_rank + self.sparse

    def problem(self, rank: Optional[int] = None, sparsity: Optional[int] = None) -> ProblemSpec:
        """The recovery problem with the planted budgets unless overridden."""
        return ProblemSpec(
            self.operator,
            self.observations,
            self.rank if rank is None else rank,
            self.sparsity if sparsity is None else sparsity,
        )

    def digest(self) -> str:
        """SHA-256 of the realization: operator, planted matrices, observations."""
        h = hashlib.sha256()
        h.update(json.dumps(self.operator.describe(), sort_keys=True).encode())
        if isinstance(self.operator, MaskOperator):
            h.update(self.operator.omega.indices.tobytes())
        for arr in (self.low_rank, self.sparse, self.observations):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()


def generate_instance(
    m: int,
    n: int,
    k: int,
    s: int,
    model: ObservationModel,
    noise_norm: float = 0.0,
    seed: Seed = 0,
    *,
    sparse_scale: float = DEFAULT_SPARSE_SCALE,
    max_coefficients: Optional[int] = None,
) -> SyntheticInstance:
    """
    Draw a synthetic instance, fully determined by ``seed``.

    ``L* = U R^T`` with Gaussian factors. ``M*`` has a uniform support of size ``s``
    and Gaussian values with standard deviation ``sparse_scale * max|L*|``.
    Both are scaled so that ``|L* + M*|_F = 1`` (``|L*|_F = 1`` when ``s == 0``).
    The noise is uniform on the sphere of radius ``noise_norm``.
    """
    if not 1 <= k <= min(m, n):
        raise ArgumentError(f"rank {k} out of range [1, {min(m, n)}] for {m}x{n}")
    if not 0 <= s <= m * n:
        raise ArgumentError(f"sparsity {s} out of range [0, {m * n}]")
    if noise_norm < 0:
        raise ArgumentError(f"noise norm must be nonnegative: {noise_norm!r}")
    if sparse_scale <= 0:
        raise ArgumentError(f"sparse scale must be positive: {sparse_scale!r}")

    factor_seq, sparse_seq, operator_seq, noise_seq = np.random.SeedSequence(seed).spawn(4)

    rng = np.random.default_rng(factor_seq)
    low_rank = rng.standard_normal((m, k)) @ rng.standard_normal((n, k)).T

    sparse = np.zeros((m, n))
    if s:
        rng = np.random.default_rng(sparse_seq)
        support = rng.choice(m * n, size=s, replace=False)
        scale = sparse_scale * float(np.max(np.abs(low_rank)))
        sparse.reshape(-1)[support] = scale * rng.standard_normal(s)

    norm = float(np.linalg.norm(low_rank + sparse))
    low_rank /= norm
    sparse /= norm

    operator_seed = int(operator_seq.generate_state(1)[0])
    op = model.build((m, n), operator_seed, max_coefficients=max_coefficients)

    noise = np.zeros(op.output_dim)
    if noise_norm > 0:
        direction = np.random.default_rng(noise_seq).standard_normal(op.output_dim)
        noise = noise_norm * direction / np.linalg.norm(direction)

    observations = op.apply(low_rank + sparse) + noise
    return SyntheticInstance(low_rank, sparse, op, observations, noise, k, s, seed)


def relative_error(estimate: Any, truth: Any) -> float:
    """
    ``|estimate - truth|_F / |truth|_F``, or the absolute error if ``truth`` is zero.
    """
    estimate = np.asarray(estimate, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if estimate.shape != truth.shape:
        raise ArgumentError(f"shape mismatch: {estimate.shape} and {truth.shape}")

    error = float(np.linalg.norm(estimate - truth))
    norm = float(np.linalg.norm(truth))
    return error / norm if norm > 0 else error


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one solver on one instance."""

    config: str
    solver: SolverName
    rep: int
    digest: str
    iterations: int = 0
    rel_error: float = float("nan")
    seconds: float = 0.0
    converged: bool = False
    failed: bool = False
    message: str = ""


@dataclass(frozen=True)
class ReportRow:
    """Medians over the completed runs of one ``(config, solver)`` pair."""

    config: str
    solver: SolverName
    median_iters: Optional[float]
    median_rel_err: Optional[float]
    median_secs: Optional[float]
    reps: int
    failures: int

    def as_row(self, timings: bool = True) -> Tuple[str, ...]:
        iters = "" if self.median_iters is None else f"{self.median_iters:g}"
        error = "" if self.median_rel_err is None else f"{self.median_rel_err:.6e}"
        secs = "" if self.median_secs is None or not timings else f"{self.median_secs:.4f}"
        return (
            self.config,
            str(self.solver),
            iters,
            error,
            secs,
            str(self.reps),
            str(self.failures),
        )


@dataclass
class ExperimentReport:
    rows: List[ReportRow] = field(default_factory=list)
    runs: List[RunRecord] = field(default_factory=list)
    timings: bool = False
    """Whether ``median_secs`` is written out. Timings are not reproducible."""

    def row(self, config: str, solver: Union[str, SolverName]) -> ReportRow:
        solver = SolverName(solver)
        for r in self.rows:
            if r.config == config and r.solver is solver:
                return r
        raise KeyError((config, solver))

    def as_rows(self) -> List[Tuple[str, ...]]:
        return [r.as_row(self.timings) for r in self.rows]


def _median(values: Sequence[float]) -> Optional[float]:
    if not values:
        return None
    return float(np.median(values))


def _aggregate(config: str, solver: SolverName, runs: Sequence[RunRecord]) -> ReportRow:
    completed = [r for r in runs if not r.failed]
    return ReportRow(
        config=config,
        solver=solver,
        median_iters=_median([r.iterations for r in completed]),
        median_rel_err=_median([r.rel_error for r in completed]),
        median_secs=_median([r.seconds for r in completed]),
        reps=len(runs),
        failures=len(runs) - len(completed),
    )


def _run_solver(
    solver: SolverName,
    instance: SyntheticInstance,
    config: SolverConfig,
) -> Tuple[SolveResult, float]:
    with Stopwatch() as watch:
        result = solve(solver, instance.problem(), config, (instance.low_rank, instance.sparse))
    return result, watch.seconds


def _run_rep(
    row_index: int,
    row: BenchmarkRow,
    rep: int,
    solvers: Sequence[SolverName],
    seed: int,
    config: SolverConfig,
) -> List[RunRecord]:
    m, n = row.shape
    instance = generate_instance(
        m,
        n,
        row.rank,
        row.sparsity,
        row.model,
        row.noise_norm,
        seed=(seed, row_index, rep),
    )
    digest = instance.digest()
    _logger.info("config=%s rep=%d instance=%s", row.label, rep, digest)

    records = []
    for solver in solvers:
        try:
            result, seconds = _run_solver(solver, instance, config)
        except LRSError as ex:
            _logger.warning(
                "%s failed on config=%s rep=%d", solver, row.label, rep, exc_info=True
            )
            records.append(
                RunRecord(row.label, solver, rep, digest, failed=True, message=str(ex))
            )
            continue

        records.append(
            RunRecord(
                config=row.label,
                solver=solver,
                rep=rep,
                digest=digest,
                iterations=result.iterations,
                rel_error=relative_error(result.estimate, instance.truth),
                seconds=seconds,
                converged=result.converged,
            )
        )
        if not result.converged:
            _logger.info(
                "%s hit the iteration cap %d on config=%s rep=%d",
                solver,
                config.max_iterations,
                row.label,
                rep,
            )

    return records


async def run_completion_benchmark_async(
    rows: Sequence[BenchmarkRow],
    solvers: Sequence[Union[str, SolverName]],
    reps: int,
    seed: int = 0,
    *,
    config: Optional[SolverConfig] = None,
    timings: bool = False,
    executor: Optional[Executor] = None,
    max_workers: Optional[int] = None,
) -> ExperimentReport:
    """
    Run every solver on ``reps`` instances of every configuration.

    Instance ``rep`` of configuration ``i`` is drawn from seed ``(seed, i, rep)``
    and shared by all solvers. Repetitions run in ``executor`` (a private
    thread pool by default); results are collected in submission order, so the
    report does not depend on scheduling.
    """
    if reps < 1:
        raise ArgumentError(f"reps must be positive: {reps!r}")
    if not rows:
        raise ArgumentError("no benchmark configurations")

    names = [SolverName(s) for s in solvers]
    if not names:
        raise ArgumentError("no solvers")

    if config is None:
        config = SolverConfig()

    loop = asyncio.get_running_loop()

    own_executor = executor is None
    if executor is None:
        executor = ThreadPoolExecutor(max_workers=max_workers)

    try:
        tasks = [
            loop.run_in_executor(executor, _run_rep, idx, row, rep, names, seed, config)
            for idx, row in enumerate(rows)
            for rep in range(reps)
        ]
        batches = await asyncio.gather(*tasks)
    finally:
        if own_executor:
            executor.shutdown(wait=True)

    runs = [record for batch in batches for record in batch]

    grouped: Dict[Tuple[str, SolverName], List[RunRecord]] = {}
    for record in runs:
        grouped.setdefault((record.config, record.solver), []).append(record)

    report = ExperimentReport(runs=runs, timings=timings)
    for row in rows:
        for name in names:
            report.rows.append(_aggregate(row.label, name, grouped.get((row.label, name), [])))

    return report


def run_completion_benchmark(
    rows: Sequence[BenchmarkRow],
    solvers: Sequence[Union[str, SolverName]],
    reps: int,
    seed: int = 0,
    *,
    config: Optional[SolverConfig] = None,
    timings: bool = False,
    max_workers: Optional[int] = None,
) -> ExperimentReport:
    """Blocking wrapper of :func:`run_completion_benchmark_async`."""
    return asyncio.run(
        run_completion_benchmark_async(
            rows,
            solvers,
            reps,
            seed,
            config=config,
            timings=timings,
            max_workers=max_workers,
        )
    )


def stack_frames(frames: Any) -> FloatArray:
    """
    Stack frames of equal shape as the columns of a matrix.

    Frame ``j`` (``h x w``) becomes column ``j`` in row-major order, giving an
    ``(h w) x F`` matrix.
    """
    arr = np.asarray(frames, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] < 1:
        raise ArgumentError(f"expect a stack of 2-D frames, got shape {arr.shape}")
    count = arr.shape[0]
    return np.ascontiguousarray(arr.reshape(count, -1).T)


def unstack_frames(matrix: Any, frame_shape: Shape) -> FloatArray:
    """Inverse of :func:`stack_frames`: return an ``F x h x w`` array."""
    matrix = as_matrix(matrix, finite=False)
    h, w = frame_shape
    if matrix.shape[0] != h * w:
        raise ArgumentError(f"{matrix.shape[0]} rows do not hold {h}x{w} frames")
    return np.ascontiguousarray(matrix.T.reshape(matrix.shape[1], h, w))


@dataclass(frozen=True, eq=False)
class RpcaResult:
    low_rank: FloatArray
    sparse: FloatArray
    row: ReportRow
    result: SolveResult


def run_rpca(
    data: Union[SyntheticInstance, Any],
    k: int,
    s: int,
    solver: Union[str, SolverName] = SolverName.ALPS,
    config: Optional[SolverConfig] = None,
) -> RpcaResult:
    """
    Split a completely observed matrix into low-rank plus sparse parts.

    ``data`` is a :class:`SyntheticInstance` with an identity operator or a
    data matrix (for image stacks, see :func:`stack_frames`).
    The report row holds the relative error against the planted ``X*`` for
    instances, and the relative fit error ``|L + M - Y|_F / |Y|_F`` otherwise.
    """
    solver = SolverName(solver)

    truth: Optional[Tuple[FloatArray, FloatArray]]
    if isinstance(data, SyntheticInstance):
        if not isinstance(data.operator, IdentityOperator):
            raise ArgumentError(
                f"robust PCA needs complete observations, got a {data.operator.kind} operator"
            )
        problem = data.problem(k, s)
        truth = (data.low_rank, data.sparse)
        reference = data.truth
    else:
        matrix = as_matrix(data, name="data")
        op = IdentityOperator(matrix.shape)
        problem = ProblemSpec(op, matrix.reshape(-1), k, s)
        truth = None
        reference = matrix

    with Stopwatch() as watch:
        result = solve(solver, problem, config, truth)

    m, n = problem.shape
    row = ReportRow(
        config=f"{m}x{n}:{k}:{s}",
        solver=solver,
        median_iters=float(result.iterations),
        median_rel_err=relative_error(result.estimate, reference),
        median_secs=watch.seconds,
        reps=1,
        failures=0,
    )
    return RpcaResult(result.low_rank, result.sparse, row, result)
