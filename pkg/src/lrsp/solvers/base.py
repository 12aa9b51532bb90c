import logging
from abc import ABCMeta, abstractmethod
from typing import Any, Callable, ClassVar, Optional, Tuple

import numpy as np

from lrsp.chrono import Stopwatch
from lrsp.exc import SolverError
from lrsp.matrix import SubspaceBasis, SupportSet, project_rank_k, project_sparse_s, randomized_rank_k
from lrsp.solvers.lsq import Restriction, solve_restricted
from lrsp.solvers.types import (
    GroundTruth,
    ProblemSpec,
    ProjectorKind,
    SolverConfig,
    SolverName,
    SolverState,
    SolverTrace,
    SolveResult,
    TraceRecord,
)
from lrsp.typing import FloatArray

__all__ = (
    "Callback",
    "Solver",
)

Callback = Callable[[int, SolverState], None]
"""Called as ``callback(iteration, state)`` after each iteration."""


class Solver(metaclass=ABCMeta):
    """
    Base class of the iterative recovery solvers.

    Subclasses implement one iteration in :meth:`_step`.
    :meth:`solve` runs iterations until the relative change
    ``|X_i - X_{i-1}|_F / |X_i|_F`` drops to the tolerance
    or the iteration cap is reached.
    """

    name: ClassVar[SolverName]

    def __init__(
        self,
        problem: ProblemSpec,
        config: Optional[SolverConfig] = None,
        *,
        truth: Optional[Tuple[Any, Any]] = None,
        callback: Optional[Callback] = None,
        logger: Optional[logging.Logger] = None,
    ) -> None:
        if logger is None:
            logger = logging.getLogger(
                "%s.%s" % (type(self).__module__, type(self).__qualname__),
            )

        if config is None:
            config = SolverConfig()

        self._logger = logger
        self.problem = problem
        self.config = config
        self._truth = GroundTruth.of(truth)
        self._callback = callback
        self._trace = SolverTrace()
        self._iteration = 0
        self._projections = 0

    @property
    def trace(self) -> SolverTrace:
        return self._trace

    @abstractmethod
    def _step(self, state: SolverState) -> Tuple[SolverState, Optional[float], Optional[float]]:
        """
        One iteration from ``state``.

        Return the new state and the low-rank and sparse step sizes
        (``None`` if not applicable).
        """
        raise NotImplementedError

    def solve(self) -> SolveResult:
        problem = self.problem
        config = self.config
        y = problem.observations
        y_norm = float(np.linalg.norm(y))

        self._logger.info(
            "Solve %s problem: shape=%s rank=%d sparsity=%d p=%d",
            self.name,
            problem.shape,
            problem.rank,
            problem.sparsity,
            problem.operator.output_dim,
        )

        state = SolverState.zeros(problem.shape)
        converged = False

        for iteration in range(1, config.max_iterations + 1):
            self._iteration = iteration
            previous = state.estimate

            with Stopwatch() as watch:
                state, mu_low_rank, mu_sparse = self._step(state)

            if not state.is_finite():
                raise SolverError("non-finite values in the iterates", iteration)

            estimate = state.estimate
            change = float(np.linalg.norm(estimate - previous))
            norm = float(np.linalg.norm(estimate))
            if norm > 0:
                rel_change = change / norm
            else:
                rel_change = 0.0 if change == 0 else float("inf")

            residual = float(np.linalg.norm(y - problem.operator.apply(estimate)))
            err_low_rank, err_sparse = self._truth_errors(state)

            self._trace.append(
                TraceRecord(
                    iteration=iteration,
                    residual=residual,
                    rel_change=rel_change,
                    mu_low_rank=mu_low_rank,
                    mu_sparse=mu_sparse,
                    err_low_rank=err_low_rank,
                    err_sparse=err_sparse,
                    millis=watch.millis,
                )
            )
            self._logger.debug(
                "iter=%d residual=%.6g rel_change=%.6g err_L=%s err_M=%s",
                iteration,
                residual,
                rel_change,
                err_low_rank,
                err_sparse,
            )

            if self._callback is not None:
                self._callback(iteration, state)

            if rel_change <= config.tolerance:
                converged = True
                break

        if converged:
            self._logger.info(
                "%s converged after %d iterations, residual %.3g (|y| = %.3g)",
                self.name,
                state.iteration,
                self._trace[-1].residual,
                y_norm,
            )
        else:
            self._logger.info(
                "%s stopped at the iteration cap %d, last relative change %.3g",
                self.name,
                config.max_iterations,
                self._trace[-1].rel_change,
            )

        return SolveResult(self.name, state, self._trace, converged)

    def _truth_errors(self, state: SolverState) -> Tuple[Optional[float], Optional[float]]:
        # never fed back into the iteration
        truth = self._truth
        if truth is None:
            return None, None
        return (
            float(np.linalg.norm(state.low_rank - truth.low_rank)),
            float(np.linalg.norm(state.sparse - truth.sparse)),
        )

    def _gradient(self, x: FloatArray) -> FloatArray:
        grad = self.problem.operator.gradient(self.problem.observations, x)
        if not np.all(np.isfinite(grad)):
            raise SolverError("non-finite gradient", self._iteration)
        return grad

    def _project_rank(self, m: FloatArray) -> Tuple[FloatArray, SubspaceBasis]:
        """Rank-k projection with the configured projector."""
        k = self.problem.rank
        if not np.all(np.isfinite(m)):
            raise SolverError("non-finite matrix before rank projection", self._iteration)

        config = self.config
        if config.projector is ProjectorKind.EXACT:
            return project_rank_k(m, k)

        self._projections += 1
        oversample = min(config.oversample, min(m.shape) - k)
        seed = (config.projector_seed, self._iteration, self._projections)
        return randomized_rank_k(m, k, oversample, config.power_iters, seed)

    def _project_sparse(self, m: FloatArray) -> Tuple[FloatArray, SupportSet]:
        if not np.all(np.isfinite(m)):
            raise SolverError("non-finite matrix before sparse projection", self._iteration)
        return project_sparse_s(m, self.problem.sparsity)

    def _least_squares(
        self,
        restriction: Restriction,
        fixed_part: FloatArray,
        initial: FloatArray,
        label: str,
    ) -> FloatArray:
        """
        Restricted least squares for one component, CG warm-started at ``initial``.

        CG stalls are logged once and kept in :attr:`SolverTrace.warnings`.
        """
        config = self.config
        try:
            result = solve_restricted(
                self.problem.operator,
                self.problem.observations,
                restriction,
                fixed_part,
                initial=initial,
                method=config.least_squares,
                tolerance=config.cg_tolerance,
                max_iterations=config.cg_max_iters,
            )
        except SolverError as ex:
            raise SolverError(f"{label} least squares: {ex.message}", self._iteration) from ex

        if not result.converged:
            message = (
                f"iteration {self._iteration}: {label} least squares stopped after "
                f"{result.iterations} CG iterations at relative residual {result.residual:.3g}"
            )
            self._logger.warning("%s", message)
            self._trace.warn(message)
        return result.solution
