"""
SpaRCS: greedy low-rank plus sparse recovery with restricted least squares.

Each iteration expands the active subspace and support with the best rank-k
and s-sparse approximations of the gradient, solves least squares on each
of them with the other component fixed, and prunes back to the budgets.
"""

from typing import Any, Optional, Tuple

import numpy as np

from lrsp.matrix import SupportSet, basis_union
from lrsp.solvers.base import Callback, Solver
from lrsp.solvers.types import ProblemSpec, SolverConfig, SolverName, SolverState, SolveResult

__all__ = (
    "SparcsSolver",
    "sparcs_solve",
)


class SparcsSolver(Solver):
    name = SolverName.SPARCS

    def _step(self, state: SolverState) -> Tuple[SolverState, Optional[float], Optional[float]]:
        problem = self.problem
        shape = problem.shape

        grad = self._gradient(state.estimate)

        _, direction = self._project_rank(grad)
        active_basis = basis_union(direction, state.basis)

        if active_basis.rank:
            v_low_rank = self._least_squares(
                active_basis, state.sparse, state.low_rank, "low-rank"
            )
            low_rank, basis = self._project_rank(v_low_rank)
        else:
            low_rank, basis = np.zeros(shape), active_basis

        if problem.sparsity:
            _, direction_support = self._project_sparse(grad)
            active_support = direction_support.union(state.support)
            # L_i stays fixed in the sparse phase
            v_sparse = self._least_squares(active_support, state.low_rank, state.sparse, "sparse")
            sparse, support = self._project_sparse(v_sparse)
        else:
            sparse, support = np.zeros(shape), SupportSet.empty(shape)

        new_state = SolverState(
            low_rank=low_rank,
            sparse=sparse,
            basis=basis,
            support=support,
            q_low_rank=low_rank,
            q_sparse=sparse,
            iteration=self._iteration,
        )
        return new_state, None, None


def sparcs_solve(
    problem: ProblemSpec,
    config: Optional[SolverConfig] = None,
    truth: Optional[Tuple[Any, Any]] = None,
    *,
    callback: Optional[Callback] = None,
) -> SolveResult:
    """
    Run SpaRCS on ``problem``.

    :param truth: optional planted ``(L*, M*)``; only used for the error
        columns of the trace.
    :return: a :class:`SolveResult`, which also unpacks as ``state, trace``.
    """
    return SparcsSolver(problem, config, truth=truth, callback=callback).solve()
