"""
Matrix ALPS: projected gradient steps on active subspace and support sets
with constant momentum.

The low-rank phase steps from the momentum point ``Q = Q_L + Q_M``.
The sparse phase then steps from ``Q_L' + Q_M``, which already contains the
updated low-rank momentum point.
"""

from typing import Any, Optional, Tuple

import numpy as np

from lrsp.matrix import SupportSet, basis_union, restrict_to_support
from lrsp.solvers.base import Callback, Solver
from lrsp.solvers.lsq import project_restriction, step_size
from lrsp.solvers.types import ProblemSpec, SolverConfig, SolverName, SolverState, SolveResult

__all__ = (
    "AlpsSolver",
    "alps_solve",
)


class AlpsSolver(Solver):
    name = SolverName.ALPS

    def _step(self, state: SolverState) -> Tuple[SolverState, Optional[float], Optional[float]]:
        problem = self.problem
        op = problem.operator
        tau = self.config.momentum
        shape = problem.shape

        # low-rank phase
        grad = self._gradient(state.momentum_point)
        _, direction = self._project_rank(grad)
        active_basis = basis_union(direction, state.basis)

        mu_low_rank = step_size(op, grad, active_basis)
        v_low_rank = state.q_low_rank - (mu_low_rank / 2) * project_restriction(grad, active_basis)
        low_rank, basis = self._project_rank(v_low_rank)
        q_low_rank = low_rank + tau * (low_rank - state.low_rank)

        # sparse phase
        mu_sparse: Optional[float]
        if problem.sparsity:
            grad = self._gradient(q_low_rank + state.q_sparse)
            _, direction_support = self._project_sparse(grad)
            active_support = direction_support.union(state.support)

            mu_sparse = step_size(op, grad, active_support)
            v_sparse = restrict_to_support(state.q_sparse, active_support) - (
                mu_sparse / 2
            ) * restrict_to_support(grad, active_support)
            sparse, support = self._project_sparse(v_sparse)
            q_sparse = sparse + tau * (sparse - state.sparse)
        else:
            mu_sparse = None
            sparse, support = np.zeros(shape), SupportSet.empty(shape)
            q_sparse = sparse

        new_state = SolverState(
            low_rank=low_rank,
            sparse=sparse,
            basis=basis,
            support=support,
            q_low_rank=q_low_rank,
            q_sparse=q_sparse,
            iteration=self._iteration,
        )
        return new_state, mu_low_rank, mu_sparse


def alps_solve(
    problem: ProblemSpec,
    config: Optional[SolverConfig] = None,
    truth: Optional[Tuple[Any, Any]] = None,
    *,
    callback: Optional[Callback] = None,
) -> SolveResult:
    """
    Run Matrix ALPS on ``problem``.

    With ``config.momentum == 0`` the momentum points equal the iterates and the
    method is plain projected gradient descent.

    :param truth: optional planted ``(L*, M*)``; only used for the error
        columns of the trace.
    :return: a :class:`SolveResult`, which also unpacks as ``state, trace``.
    """
    return AlpsSolver(problem, config, truth=truth, callback=callback).solve()
