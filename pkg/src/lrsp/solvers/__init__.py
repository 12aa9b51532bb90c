"""
Low-rank plus sparse recovery solvers.
"""

from typing import Any, Callable, Dict, Optional, Tuple

# re-export solvers, kernels and types here

from lrsp.solvers.alps import AlpsSolver as AlpsSolver
from lrsp.solvers.alps import alps_solve as alps_solve
from lrsp.solvers.base import Callback as Callback
from lrsp.solvers.base import Solver as Solver
from lrsp.solvers.sparcs import SparcsSolver as SparcsSolver
from lrsp.solvers.sparcs import sparcs_solve as sparcs_solve

# isort: split
from lrsp.solvers.lsq import LeastSquaresMethod as LeastSquaresMethod
from lrsp.solvers.lsq import LeastSquaresResult as LeastSquaresResult
from lrsp.solvers.lsq import project_restriction as project_restriction
from lrsp.solvers.lsq import restricted_least_squares as restricted_least_squares
from lrsp.solvers.lsq import solve_restricted as solve_restricted
from lrsp.solvers.lsq import step_size as step_size

# isort: split
from lrsp.solvers.types import GroundTruth as GroundTruth
from lrsp.solvers.types import ProblemSpec as ProblemSpec
from lrsp.solvers.types import ProjectorKind as ProjectorKind
from lrsp.solvers.types import SolverConfig as SolverConfig
from lrsp.solvers.types import SolveResult as SolveResult
from lrsp.solvers.types import SolverName as SolverName
from lrsp.solvers.types import SolverState as SolverState
from lrsp.solvers.types import SolverTrace as SolverTrace
from lrsp.solvers.types import TraceRecord as TraceRecord

SOLVERS: Dict[SolverName, Callable[..., SolveResult]] = {
    SolverName.SPARCS: sparcs_solve,
    SolverName.ALPS: alps_solve,
}


def solve(
    name: SolverName,
    problem: ProblemSpec,
    config: Optional[SolverConfig] = None,
    truth: Optional[Tuple[Any, Any]] = None,
    *,
    callback: Optional[Callback] = None,
) -> SolveResult:
    """Run the solver called ``name``."""
    return SOLVERS[SolverName(name)](problem, config, truth, callback=callback)
