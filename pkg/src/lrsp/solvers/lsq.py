"""
Step sizes and restricted least squares.

A *restriction* is either a :class:`~lrsp.matrix.SubspaceBasis` (matrices
``V = B W`` in its column span) or a :class:`~lrsp.matrix.SupportSet`
(matrices zero outside the support).
"""

import logging
from typing import Any, Callable, NamedTuple, Optional, Tuple, Union

import numpy as np
import scipy.linalg

from lrsp._compat import StrEnum
from lrsp.exc import ArgumentError, SolverError
from lrsp.matrix import SubspaceBasis, SupportSet, project_onto_basis, restrict_to_support
from lrsp.operators import IdentityOperator, MaskOperator, MeasurementOperator
from lrsp.typing import FloatArray, IndexArray

__all__ = (
    "DIRECT_LIMIT",
    "Restriction",
    "LeastSquaresMethod",
    "LeastSquaresResult",
    "project_restriction",
    "restriction_size",
    "step_size",
    "restricted_least_squares",
    "solve_restricted",
)

Restriction = Union[SubspaceBasis, SupportSet]

DIRECT_LIMIT = 4_000_000
"""Largest dense restricted system (``p`` times unknowns) solved directly."""

_logger = logging.getLogger(__name__)


class LeastSquaresMethod(StrEnum):
    """
    How restricted least squares are solved.

    ``auto`` solves exactly when the restricted system is small or entrywise
    and falls back to conjugate gradient otherwise. ``cg`` always iterates.
    """

    AUTO = "auto"
    CG = "cg"


def project_restriction(m: Any, restriction: Restriction) -> FloatArray:
    """Orthogonal projection of ``m`` onto the restriction."""
    if isinstance(restriction, SubspaceBasis):
        return project_onto_basis(m, restriction)
    elif isinstance(restriction, SupportSet):
        return restrict_to_support(m, restriction)
    else:
        raise TypeError(f"expect SubspaceBasis or SupportSet, got {type(restriction)!r}")


def restriction_size(restriction: Restriction) -> int:
    """Rank of a basis or size of a support."""
    if isinstance(restriction, SubspaceBasis):
        return restriction.rank
    return len(restriction)


def step_size(op: MeasurementOperator, grad: Any, restriction: Restriction) -> float:
    """
    Exact line search step ``|g|_F^2 / |A g|_2^2`` for ``g = P(grad)``.

    The step ``X - (mu / 2) g`` minimizes ``|y - A X|^2`` along ``g`` when ``grad``
    is the gradient at ``X``. Return 0 if ``g`` or ``A g`` vanishes.
    """
    g = project_restriction(grad, restriction)

    numerator = float(np.vdot(g, g))
    if numerator == 0.0:
        return 0.0

    ag = op.apply(g)
    denominator = float(np.vdot(ag, ag))
    if denominator == 0.0:
        _logger.debug("restricted gradient is in the null space of %r", op)
        return 0.0

    return numerator / denominator


class LeastSquaresResult(NamedTuple):
    solution: FloatArray
    converged: bool
    iterations: int
    """CG iterations, 0 for a direct solve."""
    residual: float
    """Relative residual of the normal equations."""


def _observed(op: MeasurementOperator) -> Optional[FloatArray]:
    """0/1 matrix of observed entries if ``op`` only subsamples entries."""
    if isinstance(op, IdentityOperator):
        return np.ones(op.input_shape)
    if isinstance(op, MaskOperator):
        out = np.zeros(op.input_size)
        out[op.omega.indices] = 1.0
        return out.reshape(op.input_shape)
    return None


def _direct_basis(
    op: MeasurementOperator,
    target: FloatArray,
    basis: FloatArray,
) -> Optional[FloatArray]:
    """Minimum-norm ``W`` of ``|target - A(B W)|`` or ``None`` if too large."""
    rows, cols = op.input_shape
    rank = basis.shape[1]

    observed = _observed(op)
    if observed is not None:
        # entrywise sampling decouples the columns of W
        samples = op.adjoint(target)
        gram = np.einsum("ia,ij,ib->jab", basis, observed, basis, optimize=True)
        rhs = basis.T @ samples
        return np.einsum("jab,bj->aj", np.linalg.pinv(gram, hermitian=True), rhs)

    p = op.output_dim
    if p * op.input_size > DIRECT_LIMIT or p * rank * cols > DIRECT_LIMIT:
        return None

    full = op.columns(np.arange(op.input_size)).reshape(p, rows, cols)
    system = np.einsum("pij,ia->paj", full, basis, optimize=True).reshape(p, rank * cols)
    w, *_ = scipy.linalg.lstsq(system, target, check_finite=False)
    return w.reshape(rank, cols)


def _direct_support(
    op: MeasurementOperator,
    target: FloatArray,
    indices: IndexArray,
) -> Optional[FloatArray]:
    """Minimum-norm entries on the support or ``None`` if too large."""
    if _observed(op) is not None:
        # A^T A is a 0/1 diagonal; unobserved entries stay zero
        return op.adjoint(target).reshape(-1)[indices]

    if op.output_dim * indices.size > DIRECT_LIMIT:
        return None

    w, *_ = scipy.linalg.lstsq(op.columns(indices), target, check_finite=False)
    return w


def _conjugate_gradient(
    normal: Callable[[FloatArray], FloatArray],
    rhs: FloatArray,
    x0: FloatArray,
    tolerance: float,
    max_iterations: int,
) -> Tuple[FloatArray, bool, int]:
    """
    CG on a positive semidefinite system from ``x0``.

    Return the iterate with the smallest residual, whether it met
    ``|r| <= tolerance |rhs|`` and the iteration count.
    """
    threshold = tolerance * float(np.linalg.norm(rhs))

    x = x0.copy()
    r = rhs - normal(x)
    p = r.copy()
    norm_sq = float(np.vdot(r, r))

    best, best_norm = x.copy(), np.sqrt(norm_sq)
    if best_norm <= threshold:
        return best, True, 0

    for count in range(1, max_iterations + 1):
        q = normal(p)
        curvature = float(np.vdot(p, q))
        if not np.isfinite(curvature) or curvature <= 0.0:
            raise SolverError(f"conjugate gradient breakdown, curvature {curvature!r}")

        alpha = norm_sq / curvature
        x += alpha * p
        r -= alpha * q
        next_sq = float(np.vdot(r, r))
        if not np.isfinite(next_sq):
            raise SolverError("conjugate gradient produced non-finite residual")

        if np.sqrt(next_sq) < best_norm:
            best, best_norm = x.copy(), np.sqrt(next_sq)
        if best_norm <= threshold:
            return best, True, count

        p = r + (next_sq / norm_sq) * p
        norm_sq = next_sq

    return best, False, max_iterations


def solve_restricted(
    op: MeasurementOperator,
    y: Any,
    restriction: Restriction,
    fixed_part: Optional[Any] = None,
    *,
    initial: Optional[Any] = None,
    method: LeastSquaresMethod = LeastSquaresMethod.AUTO,
    tolerance: float = 1e-8,
    max_iterations: int = 200,
) -> LeastSquaresResult:
    """
    Minimize ``|y - A(V + fixed_part)|_2^2`` over ``V`` in the restriction.

    Work happens in restriction coordinates: ``W`` with ``V = B W`` for a
    subspace, the entries on the support for a support. With
    :attr:`LeastSquaresMethod.AUTO` the system is solved exactly for
    entrywise operators and for dense systems up to :data:`DIRECT_LIMIT`.
    Otherwise conjugate gradient runs on the normal equations from the
    coordinates of ``initial`` (zero if omitted) and stops when the residual
    is below ``tolerance * |rhs|``.

    If CG hits ``max_iterations`` the iterate with the smallest residual is
    returned with ``converged=False``.

    :raise SolverError: on CG breakdown.
    """
    rows, cols = op.input_shape
    size = restriction_size(restriction)
    if size == 0:
        raise ArgumentError("restriction is empty")
    method = LeastSquaresMethod(method)

    y = np.asarray(y, dtype=np.float64)
    if fixed_part is None:
        target = y
    else:
        target = y - op.apply(fixed_part)

    direct: Optional[FloatArray]
    if isinstance(restriction, SubspaceBasis):
        basis = restriction.vectors
        if basis.shape[0] != rows:
            raise ArgumentError(f"basis has {basis.shape[0]} rows, operator expects {rows}")

        def lift(w: FloatArray) -> FloatArray:
            return basis @ w.reshape(size, cols)

        def lower(m: FloatArray) -> FloatArray:
            return (basis.T @ m).reshape(-1)

        if method is LeastSquaresMethod.AUTO:
            direct = _direct_basis(op, target, basis)
        else:
            direct = None
    else:
        if restriction.shape != (rows, cols):
            raise ArgumentError(f"support shape {restriction.shape} does not match {(rows, cols)}")
        indices = restriction.indices

        def lift(w: FloatArray) -> FloatArray:
            m = np.zeros(rows * cols)
            m[indices] = w
            return m.reshape(rows, cols)

        def lower(m: FloatArray) -> FloatArray:
            return m.reshape(-1)[indices]

        if method is LeastSquaresMethod.AUTO:
            direct = _direct_support(op, target, indices)
        else:
            direct = None

    def normal(w: FloatArray) -> FloatArray:
        return lower(op.adjoint(op.apply(lift(w))))

    rhs = lower(op.adjoint(target))
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return LeastSquaresResult(np.zeros((rows, cols)), True, 0, 0.0)

    if direct is not None:
        w = np.ravel(direct)
        residual = float(np.linalg.norm(rhs - normal(w))) / rhs_norm
        return LeastSquaresResult(lift(w), True, 0, residual)

    if initial is None:
        x0 = np.zeros(rhs.size)
    else:
        x0 = lower(np.asarray(initial, dtype=np.float64))

    w, converged, count = _conjugate_gradient(normal, rhs, x0, tolerance, max_iterations)
    residual = float(np.linalg.norm(rhs - normal(w))) / rhs_norm
    if not converged:
        _logger.debug(
            "CG stopped after %d iterations at relative residual %.3g (tolerance %.3g)",
            count,
            residual,
            tolerance,
        )

    return LeastSquaresResult(lift(w), converged, count, residual)


def restricted_least_squares(
    op: MeasurementOperator,
    y: Any,
    restriction: Restriction,
    fixed_part: Optional[Any] = None,
    *,
    initial: Optional[Any] = None,
    method: LeastSquaresMethod = LeastSquaresMethod.AUTO,
    tolerance: float = 1e-8,
    max_iterations: int = 200,
) -> FloatArray:
    """
    Like :func:`solve_restricted` but return only the minimizer.
    """
    result = solve_restricted(
        op,
        y,
        restriction,
        fixed_part,
        initial=initial,
        method=method,
        tolerance=tolerance,
        max_iterations=max_iterations,
    )
    return result.solution
