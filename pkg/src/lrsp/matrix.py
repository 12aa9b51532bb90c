"""
Dense matrix kernels.

Dense matrices are plain two-dimensional ``float64`` :class:`numpy.ndarray` objects
(row-major, C-contiguous). This module adds the set types used by the solvers:

* :class:`SubspaceBasis` is an orthonormal column-space basis ``B`` (``rows x r``).
  Projection onto the subspace it represents is ``B @ B.T @ X``.
* :class:`SupportSet` is a sorted set of ``(row, col)`` indices,
  stored as row-major flat indices.

and the projections onto rank-k and s-sparse matrices.
"""

import logging
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, List, Optional, Tuple

import numpy as np
import scipy.linalg

from lrsp.exc import ArgumentError, ConvergenceError
from lrsp.typing import FloatArray, IndexArray, SeedLike, Shape

__all__ = (
    "DenseMatrix",
    "SubspaceBasis",
    "SupportSet",
    "SvdFactors",
    "as_matrix",
    "svd",
    "project_rank_k",
    "project_sparse_s",
    "basis_union",
    "project_onto_basis",
    "restrict_to_support",
    "randomized_rank_k",
)

DenseMatrix = FloatArray

ORTHONORMAL_TOL = 1e-10
"""Tolerance on ``|B.T @ B - I|`` for subspace bases."""

DEPENDENCE_TOL = 1e-10
"""Residual norm below which a vector is considered inside a span."""

_logger = logging.getLogger(__name__)


def as_matrix(value: Any, *, name: str = "matrix", finite: bool = True) -> FloatArray:
    """
    Convert ``value`` to a C-contiguous ``float64`` matrix and validate it.

    :raise ArgumentError: not two-dimensional, empty, or non-finite when ``finite``.
    """
    arr = np.ascontiguousarray(value, dtype=np.float64)

    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ArgumentError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")

    if finite and not np.all(np.isfinite(arr)):
        raise ArgumentError(f"{name} contains NaN or Inf")

    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """
    Orthonormal basis of a column space.

    Each column is a basis vector of length :attr:`ambient_rows`.
    A rank-0 basis represents the zero subspace.
    """

    vectors: FloatArray

    def __post_init__(self) -> None:
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ArgumentError(f"basis vectors must be 2-D, got shape {vectors.shape}")

        rows, rank = vectors.shape
        if rank > rows:
            raise ArgumentError(f"rank {rank} exceeds ambient dimension {rows}")

        gram = vectors.T @ vectors
        if rank and not np.allclose(gram, np.eye(rank), rtol=0, atol=ORTHONORMAL_TOL):
            deviation = float(np.max(np.abs(gram - np.eye(rank))))
            raise ArgumentError(f"basis is not orthonormal: max deviation {deviation:.3g}")

        object.__setattr__(self, "vectors", _frozen(vectors))

    @classmethod
    def empty(cls, rows: int) -> "SubspaceBasis":
        """Basis of the zero subspace."""
        return cls(np.zeros((rows, 0)))

    @property
    def ambient_rows(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def rank(self) -> int:
        return int(self.vectors.shape[1])

    def projector(self) -> FloatArray:
        """The ``rows x rows`` orthogonal projector ``B @ B.T``."""
        return self.vectors @ self.vectors.T

    def __repr__(self) -> str:
        return f"<{type(self).__name__} rows={self.ambient_rows} rank={self.rank}>"


@dataclass(frozen=True, eq=False)
class SupportSet:
    """
    Sorted set of matrix indices within an ambient ``shape``.

    Indices are kept as row-major flat indices, so sorting them is the same as
    sorting ``(row, col)`` pairs lexicographically.
    """

    indices: IndexArray
    shape: Shape

    def __post_init__(self) -> None:
        rows, cols = self.shape
        if rows < 1 or cols < 1:
            raise ArgumentError(f"bad ambient shape {self.shape}")

        indices = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        if indices.size:
            if indices[0] < 0 or indices[-1] >= rows * cols:
                raise ArgumentError(f"support indices out of range for shape {self.shape}")
            if np.any(np.diff(indices) <= 0):
                raise ArgumentError("support indices must be sorted and unique")

        object.__setattr__(self, "shape", (int(rows), int(cols)))
        object.__setattr__(self, "indices", _frozen(indices))

    @classmethod
    def empty(cls, shape: Shape) -> "SupportSet":
        return cls(np.zeros(0, dtype=np.int64), shape)

    @classmethod
    def full(cls, shape: Shape) -> "SupportSet":
        return cls(np.arange(shape[0] * shape[1], dtype=np.int64), shape)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[int, int]], shape: Shape) -> "SupportSet":
        """Build from ``(row, col)`` pairs in any order; duplicates are merged."""
        pairs = list(pairs)
        if not pairs:
            return cls.empty(shape)

        rows_idx, cols_idx = np.asarray(pairs, dtype=np.int64).T
        if np.any(rows_idx < 0) or np.any(rows_idx >= shape[0]):
            raise ArgumentError(f"row index out of range for shape {shape}")
        if np.any(cols_idx < 0) or np.any(cols_idx >= shape[1]):
            raise ArgumentError(f"column index out of range for shape {shape}")

        flat = np.ravel_multi_index((rows_idx, cols_idx), shape)
        return cls(np.unique(flat), shape)

    @property
    def entries(self) -> List[Tuple[int, int]]:
        """``(row, col)`` pairs in lexicographic order."""
        rows_idx, cols_idx = np.unravel_index(self.indices, self.shape)
        return list(zip(rows_idx.tolist(), cols_idx.tolist()))

    def union(self, other: "SupportSet") -> "SupportSet":
        if self.shape != other.shape:
            raise ArgumentError(f"shape mismatch: {self.shape} and {other.shape}")
        return SupportSet(np.union1d(self.indices, other.indices), self.shape)

    def __len__(self) -> int:
        return int(self.indices.size)

    def __iter__(self) -> Iterator[Tuple[int, int]]:
        return iter(self.entries)

    def __contains__(self, pair: object) -> bool:
        if not isinstance(pair, tuple) or len(pair) != 2:
            return False
        row, col = pair
        if not (0 <= row < self.shape[0] and 0 <= col < self.shape[1]):
            return False
        flat = row * self.shape[1] + col
        pos = int(np.searchsorted(self.indices, flat))
        return pos < self.indices.size and int(self.indices[pos]) == flat

    def __eq__(self, other: object) -> bool:
        if isinstance(other, SupportSet):
            return self.shape == other.shape and np.array_equal(self.indices, other.indices)
        return NotImplemented

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"<{type(self).__name__} shape={self.shape} size={len(self)}>"


@dataclass(frozen=True, eq=False)
class SvdFactors:
    """
    Thin singular value decomposition ``left @ diag(values) @ right.T``.
    """

    left: FloatArray
    values: FloatArray
    right: FloatArray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.size and (np.any(values < 0) or np.any(np.diff(values) > 0)):
            raise ArgumentError("singular values must be nonnegative and nonincreasing")

        for name in ("left", "right"):
            block = np.asarray(getattr(self, name), dtype=np.float64)
            r = block.shape[1]
            if r != values.size:
                raise ArgumentError(f"{name} vectors do not match {values.size} values")
            if r and not np.allclose(block.T @ block, np.eye(r), rtol=0, atol=1e-8):
                raise ArgumentError(f"{name} vectors are not orthonormal")

    @property
    def rank(self) -> int:
        return int(self.values.size)

    def reconstruct(self) -> FloatArray:
        return (self.left * self.values) @ self.right.T


def svd(m: Any, tol: float = 1e-10) -> SvdFactors:
    """
    Thin SVD of ``m``.

    LAPACK divide-and-conquer (``gesdd``) with a fallback to ``gesvd``.

    :param m: finite matrix
    :param tol: maximum relative reconstruction error ``|U S V^T - m|_F / |m|_F``
    :raise ConvergenceError: if LAPACK fails or the reconstruction misses ``tol``
    """
    m = as_matrix(m)

    try:
        u, s, vt = scipy.linalg.svd(
            m, full_matrices=False, lapack_driver="gesdd", check_finite=False
        )
    except np.linalg.LinAlgError:
        _logger.warning("gesdd did not converge on %s matrix, retry with gesvd", m.shape)
        try:
            u, s, vt = scipy.linalg.svd(
                m, full_matrices=False, lapack_driver="gesvd", check_finite=False
            )
        except np.linalg.LinAlgError as ex:
            raise ConvergenceError(f"SVD of {m.shape} matrix did not converge") from ex

    factors = SvdFactors(u, s, vt.T)

    norm = float(np.linalg.norm(m))
    residual = float(np.linalg.norm(factors.reconstruct() - m))
    if residual > tol * norm:
        relative = residual / norm if norm > 0 else residual
        raise ConvergenceError(
            f"SVD reconstruction error {relative:.3g} exceeds {tol:.3g}",
            residual=relative,
        )

    return factors


def _truncate(factors: SvdFactors, k: int, shape: Shape) -> Tuple[FloatArray, SubspaceBasis]:
    """
    Keep the top ``k`` triplets, dropping numerically zero singular values.
    """
    values = factors.values[:k]
    if values.size and values[0] > 0:
        cutoff = max(shape) * np.finfo(np.float64).eps * values[0]
        kept = int(np.count_nonzero(values > cutoff))
    else:
        kept = 0

    left = factors.left[:, :kept]
    approx = (left * values[:kept]) @ factors.right[:, :kept].T
    return np.ascontiguousarray(approx), SubspaceBasis(left)


def _check_rank(k: int, shape: Shape) -> None:
    if not 1 <= k <= min(shape):
        raise ArgumentError(f"rank {k} out of range [1, {min(shape)}] for shape {shape}")


def project_rank_k(m: Any, k: int) -> Tuple[FloatArray, SubspaceBasis]:
    """
    Best rank-``k`` approximation (Eckart-Young) and its column-space basis.

    The basis holds the leading left singular vectors. Vectors belonging to zero
    singular values are not padded in, so the returned rank may be below ``k``.
    """
    m = as_matrix(m)
    _check_rank(k, m.shape)
    return _truncate(svd(m), k, m.shape)


def project_sparse_s(m: Any, s: int) -> Tuple[FloatArray, SupportSet]:
    """
    Best ``s``-sparse approximation: keep the ``s`` entries of largest magnitude.

    Ties are broken by lexicographic ``(row, col)`` order. The support always has
    exactly ``s`` entries; when ``m`` has fewer nonzeros it is padded with the
    lexicographically first zero positions.
    """
    m = as_matrix(m)
    if not 1 <= s <= m.size:
        raise ArgumentError(f"sparsity {s} out of range [1, {m.size}]")

    flat = m.reshape(-1)
    # stable sort keeps index order among equal magnitudes
    chosen = np.sort(np.argsort(-np.abs(flat), kind="stable")[:s])

    out = np.zeros_like(m)
    out.reshape(-1)[chosen] = flat[chosen]
    return out, SupportSet(chosen, m.shape)


def basis_union(a: SubspaceBasis, b: SubspaceBasis) -> SubspaceBasis:
    """
    Orthonormal basis spanning ``span(a) + span(b)``.

    The columns of ``a`` are kept as they are. Directions of ``b`` whose residual
    after projecting out ``span(a)`` is below :data:`DEPENDENCE_TOL` are dropped.
    """
    if a.ambient_rows != b.ambient_rows:
        raise ArgumentError(f"ambient rows differ: {a.ambient_rows} and {b.ambient_rows}")

    if b.rank == 0:
        return a

    base = a.vectors
    residual = b.vectors - base @ (base.T @ b.vectors)
    residual -= base @ (base.T @ residual)

    u, sv, _ = scipy.linalg.svd(residual, full_matrices=False, check_finite=False)
    extra = u[:, sv > DEPENDENCE_TOL]
    if extra.shape[1] == 0:
        return a

    # small residuals amplify rounding errors, orthogonalize once more
    extra = extra - base @ (base.T @ extra)
    extra, _ = scipy.linalg.qr(extra, mode="economic", check_finite=False)

    return SubspaceBasis(np.hstack([base, extra]))


def project_onto_basis(m: Any, b: SubspaceBasis) -> FloatArray:
    """
    Orthogonal projection ``B @ B.T @ m`` onto the column space of ``b``.

    The complementary projection is ``m - project_onto_basis(m, b)``.
    """
    m = as_matrix(m, finite=False)
    if b.ambient_rows != m.shape[0]:
        raise ArgumentError(f"basis has {b.ambient_rows} rows, matrix has {m.shape[0]}")

    if b.rank == 0:
        return np.zeros_like(m)

    return b.vectors @ (b.vectors.T @ m)


def restrict_to_support(m: Any, s: SupportSet) -> FloatArray:
    """Zero the entries of ``m`` outside ``s``."""
    m = as_matrix(m, finite=False)
    if s.shape != m.shape:
        raise ArgumentError(f"support shape {s.shape} does not match matrix {m.shape}")

    out = np.zeros_like(m)
    out.reshape(-1)[s.indices] = m.reshape(-1)[s.indices]
    return out


def randomized_rank_k(
    m: Any,
    k: int,
    oversample: int = 5,
    power_iters: int = 2,
    seed: SeedLike = 0,
) -> Tuple[FloatArray, SubspaceBasis]:
    """
    Rank-``k`` approximation from a randomized range finder.

    A Gaussian sketch with ``k + oversample`` columns is orthonormalized,
    refined with ``power_iters`` power iterations (re-orthonormalized each pass),
    and the small projected matrix is decomposed exactly.
    The result is deterministic for a fixed ``seed``.
    """
    m = as_matrix(m)
    _check_rank(k, m.shape)
    if oversample < 0 or power_iters < 0:
        raise ArgumentError("oversample and power_iters must be nonnegative")
    if k + oversample > min(m.shape):
        raise ArgumentError(f"k + oversample = {k + oversample} exceeds {min(m.shape)}")

    rng = np.random.default_rng(seed)
    sketch = rng.standard_normal((m.shape[1], k + oversample))

    q, _ = scipy.linalg.qr(m @ sketch, mode="economic", check_finite=False)
    for _ in range(power_iters):
        z, _ = scipy.linalg.qr(m.T @ q, mode="economic", check_finite=False)
        q, _ = scipy.linalg.qr(m @ z, mode="economic", check_finite=False)

    small = svd(q.T @ m)
    factors = SvdFactors(q @ small.left, small.values, small.right)
    return _truncate(factors, k, m.shape)
