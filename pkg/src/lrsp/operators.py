"""
Linear measurement operators ``A: R^{m x n} -> R^p`` and their adjoints.

Observation vectors are one-dimensional ``float64`` arrays of length
:attr:`MeasurementOperator.output_dim`.
"""

import os
from abc import ABCMeta, abstractmethod
from typing import Any, Dict, Optional

import numpy as np

from lrsp._compat import StrEnum
from lrsp.exc import ArgumentError, OperatorTooLargeError
from lrsp.matrix import SupportSet, as_matrix
from lrsp.typing import FloatArray, Shape

__all__ = (
    "OperatorKind",
    "MeasurementOperator",
    "MaskOperator",
    "GaussianOperator",
    "IdentityOperator",
    "ScaledOperator",
    "as_observations",
    "make_mask_operator",
    "make_gaussian_operator",
    "make_identity_operator",
    "gaussian_coefficient_limit",
)

DEFAULT_GAUSSIAN_MAX_COEFFICIENTS = 50_000_000
GAUSSIAN_LIMIT_ENV = "LRSP_GAUSSIAN_MAX_COEFFICIENTS"


class OperatorKind(StrEnum):
    """
    Kinds of measurement operators.
    """

    MASK = "mask"
    GAUSSIAN = "gaussian"
    IDENTITY = "identity"


def _check_shape(shape: Shape) -> Shape:
    rows, cols = (int(v) for v in shape)
    if rows < 1 or cols < 1:
        raise ArgumentError(f"bad input shape {shape!r}")
    return rows, cols


def as_observations(y: Any, length: int) -> FloatArray:
    """
    Convert ``y`` to a finite 1-D ``float64`` array of the given length.
    """
    arr = np.ascontiguousarray(y, dtype=np.float64)
    if arr.ndim != 1 or arr.size != length:
        raise ArgumentError(f"expect {length} observations, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError("observations contain NaN or Inf")
    return arr


class MeasurementOperator(metaclass=ABCMeta):
    """
    Linear map from ``m x n`` matrices to ``p`` observations.

    Subclasses implement the flat forward and adjoint maps.
    Operators are immutable after construction.
    """

    kind: OperatorKind

    def __init__(self, input_shape: Shape, output_dim: int) -> None:
        self._input_shape = _check_shape(input_shape)
        if output_dim < 1:
            raise ArgumentError(f"output dimension must be positive: {output_dim!r}")
        self._output_dim = int(output_dim)

    def __repr__(self) -> str:
        m, n = self._input_shape
        return f"<{type(self).__name__} {m}x{n} -> {self._output_dim}>"

    @property
    def input_shape(self) -> Shape:
        return self._input_shape

    @property
    def output_dim(self) -> int:
        return self._output_dim

    @property
    def input_size(self) -> int:
        return self._input_shape[0] * self._input_shape[1]

    @property
    @abstractmethod
    def flops(self) -> int:
        """Rough floating point operation count of one :meth:`apply`."""

    @abstractmethod
    def _forward(self, flat: FloatArray) -> FloatArray:
        raise NotImplementedError

    @abstractmethod
    def _backward(self, y: FloatArray) -> FloatArray:
        raise NotImplementedError

    def apply(self, x: Any) -> FloatArray:
        """
        Compute ``A x``.

        :raise ArgumentError: if ``x`` does not have :attr:`input_shape`.
        """
        x = as_matrix(x, name="x", finite=False)
        if x.shape != self._input_shape:
            raise ArgumentError(f"expect shape {self._input_shape}, got {x.shape}")
        return self._forward(x.reshape(-1))

    def adjoint(self, y: Any) -> FloatArray:
        """
        Compute ``A* y`` as an ``m x n`` matrix.

        :raise ArgumentError: if ``y`` does not have :attr:`output_dim` entries.
        """
        y = np.ascontiguousarray(y, dtype=np.float64)
        if y.ndim != 1 or y.size != self._output_dim:
            raise ArgumentError(f"expect {self._output_dim} observations, got shape {y.shape}")
        return self._backward(y).reshape(self._input_shape)

    def gradient(self, y: Any, x: Any) -> FloatArray:
        """
        Gradient of ``f(X) = |y - A X|_2^2``, that is ``-2 A*(y - A x)``.
        """
        return -2.0 * self.adjoint(np.asarray(y, dtype=np.float64) - self.apply(x))

    def columns(self, flat_indices: Any) -> FloatArray:
        """
        Images of the unit matrices at the given row-major flat indices.

        Return a ``p x len(flat_indices)`` matrix whose ``j``-th column is
        ``A e_j``.
        """
        indices = np.asarray(flat_indices, dtype=np.int64).reshape(-1)
        out = np.empty((self._output_dim, indices.size))
        unit = np.zeros(self.input_size)
        for j, idx in enumerate(indices):
            unit[idx] = 1.0
            out[:, j] = self._forward(unit)
            unit[idx] = 0.0
        return out

    def scaled(self, factor: float) -> "ScaledOperator":
        """The operator ``factor * A``."""
        return ScaledOperator(self, factor)

    def describe(self) -> Dict[str, Any]:
        """Mapping that identifies the operator in metadata files."""
        return {
            "kind": str(self.kind),
            "shape": list(self._input_shape),
            "output_dim": self._output_dim,
        }


class MaskOperator(MeasurementOperator):
    """
    Subsample entries at the observed index set ``omega``.

    Observations are the raw entries in row-major order of ``omega``.
    """

    kind = OperatorKind.MASK

    def __init__(self, omega: SupportSet) -> None:
        if len(omega) < 1:
            raise ArgumentError("mask needs at least one observed entry")
        super().__init__(omega.shape, len(omega))
        self._omega = omega

    @property
    def omega(self) -> SupportSet:
        return self._omega

    @property
    def flops(self) -> int:
        return self._output_dim

    def _forward(self, flat: FloatArray) -> FloatArray:
        return flat[self._omega.indices]

    def _backward(self, y: FloatArray) -> FloatArray:
        out = np.zeros(self.input_size)
        out[self._omega.indices] = y
        return out

    def columns(self, flat_indices: Any) -> FloatArray:
        indices = np.asarray(flat_indices, dtype=np.int64).reshape(-1)
        observed = self._omega.indices
        pos = np.minimum(np.searchsorted(observed, indices), observed.size - 1)
        hit = observed[pos] == indices

        out = np.zeros((self._output_dim, indices.size))
        out[pos[hit], np.flatnonzero(hit)] = 1.0
        return out


class IdentityOperator(MeasurementOperator):
    """
    Complete observation: row-major vectorization, ``p = m n``.
    """

    kind = OperatorKind.IDENTITY

    def __init__(self, shape: Shape) -> None:
        shape = _check_shape(shape)
        super().__init__(shape, shape[0] * shape[1])

    @property
    def flops(self) -> int:
        return self._output_dim

    def _forward(self, flat: FloatArray) -> FloatArray:
        return flat.copy()

    def _backward(self, y: FloatArray) -> FloatArray:
        return y.copy()

    def columns(self, flat_indices: Any) -> FloatArray:
        indices = np.asarray(flat_indices, dtype=np.int64).reshape(-1)
        out = np.zeros((self._output_dim, indices.size))
        out[indices, np.arange(indices.size)] = 1.0
        return out


class GaussianOperator(MeasurementOperator):
    """
    Dense operator with i.i.d. ``N(0, 1/p)`` coefficients,
    so that ``E |A X|^2 = |X|_F^2``.

    The coefficients are regenerated from ``(shape, p, seed)``.
    """

    kind = OperatorKind.GAUSSIAN

    def __init__(self, shape: Shape, coefficients: FloatArray, seed: Optional[int] = None):
        shape = _check_shape(shape)
        coefficients = np.ascontiguousarray(coefficients, dtype=np.float64)
        if coefficients.ndim != 2 or coefficients.shape[1] != shape[0] * shape[1]:
            raise ArgumentError(
                f"coefficients must be p x {shape[0] * shape[1]}, got {coefficients.shape}"
            )
        super().__init__(shape, coefficients.shape[0])
        coefficients.setflags(write=False)
        self._coefficients = coefficients
        self._seed = seed

    @property
    def coefficients(self) -> FloatArray:
        return self._coefficients

    @property
    def seed(self) -> Optional[int]:
        return self._seed

    @property
    def flops(self) -> int:
        return 2 * self._coefficients.size

    def _forward(self, flat: FloatArray) -> FloatArray:
        return self._coefficients @ flat

    def _backward(self, y: FloatArray) -> FloatArray:
        return self._coefficients.T @ y

    def columns(self, flat_indices: Any) -> FloatArray:
        indices = np.asarray(flat_indices, dtype=np.int64).reshape(-1)
        return self._coefficients[:, indices]

    def describe(self) -> Dict[str, Any]:
        result = super().describe()
        result["seed"] = self._seed
        return result


class ScaledOperator(MeasurementOperator):
    """
    ``factor * A`` for a base operator ``A``.
    """

    def __init__(self, base: MeasurementOperator, factor: float) -> None:
        super().__init__(base.input_shape, base.output_dim)
        self._base = base
        self._factor = float(factor)
        self.kind = base.kind

    @property
    def base(self) -> MeasurementOperator:
        return self._base

    @property
    def factor(self) -> float:
        return self._factor

    @property
    def flops(self) -> int:
        return self._base.flops + self._output_dim

    def _forward(self, flat: FloatArray) -> FloatArray:
        return self._factor * self._base._forward(flat)

    def _backward(self, y: FloatArray) -> FloatArray:
        return self._factor * self._base._backward(y)

    def columns(self, flat_indices: Any) -> FloatArray:
        return self._factor * self._base.columns(flat_indices)

    def describe(self) -> Dict[str, Any]:
        result = self._base.describe()
        result["factor"] = self._factor
        return result


def make_mask_operator(shape: Shape, fraction: float, seed: Optional[int]) -> MaskOperator:
    """
    Observe ``round(fraction m n)`` entries drawn uniformly without replacement.
    """
    rows, cols = _check_shape(shape)
    if not 0 < fraction <= 1:
        raise ArgumentError(f"fraction must be in (0, 1]: {fraction!r}")

    size = rows * cols
    count = int(round(fraction * size))
    if count < 1:
        raise ArgumentError(f"fraction {fraction!r} observes no entries of {rows}x{cols}")

    rng = np.random.default_rng(seed)
    omega = np.sort(rng.choice(size, size=count, replace=False))
    return MaskOperator(SupportSet(omega, (rows, cols)))


def gaussian_coefficient_limit() -> int:
    """
    Memory cap on Gaussian operator coefficients.

    Read from the ``LRSP_GAUSSIAN_MAX_COEFFICIENTS`` environment variable
    if it is set.
    """
    value = os.environ.get(GAUSSIAN_LIMIT_ENV)
    if value is None:
        return DEFAULT_GAUSSIAN_MAX_COEFFICIENTS

    try:
        return int(value)
    except ValueError:
        raise ArgumentError(f"{GAUSSIAN_LIMIT_ENV} is not an integer: {value!r}") from None


def make_gaussian_operator(
    shape: Shape,
    p: int,
    seed: Optional[int],
    *,
    max_coefficients: Optional[int] = None,
) -> GaussianOperator:
    """
    Gaussian operator with ``p`` measurements, deterministic given ``seed``.

    :raise OperatorTooLargeError: if ``p m n`` exceeds ``max_coefficients``
        (default: :func:`gaussian_coefficient_limit`).
    """
    rows, cols = _check_shape(shape)
    if p < 1:
        raise ArgumentError(f"p must be positive: {p!r}")

    if max_coefficients is None:
        max_coefficients = gaussian_coefficient_limit()

    total = p * rows * cols
    if total > max_coefficients:
        raise OperatorTooLargeError(total, max_coefficients)

    rng = np.random.default_rng(seed)
    coefficients = rng.standard_normal((p, rows * cols)) / np.sqrt(p)
    return GaussianOperator((rows, cols), coefficients, seed)


def make_identity_operator(shape: Shape) -> IdentityOperator:
    return IdentityOperator(shape)
