"""
Convergence analysis tools.

* Monte-Carlo estimators of restricted isometry constants. They are LOWER
  bounds of the true constants, never certificates.
* Contraction matrices of the momentum recursion and their spectral radius.
* Error envelopes of the coupled recursions and their noise floors.

Estimators draw the random test matrices of trial ``t`` from
``numpy.random.default_rng((seed, t))`` and every smaller model order reuses
a prefix of the same draws. Estimates for a fixed operator, seed and trial count
are therefore nondecreasing in the model order.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.linalg

from lrsp.exc import ArgumentError, NoFixedPointError
from lrsp.operators import MeasurementOperator
from lrsp.typing import FloatArray, Shape

__all__ = (
    "RipProfile",
    "ContractionMatrices",
    "SparcsRecursion",
    "RecursionEnvelope",
    "estimate_rank_rip",
    "estimate_sparse_rip",
    "estimate_cross_rip",
    "estimate_joint_rip",
    "estimate_rip_profile",
    "momentum_contraction",
    "spectral_radius",
    "simulate_recursion",
    "simulate_sparcs_recursion",
    "noise_floor",
    "random_low_rank",
    "contraction_report",
)

_logger = logging.getLogger(__name__)


def _check_trials(trials: int, seed: int) -> None:
    if trials < 1:
        raise ArgumentError(f"trials must be positive: {trials!r}")
    if seed < 0:
        raise ArgumentError(f"seed must be nonnegative: {seed!r}")


def _clamp(value: float) -> float:
    return float(min(max(value, 0.0), 1.0))


def _trial_rng(seed: int, trial: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng((seed, trial) + stream)


def _rank_one_terms(rng: np.random.Generator, shape: Shape, k: int) -> List[FloatArray]:
    # draw column by column so the first j terms do not depend on k
    rows, cols = shape
    terms = []
    for _ in range(k):
        u = rng.standard_normal(rows)
        v = rng.standard_normal(cols)
        terms.append(np.outer(u, v))
    return terms


def random_low_rank(rng: np.random.Generator, shape: Shape, k: int) -> FloatArray:
    """
    Random rank-``k`` matrix with unit Frobenius norm.

    Singular vectors are Haar distributed (QR of Gaussian matrices with the
    sign of ``R``'s diagonal fixed) and singular values uniform in ``[0.5, 1.5]``.
    """
    rows, cols = shape

    def haar(n: int) -> FloatArray:
        q, r = scipy.linalg.qr(rng.standard_normal((n, k)), mode="economic")
        return q * np.sign(np.diag(r))

    left = haar(rows)
    right = haar(cols)
    values = rng.uniform(0.5, 1.5, size=k)
    low_rank = (left * values) @ right.T
    return low_rank / np.linalg.norm(low_rank)


def estimate_rank_rip(op: MeasurementOperator, k: int, trials: int, seed: int = 0) -> float:
    """
    Monte-Carlo lower bound on the rank-``k`` RIP constant.

    The largest ``| |A X|_2^2 / |X|_F^2 - 1 |`` over random matrices ``X`` of rank
    at most ``k``, clamped to ``[0, 1]``. A value of 1 flags a violation.
    """
    shape = op.input_shape
    if not 1 <= k <= min(shape):
        raise ArgumentError(f"rank {k} out of range [1, {min(shape)}]")
    _check_trials(trials, seed)

    worst = 0.0
    for trial in range(trials):
        rng = _trial_rng(seed, trial)
        x = np.zeros(shape)
        ax = np.zeros(op.output_dim)
        for term in _rank_one_terms(rng, shape, k):
            x += term
            ax += op.apply(term)
            ratio = float(np.vdot(ax, ax)) / float(np.vdot(x, x))
            worst = max(worst, abs(ratio - 1.0))

    return _clamp(worst)


def _sparse_images(
    op: MeasurementOperator, rng: np.random.Generator, s: int
) -> Tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
    """
    Images of the prefixes of a random sparse matrix.

    Return ``(indices, values, images, norms2)`` where column ``j`` of ``images``
    is ``A`` applied to the matrix with the first ``j + 1`` entries.
    """
    size = op.input_size
    indices = rng.permutation(size)[:s]
    values = rng.standard_normal(size)[:s]

    images = np.cumsum(op.columns(indices) * values, axis=1)
    norms2 = np.cumsum(values**2)
    return indices, values, images, norms2


def estimate_sparse_rip(op: MeasurementOperator, s: int, trials: int, seed: int = 0) -> float:
    """
    Monte-Carlo lower bound on the ``s``-sparse RIP constant.

    Test matrices have uniformly random supports and Gaussian values.
    """
    size = op.input_size
    if not 1 <= s <= size:
        raise ArgumentError(f"sparsity {s} out of range [1, {size}]")
    _check_trials(trials, seed)

    worst = 0.0
    for trial in range(trials):
        _, _, images, norms2 = _sparse_images(op, _trial_rng(seed, trial), s)
        ratios = np.sum(images**2, axis=0) / norms2
        worst = max(worst, float(np.max(np.abs(ratios - 1.0))))

    return _clamp(worst)


def estimate_cross_rip(
    op: MeasurementOperator, s: int, k: int, trials: int, seed: int = 0
) -> float:
    """
    Monte-Carlo lower bound on the cross constant
    ``max |(A* A L)_F|_F / |L|_F`` over rank-``k`` ``L`` and supports ``|F| = s``.

    The absolute constant hidden in the bound is not inferred; the raw ratio is
    reported, clamped to ``[0, 1]``.
    """
    shape = op.input_shape
    size = op.input_size
    if k < 1:
        raise ArgumentError("cross estimate needs a nonzero low-rank part (k >= 1)")
    if k > min(shape):
        raise ArgumentError(f"rank {k} out of range [1, {min(shape)}]")
    if not 1 <= s <= size:
        raise ArgumentError(f"sparsity {s} out of range [1, {size}]")
    _check_trials(trials, seed)

    worst = 0.0
    for trial in range(trials):
        rng = _trial_rng(seed, trial)
        low_rank = random_low_rank(rng, shape, k)
        support = rng.permutation(size)[:s]

        leaked = op.adjoint(op.apply(low_rank)).reshape(-1)[support]
        ratio = float(np.linalg.norm(leaked)) / float(np.linalg.norm(low_rank))
        worst = max(worst, ratio)

    return _clamp(worst)


def estimate_joint_rip(
    op: MeasurementOperator, k: int, s: int, trials: int, seed: int = 0
) -> float:
    """
    Monte-Carlo lower bound on the joint RIP constant over ``L + M`` with
    ``rank(L) <= k`` and ``|M|_0 <= s``.

    Every combination of low-rank prefix ``j <= k`` and sparse prefix ``i <= s``
    is evaluated, so the estimate is nondecreasing in both orders.
    """
    shape = op.input_shape
    size = op.input_size
    if not 0 <= k <= min(shape) or not 0 <= s <= size or k + s == 0:
        raise ArgumentError(f"bad model orders k={k!r}, s={s!r} for shape {shape}")
    _check_trials(trials, seed)

    p = op.output_dim
    worst = 0.0
    for trial in range(trials):
        low_rank_images = np.zeros((p, k + 1))
        low_ranks = [np.zeros(shape)]
        for j, term in enumerate(_rank_one_terms(_trial_rng(seed, trial, 0), shape, k), 1):
            low_ranks.append(low_ranks[-1] + term)
            low_rank_images[:, j] = low_rank_images[:, j - 1] + op.apply(term)

        if s:
            indices, values, images, norms2 = _sparse_images(op, _trial_rng(seed, trial, 1), s)
        else:
            indices, values = np.zeros(0, dtype=np.int64), np.zeros(0)
            images, norms2 = np.zeros((p, 0)), np.zeros(0)
        sparse_images = np.hstack([np.zeros((p, 1)), images])
        sparse_norms2 = np.concatenate([[0.0], norms2])

        # <L_j, M_i> as cumulative sums over the sparse entries
        cross = np.zeros((k + 1, s + 1))
        for j, low_rank in enumerate(low_ranks):
            cross[j, 1:] = np.cumsum(low_rank.reshape(-1)[indices] * values)

        low_rank_norms2 = np.array([float(np.vdot(m, m)) for m in low_ranks])
        x_norms2 = low_rank_norms2[:, None] + sparse_norms2[None, :] + 2 * cross

        ax_norms2 = (
            np.sum(low_rank_images**2, axis=0)[:, None]
            + np.sum(sparse_images**2, axis=0)[None, :]
            + 2 * (low_rank_images.T @ sparse_images)
        )

        mask = x_norms2 > 0
        ratios = ax_norms2[mask] / x_norms2[mask]
        worst = max(worst, float(np.max(np.abs(ratios - 1.0))))

    return _clamp(worst)


@dataclass(frozen=True)
class RipProfile:
    """
    RIP constants consumed by :func:`momentum_contraction`.

    Every constant lies in ``[0, 1)``.
    """

    delta_3k: float
    delta_4k: float
    delta_3s: float
    delta_4s: float
    delta_joint_3k3s: float
    delta_joint_3k4s: float

    def __post_init__(self) -> None:
        for name, value in self.as_dict().items():
            if not 0 <= value < 1:
                raise ArgumentError(f"{name} must be in [0, 1): {value!r}")

    @classmethod
    def from_fourth_order(
        cls,
        delta_4k: float,
        delta_4s: float,
        joint_3k3s: float,
        joint_3k4s: float,
    ) -> "RipProfile":
        """
        Substitute ``delta_3k := delta_4k`` and ``delta_3s := delta_4s``.

        RIP constants grow with the order, so the resulting contraction matrix
        is entrywise no smaller than the one from the exact third-order constants.
        """
        return cls(
            delta_3k=delta_4k,
            delta_4k=delta_4k,
            delta_3s=delta_4s,
            delta_4s=delta_4s,
            delta_joint_3k3s=joint_3k3s,
            delta_joint_3k4s=joint_3k4s,
        )

    def as_dict(self) -> Dict[str, float]:
        return {
            "delta_3k": self.delta_3k,
            "delta_4k": self.delta_4k,
            "delta_3s": self.delta_3s,
            "delta_4s": self.delta_4s,
            "delta_joint_3k3s": self.delta_joint_3k3s,
            "delta_joint_3k4s": self.delta_joint_3k4s,
        }

    def is_monotone(self) -> bool:
        """Whether constants at larger orders are no smaller."""
        return (
            self.delta_3k <= self.delta_4k
            and self.delta_3s <= self.delta_4s
            and self.delta_joint_3k3s <= self.delta_joint_3k4s
        )


def estimate_rip_profile(
    op: MeasurementOperator, k: int, s: int, trials: int, seed: int = 0
) -> RipProfile:
    """
    Estimate all constants of a :class:`RipProfile` with common random numbers.

    :raise ArgumentError: if an order exceeds the ambient dimensions or an
        estimate reaches 1 (RIP violated).
    """
    estimates = {
        "delta_3k": estimate_rank_rip(op, 3 * k, trials, seed),
        "delta_4k": estimate_rank_rip(op, 4 * k, trials, seed),
        # no nonzero matrix is 0-sparse
        "delta_3s": estimate_sparse_rip(op, 3 * s, trials, seed) if s else 0.0,
        "delta_4s": estimate_sparse_rip(op, 4 * s, trials, seed) if s else 0.0,
        "delta_joint_3k3s": estimate_joint_rip(op, 3 * k, 3 * s, trials, seed),
        "delta_joint_3k4s": estimate_joint_rip(op, 3 * k, 4 * s, trials, seed),
    }
    _logger.info("RIP estimates (%d trials): %s", trials, estimates)

    for name, value in estimates.items():
        if value >= 1:
            raise ArgumentError(f"{name} estimate reached 1: RIP violated")

    return RipProfile(**estimates)


def spectral_radius(m: Union[Any, "ContractionMatrices"]) -> float:
    """
    Largest eigenvalue magnitude of a square matrix.

    :class:`ContractionMatrices` use the reduction to ``2 x 2`` eigenvalues.
    """
    if isinstance(m, ContractionMatrices):
        return m.spectral_radius()

    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise ArgumentError(f"expect a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ArgumentError("matrix contains NaN or Inf")

    return float(np.max(np.abs(scipy.linalg.eigvals(m))))


@dataclass(frozen=True, eq=False)
class ContractionMatrices:
    """
    Error coupling of the momentum recursion.

    ``delta`` is ``[[alpha, beta], [zeta, gamma]]`` and ``delta_hat`` its
    first-order lift ``[[(1 + tau) delta, tau delta], [I, 0]]``.
    """

    delta: FloatArray
    delta_hat: FloatArray
    tau: float

    def eigenvalues(self) -> FloatArray:
        """
        Eigenvalues of ``delta_hat``.

        Each eigenvalue ``d`` of ``delta`` gives two roots of
        ``x^2 - (1 + tau) d x - tau d = 0``.
        """
        tau = self.tau
        roots = []
        for d in np.linalg.eigvals(self.delta):
            roots.extend(np.roots([1.0, -(1 + tau) * d, -tau * d]))
        return np.asarray(roots, dtype=np.complex128)

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.eigenvalues())))

    def is_stable(self) -> bool:
        return self.spectral_radius() < 1

    def verdict(self) -> str:
        """``STABLE rho=<r>`` or ``UNSTABLE rho=<r>``."""
        radius = self.spectral_radius()
        label = "STABLE" if radius < 1 else "UNSTABLE"
        return f"{label} rho={radius:.6g}"

    @property
    def alpha(self) -> float:
        return float(self.delta[0, 0])

    @property
    def beta(self) -> float:
        return float(self.delta[0, 1])

    @property
    def zeta(self) -> float:
        return float(self.delta[1, 0])

    @property
    def gamma(self) -> float:
        return float(self.delta[1, 1])

    def steady_state(self, b: Any) -> FloatArray:
        """
        Equilibrium ``(I - delta_hat)^{-1} b`` of ``w(i + 1) = delta_hat w(i) + b``.

        :raise NoFixedPointError: if the spectral radius is not below 1.
        """
        radius = self.spectral_radius()
        if radius >= 1:
            raise NoFixedPointError(radius)
        b = np.asarray(b, dtype=np.float64).reshape(-1)
        if b.size != 4:
            raise ArgumentError(f"expect a 4-vector, got {b.size} entries")
        return np.asarray(scipy.linalg.solve(np.eye(4) - self.delta_hat, b))


def momentum_contraction(rip: RipProfile, tau: float) -> ContractionMatrices:
    """
    Contraction matrices of Matrix ALPS with constant momentum ``tau``.
    """
    if not 0 <= tau < 1:
        raise ArgumentError(f"tau must be in [0, 1): {tau!r}")

    d3k, d4k = rip.delta_3k, rip.delta_4k
    d3s, d4s = rip.delta_3s, rip.delta_4s

    alpha = 4 * d3k / (1 - d3k) + 2 * d4k / (1 - d3k) * (2 * d3k + 2 * d4k)
    beta = 2 * rip.delta_joint_3k3s / (1 - d3k)
    gamma = 2 * (d4s + d3s) / (1 - d3s)
    zeta = 2 * rip.delta_joint_3k4s / (1 - d3s)

    delta = np.array([[alpha, beta], [zeta, gamma]])
    delta_hat = np.block(
        [
            [(1 + tau) * delta, tau * delta],
            [np.eye(2), np.zeros((2, 2))],
        ]
    )
    for arr in (delta, delta_hat):
        arr.setflags(write=False)

    return ContractionMatrices(delta, delta_hat, float(tau))


@dataclass(frozen=True, eq=False)
class RecursionEnvelope:
    """
    States ``w(0), ..., w(iters)`` of a linear error recursion.

    ``states`` has one row per step.
    """

    states: FloatArray
    spectral_radius: float

    @property
    def converges(self) -> bool:
        return self.spectral_radius < 1

    @property
    def verdict(self) -> str:
        return "CONVERGES" if self.converges else "DIVERGES"

    @property
    def final(self) -> FloatArray:
        return self.states[-1]

    def max_norms(self) -> FloatArray:
        return np.max(np.abs(self.states), axis=1)

    def steps_to_decay(self, factor: float = 1e-6) -> Optional[int]:
        """
        First step whose max-norm is at most ``factor`` times the initial one,
        or ``None`` if no simulated step gets there.
        """
        norms = self.max_norms()
        hits = np.flatnonzero(norms <= factor * norms[0])
        return int(hits[0]) if hits.size else None

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.states >= 0))

    def is_monotone_after(self, burn_in: int = 0) -> bool:
        """Whether the max-norm never increases after ``burn_in`` steps."""
        norms = self.max_norms()[burn_in:]
        return bool(np.all(np.diff(norms) <= 0))


def simulate_recursion(
    delta_hat: Union[Any, ContractionMatrices],
    w0: Any,
    iters: int,
    offset: Optional[Any] = None,
) -> RecursionEnvelope:
    """
    Iterate ``w(i + 1) = delta_hat w(i) + offset`` from ``w0`` ``iters`` times.

    Without ``offset`` the states are ``delta_hat^i w0``.
    """
    if isinstance(delta_hat, ContractionMatrices):
        radius = delta_hat.spectral_radius()
        matrix = delta_hat.delta_hat
    else:
        matrix = np.asarray(delta_hat, dtype=np.float64)
        radius = spectral_radius(matrix)

    w = np.asarray(w0, dtype=np.float64).reshape(-1)
    if w.size != matrix.shape[0]:
        raise ArgumentError(f"w0 has {w.size} entries, matrix is {matrix.shape}")
    if np.any(w < 0):
        raise ArgumentError("w0 must be nonnegative")
    if iters < 0:
        raise ArgumentError(f"iters must be nonnegative: {iters!r}")

    if offset is None:
        shift = np.zeros_like(w)
    else:
        shift = np.asarray(offset, dtype=np.float64).reshape(w.shape)

    states = np.empty((iters + 1, w.size))
    states[0] = w
    for i in range(iters):
        w = matrix @ w + shift
        states[i + 1] = w

    return RecursionEnvelope(states, radius)


@dataclass(frozen=True)
class SparcsRecursion:
    """
    Constants of the coupled SpaRCS error recursion

    ``|L* - L_{i+1}| <= rho_1L |L* - L_i| + rho_1M |M* - M_i| + gamma_1 |eps|``
    ``|M* - M_{i+1}| <= rho_2L |L* - L_i| + rho_2M |M* - M_i| + gamma_2 |eps|``
    """

    rho_1L: float
    rho_2L: float
    rho_1M: float
    rho_2M: float
    gamma_1: float
    gamma_2: float

    @classmethod
    def tight(cls) -> "SparcsRecursion":
        """Constants under ``delta_4s <= 0.075``, ``delta_4k <= 0.04``, ``delta_{2s+3k} <= 0.07``."""
        return cls(
            rho_1L=0.1605,
            rho_2L=0.3431,
            rho_1M=0.3376,
            rho_2M=0.1414,
            gamma_1=4.36,
            gamma_2=4.45,
        )

    @classmethod
    def prior_bound(cls) -> "SparcsRecursion":
        """The earlier, looser constants for the same RIP assumptions."""
        return cls(
            rho_1L=0.479,
            rho_2L=0.474,
            rho_1M=0.47,
            rho_2M=0.324,
            gamma_1=6.68,
            gamma_2=6.88,
        )

    @property
    def matrix(self) -> FloatArray:
        return np.array([[self.rho_1L, self.rho_1M], [self.rho_2L, self.rho_2M]])

    @property
    def noise_gain(self) -> FloatArray:
        return np.array([self.gamma_1, self.gamma_2])

    def spectral_radius(self) -> float:
        return spectral_radius(self.matrix)


def noise_floor(constants: SparcsRecursion, noise_norm: float) -> FloatArray:
    """
    Steady-state error envelope ``(I - R)^{-1} (gamma_1, gamma_2) |eps|_2``.

    :raise NoFixedPointError: if the spectral radius of ``R`` is not below 1.
    """
    if noise_norm < 0:
        raise ArgumentError(f"noise norm must be nonnegative: {noise_norm!r}")

    radius = constants.spectral_radius()
    if radius >= 1:
        raise NoFixedPointError(radius)

    rhs = constants.noise_gain * noise_norm
    return np.asarray(scipy.linalg.solve(np.eye(2) - constants.matrix, rhs))


def simulate_sparcs_recursion(
    constants: SparcsRecursion,
    x0: Any,
    noise_norm: float,
    iters: int,
) -> RecursionEnvelope:
    """
    Error envelope ``x(i + 1) = R x(i) + gamma |eps|_2`` of SpaRCS.

    ``x(i)`` holds the low-rank and sparse error bounds.
    """
    if noise_norm < 0:
        raise ArgumentError(f"noise norm must be nonnegative: {noise_norm!r}")
    return simulate_recursion(constants.matrix, x0, iters, constants.noise_gain * noise_norm)


def contraction_report(
    contraction: ContractionMatrices,
    constants: Optional[SparcsRecursion] = None,
    noise_norm: float = 0.0,
) -> List[Tuple[str, float]]:
    """
    ``(quantity, value)`` rows summarizing the stability analysis.
    """
    rows: List[Tuple[str, float]] = [
        ("tau", contraction.tau),
        ("alpha", contraction.alpha),
        ("beta", contraction.beta),
        ("zeta", contraction.zeta),
        ("gamma", contraction.gamma),
    ]
    for j, value in enumerate(sorted(contraction.eigenvalues(), key=abs, reverse=True), 1):
        rows.append((f"abs_lambda_{j}", float(abs(value))))
    rows.append(("spectral_radius", contraction.spectral_radius()))

    if constants is not None:
        rows.append(("sparcs_spectral_radius", constants.spectral_radius()))
        try:
            floor = noise_floor(constants, noise_norm)
        except NoFixedPointError:
            _logger.warning("SpaRCS recursion has no fixed point, noise floor omitted")
        else:
            rows.append(("noise_floor_L", float(floor[0])))
            rows.append(("noise_floor_M", float(floor[1])))

    return rows
