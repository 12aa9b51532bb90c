from math import comb

import numpy as np
import pytest
from helper.oracles import brute_force_sparse
from numpy.testing import assert_allclose

from lrsp.exc import ArgumentError
from lrsp.matrix import (
    SubspaceBasis,
    SupportSet,
    as_matrix,
    basis_union,
    project_onto_basis,
    project_rank_k,
    project_sparse_s,
    randomized_rank_k,
    restrict_to_support,
    svd,
)


def test_as_matrix():
    m = as_matrix([[1, 2], [3, 4]])
    assert m.dtype == np.float64
    assert m.flags.c_contiguous

    with pytest.raises(ArgumentError):
        as_matrix([1, 2, 3])
    with pytest.raises(ArgumentError):
        as_matrix(np.zeros((0, 3)))
    with pytest.raises(ArgumentError, match="NaN"):
        as_matrix([[1.0, np.nan]])

    assert np.isnan(as_matrix([[np.nan]], finite=False)[0, 0])


def test_sparse_projection_brute_force():
    rng = np.random.default_rng(8)
    checked = 0
    while checked < 200:
        rows, cols = rng.integers(1, 9, size=2)
        size = int(rows * cols)
        s = int(rng.integers(1, size + 1))
        if comb(size, s) > 5000:
            continue

        m = rng.standard_normal((rows, cols))
        approx, support = project_sparse_s(m, s)
        expected, error = brute_force_sparse(m, s)

        assert len(support) == s
        assert_allclose(approx, expected, rtol=0, atol=0)
        assert np.sum((m - approx) ** 2) == pytest.approx(error, abs=1e-12)
        checked += 1


def test_sparse_projection_ties():
    approx, support = project_sparse_s(np.ones((2, 2)), 2)
    assert support.entries == [(0, 0), (0, 1)]
    assert_allclose(approx, [[1, 1], [0, 0]])

    m = np.zeros((3, 3))
    m[2, 2] = -5.0
    approx, support = project_sparse_s(m, 3)
    assert support.entries == [(0, 0), (0, 1), (2, 2)]
    assert_allclose(approx, m)

    with pytest.raises(ArgumentError):
        project_sparse_s(m, 0)
    with pytest.raises(ArgumentError):
        project_sparse_s(m, 10)


def test_eckart_young():
    rng = np.random.default_rng(1)
    for _ in range(100):
        rows, cols = rng.integers(2, 12, size=2)
        k = int(rng.integers(1, min(rows, cols) + 1))
        m = rng.standard_normal((rows, cols))

        approx, basis = project_rank_k(m, k)
        sv = np.linalg.svd(m, compute_uv=False)
        tail = float(np.sum(sv[k:] ** 2))

        assert np.linalg.matrix_rank(approx) <= k
        assert basis.rank == k
        assert np.sum((m - approx) ** 2) == pytest.approx(tail, rel=1e-8, abs=1e-8)
        assert_allclose(project_onto_basis(approx, basis), approx, atol=1e-10)


def test_rank_projection_deficient():
    rng = np.random.default_rng(2)
    m = np.outer(rng.standard_normal(6), rng.standard_normal(5))

    approx, basis = project_rank_k(m, 3)
    assert basis.rank == 1
    assert_allclose(approx, m, atol=1e-12)

    approx, basis = project_rank_k(np.zeros((4, 4)), 2)
    assert basis.rank == 0
    assert not approx.any()

    with pytest.raises(ArgumentError):
        project_rank_k(m, 0)
    with pytest.raises(ArgumentError):
        project_rank_k(m, 6)


def test_svd():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((7, 4))
    factors = svd(m)
    assert factors.rank == 4
    assert np.all(np.diff(factors.values) <= 0)
    assert_allclose(factors.reconstruct(), m, atol=1e-12)


def test_subspace_basis():
    with pytest.raises(ArgumentError, match="orthonormal"):
        SubspaceBasis(np.ones((3, 2)))
    with pytest.raises(ArgumentError):
        SubspaceBasis(np.eye(2, 3))

    basis = SubspaceBasis.empty(4)
    assert basis.rank == 0
    assert basis.ambient_rows == 4
    assert not project_onto_basis(np.ones((4, 2)), basis).any()

    basis = SubspaceBasis(np.eye(3)[:, :2])
    assert_allclose(basis.projector(), np.diag([1.0, 1.0, 0.0]))
    with pytest.raises(ValueError):
        basis.vectors[0, 0] = 2.0


def test_basis_union():
    rng = np.random.default_rng(4)
    a, _ = np.linalg.qr(rng.standard_normal((8, 2)))
    b, _ = np.linalg.qr(rng.standard_normal((8, 2)))
    ba = SubspaceBasis(a)
    bb = SubspaceBasis(b)

    union = basis_union(ba, bb)
    assert union.rank == 4
    assert_allclose(union.vectors[:, :2], a)
    assert_allclose(union.vectors.T @ union.vectors, np.eye(4), atol=1e-10)
    for v in np.hstack([a, b]).T:
        assert_allclose(union.projector() @ v, v, atol=1e-10)

    # dependent directions are dropped
    assert basis_union(ba, ba).rank == 2
    mixed = SubspaceBasis(np.linalg.qr(a @ rng.standard_normal((2, 2)))[0])
    assert basis_union(ba, mixed).rank == 2
    assert basis_union(SubspaceBasis.empty(8), bb).rank == 2

    with pytest.raises(ArgumentError):
        basis_union(ba, SubspaceBasis.empty(5))


def test_support_set():
    shape = (3, 4)
    s = SupportSet.from_pairs([(2, 1), (0, 3), (2, 1)], shape)
    assert len(s) == 2
    assert s.entries == [(0, 3), (2, 1)]
    assert (2, 1) in s
    assert (1, 1) not in s
    assert (5, 5) not in s

    u = s.union(SupportSet.from_pairs([(0, 0)], shape))
    assert u.entries == [(0, 0), (0, 3), (2, 1)]
    assert u == SupportSet(np.array([0, 3, 9]), shape)
    assert len(SupportSet.full(shape)) == 12

    with pytest.raises(ArgumentError):
        SupportSet(np.array([3, 1]), shape)
    with pytest.raises(ArgumentError):
        SupportSet(np.array([12]), shape)
    with pytest.raises(ArgumentError):
        SupportSet.from_pairs([(3, 0)], shape)
    with pytest.raises(ArgumentError):
        s.union(SupportSet.empty((4, 3)))


def test_restrict_to_support():
    m = np.arange(6.0).reshape(2, 3)
    s = SupportSet.from_pairs([(0, 1), (1, 2)], m.shape)
    assert_allclose(restrict_to_support(m, s), [[0, 1, 0], [0, 0, 5]])

    with pytest.raises(ArgumentError):
        restrict_to_support(m, SupportSet.empty((3, 2)))


def test_randomized_rank_k():
    rng = np.random.default_rng(5)
    m = rng.standard_normal((30, 3)) @ rng.standard_normal((3, 20))

    exact, _ = project_rank_k(m, 3)
    approx, basis = randomized_rank_k(m, 3, seed=7)
    assert basis.rank == 3
    assert_allclose(approx, exact, atol=1e-9)

    again, _ = randomized_rank_k(m, 3, seed=7)
    assert np.array_equal(approx, again)

    noisy = m + 1e-3 * rng.standard_normal(m.shape)
    exact, _ = project_rank_k(noisy, 3)
    approx, _ = randomized_rank_k(noisy, 3, oversample=5, power_iters=2, seed=(1, 2))
    assert np.linalg.norm(approx - exact) <= 1e-3 * np.linalg.norm(exact)

    with pytest.raises(ArgumentError):
        randomized_rank_k(m, 3, oversample=20)
    with pytest.raises(ArgumentError):
        randomized_rank_k(m, 3, power_iters=-1)
