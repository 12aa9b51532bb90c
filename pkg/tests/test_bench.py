import numpy as np
import pytest
from numpy.testing import assert_allclose

import lrsp.bench
from lrsp.bench import (
    BenchmarkRow,
    BenchRowConverter,
    ObservationModel,
    ObservationModelConverter,
    generate_instance,
    relative_error,
    run_completion_benchmark,
    run_completion_benchmark_async,
    run_rpca,
    stack_frames,
    unstack_frames,
)
from lrsp.exc import ArgumentError, SolverError
from lrsp.matrix import project_rank_k
from lrsp.operators import MaskOperator, OperatorKind
from lrsp.solvers import ProjectorKind, SolverConfig, SolverName

SMALL_ROW = BenchmarkRow((30, 40), 2)


def test_generate_instance():
    instance = generate_instance(20, 30, 3, 15, ObservationModel.mask(0.5), seed=1)
    assert isinstance(instance.operator, MaskOperator)
    assert instance.shape == (20, 30)
    assert np.linalg.matrix_rank(instance.low_rank) == 3
    assert np.count_nonzero(instance.sparse) == 15
    assert np.linalg.norm(instance.truth) == pytest.approx(1.0)
    assert_allclose(instance.observations, instance.operator.apply(instance.truth), rtol=0, atol=0)
    assert not instance.noise.any()

    # gross entries dominate the low-rank part
    assert np.max(np.abs(instance.sparse)) > np.max(np.abs(instance.low_rank))


def test_generate_completion_instance():
    instance = generate_instance(20, 30, 2, 0, ObservationModel.mask(0.3), seed=2)
    assert not instance.sparse.any()
    assert np.linalg.norm(instance.low_rank) == pytest.approx(1.0)
    assert instance.operator.output_dim == 180
    assert instance.problem().sparsity == 0


def test_generate_noise():
    instance = generate_instance(10, 10, 1, 0, ObservationModel.gaussian(60), 0.01, seed=3)
    assert np.linalg.norm(instance.noise) == pytest.approx(0.01)
    assert_allclose(
        instance.observations - instance.operator.apply(instance.truth),
        instance.noise,
        atol=1e-15,
    )


def test_generate_deterministic():
    a = generate_instance(15, 20, 2, 5, ObservationModel.gaussian(200), 0.1, seed=(4, 0, 1))
    b = generate_instance(15, 20, 2, 5, ObservationModel.gaussian(200), 0.1, seed=(4, 0, 1))
    c = generate_instance(15, 20, 2, 5, ObservationModel.gaussian(200), 0.1, seed=(4, 0, 2))

    assert np.array_equal(a.low_rank, b.low_rank)
    assert np.array_equal(a.sparse, b.sparse)
    assert np.array_equal(a.observations, b.observations)
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()


def test_generate_errors():
    model = ObservationModel.mask(0.3)
    with pytest.raises(ArgumentError):
        generate_instance(5, 6, 6, 0, model)
    with pytest.raises(ArgumentError):
        generate_instance(5, 6, 1, 31, model)
    with pytest.raises(ArgumentError):
        generate_instance(5, 6, 1, 0, model, noise_norm=-1.0)
    with pytest.raises(ArgumentError):
        generate_instance(5, 6, 1, 0, model, sparse_scale=0.0)


def test_relative_error():
    truth = np.array([[1.0, 0.0], [0.0, 1.0]])
    estimate = np.array([[1.0, 0.0], [0.0, 0.0]])
    assert relative_error(estimate, truth) == pytest.approx(1 / np.sqrt(2))
    assert relative_error(truth, truth) == 0.0
    assert relative_error(estimate, np.zeros((2, 2))) == pytest.approx(1.0)

    with pytest.raises(ArgumentError):
        relative_error(np.zeros((2, 3)), truth)


def test_model_converter():
    conv = ObservationModelConverter()
    assert conv("mask:0.3", {}) == ObservationModel.mask(0.3)
    assert conv("gaussian:600", {}) == ObservationModel.gaussian(600)
    assert conv("identity", {}) == ObservationModel.identity()
    assert conv({"kind": "mask", "fraction": 0.5}, {}) == ObservationModel.mask(0.5)
    assert str(ObservationModel.mask(0.3)) == "mask:0.3"
    assert str(ObservationModel.identity()) == "identity"

    for bad in ("mask:x", "fourier:3", "identity:1", "mask:1.5", "gaussian:0"):
        with pytest.raises(ArgumentError):
            conv(bad, {})


def test_row_converter():
    conv = BenchRowConverter()
    row = conv("200x400:5:0.01", {})
    assert row == BenchmarkRow((200, 400), 5, 0.01)
    assert row.model == ObservationModel.mask(0.3)
    assert row.label == "200x400:5:0.01"

    row = conv("30x40:2", {"model": ObservationModel.identity()})
    assert row.model.kind is OperatorKind.IDENTITY
    assert row.label == "30x40:2:0"

    assert conv("30x40:2:0:7", {}).label == "30x40:2:0:7"

    for bad in ("30x40", "30x40:a", "30:2:0", "30x40:2:0:1:2"):
        with pytest.raises(ArgumentError):
            conv(bad, {})


def test_benchmark_reproducible():
    solvers = [SolverName.SPARCS, SolverName.ALPS]
    first = run_completion_benchmark([SMALL_ROW], solvers, reps=2, seed=5)
    second = run_completion_benchmark([SMALL_ROW], solvers, reps=2, seed=5)

    assert first.as_rows() == second.as_rows()
    assert len(first.rows) == 2
    for row in first.as_rows():
        assert row[0] == "30x40:2:0"
        assert row[4] == ""
        assert row[5:] == ("2", "0")

    # every solver sees the same instances
    for rep in range(2):
        digests = {r.digest for r in first.runs if r.rep == rep}
        assert len(digests) == 1

    assert first.row("30x40:2:0", "alps").median_rel_err <= 1e-2
    with pytest.raises(KeyError):
        first.row("1x1:1:0", "alps")


def test_benchmark_timings():
    report = run_completion_benchmark([SMALL_ROW], ["alps"], reps=1, timings=True)
    assert report.as_rows()[0][4] != ""


@pytest.mark.asyncio
async def test_benchmark_async():
    report = await run_completion_benchmark_async(
        [SMALL_ROW, BenchmarkRow((30, 40), 2, 1e-3)],
        ["alps"],
        reps=2,
        seed=6,
        max_workers=2,
    )
    assert [r.config for r in report.rows] == ["30x40:2:0", "30x40:2:0.001"]
    assert [(r.config, r.rep) for r in report.runs] == [
        ("30x40:2:0", 0),
        ("30x40:2:0", 1),
        ("30x40:2:0.001", 0),
        ("30x40:2:0.001", 1),
    ]


def test_benchmark_failures(monkeypatch: pytest.MonkeyPatch):
    solve = lrsp.bench.solve

    def flaky(name, *args, **kwargs):
        if name is SolverName.SPARCS:
            raise SolverError("boom", 1)
        return solve(name, *args, **kwargs)

    monkeypatch.setattr(lrsp.bench, "solve", flaky)
    report = run_completion_benchmark([SMALL_ROW], ["sparcs", "alps"], reps=2)

    failed = report.row(SMALL_ROW.label, "sparcs")
    assert failed.failures == 2
    assert failed.median_iters is None
    assert failed.as_row()[2:4] == ("", "")

    assert report.row(SMALL_ROW.label, "alps").failures == 0
    assert all(r.failed and "boom" in r.message for r in report.runs if r.solver == "sparcs")


def test_benchmark_iteration_cap():
    row = BenchmarkRow((60, 80), 15)
    config = SolverConfig(max_iterations=5)
    report = run_completion_benchmark([row], ["sparcs"], reps=1, config=config)

    assert report.row(row.label, "sparcs").median_iters == 5
    assert not report.runs[0].converged
    assert not report.runs[0].failed


def test_benchmark_arguments():
    with pytest.raises(ArgumentError):
        run_completion_benchmark([SMALL_ROW], ["alps"], reps=0)
    with pytest.raises(ArgumentError):
        run_completion_benchmark([], ["alps"], reps=1)
    with pytest.raises(ValueError):
        run_completion_benchmark([SMALL_ROW], ["cosamp"], reps=1)


@pytest.mark.parametrize("projector", [ProjectorKind.EXACT, ProjectorKind.RANDOMIZED])
def test_rpca_synthetic(projector):
    instance = generate_instance(100, 100, 2, 100, ObservationModel.identity(), seed=7)
    config = SolverConfig(tolerance=1e-9, projector=projector)
    result = run_rpca(instance, 2, 100, config=config)

    assert relative_error(result.low_rank, instance.low_rank) <= 1e-4
    assert relative_error(result.sparse, instance.sparse) <= 1e-4
    assert result.row.config == "100x100:2:100"
    assert result.row.reps == 1
    assert result.row.median_rel_err <= 1e-4


def test_rpca_projectors_agree():
    instance = generate_instance(60, 60, 2, 40, ObservationModel.identity(), seed=8)
    exact = run_rpca(instance, 2, 40, config=SolverConfig(tolerance=1e-8))
    randomized = run_rpca(
        instance, 2, 40, config=SolverConfig(tolerance=1e-8, projector="randomized")
    )
    assert exact.row.median_rel_err <= 1e-4
    assert randomized.row.median_rel_err <= 1e-4


def test_rpca_low_rank_only():
    rng = np.random.default_rng(9)
    data = rng.standard_normal((20, 2)) @ rng.standard_normal((2, 25))
    result = run_rpca(data, 2, 5, SolverName.ALPS, SolverConfig(tolerance=1e-9))

    expected, _ = project_rank_k(data, 2)
    assert_allclose(result.low_rank, expected, atol=1e-6 * np.abs(data).max())
    assert np.linalg.norm(result.sparse) <= 1e-6 * np.linalg.norm(data)
    assert result.row.median_rel_err <= 1e-6


def test_rpca_rejects_incomplete():
    instance = generate_instance(10, 10, 1, 2, ObservationModel.mask(0.5), seed=10)
    with pytest.raises(ArgumentError, match="complete"):
        run_rpca(instance, 1, 2)


def test_frames():
    frames = np.arange(24.0).reshape(2, 3, 4)
    matrix = stack_frames(frames)
    assert matrix.shape == (12, 2)
    assert_allclose(matrix[:, 1], frames[1].reshape(-1))
    assert_allclose(unstack_frames(matrix, (3, 4)), frames)

    with pytest.raises(ArgumentError):
        stack_frames(np.zeros((3, 4)))
    with pytest.raises(ArgumentError):
        unstack_frames(matrix, (5, 5))


def test_rpca_frames():
    rng = np.random.default_rng(11)
    background = rng.uniform(size=(6, 5))
    frames = np.repeat(background[None], 8, axis=0)
    for j in range(8):
        frames[j, j % 6, j % 5] += 5.0

    result = run_rpca(stack_frames(frames), 1, 8, config=SolverConfig(tolerance=1e-9))
    recovered = unstack_frames(result.low_rank, (6, 5))
    assert_allclose(recovered, np.repeat(background[None], 8, axis=0), atol=1e-6)
    assert np.count_nonzero(result.sparse) <= 8


@pytest.mark.slow
def test_completion_rank5_noiseless():
    row = BenchmarkRow((200, 400), 5)
    report = run_completion_benchmark([row], ["sparcs", "alps"], reps=11, seed=0)

    alps = report.row(row.label, "alps")
    assert alps.median_rel_err <= 1e-3
    assert alps.median_iters <= 50

    sparcs = report.row(row.label, "sparcs")
    assert sparcs.median_rel_err <= 1e-3
    assert sparcs.median_iters <= 150


@pytest.mark.slow
def test_completion_rank5_noisy():
    row = BenchmarkRow((200, 400), 5, 1e-2)
    report = run_completion_benchmark([row], ["sparcs", "alps"], reps=11, seed=0)
    for name in ("sparcs", "alps"):
        assert report.row(row.label, name).median_rel_err <= 1e-2


@pytest.mark.slow
def test_completion_rank15():
    row = BenchmarkRow((200, 400), 15)
    report = run_completion_benchmark([row], ["sparcs", "alps"], reps=11, seed=0)

    alps = report.row(row.label, "alps")
    assert alps.median_rel_err <= 1e-2
    assert alps.median_iters <= 80

    sparcs = report.row(row.label, "sparcs")
    capped = [r for r in report.runs if r.solver == "sparcs" and not r.converged]
    assert all(r.iterations == 700 for r in capped)
    assert sparcs.median_iters <= 700


@pytest.mark.slow
def test_momentum_accelerates():
    row = BenchmarkRow((200, 400), 5)
    fast = run_completion_benchmark([row], ["alps"], reps=11, config=SolverConfig(momentum=0.25))
    slow = run_completion_benchmark([row], ["alps"], reps=11, config=SolverConfig(momentum=0.0))
    assert fast.rows[0].median_iters < slow.rows[0].median_iters


@pytest.mark.slow
def test_benchmark_report_reproducible_at_scale():
    row = BenchmarkRow((200, 400), 5)
    first = run_completion_benchmark([row], ["sparcs", "alps"], reps=11, seed=3)
    second = run_completion_benchmark([row], ["sparcs", "alps"], reps=11, seed=3)
    assert first.as_rows() == second.as_rows()
