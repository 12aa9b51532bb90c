import dataclasses
import io
import json
import struct

import numpy as np
import pytest
from numpy.testing import assert_allclose

from lrsp.bench import (
    REPORT_HEADER,
    BenchmarkRow,
    ObservationModel,
    generate_instance,
    run_completion_benchmark,
)
from lrsp.exc import ArgumentError, OperatorTooLargeError, ParseError
from lrsp.io import (
    MAGIC,
    MatrixFormat,
    load_instance,
    read_mask,
    read_matrix,
    read_observations,
    save_instance,
    write_mask,
    write_matrix,
    write_observations,
    write_quantities,
    write_report,
    write_trace,
)
from lrsp.matrix import SupportSet
from lrsp.operators import (
    GAUSSIAN_LIMIT_ENV,
    MaskOperator,
    make_gaussian_operator,
    make_mask_operator,
)
from lrsp.solvers import alps_solve
from lrsp.solvers.types import TRACE_HEADER


def test_matrix_format():
    assert MatrixFormat.from_path("a/b.CSV") is MatrixFormat.CSV
    assert MatrixFormat.from_path("x.bin") is MatrixFormat.BIN
    with pytest.raises(ArgumentError):
        MatrixFormat.from_path("x.npy")


def test_bin_layout(tmp_path):
    path = tmp_path / "one.bin"
    write_matrix(path, [[42.0]])
    data = path.read_bytes()
    # 4 magic + 2 x 4 dims + 8 payload
    assert len(data) == 20
    assert data[:4] == MAGIC
    assert struct.unpack("<IId", data[4:]) == (1, 1, 42.0)


def test_bin_round_trip(tmp_path):
    rng = np.random.default_rng(40)
    m = rng.standard_normal((5, 7)) * 10.0 ** rng.integers(-200, 200, size=(5, 7))
    path = tmp_path / "m.bin"
    write_matrix(path, m)
    assert np.array_equal(read_matrix(path), m)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(41)
    m = rng.standard_normal((5, 7))
    path = tmp_path / "m.csv"
    write_matrix(path, m)

    lines = path.read_text().splitlines()
    assert lines[0] == "5,7"
    assert len(lines) == 6
    assert np.max(np.abs(read_matrix(path) - m)) <= 1e-15 * np.max(np.abs(m))

    # format argument wins over the suffix
    other = tmp_path / "m.dat"
    write_matrix(other, m, MatrixFormat.CSV)
    assert_allclose(read_matrix(other, "csv"), m, rtol=1e-15)


def test_write_rejects_non_finite(tmp_path):
    with pytest.raises(ArgumentError):
        write_matrix(tmp_path / "m.bin", [[np.nan]])


def test_bin_errors(tmp_path):
    path = tmp_path / "m.bin"

    path.write_bytes(b"LRS")
    with pytest.raises(ParseError) as info:
        read_matrix(path)
    assert info.value.offset == 3

    path.write_bytes(b"XXXX" + struct.pack("<II", 1, 1) + bytes(8))
    with pytest.raises(ParseError, match="magic") as info:
        read_matrix(path)
    assert info.value.offset == 0

    path.write_bytes(MAGIC + struct.pack("<II", 2, 2) + bytes(24))
    with pytest.raises(ParseError, match="truncated") as info:
        read_matrix(path)
    assert info.value.offset == 40

    path.write_bytes(MAGIC + struct.pack("<II", 1, 1) + bytes(9))
    with pytest.raises(ParseError, match="trailing") as info:
        read_matrix(path)
    assert info.value.offset == 24

    path.write_bytes(MAGIC + struct.pack("<II", 1, 2) + struct.pack("<2d", 1.0, np.inf))
    with pytest.raises(ParseError, match="non-finite") as info:
        read_matrix(path)
    assert info.value.offset == 24
    assert "offset=24" in repr(info.value)


def test_csv_errors(tmp_path):
    path = tmp_path / "m.csv"

    path.write_text("2,2\n1,2\n3,nan\n")
    with pytest.raises(ParseError) as info:
        read_matrix(path)
    assert info.value.line == 3

    path.write_text("2;2\n")
    with pytest.raises(ParseError) as info:
        read_matrix(path)
    assert info.value.line == 1

    path.write_text("2,2\n1,2\n")
    with pytest.raises(ParseError, match="rows") as info:
        read_matrix(path)
    assert info.value.line == 3

    path.write_text("1,2\n1,2,3\n")
    with pytest.raises(ParseError) as info:
        read_matrix(path)
    assert info.value.line == 2

    path.write_text("1,1\n1\n2\n")
    with pytest.raises(ParseError, match="trailing"):
        read_matrix(path)

    path.write_text("")
    with pytest.raises(ParseError, match="empty"):
        read_matrix(path)


def test_mask_round_trip(tmp_path):
    omega = make_mask_operator((6, 7), 0.4, seed=2).omega
    path = tmp_path / "mask.csv"
    write_mask(path, omega)
    assert path.read_text().startswith("row,col\n")
    assert read_mask(path, (6, 7)) == omega

    path.write_text("0,0\n9,9\n")
    with pytest.raises(ParseError):
        read_mask(path, (6, 7))


def test_observations_round_trip(tmp_path):
    op = make_mask_operator((6, 7), 0.5, seed=3)
    y = np.random.default_rng(42).standard_normal(op.output_dim)

    buf = io.StringIO()
    write_observations(buf, op, y)
    path = tmp_path / "obs.csv"
    path.write_text(buf.getvalue())

    loaded, values = read_observations(path, (6, 7))
    assert loaded.omega == op.omega
    assert np.array_equal(values, y)

    with pytest.raises(ArgumentError):
        write_observations(io.StringIO(), op, y[:-1])


def test_observations_any_order(tmp_path):
    path = tmp_path / "obs.csv"
    path.write_text("1,2,5.0\n0,1,-1.5\n")
    op, y = read_observations(path, (2, 3))
    assert isinstance(op, MaskOperator)
    assert op.omega == SupportSet.from_pairs([(0, 1), (1, 2)], (2, 3))
    assert y.tolist() == [-1.5, 5.0]


def test_observations_errors(tmp_path):
    path = tmp_path / "obs.csv"

    path.write_text("row,col,value\n0,1,1.0\n0,1,2.0\n")
    with pytest.raises(ParseError, match="duplicate"):
        read_observations(path, (2, 3))

    path.write_text("row,col,value\n0,1\n")
    with pytest.raises(ParseError) as info:
        read_observations(path, (2, 3))
    assert info.value.line == 2

    path.write_text("0,3,1.0\n")
    with pytest.raises(ParseError, match="outside"):
        read_observations(path, (2, 3))

    path.write_text("row,col,value\n")
    with pytest.raises(ParseError, match="no observations"):
        read_observations(path, (2, 3))


@pytest.mark.parametrize(
    "model",
    [ObservationModel.mask(0.4), ObservationModel.gaussian(50), ObservationModel.identity()],
    ids=str,
)
@pytest.mark.parametrize("fmt", [MatrixFormat.BIN, MatrixFormat.CSV])
def test_instance_round_trip(tmp_path, model, fmt):
    instance = generate_instance(8, 9, 2, 4, model, 0.01, seed=(7, 1))
    root = save_instance(tmp_path / "inst", instance, fmt)

    meta = json.loads((root / "instance.json").read_text())
    assert meta["digest"] == instance.digest()
    assert meta["seed"] == [7, 1]
    assert meta["operator"]["kind"] == str(model.kind)

    loaded = load_instance(root)
    assert loaded.digest() == instance.digest()
    assert loaded.rank == 2 and loaded.sparsity == 4
    assert type(loaded.operator) is type(instance.operator)
    assert np.array_equal(loaded.observations, instance.observations)
    assert np.array_equal(loaded.noise, instance.noise)


def test_instance_tampered(tmp_path):
    instance = generate_instance(8, 9, 2, 0, ObservationModel.gaussian(50), seed=1)
    root = save_instance(tmp_path, instance)

    low_rank = read_matrix(root / "L_star.bin")
    low_rank[0, 0] += 1e-12
    write_matrix(root / "L_star.bin", low_rank)
    with pytest.raises(ParseError, match="digest"):
        load_instance(root)


def test_instance_bad_metadata(tmp_path):
    (tmp_path / "instance.json").write_text("{\n  nope\n}")
    with pytest.raises(ParseError) as info:
        load_instance(tmp_path)
    assert info.value.line == 2

    (tmp_path / "instance.json").write_text('{"shape": [2, 2]}')
    with pytest.raises(ParseError, match="missing"):
        load_instance(tmp_path)

    with pytest.raises(OSError):
        load_instance(tmp_path / "missing")


def test_instance_over_gaussian_limit(tmp_path, monkeypatch: pytest.MonkeyPatch):
    instance = generate_instance(8, 9, 2, 0, ObservationModel.gaussian(50), seed=2)
    root = save_instance(tmp_path, instance)

    monkeypatch.setenv(GAUSSIAN_LIMIT_ENV, "100")
    with pytest.raises(OperatorTooLargeError) as info:
        load_instance(root)
    assert info.value.coefficients == 8 * 9 * 50


def test_write_trace():
    instance = generate_instance(10, 12, 1, 0, ObservationModel.mask(0.6), seed=3)
    _, trace = alps_solve(instance.problem(), truth=(instance.low_rank, instance.sparse))

    buf = io.StringIO()
    write_trace(buf, trace)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(TRACE_HEADER)
    assert len(lines) == len(trace) + 1
    assert lines[1].startswith("1,")


def test_write_report(tmp_path):
    report = run_completion_benchmark([BenchmarkRow((20, 25), 1)], ["alps"], reps=1)
    path = tmp_path / "report.csv"
    write_report(path, report)

    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(REPORT_HEADER)
    assert lines[1].startswith("20x25:1:0,alps,")
    assert lines[1].endswith(",,1,0")


def test_write_quantities():
    buf = io.StringIO()
    write_quantities(buf, [("tau", 0.25), ("verdict", "STABLE"), ("count", 3)])
    assert buf.getvalue() == "quantity,value\ntau,0.25\nverdict,STABLE\ncount,3\n"


def test_instance_unseeded_gaussian(tmp_path):
    instance = generate_instance(8, 9, 2, 0, ObservationModel.gaussian(50), seed=4)
    unseeded = dataclasses.replace(instance, operator=make_gaussian_operator((8, 9), 50, None))
    with pytest.raises(ArgumentError, match="seed"):
        save_instance(tmp_path / "inst", unseeded)
    assert not (tmp_path / "inst").exists()
