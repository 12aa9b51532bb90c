"""
File formats.

Matrices
    ``csv``: a ``rows,cols`` header line, then one line per row with
    comma-separated values written with 17 significant digits.

    ``bin``: magic ``b"LRSP"``, ``rows`` and ``cols`` as little-endian u32,
    then ``rows * cols`` little-endian IEEE-754 doubles in row-major order.

Masks and observations
    ``row,col`` and ``row,col,value`` CSV lines, with a header line.

Reports
    CSV with fixed headers (see :data:`lrsp.bench.REPORT_HEADER`,
    :data:`lrsp.solvers.types.TRACE_HEADER` and ``quantity,value``).
"""

import contextlib
import csv
import json
import logging
import os
import struct
from pathlib import Path
from typing import IO, Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from lrsp._compat import StrEnum
from lrsp.bench import REPORT_HEADER, ExperimentReport, SyntheticInstance
from lrsp.exc import ArgumentError, OperatorTooLargeError, ParseError, _add_note
from lrsp.matrix import SupportSet, as_matrix
from lrsp.operators import (
    GAUSSIAN_LIMIT_ENV,
    MaskOperator,
    MeasurementOperator,
    OperatorKind,
    make_gaussian_operator,
    make_identity_operator,
)
from lrsp.solvers.types import TRACE_HEADER, SolverTrace
from lrsp.typing import FloatArray, StrPath

__all__ = (
    "MatrixFormat",
    "MAGIC",
    "read_matrix",
    "write_matrix",
    "read_mask",
    "write_mask",
    "read_observations",
    "write_observations",
    "write_trace",
    "write_report",
    "write_quantities",
    "save_instance",
    "load_instance",
)

MAGIC = b"LRSP"
_HEADER = struct.Struct("<4sII")

INSTANCE_FILE = "instance.json"

_logger = logging.getLogger(__name__)

Target = Union[StrPath, IO[str]]


class MatrixFormat(StrEnum):
    CSV = "csv"
    BIN = "bin"

    @classmethod
    def from_path(cls, path: StrPath) -> "MatrixFormat":
        suffix = Path(path).suffix.lower().lstrip(".")
        try:
            return cls(suffix)
        except ValueError:
            raise ArgumentError(f"cannot tell matrix format of {os.fspath(path)!r}") from None


@contextlib.contextmanager
def _text_writer(target: Target) -> Iterator[IO[str]]:
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", newline="", encoding="utf-8") as fp:
            yield fp
    else:
        yield target


def _csv_writer(fp: IO[str]) -> Any:
    return csv.writer(fp, lineterminator="\n")


def write_matrix(path: StrPath, m: Any, fmt: Optional[MatrixFormat] = None) -> None:
    """Write a finite matrix. The format defaults to the file suffix."""
    m = as_matrix(m)
    fmt = MatrixFormat.from_path(path) if fmt is None else MatrixFormat(fmt)

    if fmt is MatrixFormat.BIN:
        rows, cols = m.shape
        with open(path, "wb") as fp:
            fp.write(_HEADER.pack(MAGIC, rows, cols))
            fp.write(m.astype("<f8").tobytes())
    else:
        with open(path, "w", newline="", encoding="utf-8") as fp:
            np.savetxt(fp, m, fmt="%.17g", delimiter=",", header="%d,%d" % m.shape, comments="")


def read_matrix(path: StrPath, fmt: Optional[MatrixFormat] = None) -> FloatArray:
    """
    Read a matrix file.

    :raise ParseError: on a malformed header, truncated payload or non-finite value,
        with the line (csv) or byte offset (bin) of the problem.
    """
    fmt = MatrixFormat.from_path(path) if fmt is None else MatrixFormat(fmt)
    if fmt is MatrixFormat.BIN:
        return _read_matrix_bin(path)
    return _read_matrix_csv(path)


def _read_matrix_bin(path: StrPath) -> FloatArray:
    data = Path(path).read_bytes()

    if len(data) < _HEADER.size:
        raise ParseError("truncated header", path, offset=len(data))

    magic, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}", path, offset=0)
    if rows < 1 or cols < 1:
        raise ParseError(f"bad dimensions {rows}x{cols}", path, offset=4)

    expected = _HEADER.size + 8 * rows * cols
    if len(data) < expected:
        raise ParseError(
            f"truncated payload: expect {expected} bytes, got {len(data)}",
            path,
            offset=len(data),
        )
    if len(data) > expected:
        raise ParseError(f"{len(data) - expected} trailing bytes", path, offset=expected)

    m = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    bad = np.flatnonzero(~np.isfinite(m))
    if bad.size:
        raise ParseError("non-finite value", path, offset=_HEADER.size + 8 * int(bad[0]))

    return m.reshape(rows, cols)


def _parse_ints(fields: Sequence[str], count: int, path: StrPath, line: int) -> List[int]:
    if len(fields) != count:
        raise ParseError(f"expect {count} fields, got {len(fields)}", path, line=line)
    try:
        return [int(f) for f in fields]
    except ValueError:
        raise ParseError(f"bad integer in {fields!r}", path, line=line) from None


def _parse_float(text: str, path: StrPath, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"bad number {text!r}", path, line=line) from None
    if not np.isfinite(value):
        raise ParseError(f"non-finite value {text!r}", path, line=line)
    return value


def _read_matrix_csv(path: StrPath) -> FloatArray:
    with open(path, newline="", encoding="utf-8") as fp:
        reader = csv.reader(fp)

        header = next(reader, None)
        if header is None:
            raise ParseError("empty file", path, line=1)
        rows, cols = _parse_ints(header, 2, path, 1)
        if rows < 1 or cols < 1:
            raise ParseError(f"bad dimensions {rows}x{cols}", path, line=1)

        m = np.empty((rows, cols))
        for i in range(rows):
            fields = next(reader, None)
            line = reader.line_num if fields is not None else i + 2
            if fields is None:
                raise ParseError(f"expect {rows} rows, got {i}", path, line=line)
            if len(fields) != cols:
                raise ParseError(f"expect {cols} values, got {len(fields)}", path, line=line)
            m[i] = [_parse_float(f, path, line) for f in fields]

        extra = next(reader, None)
        if extra:
            raise ParseError("unexpected trailing row", path, line=reader.line_num)

    return m


def write_mask(target: Target, omega: SupportSet) -> None:
    with _text_writer(target) as fp:
        writer = _csv_writer(fp)
        writer.writerow(("row", "col"))
        writer.writerows(omega.entries)


def read_mask(path: StrPath, shape: Tuple[int, int]) -> SupportSet:
    pairs: List[Tuple[int, int]] = []
    with open(path, newline="", encoding="utf-8") as fp:
        reader = csv.reader(fp)
        for fields in reader:
            if reader.line_num == 1 and fields == ["row", "col"]:
                continue
            row, col = _parse_ints(fields, 2, path, reader.line_num)
            pairs.append((row, col))

    try:
        return SupportSet.from_pairs(pairs, shape)
    except ArgumentError as ex:
        raise ParseError(str(ex), path) from ex


def write_observations(target: Target, op: MaskOperator, y: Any) -> None:
    """Write mask observations as ``row,col,value`` lines in the order of ``omega``."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (op.output_dim,):
        raise ArgumentError(f"expect {op.output_dim} observations, got shape {y.shape}")

    with _text_writer(target) as fp:
        writer = _csv_writer(fp)
        writer.writerow(("row", "col", "value"))
        for (row, col), value in zip(op.omega.entries, y.tolist()):
            writer.writerow((row, col, "%.17g" % value))


def read_observations(path: StrPath, shape: Tuple[int, int]) -> Tuple[MaskOperator, FloatArray]:
    """
    Read ``row,col,value`` lines into a mask operator and its observation vector.

    Lines may come in any order; duplicates are rejected.
    """
    flat: List[int] = []
    values: List[float] = []
    rows, cols = shape
    with open(path, newline="", encoding="utf-8") as fp:
        reader = csv.reader(fp)
        for fields in reader:
            line = reader.line_num
            if line == 1 and fields == ["row", "col", "value"]:
                continue
            if len(fields) != 3:
                raise ParseError(f"expect 3 fields, got {len(fields)}", path, line=line)
            row, col = _parse_ints(fields[:2], 2, path, line)
            if not (0 <= row < rows and 0 <= col < cols):
                raise ParseError(f"index ({row}, {col}) outside {rows}x{cols}", path, line=line)
            flat.append(row * cols + col)
            values.append(_parse_float(fields[2], path, line))

    order = np.argsort(flat, kind="stable")
    indices = np.asarray(flat, dtype=np.int64)[order]
    if np.any(np.diff(indices) == 0):
        raise ParseError("duplicate observed index", path)
    if indices.size == 0:
        raise ParseError("no observations", path)

    op = MaskOperator(SupportSet(indices, shape))
    return op, np.asarray(values)[order]


def write_trace(target: Target, trace: SolverTrace) -> None:
    with _text_writer(target) as fp:
        writer = _csv_writer(fp)
        writer.writerow(TRACE_HEADER)
        writer.writerows(record.as_row() for record in trace)


def write_report(target: Target, report: ExperimentReport) -> None:
    with _text_writer(target) as fp:
        writer = _csv_writer(fp)
        writer.writerow(REPORT_HEADER)
        writer.writerows(report.as_rows())


def write_quantities(target: Target, rows: Sequence[Tuple[str, Any]]) -> None:
    """Write ``quantity,value`` rows."""
    with _text_writer(target) as fp:
        writer = _csv_writer(fp)
        writer.writerow(("quantity", "value"))
        for name, value in rows:
            if isinstance(value, float):
                value = repr(value)
            writer.writerow((name, value))


def save_instance(
    directory: StrPath,
    instance: SyntheticInstance,
    fmt: MatrixFormat = MatrixFormat.BIN,
) -> Path:
    """
    Save an instance to ``directory`` (created if needed).

    Mask observations go to ``observations.csv`` (``row,col,value``), other
    observation vectors to a ``p x 1`` matrix file ``y.<fmt>``.
    Gaussian operators are stored by ``(shape, p, seed)`` only.

    :raise ArgumentError: if a Gaussian operator has no seed to rebuild it from.
    """
    fmt = MatrixFormat(fmt)
    description = instance.operator.describe()
    if description["kind"] == OperatorKind.GAUSSIAN and description.get("seed") is None:
        raise ArgumentError("cannot save a Gaussian operator built without a seed")

    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)

    op = instance.operator
    files: Dict[str, str] = {
        "low_rank": f"L_star.{fmt}",
        "sparse": f"M_star.{fmt}",
        "noise": f"noise.{fmt}",
    }
    write_matrix(root / files["low_rank"], instance.low_rank, fmt)
    write_matrix(root / files["sparse"], instance.sparse, fmt)
    write_matrix(root / files["noise"], instance.noise.reshape(-1, 1), fmt)

    if isinstance(op, MaskOperator):
        files["observations"] = "observations.csv"
        write_observations(root / files["observations"], op, instance.observations)
    else:
        files["observations"] = f"y.{fmt}"
        write_matrix(root / files["observations"], instance.observations.reshape(-1, 1), fmt)

    seed = instance.seed
    if seed is not None and not isinstance(seed, int):
        seed = [int(v) for v in seed]

    meta = {
        "shape": list(instance.shape),
        "rank": instance.rank,
        "sparsity": instance.sparsity,
        "seed": seed,
        "operator": op.describe(),
        "noise_norm": float(np.linalg.norm(instance.noise)),
        "digest": instance.digest(),
        "files": files,
    }
    with open(root / INSTANCE_FILE, "w", encoding="utf-8") as fp:
        json.dump(meta, fp, indent=2, sort_keys=True)
        fp.write("\n")

    _logger.info("Saved instance %s to %s", meta["digest"], root)
    return root


def _operator_from_description(desc: Dict[str, Any], path: Path) -> MeasurementOperator:
    try:
        kind = OperatorKind(desc["kind"])
        shape = (int(desc["shape"][0]), int(desc["shape"][1]))
        if kind is OperatorKind.GAUSSIAN:
            return make_gaussian_operator(shape, int(desc["output_dim"]), desc["seed"])
        elif kind is OperatorKind.IDENTITY:
            return make_identity_operator(shape)
    except OperatorTooLargeError as ex:
        note = f"Set {GAUSSIAN_LIMIT_ENV} to at least {ex.coefficients} to load {path.parent}"
        _add_note(ex, note, logger=_logger)
        raise
    except (KeyError, TypeError, ValueError) as ex:
        raise ParseError(f"bad operator description {desc!r}", path) from ex
    raise ParseError(f"operator kind {kind} is stored with its observations", path)


def load_instance(directory: StrPath) -> SyntheticInstance:
    """
    Load an instance written by :func:`save_instance` and verify its digest.
    """
    root = Path(directory)
    meta_path = root / INSTANCE_FILE
    try:
        with open(meta_path, encoding="utf-8") as fp:
            meta = json.load(fp)
    except json.JSONDecodeError as ex:
        raise ParseError(ex.msg, meta_path, line=ex.lineno) from ex

    try:
        files = meta["files"]
        shape = (int(meta["shape"][0]), int(meta["shape"][1]))
        rank = int(meta["rank"])
        sparsity = int(meta["sparsity"])
        desc = meta["operator"]
    except (KeyError, TypeError, ValueError) as ex:
        raise ParseError(f"missing or bad field: {ex}", meta_path) from ex

    low_rank = read_matrix(root / files["low_rank"])
    sparse = read_matrix(root / files["sparse"])
    noise = read_matrix(root / files["noise"]).reshape(-1)

    op: MeasurementOperator
    if desc.get("kind") == OperatorKind.MASK:
        op, y = read_observations(root / files["observations"], shape)
    else:
        op = _operator_from_description(desc, meta_path)
        y = read_matrix(root / files["observations"]).reshape(-1)

    instance = SyntheticInstance(low_rank, sparse, op, y, noise, rank, sparsity, meta.get("seed"))
    digest = instance.digest()
    if digest != meta.get("digest"):
        raise ParseError(f"digest mismatch: {digest} != {meta.get('digest')}", meta_path)

    return instance
