import pytest

from lrsp.converter import (
    EnumConverter,
    ScalarListConverter,
    ShapeConverter,
    convert_fields,
)
from lrsp.exc import ArgumentError
from lrsp.solvers import ProjectorKind, SolverName


def test_scalar_list():
    conv = ScalarListConverter(",")
    assert conv("", {}) == []
    assert conv("1", {}) == ["1"]
    assert conv("1,2,3", {}) == ["1", "2", "3"]
    assert conv(",1,", {}) == ["1"]

    conv = ScalarListConverter(",", SolverName)
    assert conv("sparcs, alps", {}) == [SolverName.SPARCS, SolverName.ALPS]
    assert conv(["alps"], {}) == [SolverName.ALPS]

    with pytest.raises(ValueError):
        ScalarListConverter("")


def test_enums():
    conv = EnumConverter(ProjectorKind)
    assert conv("exact", {}) is ProjectorKind.EXACT
    assert conv(ProjectorKind.RANDOMIZED, {}) is ProjectorKind.RANDOMIZED
    with pytest.raises(ArgumentError, match="choose from exact, randomized"):
        conv("jacobi", {})

    with pytest.raises(TypeError):
        EnumConverter(object)  # type: ignore


def test_shape():
    conv = ShapeConverter()
    assert conv("200x400", {}) == (200, 400)
    assert conv("3X4", {}) == (3, 4)
    assert conv([5, 6], {}) == (5, 6)

    for bad in ("200", "1x2x3", "ax4", "0x4", None):
        with pytest.raises(ArgumentError):
            conv(bad, {})


def test_convert_fields():
    converters = {
        "projector": EnumConverter(ProjectorKind),
        "max_iterations": int,
    }
    values = convert_fields({"projector": "randomized", "max_iterations": "9"}, converters)
    assert values == {"projector": ProjectorKind.RANDOMIZED, "max_iterations": 9}

    with pytest.raises(ArgumentError, match="unknown keys: eta"):
        convert_fields({"eta": 1e-4}, converters)
    with pytest.raises(ArgumentError, match="max_iterations"):
        convert_fields({"max_iterations": "many"}, converters)
