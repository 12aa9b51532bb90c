from abc import ABCMeta, abstractmethod
from enum import Enum
from types import MappingProxyType
from typing import Any, Callable, Mapping, Optional, Tuple, Type, TypeVar

from lrsp.exc import ArgumentError

__all__ = (
    "Converter",
    "EnumConverter",
    "ScalarListConverter",
    "ShapeConverter",
    "convert_fields",
)

E = TypeVar("E", bound=Enum)
_FROZEN_DICT: Mapping[Any, Any] = MappingProxyType({})


class Converter(metaclass=ABCMeta):
    """
    Convert command line strings and json.load() results to objects.
    """

    @abstractmethod
    def __call__(self, value: Any, context: Mapping[Any, Any]) -> Any:
        raise NotImplementedError


class ScalarListConverter(Converter):
    """
    Split string into list.

    An input string is split with a separator. Empty items are discarded.
    An optional function ``cast`` may be provided to transform items.
    A list (as decoded from JSON) is cast item by item.
    """

    def __init__(self, sep: str, cast: Optional[Callable[[str], Any]] = None):
        super().__init__()

        if not sep:
            raise ValueError("sep must not be empty")

        self._sep = sep
        self._cast = cast

    def __call__(self, value: Any, context: Mapping[Any, Any]) -> Any:
        if isinstance(value, str):
            items = [s.strip() for s in value.split(self._sep)]
        else:
            items = list(value)

        cast = self._cast

        if cast is None:
            return [s for s in items if s]
        else:
            return [cast(s) for s in items if s != ""]


class EnumConverter(Converter):
    """
    Convert values to members of enums.
    """

    def __init__(self, enum_type: Type[E]):
        super().__init__()

        if not issubclass(enum_type, Enum):
            raise TypeError(f"expects a subclass of Enum: {enum_type!r}")

        self._enum_type = enum_type

    def __call__(self, value: Any, context: Mapping[Any, Any]) -> Any:
        try:
            return self._enum_type(value)
        except ValueError:
            choices = ", ".join(str(m.value) for m in self._enum_type)
            raise ArgumentError(
                f"{self._enum_type.__name__} has no such value: {value!r} (choose from {choices})"
            ) from None


class ShapeConverter(Converter):
    """
    Convert ``"200x400"`` or ``[200, 400]`` to a ``(rows, cols)`` tuple.
    """

    def __call__(self, value: Any, context: Mapping[Any, Any]) -> Tuple[int, int]:
        try:
            if isinstance(value, str):
                parts = value.lower().split("x")
            else:
                parts = list(value)
            rows, cols = (int(p) for p in parts)
        except (TypeError, ValueError):
            raise ArgumentError(f"bad shape {value!r}, expect ROWSxCOLS") from None

        if rows < 1 or cols < 1:
            raise ArgumentError(f"shape must be positive: {value!r}")

        return rows, cols


def convert_fields(
    values: Mapping[str, Any],
    converters: Mapping[str, Any],
    context: Optional[Mapping[Any, Any]] = None,
) -> dict:
    """
    Convert a mapping field by field.

    ``converters`` maps field names to :class:`Converter` objects or plain callables
    such as ``int``. Unknown keys are rejected.
    """
    if context is None:
        context = _FROZEN_DICT

    unknown = sorted(set(values) - set(converters))
    if unknown:
        raise ArgumentError(f"unknown keys: {', '.join(unknown)}")

    result = {}
    for key, value in values.items():
        conv = converters[key]
        try:
            if isinstance(conv, Converter):
                result[key] = conv(value, context)
            else:
                result[key] = conv(value)
        except ArgumentError:
            raise
        except (TypeError, ValueError) as ex:
            raise ArgumentError(f"bad value for {key!r}: {value!r}") from ex

    return result
