import time
from enum import Enum
from typing import Optional

from typing_extensions import Self


class TimeUnit(Enum):
    """
    TimeUnit enum.

    Conversion helper between time units
    """

    NANOSECONDS = 1
    MICROSECONDS = 1_000
    MILLISECONDS = 1_000_000
    SECONDS = 1_000_000_000

    def from_duration(self, d: float, unit: "TimeUnit") -> float:
        """Convert value from the given unit to the self unit (float)"""
        return d * unit._value_ / self._value_

    def from_nanos(self, d: float) -> float:
        """Convert nanoseconds to self unit"""
        return d * TimeUnit.NANOSECONDS._value_ / self._value_

    @classmethod
    def convert(cls, d: float, src: "TimeUnit", dst: "TimeUnit") -> float:
        """Convert a numeric duration in some unit to one in another."""
        return dst.from_duration(d, src)


class Stopwatch:
    """
    Accumulate wall time from :func:`time.perf_counter_ns`.

    Use as a context manager or with :meth:`start` and :meth:`stop`.
    """

    def __init__(self) -> None:
        self._elapsed_ns = 0
        self._started_ns: Optional[int] = None

    def start(self) -> Self:
        if self._started_ns is None:
            self._started_ns = time.perf_counter_ns()
        return self

    def stop(self) -> None:
        if self._started_ns is not None:
            self._elapsed_ns += time.perf_counter_ns() - self._started_ns
            self._started_ns = None

    def __enter__(self) -> Self:
        return self.start()

    def __exit__(self, *exc_info: object) -> None:
        self.stop()

    def elapsed(self, unit: TimeUnit = TimeUnit.SECONDS) -> float:
        """Elapsed time in the given unit, including a running lap."""
        total = self._elapsed_ns
        if self._started_ns is not None:
            total += time.perf_counter_ns() - self._started_ns
        return unit.from_nanos(total)

    @property
    def millis(self) -> float:
        return self.elapsed(TimeUnit.MILLISECONDS)

    @property
    def seconds(self) -> float:
        return self.elapsed(TimeUnit.SECONDS)
