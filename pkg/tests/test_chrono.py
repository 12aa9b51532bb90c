import time

import pytest

from lrsp.chrono import Stopwatch, TimeUnit


def test_time_unit():
    assert TimeUnit.SECONDS.from_duration(1500, TimeUnit.MILLISECONDS) == 1.5
    assert TimeUnit.MICROSECONDS.from_nanos(2000) == 2.0
    assert TimeUnit.convert(2, TimeUnit.SECONDS, TimeUnit.MILLISECONDS) == 2000


def test_stopwatch():
    watch = Stopwatch()
    assert watch.seconds == 0.0

    with watch:
        time.sleep(0.01)
    first = watch.seconds
    assert first >= 0.01
    assert watch.millis == pytest.approx(first * 1000)

    # stopped watches do not advance
    time.sleep(0.01)
    assert watch.seconds == first

    watch.start()
    time.sleep(0.01)
    watch.stop()
    assert watch.seconds >= first + 0.01
