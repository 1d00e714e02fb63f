"""Injectable time sources.

Everything that schedules or stamps data takes a clock, so a multi-hour
scenario can run under a compressed clock in seconds and unit tests can
drive time by hand.
"""

from __future__ import annotations

import time
from typing import Protocol


class Clock(Protocol):
    def now_ms(self) -> int:
        ...

    def sleep_ms(self, duration_ms: float) -> None:
        ...


class SystemClock:
    def now_ms(self) -> int:
        return int(time.time() * 1000)

    def sleep_ms(self, duration_ms: float) -> None:
        if duration_ms > 0:
            time.sleep(duration_ms / 1000.0)


class CompressedClock:
    """Simulated time anchored at `epoch_ms`, advancing `factor` times
    faster than the wall. sleep_ms takes simulated milliseconds.
    """

    def __init__(self, epoch_ms: int, factor: float = 1.0):
        if factor <= 0:
            raise ValueError("compression factor must be > 0")
        self.epoch_ms = epoch_ms
        self.factor = factor
        self._wall_origin = time.monotonic()

    def now_ms(self) -> int:
        elapsed_wall_s = time.monotonic() - self._wall_origin
        return int(self.epoch_ms + elapsed_wall_s * 1000.0 * self.factor)

    def sleep_ms(self, duration_ms: float) -> None:
        if duration_ms > 0:
            time.sleep(duration_ms / self.factor / 1000.0)


class ManualClock:
    """Test clock: time moves only when told to. sleep_ms advances it, so
    single-threaded scheduling code can be driven deterministically.
    """

    def __init__(self, start_ms: int = 0):
        self._now = start_ms

    def now_ms(self) -> int:
        return self._now

    def advance_ms(self, delta_ms: int) -> None:
        self._now += delta_ms

    def sleep_ms(self, duration_ms: float) -> None:
        self._now += int(duration_ms)
