"""Broker clocks. All timestamps are whole seconds.

The logical clock only moves when told to; nothing in the broker runs on
a background timer, so expiry in logical mode is exactly as deterministic
as the test driving it.
"""

from __future__ import annotations

import time

from .errors import BadConfig, StateError

WALL = "Wall"
LOGICAL = "Logical"


class LogicalClock:
    mode = LOGICAL

    def __init__(self, start: int = 0):
        if start < 0:
            raise BadConfig("logical clock cannot start before 0")
        self._now = int(start)

    def now(self) -> int:
        return self._now

    def tick(self, seconds: int) -> int:
        if seconds < 0:
            raise BadConfig("clock cannot move backwards")
        self._now += int(seconds)
        return self._now


class WallClock:
    mode = WALL

    def now(self) -> int:
        return int(time.time())

    def tick(self, seconds: int) -> int:
        raise StateError("wall clock cannot be ticked")
