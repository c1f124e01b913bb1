"""Discrete-event engine: integer microsecond clock, ordered queue, seeded streams."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np


class SimulationFault(RuntimeError):
    """Raised on a violated kernel precondition (a simulator bug, not a user error)."""


def us(seconds: float) -> int:
    """Convert seconds to the nearest integer microsecond."""
    return int(round(seconds * 1_000_000))


@dataclass(order=True)
class Event:
    fire_time: int
    seq: int
    kind: str = field(compare=False)
    node: Any = field(default=None, compare=False)
    action: Optional[Callable[[], None]] = field(default=None, compare=False, repr=False)


class RngStream:
    """Independent random stream keyed by (seed, stream_id).

    Streams are derived through a numpy SeedSequence spawn key, so adding a
    stream never perturbs the draws of another.
    """

    def __init__(self, seed: int, stream_id: int):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def uniform_int(self, lo: int, hi: int) -> int:
        if lo > hi:
            raise SimulationFault(f"empty draw range [{lo}, {hi}]")
        if lo == hi:
            return lo
        return int(self._gen.integers(lo, hi, endpoint=True))


def draw_uniform_int(stream: RngStream, lo: int, hi: int) -> int:
    return stream.uniform_int(lo, hi)


class Kernel:
    """Event queue ordered by (fire_time, seq) with a monotone clock."""

    def __init__(self, seed: int = 0, trace=None):
        self.seed = seed
        self._now = 0
        self._seq = 0
        self._heap: list[tuple[int, int, Event]] = []
        self._streams: dict[int, RngStream] = {}
        self.scheduled = 0
        self.popped = 0
        self.trace = trace

    def now(self) -> int:
        return self._now

    @property
    def pending(self) -> int:
        return len(self._heap)

    def stream(self, stream_id: int) -> RngStream:
        if stream_id not in self._streams:
            self._streams[stream_id] = RngStream(self.seed, stream_id)
        return self._streams[stream_id]

    def schedule(self, event: Event) -> Event:
        if event.fire_time < self._now:
            raise SimulationFault(
                f"event {event.kind!r} scheduled at {event.fire_time} us, clock is {self._now} us"
            )
        heapq.heappush(self._heap, (event.fire_time, event.seq, event))
        self.scheduled += 1
        return event

    def at(self, fire_time: int, kind: str, action: Callable[[], None], node=None) -> Event:
        """Build an event with the next sequence number and schedule it."""
        ev = Event(int(fire_time), self._seq, kind, node, action)
        self._seq += 1
        return self.schedule(ev)

    def after(self, delay: int, kind: str, action: Callable[[], None], node=None) -> Event:
        return self.at(self._now + int(delay), kind, action, node)

    def next_seq(self) -> int:
        s = self._seq
        self._seq += 1
        return s

    def peek_time(self) -> Optional[int]:
        return self._heap[0][0] if self._heap else None

    def pop_next(self) -> Optional[Event]:
        if not self._heap:
            return None
        ev = heapq.heappop(self._heap)[2]
        self._now = ev.fire_time
        self.popped += 1
        return ev

    def run(self, until: int) -> None:
        """Dispatch every event with fire_time <= until, then park the clock at until."""
        while self._heap and self._heap[0][0] <= until:
            ev = self.pop_next()
            if self.trace is not None:
                node = "" if ev.node is None else ev.node
                self.trace.write(f"{ev.fire_time},{ev.seq},{ev.kind},{node}\n")
            if ev.action is not None:
                ev.action()
        if until > self._now:
            self._now = until
