"""Timeline scheduler that trades jitter for latency.

Senders stamp outgoing bundles `now + horizon`; the receiver holds each
bundle until its tag and releases its messages atomically at the first
tick at or after the tag.  With tick period q and horizon covering the
worst transport delay, every release lands within [0, q) of its tag, so
q <= 1 ms keeps timing variation under a millisecond regardless of how
unevenly packets arrive.
"""

from __future__ import annotations

import heapq
import statistics
import threading
from dataclasses import dataclass, field

from .codec import OscBundle, OscMessage
from .timetags import TimeTag, timetag_from_seconds


class SchedulerError(ValueError):
    pass


class NonMonotoneTick(SchedulerError):
    pass


class Clock:
    """Abstract monotone time source."""

    def now(self) -> TimeTag:
        raise NotImplementedError


class SimClock(Clock):
    """Manually advanced clock for tests and offline rendering."""

    def __init__(self, start: float = 0.0) -> None:
        self._now = timetag_from_seconds(start)

    def now(self) -> TimeTag:
        return self._now

    def advance_to(self, t: float) -> TimeTag:
        tt = timetag_from_seconds(t)
        if tt < self._now:
            raise NonMonotoneTick(f"clock moved backwards: {t}")
        self._now = tt
        return tt


class SampleClock(Clock):
    """Clock derived from an audio frame counter."""

    def __init__(self, rate: int) -> None:
        self.rate = rate
        self.frame = 0

    def now(self) -> TimeTag:
        return timetag_from_seconds(self.frame / self.rate)

    def advance_frames(self, n: int) -> None:
        if n < 0:
            raise NonMonotoneTick("frame counter moved backwards")
        self.frame += n


@dataclass(frozen=True)
class DueEvent:
    """One atomically delivered bundle payload."""

    due: TimeTag
    seq: int
    messages: tuple[OscMessage, ...]
    late: bool = False


@dataclass
class SchedulerStats:
    executed: int = 0
    late: int = 0
    offsets: list[float] = field(default_factory=list)

    @property
    def max_offset(self) -> float:
        return max(self.offsets, default=0.0)

    @property
    def stddev_offset(self) -> float:
        if len(self.offsets) < 2:
            return 0.0
        return statistics.pstdev(self.offsets)

    def snapshot(self) -> dict:
        return {
            "executed": self.executed,
            "late": self.late,
            "max_offset_s": self.max_offset,
            "stddev_offset_s": self.stddev_offset,
        }


class Scheduler:
    """Holds time-tagged bundles until due; releases them in (due, seq) order.

    submit() may be called from any thread; tick() belongs to the single
    timeline thread.
    """

    def __init__(self, clock: Clock) -> None:
        self.clock = clock
        self.stats = SchedulerStats()
        self._heap: list[tuple[int, int, DueEvent]] = []
        self._seq = 0
        self._last_tick: TimeTag | None = None
        self._lock = threading.Lock()

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def submit(self, bundle: OscBundle, arrival: TimeTag | None = None) -> None:
        """Queue a bundle; nested bundles are queued on their own tags."""
        if arrival is None:
            arrival = self.clock.now()
        with self._lock:
            self._submit_locked(bundle, arrival)

    def _submit_locked(self, bundle: OscBundle, arrival: TimeTag) -> None:
        messages = []
        for el in bundle.elements:
            if isinstance(el, OscBundle):
                self._submit_locked(el, arrival)
            else:
                messages.append(el)
        when = bundle.when
        late = False
        if when.is_immediate:
            due = arrival
        elif when < arrival:
            due = arrival
            late = True
            self.stats.late += 1
        else:
            due = when
        seq = self._next_seq()
        event = DueEvent(due=due, seq=seq, messages=tuple(messages), late=late)
        heapq.heappush(self._heap, (due.raw, seq, event))

    def submit_messages(
        self, messages: list[OscMessage], when: TimeTag, arrival: TimeTag | None = None
    ) -> None:
        self.submit(OscBundle(when, tuple(messages)), arrival)

    def tick(self, upto: TimeTag) -> list[DueEvent]:
        """Release every pending event with due <= upto, in (due, seq) order."""
        if self._last_tick is not None and upto < self._last_tick:
            raise NonMonotoneTick(f"tick regressed: {upto!r} < {self._last_tick!r}")
        self._last_tick = upto
        released: list[DueEvent] = []
        upto_s = upto.to_seconds()
        with self._lock:
            while self._heap and self._heap[0][0] <= upto.raw:
                _, _, event = heapq.heappop(self._heap)
                released.append(event)
                self.stats.executed += 1
                self.stats.offsets.append(upto_s - event.due.to_seconds())
        return released

    def pending(self) -> int:
        with self._lock:
            return len(self._heap)

    def stamp_outgoing(self, bundle: OscBundle, horizon: float) -> OscBundle:
        """Return the bundle retagged at now + horizon (sender-side stamping)."""
        if horizon < 0:
            raise SchedulerError(f"horizon must be >= 0: {horizon}")
        when = self.clock.now().add_seconds(horizon)
        return OscBundle(when, bundle.elements)
