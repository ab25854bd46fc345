"""Seeded end-to-end transport simulation for jitter measurement.

A sender emits bundles stamped `send_time + horizon`; the network delays
each one by a uniform random amount; the receiver ticks on a fixed grid
and executes whatever is due.  Everything is driven by one seeded
generator, so a run is a pure function of its parameters.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .codec import OscBundle, OscMessage
from .scheduler import Scheduler, SimClock
from .timetags import timetag_from_seconds


@dataclass(frozen=True)
class JitterReport:
    bundles: int
    executed: int
    late: int
    max_offset_s: float
    stddev_offset_s: float
    offsets: tuple[float, ...]

    def summary(self) -> str:
        return (
            f"bundles={self.bundles} executed={self.executed} late={self.late} "
            f"max_offset={self.max_offset_s * 1e3:.4f}ms "
            f"stddev={self.stddev_offset_s * 1e3:.4f}ms"
        )


def run_jitter_simulation(
    n_bundles: int = 10_000,
    horizon_s: float = 0.020,
    max_delay_s: float = 0.005,
    tick_s: float = 0.0005,
    span_s: float = 10.0,
    seed: int = 1,
) -> JitterReport:
    """Send n bundles at seeded-random times and measure execution offsets.

    Each bundle is stamped at its send time plus the horizon, then
    arrives after a delay drawn uniformly from [0, max_delay_s].  The
    receiver shares the sender's clock (clock sync is out of scope) and
    ticks every tick_s seconds.
    """
    rng = random.Random(seed)
    sends = sorted(rng.uniform(0.0, span_s) for _ in range(n_bundles))
    arrivals = []
    for i, t_send in enumerate(sends):
        delay = rng.uniform(0.0, max_delay_s)
        due = timetag_from_seconds(t_send + horizon_s)
        bundle = OscBundle(due, (OscMessage("/sim/ev", (i,)),))
        arrivals.append((t_send + delay, bundle))
    arrivals.sort(key=lambda pair: pair[0])

    clock = SimClock()
    sched = Scheduler(clock)
    n_ticks = int((span_s + horizon_s + max_delay_s) / tick_s) + 2
    next_arrival = 0
    for tick_index in range(1, n_ticks + 1):
        t = tick_index * tick_s
        while next_arrival < len(arrivals) and arrivals[next_arrival][0] <= t:
            t_arr, bundle = arrivals[next_arrival]
            sched.submit(bundle, timetag_from_seconds(t_arr))
            next_arrival += 1
        sched.tick(clock.advance_to(t))

    stats = sched.stats
    return JitterReport(
        bundles=n_bundles,
        executed=stats.executed,
        late=stats.late,
        max_offset_s=stats.max_offset,
        stddev_offset_s=stats.stddev_offset,
        offsets=tuple(stats.offsets),
    )
