"""Gesture session files: line-oriented, diffable, replayable.

One record per line:

    <time_s> <device> <x> <y> <pressure> <tilt_x> <tilt_y> <inverted> <down>

inverted/down are 0/1.  Times are seconds on the session clock and must
be non-decreasing per device.
"""

from __future__ import annotations

from dataclasses import dataclass


class MalformedSession(ValueError):
    pass


@dataclass(frozen=True)
class SessionRecord:
    t: float
    device: int
    x: float
    y: float
    pressure: float
    tilt_x: float = 0.0
    tilt_y: float = 0.0
    inverted: bool = False
    down: bool = False

    def line(self) -> str:
        return (
            f"{self.t!r} {self.device} {self.x!r} {self.y!r} {self.pressure!r} "
            f"{self.tilt_x!r} {self.tilt_y!r} {int(self.inverted)} {int(self.down)}"
        )


def dump_session(records: list[SessionRecord]) -> str:
    return "".join(rec.line() + "\n" for rec in records)


def save_session(records: list[SessionRecord], path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_session(records))


def parse_session(text: str) -> list[SessionRecord]:
    records: list[SessionRecord] = []
    last_t: dict[int, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        cols = line.split()
        if len(cols) != 9:
            raise MalformedSession(f"line {lineno}: expected 9 columns, got {len(cols)}")
        try:
            rec = SessionRecord(
                t=float(cols[0]),
                device=int(cols[1]),
                x=float(cols[2]),
                y=float(cols[3]),
                pressure=float(cols[4]),
                tilt_x=float(cols[5]),
                tilt_y=float(cols[6]),
                inverted=bool(int(cols[7])),
                down=bool(int(cols[8])),
            )
        except ValueError as exc:
            raise MalformedSession(f"line {lineno}: {exc}") from exc
        if rec.t < 0:
            raise MalformedSession(f"line {lineno}: negative time {rec.t}")
        if rec.device in last_t and rec.t < last_t[rec.device]:
            raise MalformedSession(
                f"line {lineno}: time regressed for device {rec.device}"
            )
        last_t[rec.device] = rec.t
        records.append(rec)
    return records


def load_session(path) -> list[SessionRecord]:
    with open(path) as fh:
        return parse_session(fh.read())
