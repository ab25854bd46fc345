"""64-bit fixed-point time tags.

A tag is an unsigned 32.32 fixed-point count of seconds since the
1900-01-01T00:00:00 epoch: 32 bits of whole seconds plus 32 bits of
binary fraction (resolution 2**-32 s, about 233 ps).  The distinguished
value (seconds=0, fraction=1) means "immediately" and is reserved: time
arithmetic never produces it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import total_ordering

_FRAC_UNITS = 1 << 32  # fraction units per second
_MAX_RAW = (1 << 64) - 1


class TimeTagError(ValueError):
    """Base error for time tag construction and arithmetic."""


class OutOfRange(TimeTagError):
    """Seconds value outside [0, 2**32) or fixed-point overflow."""


@total_ordering
@dataclass(frozen=True, slots=True)
class TimeTag:
    seconds: int
    fraction: int

    def __post_init__(self) -> None:
        if not (0 <= self.seconds < _FRAC_UNITS):
            raise OutOfRange(f"seconds out of range: {self.seconds}")
        if not (0 <= self.fraction < _FRAC_UNITS):
            raise OutOfRange(f"fraction out of range: {self.fraction}")

    # Ordering is lexicographic on (seconds, fraction), which coincides
    # with ordering of the represented real number.
    def __lt__(self, other: "TimeTag") -> bool:
        if not isinstance(other, TimeTag):
            return NotImplemented
        return (self.seconds, self.fraction) < (other.seconds, other.fraction)

    @property
    def is_immediate(self) -> bool:
        return self.seconds == 0 and self.fraction == 1

    @property
    def raw(self) -> int:
        """The tag as a single 64-bit integer (seconds in the high word)."""
        return (self.seconds << 32) | self.fraction

    def encode(self) -> bytes:
        return struct.pack(">II", self.seconds, self.fraction)

    @classmethod
    def decode(cls, data: bytes) -> "TimeTag":
        if len(data) != 8:
            raise OutOfRange(f"time tag needs 8 bytes, got {len(data)}")
        seconds, fraction = struct.unpack(">II", data)
        return cls(seconds, fraction)

    @classmethod
    def from_raw(cls, raw: int) -> "TimeTag":
        if not (0 <= raw <= _MAX_RAW):
            raise OutOfRange(f"raw value out of range: {raw}")
        return cls(raw >> 32, raw & 0xFFFFFFFF)

    def to_seconds(self) -> float:
        """The tag as float seconds since the epoch."""
        # fraction * 2**-32 is exact in binary floating point; the final
        # addition is the only rounding step.
        return self.seconds + self.fraction * 2.0**-32

    def add_seconds(self, delta: float) -> "TimeTag":
        """Offset by a (possibly negative) number of seconds."""
        raw = self.raw + round(delta * _FRAC_UNITS)
        if raw == 1:
            raw = 2  # skip the reserved immediate value
        if not (0 <= raw <= _MAX_RAW):
            raise OutOfRange(f"time tag arithmetic overflow: {raw}")
        return TimeTag.from_raw(raw)

    def __repr__(self) -> str:
        if self.is_immediate:
            return "TimeTag.IMMEDIATE"
        return f"TimeTag({self.seconds}, {self.fraction:#010x})"


IMMEDIATE = TimeTag(0, 1)


def timetag_from_seconds(t: float) -> TimeTag:
    """Build a tag from non-negative float seconds since the epoch.

    Truncates to the 2**-32 s grid, so the round-trip error through
    timetag_to_seconds is at most one fraction unit and the mapping is
    monotone.  A result that would collide with the reserved immediate
    value is nudged one unit later.
    """
    if t < 0 or t >= _FRAC_UNITS:
        raise OutOfRange(f"seconds out of range: {t}")
    # t * 2**32 is exact (power-of-two scaling), so int() gives the true
    # floor of the scaled value.
    raw = int(t * _FRAC_UNITS)
    if raw == 1:
        raw = 2
    return TimeTag.from_raw(raw)


def timetag_to_seconds(tt: TimeTag) -> float:
    return tt.to_seconds()
