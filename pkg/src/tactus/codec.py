"""Wire codec for discrete control events.

Packets are either messages (address plus typed arguments) or bundles
(a time tag plus nested packets whose effects land together).  Layout is
big-endian throughout: a message is the padded address string, a padded
type-tag string beginning ',', then the argument payloads; a bundle is
the literal "#bundle\\0", an 8-byte time tag, then each element prefixed
with an int32 byte count.  Every component is padded to a 4-byte
boundary.

Argument types map to Python as: 'i' int, 'f' float (IEEE-754 single),
's' str, 'b' bytes, 't' TimeTag.  Any other type tag is rejected rather
than skipped, since skipping would desynchronize the argument parse.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

from .timetags import IMMEDIATE, TimeTag

BUNDLE_MAGIC = b"#bundle\x00"
_MAX_NESTING = 64

OscArg = "int | float | str | bytes | TimeTag"


class OscError(ValueError):
    """Base class for every codec error."""


class InvalidAddress(OscError):
    """Address is empty, lacks the leading '/', or contains NUL/whitespace."""


class MalformedPacket(OscError):
    """Truncated, misaligned, or otherwise unparseable bytes."""


class UnsupportedTypeTag(OscError):
    """Type tag outside the supported set {i,f,s,b,t}."""


class ArgumentError(OscError):
    """Argument value not representable on the wire."""


class TimeTagOrderViolation(OscError):
    """Nested bundle tagged earlier than its enclosing bundle."""


class TimeTagOrderWarning(UserWarning):
    """Decoded bundle nests a tag earlier than its parent."""


def _check_address(address: str) -> None:
    if not address or not address.startswith("/"):
        raise InvalidAddress(f"address must begin with '/': {address!r}")
    if any(c == "\x00" or c.isspace() for c in address):
        raise InvalidAddress(f"address contains NUL or whitespace: {address!r}")


@dataclass(frozen=True, slots=True)
class OscMessage:
    address: str
    args: tuple = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "args", tuple(self.args))


@dataclass(frozen=True, slots=True)
class OscBundle:
    when: TimeTag = IMMEDIATE
    elements: tuple = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "elements", tuple(self.elements))


OscPacket = OscMessage | OscBundle


def _pad4(data: bytes) -> bytes:
    rem = len(data) % 4
    return data if rem == 0 else data + b"\x00" * (4 - rem)


def _encode_string(s: str) -> bytes:
    if "\x00" in s:
        raise ArgumentError(f"string contains interior NUL: {s!r}")
    try:
        raw = s.encode("utf-8")
    except UnicodeEncodeError as exc:
        raise ArgumentError(f"string not encodable: {s!r}") from exc
    return _pad4(raw + b"\x00")


def _encode_message(msg: OscMessage) -> bytes:
    _check_address(msg.address)
    tags = [","]
    payload = []
    for arg in msg.args:
        if isinstance(arg, TimeTag):
            tags.append("t")
            payload.append(arg.encode())
        elif isinstance(arg, bool) or isinstance(arg, int):
            if not (-(1 << 31) <= arg < (1 << 31)):
                raise ArgumentError(f"int32 out of range: {arg}")
            tags.append("i")
            payload.append(struct.pack(">i", arg))
        elif isinstance(arg, float):
            tags.append("f")
            payload.append(struct.pack(">f", arg))
        elif isinstance(arg, str):
            tags.append("s")
            payload.append(_encode_string(arg))
        elif isinstance(arg, (bytes, bytearray)):
            blob = bytes(arg)
            tags.append("b")
            payload.append(struct.pack(">i", len(blob)) + _pad4(blob))
        else:
            raise ArgumentError(f"unsupported argument type: {type(arg).__name__}")
    return _encode_string(msg.address) + _encode_string("".join(tags)) + b"".join(payload)


def _check_bundle_order(bundle: OscBundle) -> None:
    # The immediate sentinel means "as soon as the parent fires", so it is
    # orderable under any parent; likewise an immediate parent constrains
    # nothing.
    for el in bundle.elements:
        if isinstance(el, OscBundle):
            if (
                not bundle.when.is_immediate
                and not el.when.is_immediate
                and el.when < bundle.when
            ):
                raise TimeTagOrderViolation(
                    f"nested bundle at {el.when!r} precedes parent {bundle.when!r}"
                )
            _check_bundle_order(el)


def _encode_bundle(bundle: OscBundle) -> bytes:
    _check_bundle_order(bundle)
    parts = [BUNDLE_MAGIC, bundle.when.encode()]
    for el in bundle.elements:
        blob = encode_packet(el)
        parts.append(struct.pack(">i", len(blob)))
        parts.append(blob)
    return b"".join(parts)


def encode_packet(packet: OscPacket) -> bytes:
    """Encode a message or bundle; output length is a multiple of 4."""
    if isinstance(packet, OscMessage):
        return _encode_message(packet)
    if isinstance(packet, OscBundle):
        return _encode_bundle(packet)
    raise ArgumentError(f"not a packet: {type(packet).__name__}")


class _Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def remaining(self) -> int:
        return len(self.data) - self.pos

    def take(self, n: int) -> bytes:
        if n < 0 or self.remaining() < n:
            raise MalformedPacket(
                f"need {n} bytes at offset {self.pos}, have {self.remaining()}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def take_string(self) -> str:
        end = self.data.find(b"\x00", self.pos)
        if end < 0:
            raise MalformedPacket(f"unterminated string at offset {self.pos}")
        raw = self.data[self.pos : end]
        padded_end = end + 1 + (-(end + 1 - self.pos) % 4)
        if padded_end > len(self.data):
            raise MalformedPacket(f"string padding overruns packet at offset {end}")
        if self.data[end:padded_end].count(0) != padded_end - end:
            raise MalformedPacket(f"nonzero string padding at offset {end}")
        self.pos = padded_end
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedPacket(f"undecodable string at offset {self.pos}") from exc


def _decode_message(r: _Reader) -> OscMessage:
    address = r.take_string()
    _check_address(address)
    tags = r.take_string()
    if not tags.startswith(","):
        raise MalformedPacket(f"type tag string must begin ',': {tags!r}")
    args = []
    for tag in tags[1:]:
        if tag == "i":
            (v,) = struct.unpack(">i", r.take(4))
            args.append(v)
        elif tag == "f":
            (v,) = struct.unpack(">f", r.take(4))
            args.append(v)
        elif tag == "s":
            s = r.take_string()
            args.append(s)
        elif tag == "b":
            (n,) = struct.unpack(">i", r.take(4))
            if n < 0:
                raise MalformedPacket(f"negative blob length: {n}")
            blob = r.take(n)
            pad = r.take(-n % 4)
            if pad.count(0) != len(pad):
                raise MalformedPacket("nonzero blob padding")
            args.append(blob)
        elif tag == "t":
            args.append(TimeTag.decode(r.take(8)))
        else:
            raise UnsupportedTypeTag(f"unknown type tag {tag!r}")
    return OscMessage(address, tuple(args))


def _decode_bundle(r: _Reader, depth: int) -> OscBundle:
    if depth > _MAX_NESTING:
        raise MalformedPacket(f"bundle nesting exceeds {_MAX_NESTING}")
    r.take(len(BUNDLE_MAGIC))  # caller verified the magic
    when = TimeTag.decode(r.take(8))
    elements = []
    while r.remaining() > 0:
        (size,) = struct.unpack(">i", r.take(4))
        if size < 0 or size % 4 != 0:
            raise MalformedPacket(f"bad bundle element size: {size}")
        sub = _Reader(r.take(size))
        el = _decode_packet(sub, depth + 1)
        if sub.remaining() != 0:
            raise MalformedPacket(f"{sub.remaining()} trailing bytes in bundle element")
        if (
            isinstance(el, OscBundle)
            and not when.is_immediate
            and not el.when.is_immediate
            and el.when < when
        ):
            warnings.warn(
                f"nested bundle at {el.when!r} precedes parent {when!r}",
                TimeTagOrderWarning,
                stacklevel=3,
            )
        elements.append(el)
    return OscBundle(when, tuple(elements))


def _decode_packet(r: _Reader, depth: int) -> OscPacket:
    if r.remaining() == 0:
        raise MalformedPacket("empty packet")
    if r.remaining() % 4 != 0:
        raise MalformedPacket(f"packet length {r.remaining()} not a multiple of 4")
    if r.data[r.pos : r.pos + len(BUNDLE_MAGIC)] == BUNDLE_MAGIC:
        return _decode_bundle(r, depth)
    return _decode_message(r)


def decode_packet(data: bytes) -> OscPacket:
    """Decode one packet; total over arbitrary bytes (raises OscError only)."""
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise MalformedPacket(f"expected bytes, got {type(data).__name__}")
    r = _Reader(bytes(data))
    packet = _decode_packet(r, 0)
    if r.remaining() != 0:
        raise MalformedPacket(f"{r.remaining()} trailing bytes after packet")
    return packet
