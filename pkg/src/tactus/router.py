"""Hierarchical address space with pattern-matched dispatch.

Registrations are literal paths; wildcards live only in incoming message
addresses.  A pattern matches segment by segment — no wildcard ever
crosses a '/'.  Per-segment syntax: '?' any one character, '*' any run
of characters, '[...]' character class with ranges and leading '!'
negation, '{a,b}' alternation of literal strings, everything else
literal.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field

WILDCARD_CHARS = set("*?[]{}")


class RouterError(ValueError):
    pass


class InvalidAddress(RouterError):
    pass


class DuplicateBinding(RouterError):
    pass


class NoSuchNode(RouterError):
    pass


class PatternParseError(RouterError):
    pass


# ---------------------------------------------------------------------------
# Pattern parsing and matching

# Token kinds: ("lit", str) ("any1", None) ("star", None)
# ("class", (negated, frozenset)) ("alt", tuple[str, ...])


def _parse_class(seg: str, i: int) -> tuple[tuple, int]:
    j = i + 1
    negated = False
    if j < len(seg) and seg[j] == "!":
        negated = True
        j += 1
    chars: set[str] = set()
    while j < len(seg) and seg[j] != "]":
        if j + 2 < len(seg) and seg[j + 1] == "-" and seg[j + 2] != "]":
            lo, hi = seg[j], seg[j + 2]
            # An inverted range is empty rather than an error.
            chars.update(chr(c) for c in range(ord(lo), ord(hi) + 1))
            j += 3
        else:
            chars.add(seg[j])
            j += 1
    if j >= len(seg):
        raise PatternParseError(f"unterminated '[' in segment {seg!r}")
    return ("class", (negated, frozenset(chars))), j + 1


def _parse_alt(seg: str, i: int) -> tuple[tuple, int]:
    j = i + 1
    alts: list[str] = []
    cur: list[str] = []
    while j < len(seg) and seg[j] != "}":
        c = seg[j]
        if c == "{":
            raise PatternParseError(f"nested '{{' in segment {seg!r}")
        if c == ",":
            alts.append("".join(cur))
            cur = []
        else:
            cur.append(c)
        j += 1
    if j >= len(seg):
        raise PatternParseError(f"unterminated '{{' in segment {seg!r}")
    alts.append("".join(cur))
    return ("alt", tuple(alts)), j + 1


def _tokenize_segment(seg: str) -> tuple:
    tokens: list[tuple] = []
    i = 0
    while i < len(seg):
        c = seg[i]
        if c == "?":
            tokens.append(("any1", None))
            i += 1
        elif c == "*":
            tokens.append(("star", None))
            i += 1
        elif c == "[":
            tok, i = _parse_class(seg, i)
            tokens.append(tok)
        elif c == "{":
            tok, i = _parse_alt(seg, i)
            tokens.append(tok)
        elif c in "]}":
            raise PatternParseError(f"unbalanced {c!r} in segment {seg!r}")
        else:
            tokens.append(("lit", c))
            i += 1
    return tuple(tokens)


def _token_regex(tok: tuple) -> str:
    kind, payload = tok
    if kind == "lit":
        return re.escape(payload)
    if kind == "any1":
        return "."
    if kind == "star":
        return ".*"
    if kind == "class":
        negated, chars = payload
        if not chars:
            # Empty class matches nothing; negated empty matches any char.
            return "." if negated else "(?!)"
        body = "".join(re.escape(c) for c in sorted(chars))
        return f"[^{body}]" if negated else f"[{body}]"
    if kind == "alt":
        return "(?:" + "|".join(re.escape(a) for a in payload) + ")"
    raise AssertionError(kind)


class Pattern:
    """A parsed address pattern, compiled to one regex per segment."""

    __slots__ = ("text", "segments", "_regexes")

    def __init__(self, text: str) -> None:
        if not text.startswith("/"):
            raise PatternParseError(f"pattern must begin with '/': {text!r}")
        self.text = text
        self.segments = tuple(_tokenize_segment(s) for s in text[1:].split("/"))
        self._regexes = tuple(
            re.compile("".join(_token_regex(t) for t in seg) + r"\Z", re.DOTALL)
            for seg in self.segments
        )

    def match(self, address: str) -> bool:
        if not address.startswith("/"):
            return False
        parts = address[1:].split("/")
        if len(parts) != len(self._regexes):
            return False
        return all(rx.match(part) for rx, part in zip(self._regexes, parts))


def match_pattern(pattern: str, address: str) -> bool:
    """True iff the pattern matches the literal address, segment-wise."""
    return Pattern(pattern).match(address)


# ---------------------------------------------------------------------------
# Address space


@dataclass
class AddressNode:
    name: str
    children: dict[str, "AddressNode"] = field(default_factory=dict)
    binding: str | None = None
    doc: str = ""
    signature: str = ""


@dataclass(frozen=True)
class QueryReply:
    path: str
    children: tuple[str, ...]
    doc: str
    signature: str


def split_address(address: str) -> list[str]:
    if not address.startswith("/") or len(address) < 2:
        raise InvalidAddress(f"not a usable address: {address!r}")
    parts = address[1:].split("/")
    if any(p == "" for p in parts):
        raise InvalidAddress(f"empty segment in address: {address!r}")
    return parts


class AddressSpace:
    """Registration tree plus dispatch and capability queries.

    Mutations and dispatch serialize on one lock, so a dispatch always
    sees a consistent tree.
    """

    def __init__(self) -> None:
        self._root = AddressNode("")
        self._lock = threading.Lock()
        self.unmatched_count = 0

    def register(
        self,
        path: str,
        binding: str,
        doc: str = "",
        signature: str = "",
        replace: bool = False,
    ) -> None:
        if any(c in WILDCARD_CHARS for c in path):
            raise InvalidAddress(f"wildcards are forbidden in registrations: {path!r}")
        parts = split_address(path)
        with self._lock:
            node = self._root
            for part in parts:
                node = node.children.setdefault(part, AddressNode(part))
            if node.binding is not None and not replace:
                raise DuplicateBinding(f"already bound: {path!r}")
            node.binding = binding
            node.doc = doc
            node.signature = signature

    def unregister(self, path: str) -> None:
        parts = split_address(path)
        with self._lock:
            node = self._root
            for part in parts:
                node = node.children.get(part)
                if node is None:
                    raise NoSuchNode(path)
            node.binding = None

    def dispatch(self, address: str) -> list[str]:
        """All bindings whose literal path the address-as-pattern matches.

        Depth-first order over the registration tree (children in first-
        registration order).  No match is not an error; it bumps the
        unmatched counter.
        """
        pattern = Pattern(address)
        hits: list[str] = []
        with self._lock:
            self._collect(self._root, pattern, 0, hits)
            if not hits:
                self.unmatched_count += 1
        return hits

    def _collect(
        self, node: AddressNode, pattern: Pattern, depth: int, hits: list[str]
    ) -> None:
        if depth == len(pattern._regexes):
            return
        rx = pattern._regexes[depth]
        last = depth == len(pattern._regexes) - 1
        for name, child in node.children.items():
            if rx.match(name):
                if last:
                    if child.binding is not None:
                        hits.append(child.binding)
                else:
                    self._collect(child, pattern, depth + 1, hits)

    def query(self, path: str) -> QueryReply:
        with self._lock:
            node = self._root
            if path != "/":
                for part in split_address(path):
                    node = node.children.get(part)
                    if node is None:
                        raise NoSuchNode(path)
            return QueryReply(
                path=path,
                children=tuple(sorted(node.children)),
                doc=node.doc,
                signature=node.signature,
            )
