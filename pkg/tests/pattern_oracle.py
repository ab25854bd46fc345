"""Naive backtracking reference matcher for address patterns.

Deliberately independent of tactus.router: it interprets the pattern
text directly, character by character, with explicit backtracking.
Semantics (shared contract):

- match segment by segment; '/' is never consumed by a wildcard
- '?'  exactly one character
- '*'  any run of zero or more characters
- '[...]' class; leading '!' negates; 'a-b' is an inclusive range
  unless the '-' is first/last or followed by ']'; an inverted range is
  empty; an empty class matches nothing (negated: any one character)
- '{a,b}' alternation of literal strings; empty alternatives allowed;
  no nesting
- unbalanced '[' '{' or stray ']' '}' fails to parse
"""

from __future__ import annotations


class OracleParseError(ValueError):
    pass


def _scan_class(p: str, i: int) -> tuple[set[str], bool, int]:
    j = i + 1
    negated = False
    if j < len(p) and p[j] == "!":
        negated = True
        j += 1
    members: set[str] = set()
    while j < len(p) and p[j] != "]":
        if j + 2 < len(p) and p[j + 1] == "-" and p[j + 2] != "]":
            for code in range(ord(p[j]), ord(p[j + 2]) + 1):
                members.add(chr(code))
            j += 3
        else:
            members.add(p[j])
            j += 1
    if j >= len(p):
        raise OracleParseError(f"unterminated class in {p!r}")
    return members, negated, j + 1


def _scan_alt(p: str, i: int) -> tuple[list[str], int]:
    j = i + 1
    alts: list[str] = []
    cur = ""
    while j < len(p) and p[j] != "}":
        if p[j] == "{":
            raise OracleParseError(f"nested brace in {p!r}")
        if p[j] == ",":
            alts.append(cur)
            cur = ""
        else:
            cur += p[j]
        j += 1
    if j >= len(p):
        raise OracleParseError(f"unterminated brace in {p!r}")
    alts.append(cur)
    return alts, j + 1


def oracle_segment_parses(p: str) -> bool:
    i = 0
    try:
        while i < len(p):
            if p[i] == "[":
                _, _, i = _scan_class(p, i)
            elif p[i] == "{":
                _, i = _scan_alt(p, i)
            elif p[i] in "]}":
                raise OracleParseError(p)
            else:
                i += 1
    except OracleParseError:
        return False
    return True


def oracle_pattern_parses(pattern: str) -> bool:
    if not pattern.startswith("/"):
        return False
    return all(oracle_segment_parses(seg) for seg in pattern[1:].split("/"))


def _match_segment(p: str, s: str, i: int, j: int) -> bool:
    if i == len(p):
        return j == len(s)
    c = p[i]
    if c == "*":
        for split in range(j, len(s) + 1):
            if _match_segment(p, s, i + 1, split):
                return True
        return False
    if c == "?":
        return j < len(s) and _match_segment(p, s, i + 1, j + 1)
    if c == "[":
        members, negated, nxt = _scan_class(p, i)
        if j >= len(s):
            return False
        hit = (s[j] in members) != negated
        return hit and _match_segment(p, s, nxt, j + 1)
    if c == "{":
        alts, nxt = _scan_alt(p, i)
        for alt in alts:
            if s.startswith(alt, j) and _match_segment(p, s, nxt, j + len(alt)):
                return True
        return False
    if c in "]}":
        raise OracleParseError(f"unbalanced {c!r} in {p!r}")
    return j < len(s) and s[j] == c and _match_segment(p, s, i + 1, j + 1)


def oracle_match(pattern: str, address: str) -> bool:
    """Reference matcher; pattern must parse, address is literal."""
    if not pattern.startswith("/") or not address.startswith("/"):
        return False
    psegs = pattern[1:].split("/")
    asegs = address[1:].split("/")
    if len(psegs) != len(asegs):
        return False
    return all(_match_segment(p, s, 0, 0) for p, s in zip(psegs, asegs))
