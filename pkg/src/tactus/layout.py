"""Declarative surface layout: regions, processes, materials, models.

Line-oriented text format, '#' comments, whitespace-separated:

    material <id> tone <freq_hz> [<decay_s>]
    process <id> cycle=<beats> tempo=<bpm> [events=<phase>:<material|.>:<vel>,...]
    model <id> <path>
    region <name> <kind> <x0> <y0> <x1> <y1> [key=value ...]

Region kinds and their keys:

    palette  rows=<n> cols=<n> materials=<id,id,...>   (row-major)
    process  proc=<process id>
    scrub    model=<model id>
    dip      proc=<process id>
    cycle    proc=<process id> [grid=<beats>]
    direct

Coordinates are normalized to [0, 1] with y growing upward.  Regions
must not overlap: every point maps to at most one region.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .synth import CycleEvent, GeneratorProcess, Material, tone_material

REGION_KINDS = ("palette", "process", "scrub", "dip", "cycle", "direct")


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.x0 < self.x1 <= 1.0 and 0.0 <= self.y0 < self.y1 <= 1.0):
            raise LayoutError(f"bad rectangle: {self}")

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1

    def overlaps(self, other: "Rect") -> bool:
        return not (
            self.x1 <= other.x0
            or other.x1 <= self.x0
            or self.y1 <= other.y0
            or other.y1 <= self.y0
        )


@dataclass(frozen=True)
class Region:
    name: str
    kind: str
    rect: Rect
    proc: str | None = None
    model: str | None = None
    rows: int = 0
    cols: int = 0
    materials: tuple[str, ...] = ()
    grid: float = 0.25

    def palette_cell(self, x: float, y: float) -> tuple[int, int]:
        """Cell under a point, row 0 at the top of the region."""
        fx = (x - self.rect.x0) / (self.rect.x1 - self.rect.x0)
        fy = (y - self.rect.y0) / (self.rect.y1 - self.rect.y0)
        col = min(int(fx * self.cols), self.cols - 1)
        row = min(int((1.0 - fy) * self.rows), self.rows - 1)
        return row, col

    def palette_material(self, x: float, y: float) -> str:
        row, col = self.palette_cell(x, y)
        return self.materials[row * self.cols + col]


@dataclass
class Layout:
    regions: list[Region] = field(default_factory=list)
    processes: dict[str, GeneratorProcess] = field(default_factory=dict)
    materials: dict[str, Material] = field(default_factory=dict)
    models: dict[str, str] = field(default_factory=dict)  # model id -> file path
    source_text: str = ""

    def region_at(self, x: float, y: float) -> Region | None:
        for region in self.regions:
            if region.rect.contains(x, y):
                return region
        return None

    def validate(self) -> None:
        names = [r.name for r in self.regions]
        if len(set(names)) != len(names):
            raise LayoutError("duplicate region names")
        for i, a in enumerate(self.regions):
            for b in self.regions[i + 1 :]:
                if a.rect.overlaps(b.rect):
                    raise LayoutError(f"regions overlap: {a.name} and {b.name}")
        for r in self.regions:
            if r.kind in ("process", "dip", "cycle") and r.proc not in self.processes:
                raise LayoutError(f"region {r.name}: unknown process {r.proc!r}")
            if r.kind == "scrub" and r.model not in self.models:
                raise LayoutError(f"region {r.name}: unknown model {r.model!r}")
            if r.kind == "palette":
                if r.rows < 1 or r.cols < 1:
                    raise LayoutError(f"region {r.name}: bad palette dimensions")
                if len(r.materials) != r.rows * r.cols:
                    raise LayoutError(
                        f"region {r.name}: palette needs {r.rows * r.cols} materials"
                    )
                for mid in r.materials:
                    if mid not in self.materials:
                        raise LayoutError(f"region {r.name}: unknown material {mid!r}")


def _parse_kv(parts: list[str], lineno: int) -> dict[str, str]:
    out = {}
    for part in parts:
        if "=" not in part:
            raise LayoutError(f"line {lineno}: expected key=value, got {part!r}")
        key, value = part.split("=", 1)
        out[key] = value
    return out


def _parse_events(text: str, lineno: int) -> list[CycleEvent]:
    events = []
    if not text:
        return events
    for item in text.split(","):
        cols = item.split(":")
        if len(cols) != 3:
            raise LayoutError(f"line {lineno}: event must be phase:material:velocity")
        material = None if cols[1] in (".", "") else cols[1]
        events.append(CycleEvent(float(cols[0]), material, float(cols[2])))
    return events


def parse_layout(text: str) -> Layout:
    layout = Layout(source_text=text)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        head = parts[0]
        try:
            if head == "material":
                if len(parts) < 4 or parts[2] != "tone":
                    raise LayoutError(f"line {lineno}: material <id> tone <freq> [decay]")
                decay = float(parts[4]) if len(parts) > 4 else 0.15
                layout.materials[parts[1]] = tone_material(parts[1], float(parts[3]), decay)
            elif head == "process":
                kv = _parse_kv(parts[2:], lineno)
                layout.processes[parts[1]] = GeneratorProcess(
                    parts[1],
                    cycle_length=float(kv["cycle"]),
                    tempo=float(kv["tempo"]),
                    events=_parse_events(kv.get("events", ""), lineno),
                )
            elif head == "model":
                if len(parts) != 3:
                    raise LayoutError(f"line {lineno}: model <id> <path>")
                layout.models[parts[1]] = parts[2]
            elif head == "region":
                if len(parts) < 7:
                    raise LayoutError(f"line {lineno}: region needs name, kind, rect")
                name, kind = parts[1], parts[2]
                if kind not in REGION_KINDS:
                    raise LayoutError(f"line {lineno}: unknown region kind {kind!r}")
                rect = Rect(*(float(v) for v in parts[3:7]))
                kv = _parse_kv(parts[7:], lineno)
                layout.regions.append(
                    Region(
                        name=name,
                        kind=kind,
                        rect=rect,
                        proc=kv.get("proc"),
                        model=kv.get("model"),
                        rows=int(kv.get("rows", 0)),
                        cols=int(kv.get("cols", 0)),
                        materials=tuple(
                            m for m in kv.get("materials", "").split(",") if m
                        ),
                        grid=float(kv.get("grid", 0.25)),
                    )
                )
            else:
                raise LayoutError(f"line {lineno}: unknown directive {head!r}")
        except (ValueError, KeyError) as exc:
            if isinstance(exc, LayoutError):
                raise
            raise LayoutError(f"line {lineno}: {exc}") from exc
    layout.validate()
    return layout


def load_layout(path) -> Layout:
    with open(path) as fh:
        return parse_layout(fh.read())
