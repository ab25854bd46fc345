"""Pen gestures to control actions: the mapping metaphors.

Each pen sample is routed by the region under the pen-down point:

- palette grid:   pen-down selects a material and starts a drag
- process region: a drag released here binds the dragged material; a
  circular "delete sign" motion (or an eraser tap) schedules a silence
  at the process's next cycle boundary
- scrub region:   x drives the model time index, pressure the loudness,
  y the spectral tilt
- dip region:     pressure squared drives the process gain; no touch
  means silent
- cycle region:   pen-down places an event at the x-mapped, grid-
  quantized cycle phase
- direct region:  x is pitch, y is loudness, one parameter each — the
  deliberately plain baseline mapping

Actions leave as ordinary wire messages under /proc, /material, and
/direct, so the whole layer is observable on the wire.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .codec import OscMessage
from .layout import Layout, Region
from .synth import GeneratorProcess, next_cycle_boundary
from .timetags import IMMEDIATE, TimeTag, timetag_from_seconds

SILENCER_TURN_RADIANS = 2.0 * math.pi
SILENCER_WINDOW_S = 2.0
SILENCER_MIN_DIAMETER = 0.02
SILENCER_MIN_STEP = 0.004  # path points closer than this are merged
SILENCE_GUARD_S = 0.05

PITCH_BASE_HZ = 110.0
PITCH_OCTAVES = 2.0
LOUDNESS_FLOOR_DB = -60.0


class MapperError(ValueError):
    pass


class NoMaterialSelected(MapperError):
    pass


class NoSuchProcess(MapperError):
    pass


@dataclass(frozen=True)
class PenSample:
    device: int
    x: float
    y: float
    pressure: float
    tilt_x: float = 0.0
    tilt_y: float = 0.0
    inverted: bool = False
    down: bool = False
    t: float = 0.0  # seconds on the sample clock
    frame: int = 0  # audio frame of t

    def __post_init__(self) -> None:
        for name in ("x", "y", "pressure"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise MapperError(f"{name} out of [0,1]: {v}")


@dataclass(frozen=True)
class Action:
    """A control message plus the tag it should execute on."""

    message: OscMessage
    when: TimeTag = IMMEDIATE


# ---------------------------------------------------------------------------
# Pure per-metaphor mappings


def direct_map(sample: PenSample) -> tuple[float, float]:
    """x to pitch over two octaves from 110 Hz, y to loudness in dB."""
    pitch = PITCH_BASE_HZ * 2.0 ** (PITCH_OCTAVES * sample.x)
    loudness = LOUDNESS_FLOOR_DB + (-LOUDNESS_FLOOR_DB) * sample.y
    return pitch, loudness


def scrub_map(sample: PenSample) -> tuple[float, float, float]:
    """(u, gain, tilt dB/octave): position, squared pressure, y-tilt."""
    return sample.x, sample.pressure**2, -12.0 + 24.0 * sample.y


def dip_map(pressures: dict[str, float]) -> dict[str, float]:
    """Per-process gains from per-region pressures; untouched stays 0."""
    for pid, p in pressures.items():
        if not (0.0 <= p <= 1.0):
            raise MapperError(f"pressure out of [0,1] for {pid}: {p}")
    return {pid: p**2 for pid, p in pressures.items()}


def quantize_cycle_phase(x: float, cycle_length: float, grid: float) -> float:
    phase = round(x * cycle_length / grid) * grid
    return phase % cycle_length


def place_cycle_event(
    sample: PenSample,
    process: GeneratorProcess,
    selected_material: str | None,
    grid: float = 0.25,
) -> Action:
    if selected_material is None:
        raise NoMaterialSelected(f"device {sample.device} has no material selected")
    phase = quantize_cycle_phase(sample.x, process.cycle_length, grid)
    return Action(
        OscMessage(
            f"/proc/{process.process_id}/event/add",
            (float(phase), selected_material, float(sample.pressure)),
        )
    )


def turning_angle(points: list[tuple[float, float]]) -> float:
    """Accumulated signed direction change along a polyline, in radians."""
    total = 0.0
    prev_heading = None
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        dx, dy = x1 - x0, y1 - y0
        if dx == 0.0 and dy == 0.0:
            continue
        heading = math.atan2(dy, dx)
        if prev_heading is not None:
            delta = heading - prev_heading
            while delta > math.pi:
                delta -= 2.0 * math.pi
            while delta <= -math.pi:
                delta += 2.0 * math.pi
            total += delta
        prev_heading = heading
    return total


def path_diameter(points: list[tuple[float, float]]) -> float:
    """Bounding-box diagonal; cheap and monotone in true diameter."""
    if not points:
        return 0.0
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    return math.hypot(max(xs) - min(xs), max(ys) - min(ys))


def detect_silencer(points: list[tuple[float, float]]) -> bool:
    """True when the path winds a full turn with a non-degenerate size."""
    if len(points) < 3:
        return False
    if path_diameter(points) < SILENCER_MIN_DIAMETER:
        return False
    return abs(turning_angle(points)) >= SILENCER_TURN_RADIANS


def schedule_silence(
    process: GeneratorProcess, now_frame: int, rate: int
) -> Action:
    """Gain-to-zero tagged at the process's next cycle boundary.

    A boundary closer than the guard interval is skipped for the
    following one, so the stop never lands unplayably soon.
    """
    frame = next_cycle_boundary(process, now_frame, rate, guard_s=SILENCE_GUARD_S)
    return Action(
        OscMessage(f"/proc/{process.process_id}/gain", (0.0,)),
        when=timetag_from_seconds(frame / rate),
    )


# ---------------------------------------------------------------------------
# Per-device state machine


@dataclass
class DeviceState:
    mode: str = "idle"  # idle | dragging | scrubbing | dipping | placing
    drag_material: str | None = None
    selected_material: str | None = None
    target_proc: str | None = None  # dip/scrub binding for the active touch
    down: bool = False
    path: list[tuple[float, float, float]] = field(default_factory=list)  # (t, x, y)
    path_region: str | None = None
    silencer_fired: bool = False

    def reset_touch(self) -> None:
        self.mode = "idle"
        self.drag_material = None
        self.target_proc = None
        self.path.clear()
        self.path_region = None
        self.silencer_fired = False


class MapperState:
    """Session mapper: one DeviceState per device, no cross-device coupling
    except the per-device material selections."""

    def __init__(self, layout: Layout, rate: int) -> None:
        self.layout = layout
        self.rate = rate
        self.devices: dict[int, DeviceState] = {}
        self.rejected_placements = 0

    def device(self, device_id: int) -> DeviceState:
        return self.devices.setdefault(device_id, DeviceState())

    def ingest(self, sample: PenSample) -> list[Action]:
        dev = self.device(sample.device)
        region = self.layout.region_at(sample.x, sample.y)
        actions: list[Action] = []
        went_down = sample.down and not dev.down
        went_up = dev.down and not sample.down
        dev.down = sample.down

        if went_down:
            self._pen_down(dev, sample, region, actions)
        elif sample.down:
            self._pen_move(dev, sample, region, actions)
        elif went_up:
            self._pen_up(dev, sample, region, actions)
        return actions

    # -- transitions --------------------------------------------------

    def _pen_down(
        self, dev: DeviceState, sample: PenSample, region: Region | None, actions: list[Action]
    ) -> None:
        dev.reset_touch()
        if region is None:
            return
        if region.kind == "palette":
            material = region.palette_material(sample.x, sample.y)
            dev.mode = "dragging"
            dev.drag_material = material
            dev.selected_material = material
            actions.append(
                Action(OscMessage("/material/select", (sample.device, material)))
            )
        elif region.kind == "scrub":
            dev.mode = "scrubbing"
            dev.target_proc = region.name
            self._emit_scrub(dev, sample, actions)
        elif region.kind == "dip":
            dev.mode = "dipping"
            dev.target_proc = region.proc
            self._emit_dip(dev, sample, actions)
        elif region.kind == "cycle":
            dev.mode = "placing"
            process = self.layout.processes[region.proc]
            try:
                actions.append(
                    place_cycle_event(sample, process, dev.selected_material, region.grid)
                )
            except NoMaterialSelected:
                self.rejected_placements += 1
        elif region.kind == "process":
            dev.path_region = region.name
            dev.path = [(sample.t, sample.x, sample.y)]
            if sample.inverted:
                # Eraser tap silences without the circling.
                self._emit_silence(region.proc, sample, actions)
                dev.silencer_fired = True
        elif region.kind == "direct":
            self._emit_direct(sample, actions)

    def _pen_move(
        self, dev: DeviceState, sample: PenSample, region: Region | None, actions: list[Action]
    ) -> None:
        if dev.mode == "scrubbing":
            self._emit_scrub(dev, sample, actions)
        elif dev.mode == "dipping":
            self._emit_dip(dev, sample, actions)
        elif dev.path_region is not None and not dev.silencer_fired:
            if region is not None and region.name == dev.path_region:
                self._extend_path(dev, sample)
                points = [(x, y) for _, x, y in dev.path]
                if detect_silencer(points):
                    self._emit_silence(region.proc, sample, actions)
                    dev.silencer_fired = True
        elif dev.mode == "idle" and region is not None and region.kind == "direct":
            self._emit_direct(sample, actions)

    def _pen_up(
        self, dev: DeviceState, sample: PenSample, region: Region | None, actions: list[Action]
    ) -> None:
        if dev.mode == "dragging":
            if region is not None and region.kind == "process":
                actions.append(
                    Action(
                        OscMessage(f"/proc/{region.proc}/bind", (dev.drag_material,))
                    )
                )
        elif dev.mode == "scrubbing":
            actions.append(
                Action(
                    OscMessage(
                        f"/proc/{dev.target_proc}/scrub",
                        (float(sample.x), 0.0, scrub_map(sample)[2]),
                    )
                )
            )
        elif dev.mode == "dipping":
            actions.append(Action(OscMessage(f"/proc/{dev.target_proc}/gain", (0.0,))))
        elif dev.path_region is not None or (
            region is not None and region.kind == "direct"
        ):
            if region is not None and region.kind == "direct":
                actions.append(Action(OscMessage("/direct/off", ())))
        dev.reset_touch()

    # -- emitters ------------------------------------------------------

    def _extend_path(self, dev: DeviceState, sample: PenSample) -> None:
        cutoff = sample.t - SILENCER_WINDOW_S
        dev.path = [p for p in dev.path if p[0] >= cutoff]
        if dev.path:
            _, lx, ly = dev.path[-1]
            if math.hypot(sample.x - lx, sample.y - ly) < SILENCER_MIN_STEP:
                return
        dev.path.append((sample.t, sample.x, sample.y))

    def _emit_scrub(self, dev: DeviceState, sample: PenSample, actions: list[Action]) -> None:
        u, gain, tilt = scrub_map(sample)
        actions.append(
            Action(
                OscMessage(f"/proc/{dev.target_proc}/scrub", (float(u), float(gain), float(tilt)))
            )
        )

    def _emit_dip(self, dev: DeviceState, sample: PenSample, actions: list[Action]) -> None:
        gain = dip_map({dev.target_proc: sample.pressure})[dev.target_proc]
        actions.append(
            Action(OscMessage(f"/proc/{dev.target_proc}/gain", (float(gain),)))
        )

    def _emit_direct(self, sample: PenSample, actions: list[Action]) -> None:
        pitch, loudness = direct_map(sample)
        actions.append(
            Action(OscMessage("/direct/note", (float(pitch), float(loudness))))
        )

    def _emit_silence(self, proc_id: str, sample: PenSample, actions: list[Action]) -> None:
        process = self.layout.processes.get(proc_id)
        if process is None:
            raise NoSuchProcess(proc_id)
        actions.append(schedule_silence(process, sample.frame, self.rate))
