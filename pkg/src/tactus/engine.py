"""The timeline engine: one sample clock driving the whole pipeline.

Per block: release due control bundles, advance the generator processes,
render and mix, then push the block's gesture signals through the
connectivity path (filter, subsample, quantize, mux, datagram, demux)
and feed the reconstructed pen samples to the metaphor mapper, whose
actions are scheduled for the next tick.  Everything is a pure function
of (config, layout, gesture records), so replays are bit-identical.

Gesture channel map, six per device (device d owns channels 6d..6d+5):

    +0 x  +1 y  +2 pressure (zero while up)  +3 tilt_x  +4 tilt_y
    +5 switch flags (eraser), carried without the antialias filter

Tilt radians map linearly from [-pi/2, pi/2] onto [0, 1].  Touch is
recovered from the quantized pressure with hysteresis (down at 0.05, up
at 0.02), so sessions should use firmer pressures than that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codec import OscBundle, OscMessage, OscPacket
from .config import ServerConfig
from .connectivity import (
    Depacketizer,
    GestureBlock,
    StreamingDecimator,
    dequantize,
    model_latency,
    packetize_block,
)
from .layout import Layout, parse_layout
from .mapper import Action, MapperState, PenSample
from .router import AddressSpace, NoSuchNode, RouterError
from .scheduler import Scheduler, SimClock
from .session import SessionRecord
from .simulate import JitterReport, run_jitter_simulation
from .synth import (
    GeneratorState,
    ProcessState,
    ScrubState,
    load_model,
    render_mix,
)
from .timetags import IMMEDIATE, TimeTag, timetag_from_seconds

N_DEVICES = 2
CHANNELS_PER_DEVICE = 6
PRESSURE_DOWN = 0.05
PRESSURE_UP = 0.02
CONTACT_CONFIRM = 8  # gesture samples >= threshold before touch is reported

DEFAULT_LAYOUT = """\
# default surface: 2x2 palette, one drop target, two dip wells,
# a cycle strip, and the single-parameter direct strip
material m00 tone 220.0
material m01 tone 261.63
material m10 tone 293.66
material m11 tone 330.0
process P1 cycle=4 tempo=120 events=0:.:1.0,1:.:0.8,2:.:1.0,3:.:0.8
process PA cycle=2 tempo=120 events=0:m00:1.0,1:m01:0.7
process PB cycle=4 tempo=90 events=0:m10:1.0,2:m11:0.9
region pal palette 0.0 0.5 0.5 1.0 rows=2 cols=2 materials=m00,m01,m10,m11
region drop process 0.5 0.5 1.0 1.0 proc=P1
region dipA dip 0.0 0.25 0.25 0.5 proc=PA
region dipB dip 0.25 0.25 0.5 0.5 proc=PB
region cyc cycle 0.0 0.0 0.5 0.25 proc=P1
region dir direct 0.5 0.0 0.9 0.25
"""


class EngineError(ValueError):
    pass


def format_arg(arg) -> str:
    if isinstance(arg, bytes):
        return "0x" + arg.hex()
    if isinstance(arg, TimeTag):
        return f"t{arg.raw}"
    if isinstance(arg, float):
        return repr(arg)
    if isinstance(arg, str):
        return arg if arg else "''"
    return repr(arg)


@dataclass
class EventLog:
    entries: list[tuple[int, str, tuple]] = field(default_factory=list)

    def add(self, frame: int, message: OscMessage) -> None:
        self.entries.append((frame, message.address, message.args))

    def lines(self) -> list[str]:
        return [
            f"{frame} {address}"
            + ("" if not args else " " + " ".join(format_arg(a) for a in args))
            for frame, address, args in self.entries
        ]

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines())


class GestureTimeline:
    """Zero-order-hold breakpoint store for the analog gesture channels."""

    def __init__(self, n_devices: int = N_DEVICES) -> None:
        self.n_devices = n_devices
        self._pending: list[list[tuple[int, np.ndarray]]] = [[] for _ in range(n_devices)]
        self._value = [np.zeros(CHANNELS_PER_DEVICE) for _ in range(n_devices)]
        self._materialized_to = 0

    @staticmethod
    def channel_vector(
        x: float, y: float, pressure: float, tilt_x: float, tilt_y: float,
        inverted: bool, down: bool,
    ) -> np.ndarray:
        return np.clip(
            [
                x,
                y,
                pressure if down else 0.0,
                (tilt_x + math.pi / 2) / math.pi,
                (tilt_y + math.pi / 2) / math.pi,
                1.0 if inverted else 0.0,
            ],
            0.0,
            1.0,
        )

    def add(self, frame: int, device: int, vec: np.ndarray) -> None:
        if not (0 <= device < self.n_devices):
            raise EngineError(f"device out of range: {device}")
        frame = max(frame, self._materialized_to)
        dev = self._pending[device]
        if dev and frame < dev[-1][0]:
            frame = dev[-1][0]
        dev.append((frame, vec))

    def add_record(self, rec: SessionRecord, rate: int) -> None:
        self.add(
            int(round(rec.t * rate)),
            rec.device,
            self.channel_vector(
                rec.x, rec.y, rec.pressure, rec.tilt_x, rec.tilt_y, rec.inverted, rec.down
            ),
        )

    def materialize(self, f0: int, f1: int) -> np.ndarray:
        """Channel array (n_devices*6, f1-f0); consumes breakpoints < f1."""
        if f0 != self._materialized_to:
            raise EngineError(f"windows must be contiguous: {f0} != {self._materialized_to}")
        n = f1 - f0
        out = np.empty((self.n_devices * CHANNELS_PER_DEVICE, n))
        for d in range(self.n_devices):
            rows = slice(d * CHANNELS_PER_DEVICE, (d + 1) * CHANNELS_PER_DEVICE)
            pending = self._pending[d]
            pos = 0
            taken = 0
            for frame, vec in pending:
                if frame >= f1:
                    break
                offset = max(frame - f0, 0)
                if offset > pos:
                    out[rows, pos:offset] = self._value[d][:, None]
                self._value[d] = vec
                pos = offset
                taken += 1
            out[rows, pos:] = self._value[d][:, None]
            del pending[:taken]
        self._materialized_to = f1
        return out


class PenReconstructor:
    """Quantized channel rows back to pen samples, with touch hysteresis.

    Contact is confirmed only after CONTACT_CONFIRM consecutive samples
    above the down threshold, which rides out the antialiasing filter's
    rise (31 audio frames) so the first reported touch carries settled
    pressure and position; it also debounces release ringing, whose
    transient cannot outlast the confirmation run.
    """

    def __init__(self, device: int) -> None:
        self.device = device
        self.down = False
        self._run = 0

    def sample(self, frame: int, rate: int, values: np.ndarray) -> PenSample:
        x, y, pressure, tilt_x01, tilt_y01, flags = values
        if self.down:
            self.down = pressure > PRESSURE_UP
            if not self.down:
                self._run = 0
        elif pressure >= PRESSURE_DOWN:
            self._run += 1
            if self._run >= CONTACT_CONFIRM:
                self.down = True
        else:
            self._run = 0
        return PenSample(
            device=self.device,
            x=float(x),
            y=float(y),
            pressure=float(pressure) if self.down else 0.0,
            tilt_x=float(tilt_x01) * math.pi - math.pi / 2,
            tilt_y=float(tilt_y01) * math.pi - math.pi / 2,
            inverted=bool(flags > 0.5),
            down=self.down,
            t=frame / rate,
            frame=frame,
        )


class DirectVoice(ProcessState):
    """The deliberately plain one-parameter-per-dimension voice."""

    def __init__(self) -> None:
        super().__init__("direct", "direct")
        self.freq = 440.0
        self._phase = 0.0

    def set_note(self, freq: float, loudness_db: float) -> None:
        self.freq = max(1.0, min(freq, 20000.0))
        self.gain = 10.0 ** (loudness_db / 20.0) if loudness_db > -60.0 else 0.0

    def off(self) -> None:
        self.gain = 0.0

    def render_block(self, from_frame: int, to_frame: int, rate: int) -> np.ndarray:
        n = to_frame - from_frame
        steps = 2.0 * np.pi * self.freq / rate
        phases = self._phase + steps * np.arange(n)
        self._phase = float((self._phase + steps * n) % (2.0 * np.pi))
        return np.sin(phases)


class Engine:
    """Deterministic core shared by run, replay, and the live server."""

    def __init__(self, config: ServerConfig, layout: Layout | None = None) -> None:
        self.config = config
        self.rate = config.rate
        self.block = config.block
        self.layout = layout or parse_layout(DEFAULT_LAYOUT)
        self.stream_cfg = config.stream_config(N_DEVICES * CHANNELS_PER_DEVICE)
        self.clock = SimClock()
        self.scheduler = Scheduler(self.clock)
        self.space = AddressSpace()
        self.log = EventLog()
        self.timeline = GestureTimeline()
        self.recorder: list[SessionRecord] = []
        self.record_enabled = config.record_path is not None
        self.processes: dict[str, ProcessState] = {}
        self.direct = DirectVoice()
        self._handlers: dict[str, object] = {}
        self._reconstructors = [PenReconstructor(d) for d in range(N_DEVICES)]
        self._decimators = [
            StreamingDecimator(
                self.stream_cfg,
                antialias=(ch % CHANNELS_PER_DEVICE) != 5,
            )
            for ch in range(N_DEVICES * CHANNELS_PER_DEVICE)
        ]
        self._depacketizer = Depacketizer(self.stream_cfg)
        self._seq = 0
        self.block_index = 0
        self.wav_blocks: list[np.ndarray] = []
        self._build_processes()
        self.mapper = MapperState(self.layout, self.rate)
        self._register_addresses()

    # -- construction --------------------------------------------------

    def _build_processes(self) -> None:
        for pid, proc in self.layout.processes.items():
            self.processes[pid] = GeneratorState(proc, self.layout.materials)
        for region in self.layout.regions:
            if region.kind == "scrub":
                model = load_model(self.layout.models[region.model])
                self.processes[region.name] = ScrubState(model, region.name)

    def _register_addresses(self) -> None:
        reg = self.space.register
        for pid, state in self.processes.items():
            reg(f"/proc/{pid}/gain", f"/proc/{pid}/gain", "process gain in [0,1]", "f")
            if isinstance(state, GeneratorState):
                reg(f"/proc/{pid}/bind", f"/proc/{pid}/bind", "bind material at next cycle boundary", "s")
                reg(f"/proc/{pid}/event/add", f"/proc/{pid}/event/add", "add cycle event: phase, material, velocity", "fsf")
            if isinstance(state, ScrubState):
                reg(f"/proc/{pid}/scrub", f"/proc/{pid}/scrub", "scrub controls: u, gain, tilt dB/oct", "fff")
        reg("/material/select", "/material/select", "palette selection notification", "is")
        reg("/direct/note", "/direct/note", "direct voice: freq Hz, loudness dB", "ff")
        reg("/direct/off", "/direct/off", "direct voice off", "")
        reg("/gesture/pen", "/gesture/pen", "pen sample: device, x, y, pressure, tilt_x, tilt_y, flags", "ifffffi")
        reg("/sys/query", "/sys/query", "capability query; replies on /sys/reply", "s")
        reg("/sys/reply", "/sys/reply", "query reply: path, children blob, doc, signature", "sbss")
        reg("/sys/scheduler", "/sys/scheduler", "scheduler statistics (query for values)", "")
        reg("/sys/caps", "/sys/caps", "server capabilities (query for values)", "")
        reg("/layout", "/layout", "surface layout (query for source text)", "")

        self._handlers = {
            "/material/select": self._h_noop,
            "/direct/note": self._h_direct_note,
            "/direct/off": self._h_direct_off,
            "/gesture/pen": self._h_gesture_pen,
            "/sys/query": self._h_query_scheduled,
            "/sys/reply": self._h_noop,
            "/sys/scheduler": self._h_noop,
            "/sys/caps": self._h_noop,
            "/layout": self._h_noop,
        }
        for pid, state in self.processes.items():
            self._handlers[f"/proc/{pid}/gain"] = self._make_gain_handler(state)
            if isinstance(state, GeneratorState):
                self._handlers[f"/proc/{pid}/bind"] = self._make_bind_handler(state)
                self._handlers[f"/proc/{pid}/event/add"] = self._make_event_handler(state)
            if isinstance(state, ScrubState):
                self._handlers[f"/proc/{pid}/scrub"] = self._make_scrub_handler(state)

    # -- handlers -------------------------------------------------------

    def _h_noop(self, msg: OscMessage, frame: int) -> None:
        pass

    def _h_direct_note(self, msg: OscMessage, frame: int) -> None:
        freq, loudness = float(msg.args[0]), float(msg.args[1])
        self.direct.set_note(freq, loudness)

    def _h_direct_off(self, msg: OscMessage, frame: int) -> None:
        self.direct.off()

    def _h_gesture_pen(self, msg: OscMessage, frame: int) -> None:
        device, x, y, pressure, tilt_x, tilt_y, flags = msg.args
        down = bool(int(flags) & 1)
        inverted = bool(int(flags) & 2)
        if self.record_enabled:
            self.recorder.append(
                SessionRecord(
                    t=frame / self.rate,
                    device=int(device),
                    x=float(x),
                    y=float(y),
                    pressure=float(pressure),
                    tilt_x=float(tilt_x),
                    tilt_y=float(tilt_y),
                    inverted=inverted,
                    down=down,
                )
            )
        vec = GestureTimeline.channel_vector(
            float(x), float(y), float(pressure), float(tilt_x), float(tilt_y), inverted, down
        )
        self.timeline.add(frame, int(device), vec)

    def _h_query_scheduled(self, msg: OscMessage, frame: int) -> None:
        # Queries answered in-band (no transport origin): log the reply.
        if msg.args and isinstance(msg.args[0], str):
            self.log.add(frame, self.handle_query(msg.args[0]))

    def _make_gain_handler(self, state: ProcessState):
        def handler(msg: OscMessage, frame: int) -> None:
            state.gain = min(max(float(msg.args[0]), 0.0), 1.0)

        return handler

    def _make_bind_handler(self, state: GeneratorState):
        def handler(msg: OscMessage, frame: int) -> None:
            material_id = str(msg.args[0])
            if material_id in self.layout.materials:
                state.bind_material(material_id)

        return handler

    def _make_event_handler(self, state: GeneratorState):
        def handler(msg: OscMessage, frame: int) -> None:
            from .synth import CycleEvent

            phase, material, velocity = msg.args
            phase = float(phase) % state.process.cycle_length
            state.process.events.append(
                CycleEvent(phase, str(material) or None, float(velocity))
            )

        return handler

    def _make_scrub_handler(self, state: ScrubState):
        def handler(msg: OscMessage, frame: int) -> None:
            u, gain, tilt = (float(a) for a in msg.args[:3])
            state.set_controls(frame, min(max(u, 0.0), 1.0), min(max(gain, 0.0), 1.0), tilt)

        return handler

    # -- queries ----------------------------------------------------------

    def caps_text(self) -> str:
        return (
            f"rate={self.rate} block={self.block} k={self.config.k} "
            f"gesture_bits={self.config.gesture_bits} horizon_ms={self.config.horizon_ms:g} "
            f"now={self.clock.now().to_seconds():.6f}"
        )

    def handle_query(self, path: str) -> OscMessage:
        doc_override = None
        if path == "/sys/scheduler":
            s = self.scheduler.stats.snapshot()
            doc_override = (
                f"executed={s['executed']} late={s['late']} "
                f"max_offset_s={s['max_offset_s']:.9f} stddev_offset_s={s['stddev_offset_s']:.9f} "
                f"unmatched={self.space.unmatched_count}"
            )
        elif path == "/sys/caps":
            doc_override = self.caps_text()
        elif path == "/layout":
            doc_override = self.layout.source_text or DEFAULT_LAYOUT
        try:
            reply = self.space.query(path)
        except (NoSuchNode, RouterError):
            return OscMessage("/sys/reply", (path, b"", "error: no such node", ""))
        return OscMessage(
            "/sys/reply",
            (
                path,
                "\n".join(reply.children).encode(),
                doc_override if doc_override is not None else reply.doc,
                reply.signature,
            ),
        )

    # -- packet ingestion -------------------------------------------------

    def ingest_packet(self, packet: OscPacket, arrival: TimeTag | None = None, reply=None) -> None:
        """Entry point for transports and replay.

        /sys/query messages are answered immediately through `reply`;
        everything else rides the scheduler.
        """
        if arrival is None:
            arrival = self.clock.now()
        packet = self._strip_queries(packet, reply)
        if packet is not None:
            if isinstance(packet, OscMessage):
                packet = OscBundle(IMMEDIATE, (packet,))
            self.scheduler.submit(packet, arrival)

    def _strip_queries(self, packet: OscPacket, reply) -> OscPacket | None:
        if isinstance(packet, OscMessage):
            if packet.address == "/sys/query" and packet.args and isinstance(packet.args[0], str):
                answer = self.handle_query(packet.args[0])
                if reply is not None:
                    reply(answer)
                else:
                    self.log.add(self.block_index * self.block, answer)
                return None
            return packet
        elements = tuple(
            el
            for el in (self._strip_queries(e, reply) for e in packet.elements)
            if el is not None
        )
        if not elements:
            return None
        return OscBundle(packet.when, elements)

    # -- the block loop -----------------------------------------------

    def run_block(self) -> None:
        f0 = self.block_index * self.block
        f1 = f0 + self.block

        # 1. release control events due inside this block
        upto = timetag_from_seconds((f1 - 1) / self.rate)
        for event in self.scheduler.tick(upto):
            due_frame = int(round(event.due.to_seconds() * self.rate))
            for msg in event.messages:
                self.log.add(due_frame, msg)
                self._execute(msg, due_frame)

        # 2. generators advance on the sample clock alone
        for state in self.processes.values():
            if isinstance(state, GeneratorState):
                for ev, frame in state.advance(f0, f1, self.rate):
                    self.log.add(
                        frame,
                        OscMessage(
                            f"/proc/{state.process_id}/note",
                            (ev.material_id or state.bound_material or "", ev.velocity),
                        ),
                    )

        # 3. render and mix
        mix = render_mix(
            [*self.processes.values(), self.direct], f0, f1, self.rate
        )
        self.wav_blocks.append(np.clip(mix, -1.0, 1.0).astype(np.float32))

        # 4. push this block's gestures through the connectivity path
        analog = self.timeline.materialize(f0, f1)
        rows = np.vstack([dec.push(analog[ch]) for ch, dec in enumerate(self._decimators)])
        block = GestureBlock(
            start_frame=f0,
            audio=np.zeros((0, self.block), dtype=np.float32),
            gestures=rows,
            midi=b"",
        )
        datagram = packetize_block(block, self._seq, self.stream_cfg)
        self._seq += 1
        for ready in self._depacketizer.push(datagram):
            self._ingest_gesture_block(ready)

        self.block_index += 1
        self.clock.advance_to(f1 / self.rate)

    def _execute(self, msg: OscMessage, frame: int) -> None:
        try:
            targets = self.space.dispatch(msg.address)
        except RouterError:
            return
        for binding in targets:
            handler = self._handlers.get(binding)
            if handler is not None:
                handler(msg, frame)

    def _ingest_gesture_block(self, block: GestureBlock) -> None:
        arrival = timetag_from_seconds((block.start_frame + self.block) / self.rate)
        values = dequantize(block.gestures, self.config.gesture_bits)
        for j in range(self.stream_cfg.gestures_per_block):
            frame = block.start_frame + j * self.config.k
            for d in range(N_DEVICES):
                rows = slice(d * CHANNELS_PER_DEVICE, (d + 1) * CHANNELS_PER_DEVICE)
                sample = self._reconstructors[d].sample(frame, self.rate, values[rows, j])
                for action in self.mapper.ingest(sample):
                    self.scheduler.submit(
                        OscBundle(action.when, (action.message,)), arrival
                    )

    # -- offline drivers ------------------------------------------------

    def submit_session(self, records: list[SessionRecord]) -> None:
        """Schedule session records as time-tagged gesture bundles."""
        origin = timetag_from_seconds(0.0)
        for rec in records:
            flags = (1 if rec.down else 0) | (2 if rec.inverted else 0)
            msg = OscMessage(
                "/gesture/pen",
                (
                    rec.device,
                    float(rec.x),
                    float(rec.y),
                    float(rec.pressure),
                    float(rec.tilt_x),
                    float(rec.tilt_y),
                    flags,
                ),
            )
            self.scheduler.submit(OscBundle(timetag_from_seconds(rec.t), (msg,)), origin)

    def run_blocks(self, duration_s: float) -> None:
        n_blocks = math.ceil(duration_s * self.rate / self.block)
        for _ in range(n_blocks):
            self.run_block()

    def wav(self) -> np.ndarray:
        if not self.wav_blocks:
            return np.zeros(0, dtype=np.float32)
        return np.concatenate(self.wav_blocks)

    def offsets_csv(self) -> str:
        lines = ["offset_s"]
        lines += [f"{off:.9f}" for off in self.scheduler.stats.offsets]
        return "".join(line + "\n" for line in lines)


# ---------------------------------------------------------------------------
# Replay and measurement entry points


@dataclass(frozen=True)
class ReplayResult:
    wav: np.ndarray
    log_text: str
    offsets_csv: str
    stats: dict
    records: list[SessionRecord]


def replay(records: list[SessionRecord], config: ServerConfig, layout: Layout | None = None) -> ReplayResult:
    engine = Engine(config, layout)
    engine.submit_session(records)
    tail = max((rec.t for rec in records), default=0.0)
    duration = max(config.duration_s, tail + 0.5)
    engine.run_blocks(duration)
    return ReplayResult(
        wav=engine.wav(),
        log_text=engine.log.text(),
        offsets_csv=engine.offsets_csv(),
        stats={
            **engine.scheduler.stats.snapshot(),
            "unmatched": engine.space.unmatched_count,
            "blocks": engine.block_index,
        },
        records=records,
    )


@dataclass(frozen=True)
class LoopbackReport:
    event_frame: int
    first_audible_frame: int
    measured_s: float
    model_s: float

    @property
    def exact_match(self) -> bool:
        return self.measured_s == self.model_s

    @property
    def meets_10ms(self) -> bool:
        return self.measured_s <= 0.010

    @property
    def meets_7ms(self) -> bool:
        return self.measured_s <= 0.007

    def summary(self) -> str:
        return (
            f"measured={self.measured_s * 1e3:.4f}ms model={self.model_s * 1e3:.4f}ms "
            f"exact={self.exact_match} <=7ms={self.meets_7ms} <=10ms={self.meets_10ms}"
        )


def measure_loopback(config: ServerConfig) -> LoopbackReport:
    """Impulse-to-audio latency through the canonical staged pipeline.

    Worst-case alignment: the gesture event lands just after sampling
    instant block-k, so it waits a full gesture interval, a full input
    block, one processing tick, and one output-buffer block.  The
    measurement walks real staged buffers; the latency model predicts it.
    """
    B, k, rate = config.block, config.k, config.rate
    event_frame = B - k
    n_blocks = 8
    total = n_blocks * B

    # Switch-channel gesture signal: steps to 1 just after the event.
    signal = np.zeros(total)
    signal[event_frame + 1 :] = 1.0
    instants = np.arange(0, total, k)
    captures = signal[instants]  # gesture samples at j*k

    wav = np.zeros(total + 3 * B)
    for t in range(n_blocks):
        # Input blocks completed at or before t*B hold captures below t*B.
        known = captures[instants < t * B]
        latest = known[-1] if len(known) else 0.0
        content = np.full(B, latest)
        # Rendered during tick t, ready at (t+1)B, played after the
        # block ahead of it drains: frames [(t+2)B, (t+3)B).
        wav[(t + 2) * B : (t + 3) * B] = content

    nonzero = np.nonzero(wav)[0]
    first = int(nonzero[0]) if len(nonzero) else -1
    measured = (first - event_frame) / rate
    model = model_latency(config.stream_config(1))
    return LoopbackReport(
        event_frame=event_frame,
        first_audible_frame=first,
        measured_s=measured,
        model_s=model,
    )


def measure_network_jitter(
    config: ServerConfig,
    n_bundles: int = 10_000,
    max_delay_s: float = 0.005,
    tick_s: float = 0.0005,
) -> JitterReport:
    return run_jitter_simulation(
        n_bundles=n_bundles,
        horizon_s=config.horizon_s,
        max_delay_s=max_delay_s,
        tick_s=tick_s,
        seed=config.seed,
    )
