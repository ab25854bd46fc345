"""Multi-rate synthesis: sinusoidal resynthesis and cyclic note processes.

A sinusoidal model is a frame-indexed set of partial tracks.  Rendering
walks an arbitrary continuous frame-index trajectory tau(t), which is
what makes scrubbing possible: the pen position chooses tau, so playing
"at the right speed" reproduces the source and anything else is a
time-scale manipulation at unchanged pitch.

Generator processes emit events on a repeating beat cycle driven purely
by the sample clock.  Gestures scale their loudness; they never move an
onset, which is the point of the dipping metaphor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPECTRAL_TILT_REF_HZ = 440.0


class SynthError(ValueError):
    pass


class EmptyModel(SynthError):
    pass


class NoSuchProcess(SynthError):
    pass


# ---------------------------------------------------------------------------
# Sinusoidal models


@dataclass(frozen=True)
class Partial:
    partial_id: int
    freq: float
    amp: float
    phase: float = 0.0


@dataclass(frozen=True)
class SinusoidalModel:
    frame_hop: int
    frames: tuple[dict[int, Partial], ...]

    def __post_init__(self) -> None:
        if self.frame_hop < 1:
            raise SynthError(f"frame_hop must be >= 1: {self.frame_hop}")
        for i, frame in enumerate(self.frames):
            for pid, p in frame.items():
                if pid != p.partial_id:
                    raise SynthError(f"frame {i}: key {pid} != partial id {p.partial_id}")
                if p.freq <= 0:
                    raise SynthError(f"frame {i}: non-positive frequency {p.freq}")
                if not (0.0 <= p.amp <= 1.0):
                    raise SynthError(f"frame {i}: amplitude out of [0,1]: {p.amp}")

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def partial_ids(self) -> tuple[int, ...]:
        seen: dict[int, None] = {}
        for frame in self.frames:
            for pid in frame:
                seen.setdefault(pid)
        return tuple(seen)

    def natural_samples(self, rate: int) -> int:
        """Sample count of a unit-rate playback: tau hits n_frames-1 at the end."""
        return (self.n_frames - 1) * self.frame_hop + 1

    def duration_s(self, rate: int) -> float:
        return self.natural_samples(rate) / rate


def model_from_frames(frame_hop: int, frames: list[list[Partial]]) -> SinusoidalModel:
    packed = []
    for frame in frames:
        d = {p.partial_id: p for p in frame}
        if len(d) != len(frame):
            raise SynthError("duplicate partial ids within a frame")
        packed.append(d)
    return SinusoidalModel(frame_hop, tuple(packed))


def save_model(model: SinusoidalModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"sms {model.frame_hop} {model.n_frames}\n")
        for i, frame in enumerate(model.frames):
            for pid in sorted(frame):
                p = frame[pid]
                fh.write(f"{i} {pid} {p.freq!r} {p.amp!r} {p.phase!r}\n")


def load_model(path) -> SinusoidalModel:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3 or header[0] != "sms":
            raise SynthError(f"bad model header in {path}")
        frame_hop, n_frames = int(header[1]), int(header[2])
        frames: list[list[Partial]] = [[] for _ in range(n_frames)]
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cols = line.split()
            if len(cols) != 5:
                raise SynthError(f"{path}:{lineno}: expected 5 columns")
            idx = int(cols[0])
            if not (0 <= idx < n_frames):
                raise SynthError(f"{path}:{lineno}: frame index {idx} out of range")
            frames[idx].append(
                Partial(int(cols[1]), float(cols[2]), float(cols[3]), float(cols[4]))
            )
    return model_from_frames(frame_hop, frames)


def frame_at(model: SinusoidalModel, tau: float) -> dict[int, Partial]:
    """Interpolated frame at continuous index tau, clamped to [0, N-1].

    Partials are matched by id.  A partial present on only one side
    fades to/from zero amplitude while its frequency holds.
    """
    if model.n_frames == 0:
        raise EmptyModel("model has no frames")
    tau = min(max(tau, 0.0), float(model.n_frames - 1))
    lo = int(tau)
    if lo == model.n_frames - 1:
        return dict(model.frames[lo])
    w = tau - lo
    fa, fb = model.frames[lo], model.frames[lo + 1]
    out: dict[int, Partial] = {}
    for pid in fa.keys() | fb.keys():
        a, b = fa.get(pid), fb.get(pid)
        if a is not None and b is not None:
            out[pid] = Partial(
                pid,
                a.freq + w * (b.freq - a.freq),
                a.amp + w * (b.amp - a.amp),
                a.phase,
            )
        elif a is not None:
            out[pid] = Partial(pid, a.freq, a.amp * (1.0 - w), a.phase)
        else:
            out[pid] = Partial(pid, b.freq, b.amp * w, b.phase)
    return out


@dataclass
class _Track:
    """Per-partial arrays over the model's frames, for vectorized rendering."""

    phase0: float
    freqs: np.ndarray
    amps: np.ndarray
    present: np.ndarray


def _tracks(model: SinusoidalModel) -> dict[int, _Track]:
    n = model.n_frames
    tracks: dict[int, _Track] = {}
    for pid in model.partial_ids:
        freqs = np.zeros(n)
        amps = np.zeros(n)
        present = np.zeros(n, dtype=bool)
        phase0 = 0.0
        seen = False
        for i, frame in enumerate(model.frames):
            p = frame.get(pid)
            if p is not None:
                freqs[i], amps[i], present[i] = p.freq, p.amp, True
                if not seen:
                    phase0, seen = p.phase, True
        tracks[pid] = _Track(phase0, freqs, amps, present)
    return tracks


def render_trajectory(
    model: SinusoidalModel,
    taus: np.ndarray,
    rate: int,
    gain: np.ndarray | float = 1.0,
    tilt_db_per_octave: np.ndarray | float = 0.0,
) -> np.ndarray:
    """Additive rendering along a frame-index trajectory.

    Per sample, each partial's frequency and amplitude come from the
    interpolated frame at taus[n]; phase accumulates as 2*pi*f/rate.
    Stored phases seed the oscillators once, at the first sample.  The
    spectral tilt scales each partial by tilt dB per octave around
    440 Hz far field, which is how "spectral shape" is exposed to the pen.
    """
    if model.n_frames == 0:
        raise EmptyModel("model has no frames")
    taus = np.clip(np.asarray(taus, dtype=np.float64), 0.0, model.n_frames - 1)
    n_out = len(taus)
    out = np.zeros(n_out)
    if n_out == 0:
        return out
    if model.n_frames == 1:
        lo = np.zeros(n_out, dtype=np.intp)
        w = np.zeros(n_out)
    else:
        lo = np.minimum(taus.astype(np.intp), model.n_frames - 2)
        w = taus - lo
    hi = np.minimum(lo + 1, model.n_frames - 1)
    for track in _tracks(model).values():
        p_lo, p_hi = track.present[lo], track.present[hi]
        f_lo, f_hi = track.freqs[lo], track.freqs[hi]
        a_lo, a_hi = track.amps[lo], track.amps[hi]
        both = p_lo & p_hi
        freq = np.select(
            [both, p_lo, p_hi],
            [f_lo + w * (f_hi - f_lo), f_lo, f_hi],
            default=0.0,
        )
        amp = np.select(
            [both, p_lo, p_hi],
            [a_lo + w * (a_hi - a_lo), a_lo * (1.0 - w), a_hi * w],
            default=0.0,
        )
        active = p_lo | p_hi
        if not active.any():
            continue
        # Inactive stretches hold the last active frequency so the
        # oscillator idles instead of detuning; amplitude gates it.
        if not active.all():
            idx = np.where(active, np.arange(n_out), -1)
            np.maximum.accumulate(idx, out=idx)
            freq = np.where(idx >= 0, freq[np.maximum(idx, 0)], 0.0)
        phase = track.phase0 + 2.0 * np.pi / rate * (np.cumsum(freq) - freq)
        tilted = amp
        if np.any(np.asarray(tilt_db_per_octave) != 0.0):
            octaves = np.log2(np.maximum(freq, 1e-6) / SPECTRAL_TILT_REF_HZ)
            tilted = amp * 10.0 ** (tilt_db_per_octave * octaves / 20.0)
        out += tilted * np.sin(phase)
    return out * gain


def resynthesize(model: SinusoidalModel, rate: int, duration_s: float) -> np.ndarray:
    """Unit-rate additive resynthesis: tau advances one frame per hop."""
    n = int(round(duration_s * rate))
    taus = np.arange(n, dtype=np.float64) / model.frame_hop
    return render_trajectory(model, taus, rate)


def scrub_taus(
    model: SinusoidalModel, u: np.ndarray, control_rate: float, rate: int, n_out: int
) -> np.ndarray:
    """Map a position signal u in [0,1] at the control rate onto per-sample taus."""
    u = np.asarray(u, dtype=np.float64)
    if len(u) == 0:
        raise SynthError("empty position signal")
    t_out = np.arange(n_out, dtype=np.float64) / rate
    t_ctl = np.arange(len(u), dtype=np.float64) / control_rate
    u_audio = np.interp(t_out, t_ctl, u)
    return u_audio * (model.n_frames - 1)


def render_scrub(
    model: SinusoidalModel,
    u: np.ndarray,
    control_rate: float,
    rate: int,
    gain: np.ndarray | float = 1.0,
    tilt_db_per_octave: np.ndarray | float = 0.0,
    n_out: int | None = None,
) -> np.ndarray:
    """Scrub rendering: the position signal drives the frame index."""
    if model.n_frames == 0:
        raise EmptyModel("model has no frames")
    if n_out is None:
        n_out = int(round(len(np.asarray(u)) * rate / control_rate))
    taus = scrub_taus(model, u, control_rate, rate, n_out)
    return render_trajectory(model, taus, rate, gain, tilt_db_per_octave)


# ---------------------------------------------------------------------------
# Materials


@dataclass(frozen=True)
class Material:
    material_id: str
    partials: tuple[tuple[float, float], ...]  # (freq_hz, amp)
    decay_s: float = 0.15

    def length_samples(self, rate: int) -> int:
        return int(round(4.0 * self.decay_s * rate))

    def render(self, velocity: float, rate: int) -> np.ndarray:
        n = self.length_samples(rate)
        t = np.arange(n, dtype=np.float64) / rate
        env = np.exp(-t / self.decay_s)
        out = np.zeros(n)
        for freq, amp in self.partials:
            out += amp * np.sin(2.0 * np.pi * freq * t)
        return velocity * env * out


def tone_material(material_id: str, freq: float, decay_s: float = 0.15) -> Material:
    # Three harmonics with 1/k amplitudes, scaled to keep |sum| <= ~0.5.
    amps = (0.30, 0.15, 0.075)
    partials = tuple((freq * (i + 1), a) for i, a in enumerate(amps))
    return Material(material_id, partials, decay_s)


_PENTATONIC_SEMITONES = (0, 3, 5, 7, 10)


def default_material_bank(rows: int = 4, cols: int = 4) -> dict[str, Material]:
    """Palette bank m<r><c>: a pentatonic grid climbing from 220 Hz."""
    bank: dict[str, Material] = {}
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            semis = _PENTATONIC_SEMITONES[i % 5] + 12 * (i // 5)
            freq = 220.0 * 2.0 ** (semis / 12.0)
            mid = f"m{r}{c}"
            bank[mid] = tone_material(mid, freq)
    return bank


# ---------------------------------------------------------------------------
# Generator processes


@dataclass(frozen=True)
class CycleEvent:
    phase_beats: float
    material_id: str | None = None
    velocity: float = 1.0


@dataclass
class GeneratorProcess:
    process_id: str
    cycle_length: float  # beats
    tempo: float  # beats per minute
    events: list[CycleEvent] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.cycle_length <= 0 or self.tempo <= 0:
            raise SynthError("cycle_length and tempo must be positive")
        for ev in self.events:
            if not (0.0 <= ev.phase_beats < self.cycle_length):
                raise SynthError(f"event phase {ev.phase_beats} outside cycle")

    @property
    def beat_s(self) -> float:
        return 60.0 / self.tempo

    @property
    def cycle_s(self) -> float:
        return self.cycle_length * self.beat_s


def event_frame(p: GeneratorProcess, cycle_index: int, phase_beats: float, rate: int) -> int:
    """Sample-exact frame of a cycle event; shared by every timing consumer."""
    t = cycle_index * p.cycle_s + phase_beats * p.beat_s
    return int(round(t * rate))


def generator_tick(
    p: GeneratorProcess, from_frame: int, to_frame: int, rate: int
) -> list[tuple[CycleEvent, int]]:
    """Events of the repeating cycle with frames in [from_frame, to_frame).

    Adjacent ranges partition cleanly: each event lands in exactly one
    range because its frame is computed identically every time.
    """
    if from_frame > to_frame:
        raise SynthError("from_frame must be <= to_frame")
    out: list[tuple[CycleEvent, int]] = []
    if from_frame == to_frame or not p.events:
        return out
    m_lo = max(0, math.floor(from_frame / rate / p.cycle_s) - 1)
    m_hi = math.ceil(to_frame / rate / p.cycle_s) + 1
    for m in range(m_lo, m_hi + 1):
        for ev in p.events:
            f = event_frame(p, m, ev.phase_beats, rate)
            if from_frame <= f < to_frame:
                out.append((ev, f))
    out.sort(key=lambda pair: pair[1])
    return out


def cycle_boundaries(
    p: GeneratorProcess, from_frame: int, to_frame: int, rate: int
) -> list[int]:
    """Cycle-start frames in [from_frame, to_frame)."""
    out = []
    m_lo = max(0, math.floor(from_frame / rate / p.cycle_s) - 1)
    m_hi = math.ceil(to_frame / rate / p.cycle_s) + 1
    for m in range(m_lo, m_hi + 1):
        f = event_frame(p, m, 0.0, rate)
        if from_frame <= f < to_frame:
            out.append(f)
    return out


def next_cycle_boundary(
    p: GeneratorProcess, now_frame: int, rate: int, guard_s: float = 0.05
) -> int:
    """First cycle-boundary frame after now, skipping one that is < guard away."""
    m = math.floor(now_frame / rate / p.cycle_s)
    while True:
        f = event_frame(p, m, 0.0, rate)
        if f > now_frame and f - now_frame >= guard_s * rate:
            return f
        m += 1


# ---------------------------------------------------------------------------
# Running process state and mixing


@dataclass
class ActiveNote:
    samples: np.ndarray
    start_frame: int


class ProcessState:
    """One running musical process: a generator or a scrubber.

    gain is the performer-facing volume; changes are ramped linearly
    across each rendered block.  audible means gain > 0.
    """

    def __init__(self, process_id: str, kind: str) -> None:
        if kind not in ("generator", "scrubber", "direct"):
            raise SynthError(f"unknown process kind: {kind}")
        self.process_id = process_id
        self.kind = kind
        self.gain = 0.0  # silent by default
        self._prev_gain = 0.0

    @property
    def audible(self) -> bool:
        return self.gain > 0.0

    def take_gain_ramp(self, n: int) -> np.ndarray:
        ramp = np.linspace(self._prev_gain, self.gain, n, endpoint=False)
        self._prev_gain = self.gain
        return ramp

    def render_block(self, from_frame: int, to_frame: int, rate: int) -> np.ndarray:
        raise NotImplementedError


class GeneratorState(ProcessState):
    def __init__(
        self,
        process: GeneratorProcess,
        materials: dict[str, Material],
        bound_material: str | None = None,
    ) -> None:
        super().__init__(process.process_id, "generator")
        self.process = process
        self.materials = materials
        self.bound_material = bound_material
        self.pending_material: str | None = None
        self.stopped = False
        self._notes: list[ActiveNote] = []

    def bind_material(self, material_id: str) -> None:
        """Queue a material swap; it lands at the next cycle boundary.

        Binding also starts a silent process: dropping material on a
        process is the gesture that brings it in.
        """
        self.pending_material = material_id

    def cycle_position_beats(self, frame: int, rate: int) -> float:
        t = frame / rate
        return (t % self.process.cycle_s) / self.process.beat_s

    def advance(self, from_frame: int, to_frame: int, rate: int) -> list[tuple[CycleEvent, int]]:
        """Emit this range's events and apply pending binds at boundaries.

        Emission depends only on the sample clock; the current gain
        scales the triggered notes' amplitude but never their timing.
        """
        boundaries = cycle_boundaries(self.process, from_frame, to_frame, rate)
        emitted = generator_tick(self.process, from_frame, to_frame, rate)
        bind_at = boundaries[0] if boundaries and self.pending_material else None

        def apply_bind() -> None:
            self.bound_material = self.pending_material
            self.pending_material = None
            if self.gain == 0.0:
                self.gain = 1.0

        for ev, frame in emitted:
            if bind_at is not None and frame >= bind_at:
                apply_bind()
                bind_at = None
            material_id = ev.material_id or self.bound_material
            material = self.materials.get(material_id) if material_id else None
            if material is not None:
                # Velocity-amplitude note; the process gain is applied at
                # mix time, so silent processes keep generating.
                self._notes.append(
                    ActiveNote(material.render(ev.velocity, rate), frame)
                )
        if bind_at is not None:
            apply_bind()
        return emitted

    def render_block(self, from_frame: int, to_frame: int, rate: int) -> np.ndarray:
        n = to_frame - from_frame
        out = np.zeros(n)
        alive = []
        for note in self._notes:
            start = note.start_frame - from_frame
            end = start + len(note.samples)
            if end <= 0:
                continue
            lo = max(start, 0)
            hi = min(end, n)
            if lo < hi:
                out[lo:hi] += note.samples[lo - start : hi - start]
            if end > n:
                alive.append(note)
        self._notes = alive
        return out


class ScrubState(ProcessState):
    """Scrubber: gesture-held position/gain/tilt drive the model per sample."""

    def __init__(self, model: SinusoidalModel, process_id: str) -> None:
        super().__init__(process_id, "scrubber")
        self.model = model
        self.u = 0.0
        self.tilt_db = 0.0
        self._updates: list[tuple[int, float, float, float]] = []

    def set_controls(self, frame: int, u: float, gain: float, tilt_db: float) -> None:
        self._updates.append((frame, u, gain, tilt_db))

    def render_block(self, from_frame: int, to_frame: int, rate: int) -> np.ndarray:
        n = to_frame - from_frame
        taus = np.empty(n)
        tilts = np.empty(n)
        self._updates.sort(key=lambda rec: rec[0])
        pos = 0
        u, tilt = self.u, self.tilt_db
        pending = [rec for rec in self._updates if rec[0] < to_frame]
        self._updates = [rec for rec in self._updates if rec[0] >= to_frame]
        for frame, u_new, gain_new, tilt_new in pending:
            upto = min(max(frame - from_frame, 0), n)
            taus[pos:upto] = u * (self.model.n_frames - 1)
            tilts[pos:upto] = tilt
            pos = upto
            u, tilt = u_new, tilt_new
            self.gain = gain_new
        taus[pos:] = u * (self.model.n_frames - 1)
        tilts[pos:] = tilt
        self.u, self.tilt_db = u, tilt
        return render_trajectory(self.model, taus, rate, 1.0, tilts)


def render_mix(processes: list[ProcessState], from_frame: int, to_frame: int, rate: int) -> np.ndarray:
    """Sum of per-process blocks, each scaled by its ramped gain."""
    n = to_frame - from_frame
    out = np.zeros(n)
    for proc in processes:
        block = proc.render_block(from_frame, to_frame, rate)
        out += block * proc.take_gain_ramp(n)
    return out
