import numpy as np
import pytest

from tactus.synth import (
    CycleEvent,
    EmptyModel,
    GeneratorProcess,
    GeneratorState,
    Material,
    Partial,
    ProcessState,
    ScrubState,
    SinusoidalModel,
    SynthError,
    cycle_boundaries,
    default_material_bank,
    event_frame,
    frame_at,
    generator_tick,
    load_model,
    model_from_frames,
    next_cycle_boundary,
    render_mix,
    render_scrub,
    render_trajectory,
    resynthesize,
    save_model,
    tone_material,
)

RATE = 44100


def two_frame_model():
    return model_from_frames(
        512,
        [
            [Partial(1, 440.0, 1.0), Partial(2, 1000.0, 0.8)],
            [Partial(1, 880.0, 0.0)],
        ],
    )


def test_frame_at_midpoint():
    m = two_frame_model()
    f = frame_at(m, 0.5)
    assert f[1].freq == pytest.approx(660.0)
    assert f[1].amp == pytest.approx(0.5)


def test_frame_at_identity_and_clamp():
    m = two_frame_model()
    assert frame_at(m, 0.0)[1] == m.frames[0][1]
    assert frame_at(m, -3.0)[1] == m.frames[0][1]
    assert frame_at(m, 9.0) == dict(m.frames[1])


def test_frame_at_one_sided_fade():
    m = two_frame_model()
    f = frame_at(m, 0.75)
    assert f[2].amp == pytest.approx(0.8 * 0.25)
    assert f[2].freq == pytest.approx(1000.0)  # held frequency


def test_frame_at_empty_model():
    with pytest.raises(EmptyModel):
        frame_at(SinusoidalModel(64, ()), 0.0)


def test_model_validation():
    with pytest.raises(SynthError):
        model_from_frames(64, [[Partial(1, -5.0, 0.5)]])
    with pytest.raises(SynthError):
        model_from_frames(64, [[Partial(1, 440.0, 1.5)]])
    with pytest.raises(SynthError):
        model_from_frames(64, [[Partial(1, 440.0, 0.5), Partial(1, 550.0, 0.5)]])


def test_resynthesize_zero_crossings_440():
    m = model_from_frames(512, [[Partial(1, 440.0, 1.0)]])
    y = resynthesize(m, RATE, 1.0)
    assert len(y) == RATE
    crossings = int(np.sum(np.abs(np.diff(np.signbit(y)))))
    assert 878 <= crossings <= 882
    assert np.max(np.abs(y)) <= 1.0 + 1e-12


def test_resynthesize_zero_amplitude_silent():
    m = model_from_frames(512, [[Partial(1, 440.0, 0.0)], [Partial(1, 880.0, 0.0)]])
    assert not resynthesize(m, RATE, 0.25).any()


def test_two_partials_bounded_by_amp_sum():
    m = model_from_frames(512, [[Partial(1, 300.0, 0.5), Partial(2, 450.0, 0.5)]])
    y = resynthesize(m, RATE, 0.5)
    assert np.max(np.abs(y)) <= 1.0 + 1e-12


def scrubbed_identity_model(n_frames=100, hop=128):
    frames = []
    for i in range(n_frames):
        w = i / (n_frames - 1)
        frames.append(
            [
                Partial(1, 220.0 + 40.0 * w, 0.5),
                Partial(2, 440.0 + 80.0 * w, 0.3 * (1 - w)),
                Partial(3, 880.0, 0.2 * w),
            ]
        )
    return model_from_frames(hop, frames)


def test_scrub_identity_unit_rate():
    m = scrubbed_identity_model()
    n = m.natural_samples(RATE)
    natural = resynthesize(m, RATE, n / RATE)
    # Position ramp at the audio rate whose tau trajectory coincides with
    # the natural one: u[t] = t / (n-1) covers [0, 1] over the same span.
    u = np.arange(n) / (n - 1)
    scrub = render_scrub(m, u, control_rate=RATE, rate=RATE, n_out=n)
    assert len(natural) == len(scrub)
    assert np.max(np.abs(natural - scrub)) <= 1e-6


def test_scrub_frozen_is_steady():
    m = scrubbed_identity_model()
    y = render_scrub(m, np.full(50, 0.5), control_rate=100.0, rate=RATE)
    # steady spectrum: successive 50 ms spectra match after the first
    n = 2048
    a = np.abs(np.fft.rfft(y[4096 : 4096 + n]))
    b = np.abs(np.fft.rfft(y[8192 : 8192 + n]))
    flux = np.linalg.norm(a - b) / np.linalg.norm(a)
    assert flux < 0.01


def test_scrub_reverse_reverses_frames():
    m = scrubbed_identity_model()
    n = m.natural_samples(RATE)
    fwd = np.arange(n) / (n - 1)
    taus_fwd = fwd * (m.n_frames - 1)
    taus_rev = fwd[::-1] * (m.n_frames - 1)
    assert np.allclose(taus_rev, taus_fwd[::-1])
    y = render_scrub(m, fwd[::-1], control_rate=RATE, rate=RATE, n_out=n)
    assert len(y) == n  # renders without error along the reversed trajectory


def test_scrub_gain_and_tilt():
    m = model_from_frames(64, [[Partial(1, 440.0, 0.5)]])
    loud = render_scrub(m, np.zeros(10), 100.0, RATE, gain=1.0)
    quiet = render_scrub(m, np.zeros(10), 100.0, RATE, gain=0.25)
    assert np.allclose(quiet, 0.25 * loud)
    # At the 440 Hz reference, tilt leaves amplitude unchanged.
    tilted = render_scrub(m, np.zeros(10), 100.0, RATE, tilt_db_per_octave=12.0)
    assert np.allclose(tilted, loud)
    m2 = model_from_frames(64, [[Partial(1, 880.0, 0.5)]])
    ref = render_scrub(m2, np.zeros(10), 100.0, RATE)
    boosted = render_scrub(m2, np.zeros(10), 100.0, RATE, tilt_db_per_octave=6.0)
    assert np.max(np.abs(boosted)) == pytest.approx(
        10 ** (6.0 / 20.0) * np.max(np.abs(ref)), rel=1e-6
    )


def test_model_file_roundtrip(tmp_path):
    m = scrubbed_identity_model(n_frames=7, hop=64)
    path = tmp_path / "model.sms"
    save_model(m, path)
    loaded = load_model(path)
    assert loaded.frame_hop == m.frame_hop
    assert loaded.n_frames == m.n_frames
    for fa, fb in zip(loaded.frames, m.frames):
        assert fa == fb
    header = path.read_text().splitlines()[0]
    assert header == "sms 64 7"


def test_load_model_rejects_garbage(tmp_path):
    path = tmp_path / "bad.sms"
    path.write_text("nope 1 2\n")
    with pytest.raises(SynthError):
        load_model(path)


# ---------------------------------------------------------------------------
# Generators


def four_on_floor():
    return GeneratorProcess(
        "P1",
        cycle_length=4.0,
        tempo=120.0,
        events=[CycleEvent(float(b), "m00", 1.0) for b in range(4)],
    )


def test_generator_event_times_120bpm():
    p = four_on_floor()
    events = generator_tick(p, 0, 2 * RATE, RATE)
    times = [f / RATE for _, f in events]
    assert times == pytest.approx([0.0, 0.5, 1.0, 1.5], abs=1e-9)
    nxt = generator_tick(p, 2 * RATE, 4 * RATE, RATE)
    assert [f / RATE for _, f in nxt] == pytest.approx([2.0, 2.5, 3.0, 3.5], abs=1e-9)


def test_generator_empty_range():
    p = four_on_floor()
    assert generator_tick(p, 100, 100, RATE) == []
    assert generator_tick(p, 1000, 2000, RATE) == []


def test_generator_partition_property():
    p = GeneratorProcess(
        "P", 3.0, 97.0, [CycleEvent(0.0), CycleEvent(1.25), CycleEvent(2.5)]
    )
    whole = generator_tick(p, 0, 10 * RATE, RATE)
    import random

    rng = random.Random(4)
    cuts = sorted(rng.sample(range(1, 10 * RATE), 20))
    edges = [0] + cuts + [10 * RATE]
    pieces = []
    for lo, hi in zip(edges, edges[1:]):
        pieces += generator_tick(p, lo, hi, RATE)
    assert pieces == whole


def test_cycle_boundaries_and_next():
    p = GeneratorProcess("P", 4.0, 120.0, [CycleEvent(0.0)])  # 2 s cycle
    bounds = cycle_boundaries(p, 0, 5 * RATE, RATE)
    assert [f / RATE for f in bounds] == pytest.approx([0.0, 2.0, 4.0], abs=1e-9)
    # phase 0.5 s into a 2 s cycle: boundary 1.5 s later
    now = int(0.5 * RATE)
    assert next_cycle_boundary(p, now, RATE) == 2 * RATE
    # 10 ms before a boundary: the 50 ms guard pushes to the next one
    now = 2 * RATE - int(0.010 * RATE)
    assert next_cycle_boundary(p, now, RATE) == 4 * RATE


def test_generator_state_binds_at_boundary():
    bank = default_material_bank()
    state = GeneratorState(four_on_floor(), bank, bound_material=None)
    state.gain = 1.0
    state.bind_material("m01")
    # First advance covers only beats before the next boundary (cycle 0
    # already started): bind waits for the cycle-1 boundary at 2.0 s.
    state.advance(1, RATE, RATE)  # beats 0.5s; boundary frame 0 is behind us
    assert state.bound_material is None
    state.advance(RATE, 3 * RATE, RATE)  # crosses 2.0 s boundary
    assert state.bound_material == "m01"
    assert state.pending_material is None


def test_generator_state_render_notes():
    bank = {"m00": tone_material("m00", 440.0)}
    state = GeneratorState(four_on_floor(), bank, bound_material="m00")
    state.gain = 1.0
    emitted = state.advance(0, RATE, RATE)
    assert [f for _, f in emitted] == [0, int(0.5 * RATE)]
    block = state.render_block(0, 1024, RATE)
    assert np.max(np.abs(block)) > 0.01


def test_render_mix_gains():
    bank = {"m00": tone_material("m00", 440.0)}

    def ready_state(gain):
        s = GeneratorState(four_on_floor(), bank, bound_material="m00")
        s.gain = gain
        s._prev_gain = gain
        s.advance(0, 1024, RATE)
        return s

    silent = render_mix([ready_state(0.0), ready_state(0.0)], 0, 1024, RATE)
    assert not silent.any()
    solo = ready_state(1.0)
    ref = GeneratorState(four_on_floor(), bank, bound_material="m00")
    ref.advance(0, 1024, RATE)
    expected = ref.render_block(0, 1024, RATE)
    assert np.allclose(render_mix([solo], 0, 1024, RATE), expected)


def test_render_mix_ramp_click_free():
    class Dc(ProcessState):
        def __init__(self):
            super().__init__("dc", "generator")

        def render_block(self, a, b, rate):
            return np.ones(b - a)

    proc = Dc()
    proc.gain = 1.0  # step 0 -> 1 at the block boundary
    block = render_mix([proc], 0, 256, RATE)
    assert block[0] == 0.0
    assert np.max(np.abs(np.diff(block))) <= 1.0 / 256 + 1e-12
    nxt = render_mix([proc], 256, 512, RATE)
    assert np.allclose(nxt, 1.0)


def test_scrub_state_held_controls():
    m = scrubbed_identity_model()
    state = ScrubState(m, "S")
    state.set_controls(100, u=0.5, gain=0.8, tilt_db=0.0)
    mixed = render_mix([state], 0, 256, RATE)
    assert mixed[0] == 0.0  # ramp starts at the prior (zero) gain
    assert state.gain == 0.8
    assert state.u == 0.5
    assert mixed[150:].any()
    # With no further messages the controls hold.
    state.render_block(256, 512, RATE)
    assert state.u == 0.5


def test_rendering_deterministic():
    m = scrubbed_identity_model()
    u = np.linspace(0, 1, 500)
    a = render_scrub(m, u, 1000.0, RATE)
    b = render_scrub(m, u, 1000.0, RATE)
    assert np.array_equal(a, b)
