"""Software simulation of the gesture/audio connectivity data path.

Continuous gesture channels are low-pass filtered, sampled every k audio
frames (k an integer divisor of the block size), quantized, and carried
next to the audio so that gesture sample j of a block lines up exactly
with audio frame start_frame + j*k.  Blocks travel one per datagram with
a sequence number; the receiving side reorders within a bounded window
and substitutes silence/held-gesture for losses rather than stalling.

Block payload layout (big-endian), shared with the datagram header:

    header  u32 magic "CNSM" | u32 cfg hash | u32 seq | u64 start_frame
    audio   float32, planar per channel, block frames each
    gesture unsigned gesture_bits samples, planar per channel,
            block/k samples each; 12-bit packs two samples in 3 bytes
    midi    u16 byte count + bytes
    pad     zeros to a 4-byte boundary
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import firwin

MAGIC = b"CNSM"
HEADER = struct.Struct(">4sIIQ")

FILTER_TAPS = 31
FILTER_GROUP_DELAY = 15  # (TAPS - 1) / 2, in audio frames
FILTER_CUTOFF_RATIO = 0.45  # of the gesture rate (audio_rate / k)
_KAISER_BETA = 2.0


class ConnectivityError(ValueError):
    pass


class SizeMismatch(ConnectivityError):
    pass


class MalformedBlock(ConnectivityError):
    pass


class ConfigMismatch(ConnectivityError):
    pass


@dataclass(frozen=True)
class StreamConfig:
    audio_rate: int = 44100
    block: int = 64
    audio_channels: int = 2
    gesture_channels: int = 12
    k: int = 4
    gesture_bits: int = 16
    permissive: bool = False

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConnectivityError(f"k must be >= 1: {self.k}")
        if self.block < 1 or self.block % self.k != 0:
            raise ConnectivityError(
                f"block must be a positive multiple of k: block={self.block} k={self.k}"
            )
        if self.gesture_bits not in (8, 12, 16):
            raise ConnectivityError(f"gesture_bits must be 8, 12, or 16: {self.gesture_bits}")
        if not self.permissive:
            # Caps of the modeled device: 8 audio channels, 32 gesture channels.
            if not (0 <= self.audio_channels <= 8):
                raise ConnectivityError(f"audio_channels > 8: {self.audio_channels}")
            if not (0 <= self.gesture_channels <= 32):
                raise ConnectivityError(f"gesture_channels > 32: {self.gesture_channels}")

    @property
    def gesture_rate(self) -> float:
        return self.audio_rate / self.k

    @property
    def gestures_per_block(self) -> int:
        return self.block // self.k

    def hash(self) -> int:
        packed = struct.pack(
            ">IIHHHH",
            self.audio_rate,
            self.block,
            self.audio_channels,
            self.gesture_channels,
            self.k,
            self.gesture_bits,
        )
        return zlib.crc32(packed) & 0xFFFFFFFF


@dataclass
class GestureBlock:
    start_frame: int
    audio: np.ndarray  # (audio_channels, block) float32
    gestures: np.ndarray  # (gesture_channels, block//k) unsigned ints
    midi: bytes = b""

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, GestureBlock)
            and self.start_frame == other.start_frame
            and np.array_equal(self.audio, other.audio)
            and np.array_equal(self.gestures, other.gestures)
            and self.midi == other.midi
        )


# ---------------------------------------------------------------------------
# Decimation


def design_filter(cfg: StreamConfig) -> np.ndarray:
    """The 31-tap windowed-sinc antialiasing filter, unity gain at DC."""
    if cfg.k == 1:
        cutoff = 2.0 * FILTER_CUTOFF_RATIO  # just below Nyquist
    else:
        cutoff = 2.0 * FILTER_CUTOFF_RATIO / cfg.k
    return firwin(FILTER_TAPS, cutoff, window=("kaiser", _KAISER_BETA))


def quantize(values: np.ndarray, bits: int) -> np.ndarray:
    """Map [0, 1] floats onto unsigned bits-wide integers, clipping."""
    top = (1 << bits) - 1
    scaled = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * top
    return np.rint(scaled).astype(np.uint32)


def dequantize(samples: np.ndarray, bits: int) -> np.ndarray:
    top = (1 << bits) - 1
    return np.asarray(samples, dtype=np.float64) / top


def decimate_gesture(
    signal: np.ndarray, cfg: StreamConfig, antialias: bool = True
) -> np.ndarray:
    """Filter, subsample every k frames, and quantize one gesture channel.

    The filter delays the signal by FILTER_GROUP_DELAY audio frames.
    Output sample j is taken at input frame j*k.  antialias=False is the
    switch-channel path (pen buttons must not ring).
    """
    x = np.asarray(signal, dtype=np.float64)
    if antialias:
        taps = design_filter(cfg)
        x = np.convolve(x, taps)[: len(x)]
    return quantize(x[:: cfg.k], cfg.gesture_bits)


class StreamingDecimator:
    """Block-wise decimate_gesture with filter state carried across blocks.

    Feeding a signal block by block yields exactly the samples that
    decimate_gesture produces on the whole signal at once.
    """

    def __init__(self, cfg: StreamConfig, antialias: bool = True) -> None:
        self.cfg = cfg
        self.antialias = antialias
        self._taps = design_filter(cfg) if antialias else None
        self._tail = np.zeros(FILTER_TAPS - 1) if antialias else None

    def push(self, block: np.ndarray) -> np.ndarray:
        x = np.asarray(block, dtype=np.float64)
        if len(x) % self.cfg.k != 0:
            raise SizeMismatch("block length must be a multiple of k")
        if self.antialias:
            padded = np.concatenate([self._tail, x])
            y = np.convolve(padded, self._taps)[
                FILTER_TAPS - 1 : FILTER_TAPS - 1 + len(x)
            ]
            self._tail = padded[-(FILTER_TAPS - 1) :]
        else:
            y = x
        return quantize(y[:: self.cfg.k], self.cfg.gesture_bits)


def pipeline_delay_frames(cfg: StreamConfig) -> int:
    """Constant timeline delay D of the antialiased gesture path.

    An impulse placed at gesture sampling instant n*k reappears, after
    filtering, subsampling, and quantization, at the instant n*k + D:
    the multiple of k nearest the filter's group delay (earlier of the
    two on a tie, matching first-maximum detection).
    """
    lo = cfg.k * (FILTER_GROUP_DELAY // cfg.k)
    hi = lo + cfg.k if lo != FILTER_GROUP_DELAY else lo
    if hi == lo:
        return lo
    taps = design_filter(cfg)
    q_lo = quantize(np.array([abs(taps[lo])]), cfg.gesture_bits)[0]
    q_hi = quantize(np.array([abs(taps[hi])]), cfg.gesture_bits)[0]
    return lo if q_lo >= q_hi else hi


# ---------------------------------------------------------------------------
# Bit packing for gesture words


def _pack_gestures(samples: np.ndarray, bits: int) -> bytes:
    flat = np.asarray(samples, dtype=np.uint32).ravel()
    if bits == 8:
        return flat.astype(">u1").tobytes()
    if bits == 16:
        return flat.astype(">u2").tobytes()
    # 12-bit: two samples per 3 bytes, big-endian nibble order.
    if len(flat) % 2:
        flat = np.concatenate([flat, [0]])
    out = bytearray()
    for a, b in zip(flat[0::2], flat[1::2]):
        out.append((a >> 4) & 0xFF)
        out.append(((a & 0xF) << 4) | ((b >> 8) & 0xF))
        out.append(b & 0xFF)
    return bytes(out)


def _unpack_gestures(data: bytes, count: int, bits: int) -> np.ndarray:
    if bits == 8:
        return np.frombuffer(data, dtype=">u1", count=count).astype(np.uint32)
    if bits == 16:
        return np.frombuffer(data, dtype=">u2", count=count).astype(np.uint32)
    vals = np.empty((count + 1) // 2 * 2, dtype=np.uint32)
    for i in range(0, len(vals), 2):
        j = i // 2 * 3
        b0, b1, b2 = data[j], data[j + 1], data[j + 2]
        vals[i] = (b0 << 4) | (b1 >> 4)
        vals[i + 1] = ((b1 & 0xF) << 8) | b2
    return vals[:count]


def _packed_gesture_bytes(count: int, bits: int) -> int:
    if bits == 8:
        return count
    if bits == 16:
        return 2 * count
    return (count + 1) // 2 * 3


# ---------------------------------------------------------------------------
# Mux / demux


def mux_block(
    audio: np.ndarray, gestures: np.ndarray, midi: bytes, cfg: StreamConfig
) -> bytes:
    """Serialize one block's audio, gesture, and MIDI payload (no header)."""
    audio = np.asarray(audio, dtype=np.float32)
    gestures = np.asarray(gestures, dtype=np.uint32)
    if audio.shape != (cfg.audio_channels, cfg.block):
        raise SizeMismatch(f"audio shape {audio.shape} != ({cfg.audio_channels}, {cfg.block})")
    if gestures.shape != (cfg.gesture_channels, cfg.gestures_per_block):
        raise SizeMismatch(
            f"gesture shape {gestures.shape} != "
            f"({cfg.gesture_channels}, {cfg.gestures_per_block})"
        )
    if np.any(gestures >> cfg.gesture_bits):
        raise SizeMismatch(f"gesture sample exceeds {cfg.gesture_bits} bits")
    if len(midi) > 0xFFFF:
        raise SizeMismatch(f"MIDI payload too large: {len(midi)}")
    parts = [audio.astype(">f4").tobytes()]
    for ch in gestures:
        parts.append(_pack_gestures(ch, cfg.gesture_bits))
    parts.append(struct.pack(">H", len(midi)))
    parts.append(midi)
    payload = b"".join(parts)
    return payload + b"\x00" * (-len(payload) % 4)


def demux_block(payload: bytes, cfg: StreamConfig) -> tuple[np.ndarray, np.ndarray, bytes]:
    audio_bytes = 4 * cfg.audio_channels * cfg.block
    gch_bytes = _packed_gesture_bytes(cfg.gestures_per_block, cfg.gesture_bits)
    need = audio_bytes + cfg.gesture_channels * gch_bytes + 2
    if len(payload) < need:
        raise MalformedBlock(f"payload of {len(payload)} bytes, need >= {need}")
    audio = (
        np.frombuffer(payload, dtype=">f4", count=cfg.audio_channels * cfg.block)
        .reshape(cfg.audio_channels, cfg.block)
        .astype(np.float32)
    )
    pos = audio_bytes
    rows = []
    for _ in range(cfg.gesture_channels):
        rows.append(
            _unpack_gestures(
                payload[pos : pos + gch_bytes], cfg.gestures_per_block, cfg.gesture_bits
            )
        )
        pos += gch_bytes
    gestures = (
        np.vstack(rows)
        if rows
        else np.zeros((0, cfg.gestures_per_block), dtype=np.uint32)
    )
    (midi_len,) = struct.unpack_from(">H", payload, pos)
    pos += 2
    if pos + midi_len > len(payload):
        raise MalformedBlock("MIDI length overruns payload")
    midi = payload[pos : pos + midi_len]
    pos += midi_len
    tail = payload[pos:]
    if len(tail) >= 4 or any(tail):
        raise MalformedBlock(f"bad padding: {len(tail)} trailing bytes")
    return audio, gestures, midi


# ---------------------------------------------------------------------------
# Packetize / depacketize


def packetize_block(block: GestureBlock, seq: int, cfg: StreamConfig) -> bytes:
    payload = mux_block(block.audio, block.gestures, block.midi, cfg)
    return HEADER.pack(MAGIC, cfg.hash(), seq & 0xFFFFFFFF, block.start_frame) + payload


def packetize(blocks: list[GestureBlock], cfg: StreamConfig, first_seq: int = 0) -> list[bytes]:
    return [packetize_block(b, first_seq + i, cfg) for i, b in enumerate(blocks)]


def parse_datagram(datagram: bytes, cfg: StreamConfig) -> tuple[int, GestureBlock]:
    if len(datagram) < HEADER.size:
        raise MalformedBlock(f"datagram of {len(datagram)} bytes is shorter than header")
    magic, cfg_hash, seq, start_frame = HEADER.unpack_from(datagram)
    if magic != MAGIC:
        raise MalformedBlock(f"bad magic {magic!r}")
    if cfg_hash != cfg.hash():
        raise ConfigMismatch(f"config hash {cfg_hash:#x} != {cfg.hash():#x}")
    audio, gestures, midi = demux_block(datagram[HEADER.size :], cfg)
    return seq, GestureBlock(start_frame, audio, gestures, midi)


@dataclass(frozen=True)
class SequenceGap:
    expected_seq: int
    got_seq: int
    substituted: int


class Depacketizer:
    """Reorders datagrams by sequence number within a bounded window.

    A datagram more than `window` ahead of the expected sequence number
    flushes the hole: missing blocks are substituted (silent audio, held
    gesture values, no MIDI) and reported as gaps.  The stream never
    stalls.
    """

    def __init__(self, cfg: StreamConfig, window: int = 2) -> None:
        self.cfg = cfg
        self.window = window
        self.next_seq = 0
        self.gaps: list[SequenceGap] = []
        self._pending: dict[int, GestureBlock] = {}
        self._last_gestures = np.zeros(
            (cfg.gesture_channels, cfg.gestures_per_block), dtype=np.uint32
        )
        self._frames_per_block = cfg.block

    def _substitute(self, seq: int) -> GestureBlock:
        return GestureBlock(
            start_frame=seq * self._frames_per_block,
            audio=np.zeros((self.cfg.audio_channels, self.cfg.block), dtype=np.float32),
            gestures=self._last_gestures.copy(),
            midi=b"",
        )

    def _drain(self) -> list[GestureBlock]:
        out = []
        while self.next_seq in self._pending:
            block = self._pending.pop(self.next_seq)
            self._last_gestures = block.gestures.copy()
            out.append(block)
            self.next_seq += 1
        return out

    def push(self, datagram: bytes) -> list[GestureBlock]:
        seq, block = parse_datagram(datagram, self.cfg)
        if seq < self.next_seq:
            return []  # stale duplicate
        self._pending[seq] = block
        out = self._drain()
        while self._pending and max(self._pending) - self.next_seq >= self.window:
            self.gaps.append(
                SequenceGap(
                    expected_seq=self.next_seq,
                    got_seq=min(self._pending),
                    substituted=1,
                )
            )
            self._pending[self.next_seq] = self._substitute(self.next_seq)
            out += self._drain()
        return out

    def flush(self) -> list[GestureBlock]:
        """Substitute every remaining hole and return the tail in order."""
        out = []
        while self._pending:
            if self.next_seq not in self._pending:
                self.gaps.append(
                    SequenceGap(
                        expected_seq=self.next_seq,
                        got_seq=min(self._pending),
                        substituted=1,
                    )
                )
                self._pending[self.next_seq] = self._substitute(self.next_seq)
            out += self._drain()
        return out


def depacketize(
    datagrams: list[bytes], cfg: StreamConfig, window: int = 2
) -> tuple[list[GestureBlock], list[SequenceGap]]:
    """Convenience wrapper: feed all datagrams, then flush."""
    dp = Depacketizer(cfg, window)
    blocks: list[GestureBlock] = []
    for d in datagrams:
        blocks += dp.push(d)
    blocks += dp.flush()
    return blocks, dp.gaps


# ---------------------------------------------------------------------------
# Latency model


def model_latency(cfg: StreamConfig, ticks_per_block: int = 1) -> float:
    """Worst-case seconds from gesture to audible output.

    Definitional: one gesture sampling interval (k frames) + one input
    block accumulation + one processing tick + one output buffer block.
    A finer control grid shortens only the processing-tick term.
    """
    if ticks_per_block < 1:
        raise ConnectivityError(f"ticks_per_block must be >= 1: {ticks_per_block}")
    frames = cfg.k + cfg.block + cfg.block / ticks_per_block + cfg.block
    return frames / cfg.audio_rate
