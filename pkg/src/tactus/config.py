"""Server configuration: defaults, config file, CLI overrides.

Config files are plain text, one `key value` pair per line with '#'
comments.  Keys mirror the CLI flags:

    rate 44100          # audio frames per second
    block 64            # frames per block (multiple of k)
    k 4                 # gesture sampling divisor
    gesture_bits 16     # 8 | 12 | 16
    horizon_ms 20       # sender-side lookahead
    listen 127.0.0.1:7400
    ws 7401
    layout surface.layout
    out out.wav
    record session.rec
    replay session.rec
    seed 1
    duration 4.0        # seconds to run/replay
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .connectivity import StreamConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ServerConfig:
    rate: int = 44100
    block: int = 64
    k: int = 4
    gesture_bits: int = 16
    horizon_ms: float = 20.0
    listen: str = "127.0.0.1:7400"
    ws_port: int = 7401
    layout_path: str | None = None
    out_path: str | None = None
    record_path: str | None = None
    replay_path: str | None = None
    seed: int = 1
    duration_s: float = 4.0

    def __post_init__(self) -> None:
        if self.block < 1 or self.k < 1 or self.block % self.k != 0:
            raise ConfigError(
                f"block must be a positive multiple of k: block={self.block} k={self.k}"
            )
        if self.horizon_ms < 0:
            raise ConfigError(f"horizon must be >= 0: {self.horizon_ms}")
        if self.duration_s <= 0:
            raise ConfigError(f"duration must be positive: {self.duration_s}")

    @property
    def horizon_s(self) -> float:
        return self.horizon_ms / 1000.0

    @property
    def listen_host(self) -> str:
        return self.listen.rsplit(":", 1)[0]

    @property
    def listen_port(self) -> int:
        try:
            return int(self.listen.rsplit(":", 1)[1])
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"listen must be host:port, got {self.listen!r}") from exc

    def stream_config(self, gesture_channels: int) -> StreamConfig:
        return StreamConfig(
            audio_rate=self.rate,
            block=self.block,
            audio_channels=0,
            gesture_channels=gesture_channels,
            k=self.k,
            gesture_bits=self.gesture_bits,
        )


_KEYS = {
    "rate": ("rate", int),
    "block": ("block", int),
    "k": ("k", int),
    "gesture_bits": ("gesture_bits", int),
    "horizon_ms": ("horizon_ms", float),
    "listen": ("listen", str),
    "ws": ("ws_port", int),
    "layout": ("layout_path", str),
    "out": ("out_path", str),
    "record": ("record_path", str),
    "replay": ("replay_path", str),
    "seed": ("seed", int),
    "duration": ("duration_s", float),
}


def parse_config(text: str, base: ServerConfig | None = None) -> ServerConfig:
    cfg = base or ServerConfig()
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise ConfigError(f"line {lineno}: expected 'key value'")
        key, value = parts
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        field_name, cast = _KEYS[key]
        try:
            updates[field_name] = cast(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    return replace(cfg, **updates)


def load_config(path, base: ServerConfig | None = None) -> ServerConfig:
    with open(path) as fh:
        return parse_config(fh.read(), base)
