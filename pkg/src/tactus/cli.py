"""Command line interface: run, replay, measure, inspect."""

from __future__ import annotations

import argparse
import struct
import sys
from pathlib import Path

from .codec import OscError, decode_packet
from .config import ConfigError, ServerConfig, load_config
from .engine import measure_loopback, measure_network_jitter, replay
from .layout import load_layout
from .session import MalformedSession, load_session, parse_session
from .timetags import TimeTag


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tactus",
        description="Reactive musical control server: gesture in, sound out.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="config file (key value lines)")
        p.add_argument("--listen", help="UDP host:port (default 127.0.0.1:7400)")
        p.add_argument("--ws", type=int, dest="ws_port", help="WebSocket port (default 7401)")
        p.add_argument("--rate", type=int, help="audio rate (default 44100)")
        p.add_argument("--block", type=int, help="frames per block (default 64)")
        p.add_argument("--k", type=int, help="gesture sampling divisor (default 4)")
        p.add_argument("--horizon-ms", type=float, dest="horizon_ms", help="scheduling horizon")
        p.add_argument("--layout", dest="layout_path", help="surface layout file")
        p.add_argument("--out", dest="out_path", help="output WAV path")
        p.add_argument("--record", dest="record_path", help="record gestures to session file")
        p.add_argument("--replay", dest="replay_path", help="replay a session file")
        p.add_argument("--seed", type=int, help="simulation seed")
        p.add_argument("--duration", type=float, dest="duration_s", help="seconds to run")

    p_run = sub.add_parser("run", help="run the live server (or replay offline with --replay)")
    add_common(p_run)

    p_replay = sub.add_parser("replay", help="deterministic offline replay of a session file")
    p_replay.add_argument("session", help="session file")
    add_common(p_replay)

    p_measure = sub.add_parser("measure", help="latency / jitter measurement harnesses")
    p_measure.add_argument(
        "scenario", choices=["loopback-impulse", "network-jitter"]
    )
    add_common(p_measure)
    p_measure.add_argument("--bundles", type=int, default=10_000)
    p_measure.add_argument("--max-delay-ms", type=float, default=5.0)
    p_measure.add_argument("--tick-ms", type=float, default=0.5)
    p_measure.add_argument("--offsets-csv", help="dump per-event offsets")

    p_inspect = sub.add_parser("inspect", help="decode and pretty-print wire/session files")
    p_inspect.add_argument("path")
    p_inspect.add_argument(
        "--kind",
        choices=["auto", "packet", "frames", "session"],
        default="auto",
        help="frames = stream of u32-length-prefixed packets",
    )
    return parser


def config_from_args(args) -> ServerConfig:
    cfg = ServerConfig()
    if getattr(args, "config", None):
        cfg = load_config(args.config, cfg)
    overrides = {}
    for name in (
        "listen",
        "ws_port",
        "rate",
        "block",
        "k",
        "horizon_ms",
        "layout_path",
        "out_path",
        "record_path",
        "replay_path",
        "seed",
        "duration_s",
    ):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    return cfg


def describe_packet(packet, indent: int = 0) -> str:
    from .codec import OscBundle, OscMessage

    pad = "  " * indent
    if isinstance(packet, OscMessage):
        args = " ".join(_show_arg(a) for a in packet.args)
        return f"{pad}message {packet.address}" + (f" [{args}]" if args else "")
    when = "immediate" if packet.when.is_immediate else f"{packet.when.to_seconds():.6f}s"
    lines = [f"{pad}bundle @ {when} ({len(packet.elements)} elements)"]
    for el in packet.elements:
        lines.append(describe_packet(el, indent + 1))
    return "\n".join(lines)


def _show_arg(arg) -> str:
    if isinstance(arg, bytes):
        return f"blob:{arg.hex()}"
    if isinstance(arg, TimeTag):
        return f"timetag:{arg.to_seconds():.6f}"
    if isinstance(arg, float):
        return f"f:{arg!r}"
    if isinstance(arg, str):
        return f"s:{arg}"
    return f"i:{arg}"


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    if cfg.replay_path:
        return cmd_replay_path(cfg.replay_path, cfg)
    from .server import BindFailure, LiveServer

    try:
        server = LiveServer(cfg)
    except (BindFailure, ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"listening: udp {cfg.listen} / ws {cfg.ws_port}; "
        f"rate={cfg.rate} block={cfg.block} k={cfg.k} horizon={cfg.horizon_ms}ms; "
        f"running {cfg.duration_s:g}s"
    )
    written = server.run()
    print(f"scheduler: {server.engine.scheduler.stats.snapshot()}")
    for kind, path in written.items():
        print(f"wrote {kind}: {path}")
    return 0


def cmd_replay_path(session_path: str, cfg: ServerConfig) -> int:
    try:
        records = load_session(session_path)
    except (OSError, MalformedSession) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    layout = load_layout(cfg.layout_path) if cfg.layout_path else None
    result = replay(records, cfg, layout)
    if cfg.out_path:
        from .server import write_wav

        write_wav(cfg.out_path, cfg.rate, result.wav)
        log_path = str(Path(cfg.out_path).with_suffix("")) + ".log"
        Path(log_path).write_text(result.log_text)
        offsets_path = str(Path(cfg.out_path).with_suffix("")) + ".offsets.csv"
        Path(offsets_path).write_text(result.offsets_csv)
        print(f"wrote wav: {cfg.out_path}\nwrote log: {log_path}\nwrote offsets: {offsets_path}")
    else:
        sys.stdout.write(result.log_text)
    print(f"stats: {result.stats}", file=sys.stderr)
    return 0


def cmd_replay(args) -> int:
    cfg = config_from_args(args)
    return cmd_replay_path(args.session, cfg)


def cmd_measure(args) -> int:
    cfg = config_from_args(args)
    if args.scenario == "loopback-impulse":
        report = measure_loopback(cfg)
        print(f"loopback-impulse rate={cfg.rate} block={cfg.block} k={cfg.k}")
        print(report.summary())
        return 0 if report.exact_match else 1
    report = measure_network_jitter(
        cfg,
        n_bundles=args.bundles,
        max_delay_s=args.max_delay_ms / 1000.0,
        tick_s=args.tick_ms / 1000.0,
    )
    print(
        f"network-jitter horizon={cfg.horizon_ms}ms delay=U[0,{args.max_delay_ms}]ms "
        f"tick={args.tick_ms}ms bundles={args.bundles}"
    )
    print(report.summary())
    if args.offsets_csv:
        lines = ["offset_s"] + [f"{o:.9f}" for o in report.offsets]
        Path(args.offsets_csv).write_text("".join(l + "\n" for l in lines))
        print(f"wrote offsets: {args.offsets_csv}")
    return 0


def cmd_inspect(args) -> int:
    path = Path(args.path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    kind = args.kind
    if kind == "auto":
        if data[:1] in (b"/", b"#"):
            kind = "packet"
        else:
            kind = "session"
    if kind == "packet":
        try:
            print(describe_packet(decode_packet(data)))
        except OscError as exc:
            print(f"malformed packet: {exc}", file=sys.stderr)
            return 1
        return 0
    if kind == "frames":
        pos = 0
        index = 0
        status = 0
        while pos + 4 <= len(data):
            (size,) = struct.unpack_from(">I", data, pos)
            pos += 4
            frame = data[pos : pos + size]
            pos += size
            if len(frame) != size:
                print(f"frame {index}: truncated", file=sys.stderr)
                return 1
            try:
                print(f"frame {index}:")
                print(describe_packet(decode_packet(frame), indent=1))
            except OscError as exc:
                print(f"frame {index}: malformed: {exc}", file=sys.stderr)
                status = 1
            index += 1
        if pos != len(data):
            print("trailing bytes after last frame", file=sys.stderr)
            return 1
        return status
    try:
        records = parse_session(data.decode("utf-8"))
    except (UnicodeDecodeError, MalformedSession) as exc:
        print(f"malformed session: {exc}", file=sys.stderr)
        return 1
    for rec in records:
        print(rec.line())
    print(f"{len(records)} records", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "replay":
            return cmd_replay(args)
        if args.command == "measure":
            return cmd_measure(args)
        if args.command == "inspect":
            return cmd_inspect(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
