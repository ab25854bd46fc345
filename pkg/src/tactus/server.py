"""Live server runtime: UDP + WebSocket ingestion over the block engine.

One timeline thread owns the engine and paces blocks against the wall
clock; transport threads only decode, answer queries, and enqueue into
the scheduler.  A single engine lock keeps query replies consistent
with the running state.

The UDP port accepts both wire packets and raw connectivity datagrams
(magic "CNSM"), distinguished by their first bytes.
"""

from __future__ import annotations

import math
import socket
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .codec import MalformedPacket, OscError, decode_packet, encode_packet
from .config import ServerConfig
from .connectivity import MAGIC, ConnectivityError, Depacketizer
from .engine import Engine
from .layout import Layout, load_layout
from .session import save_session
from .wsbridge import WsServer


class BindFailure(OSError):
    pass


def write_wav(path, rate: int, samples: np.ndarray) -> None:
    wavfile.write(path, rate, samples.astype(np.float32))


def write_outputs(engine: Engine, config: ServerConfig) -> dict:
    written = {}
    if config.out_path:
        write_wav(config.out_path, config.rate, engine.wav())
        written["wav"] = config.out_path
        log_path = str(Path(config.out_path).with_suffix("")) + ".log"
        Path(log_path).write_text(engine.log.text())
        written["log"] = log_path
        offsets_path = str(Path(config.out_path).with_suffix("")) + ".offsets.csv"
        Path(offsets_path).write_text(engine.offsets_csv())
        written["offsets"] = offsets_path
    if config.record_path:
        save_session(engine.recorder, config.record_path)
        written["record"] = config.record_path
    return written


@dataclass
class ServerStats:
    udp_packets: int = 0
    ws_packets: int = 0
    datagram_blocks: int = 0
    decode_errors: int = 0


class LiveServer:
    """Binds transports and runs the engine paced to the wall clock."""

    def __init__(self, config: ServerConfig, layout: Layout | None = None) -> None:
        self.config = config
        if layout is None and config.layout_path:
            layout = load_layout(config.layout_path)
        self.engine = Engine(config, layout)
        self.lock = threading.Lock()
        self.stats = ServerStats()
        self.stop_flag = threading.Event()
        self.started = threading.Event()
        try:
            self.udp = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            self.udp.bind((config.listen_host, config.listen_port))
        except OSError as exc:
            raise BindFailure(f"cannot bind UDP {config.listen}: {exc}") from exc
        self.udp.settimeout(0.2)
        static_dir = None
        for candidate in ("frontend/dist", "frontend"):
            if Path(candidate).is_dir():
                static_dir = candidate
                break
        try:
            self.ws = WsServer(
                config.listen_host, config.ws_port, self._on_ws_packet, static_dir
            )
        except OSError as exc:
            self.udp.close()
            raise BindFailure(f"cannot bind WebSocket port {config.ws_port}: {exc}") from exc
        self._ext_depacketizer = Depacketizer(self.engine.stream_cfg)
        self._udp_thread = threading.Thread(target=self._udp_loop, daemon=True)

    # -- transports ------------------------------------------------------

    def _on_ws_packet(self, payload: bytes, conn) -> None:
        try:
            packet = decode_packet(payload)
        except OscError:
            self.stats.decode_errors += 1
            return
        self.stats.ws_packets += 1

        def reply(msg):
            try:
                conn.send_binary(encode_packet(msg))
            except OSError:
                pass

        with self.lock:
            self.engine.ingest_packet(packet, reply=reply)

    def _udp_loop(self) -> None:
        while not self.stop_flag.is_set():
            try:
                data, addr = self.udp.recvfrom(65536)
            except socket.timeout:
                continue
            except OSError:
                return
            if data[:4] == MAGIC:
                self._ingest_datagram(data)
                continue
            try:
                packet = decode_packet(data)
            except OscError:
                self.stats.decode_errors += 1
                continue
            self.stats.udp_packets += 1

            def reply(msg, _addr=addr):
                try:
                    self.udp.sendto(encode_packet(msg), _addr)
                except OSError:
                    pass

            with self.lock:
                self.engine.ingest_packet(packet, reply=reply)

    def _ingest_datagram(self, data: bytes) -> None:
        try:
            with self.lock:
                for block in self._ext_depacketizer.push(data):
                    self.engine._ingest_gesture_block(block)
                    self.stats.datagram_blocks += 1
        except ConnectivityError:
            self.stats.decode_errors += 1

    # -- timeline ---------------------------------------------------------

    def run(self) -> dict:
        self.ws.start()
        self._udp_thread.start()
        self.started.set()
        block_s = self.config.block / self.config.rate
        # Same block count as an offline replay of the same duration, so a
        # recorded live session replays into an identically shaped log.
        n_blocks = math.ceil(self.config.duration_s * self.config.rate / self.config.block)
        t0 = time.monotonic()
        try:
            for i in range(n_blocks):
                target = t0 + (i + 1) * block_s
                delay = target - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                if self.stop_flag.is_set():
                    break
                with self.lock:
                    self.engine.run_block()
        finally:
            self.shutdown()
        return write_outputs(self.engine, self.config)

    def shutdown(self) -> None:
        self.stop_flag.set()
        self.ws.stop()
        try:
            self.udp.close()
        except OSError:
            pass
