"""Minimal WebSocket bridge: one wire packet per binary frame.

Implements just enough of RFC 6455 for the virtual tablet: the HTTP
upgrade handshake, masked client frames, binary/ping/pong/close
opcodes, and unmasked server frames.  Non-upgrade GET requests are
answered from a static directory so the surface page can be served
straight off the bridge port.
"""

from __future__ import annotations

import base64
import hashlib
import socket
import struct
import threading
from pathlib import Path

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
}


class WsError(OSError):
    pass


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise WsError("peer closed")
        buf += chunk
    return buf


def read_frame(sock: socket.socket) -> tuple[int, bytes, bool]:
    """Return (opcode, payload, fin); raises WsError on close/teardown."""
    head = _recv_exact(sock, 2)
    fin = bool(head[0] & 0x80)
    opcode = head[0] & 0x0F
    masked = bool(head[1] & 0x80)
    length = head[1] & 0x7F
    if length == 126:
        (length,) = struct.unpack(">H", _recv_exact(sock, 2))
    elif length == 127:
        (length,) = struct.unpack(">Q", _recv_exact(sock, 8))
    mask = _recv_exact(sock, 4) if masked else b""
    payload = _recv_exact(sock, length) if length else b""
    if masked:
        payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    return opcode, payload, fin


def write_frame(sock: socket.socket, opcode: int, payload: bytes) -> None:
    head = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head += bytes([n])
    elif n < 1 << 16:
        head += bytes([126]) + struct.pack(">H", n)
    else:
        head += bytes([127]) + struct.pack(">Q", n)
    sock.sendall(head + payload)


class WsConnection:
    def __init__(self, sock: socket.socket, addr) -> None:
        self.sock = sock
        self.addr = addr
        self._send_lock = threading.Lock()
        self.open = True

    def send_binary(self, payload: bytes) -> None:
        with self._send_lock:
            if self.open:
                write_frame(self.sock, 0x2, payload)

    def close(self) -> None:
        with self._send_lock:
            if self.open:
                self.open = False
                try:
                    write_frame(self.sock, 0x8, b"")
                except OSError:
                    pass
                self.sock.close()


class WsServer:
    """Accepts upgrade requests and hands binary frames to on_packet.

    on_packet(payload: bytes, connection: WsConnection) runs on the
    connection's reader thread.
    """

    def __init__(
        self,
        host: str,
        port: int,
        on_packet,
        static_dir: str | None = None,
    ) -> None:
        self.on_packet = on_packet
        self.static_dir = Path(static_dir) if static_dir else None
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(8)
        self.port = self._listener.getsockname()[1]
        self.connections: list[WsConnection] = []
        self._lock = threading.Lock()
        self._running = True
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)

    def start(self) -> None:
        self._thread.start()

    def stop(self) -> None:
        self._running = False
        try:
            self._listener.close()
        except OSError:
            pass
        with self._lock:
            conns = list(self.connections)
        for conn in conns:
            conn.close()

    def broadcast(self, payload: bytes) -> None:
        with self._lock:
            conns = list(self.connections)
        for conn in conns:
            try:
                conn.send_binary(payload)
            except OSError:
                conn.close()

    # -- internals ------------------------------------------------------

    def _accept_loop(self) -> None:
        while self._running:
            try:
                sock, addr = self._listener.accept()
            except OSError:
                return
            threading.Thread(
                target=self._serve_client, args=(sock, addr), daemon=True
            ).start()

    def _serve_client(self, sock: socket.socket, addr) -> None:
        try:
            request = self._read_request(sock)
        except OSError:
            sock.close()
            return
        headers = {}
        lines = request.split("\r\n")
        for line in lines[1:]:
            if ":" in line:
                key, value = line.split(":", 1)
                headers[key.strip().lower()] = value.strip()
        if headers.get("upgrade", "").lower() != "websocket":
            self._serve_static(sock, lines[0] if lines else "")
            return
        key = headers.get("sec-websocket-key", "")
        accept = base64.b64encode(
            hashlib.sha1((key + WS_GUID).encode()).digest()
        ).decode()
        sock.sendall(
            (
                "HTTP/1.1 101 Switching Protocols\r\n"
                "Upgrade: websocket\r\n"
                "Connection: Upgrade\r\n"
                f"Sec-WebSocket-Accept: {accept}\r\n\r\n"
            ).encode()
        )
        conn = WsConnection(sock, addr)
        with self._lock:
            self.connections.append(conn)
        try:
            self._frame_loop(conn)
        except (WsError, OSError):
            pass
        finally:
            with self._lock:
                if conn in self.connections:
                    self.connections.remove(conn)
            conn.close()

    def _read_request(self, sock: socket.socket) -> str:
        data = b""
        while b"\r\n\r\n" not in data:
            chunk = sock.recv(4096)
            if not chunk:
                raise WsError("peer closed during handshake")
            data += chunk
            if len(data) > 65536:
                raise WsError("oversized handshake")
        return data.split(b"\r\n\r\n", 1)[0].decode("latin-1")

    def _frame_loop(self, conn: WsConnection) -> None:
        fragments: list[bytes] = []
        frag_opcode = 0
        while conn.open:
            opcode, payload, fin = read_frame(conn.sock)
            if opcode == 0x8:  # close
                conn.close()
                return
            if opcode == 0x9:  # ping
                write_frame(conn.sock, 0xA, payload)
                continue
            if opcode == 0xA:  # pong
                continue
            if opcode in (0x1, 0x2):
                if not fin:
                    fragments, frag_opcode = [payload], opcode
                    continue
                if opcode == 0x2:
                    self.on_packet(payload, conn)
                continue
            if opcode == 0x0 and fragments:  # continuation
                fragments.append(payload)
                if fin:
                    whole = b"".join(fragments)
                    if frag_opcode == 0x2:
                        self.on_packet(whole, conn)
                    fragments = []
                continue

    def _serve_static(self, sock: socket.socket, request_line: str) -> None:
        try:
            parts = request_line.split()
            path = parts[1] if len(parts) > 1 else "/"
            body, ctype, status = self._lookup_static(path)
            head = (
                f"HTTP/1.1 {status}\r\n"
                f"Content-Type: {ctype}\r\n"
                f"Content-Length: {len(body)}\r\n"
                "Connection: close\r\n\r\n"
            )
            sock.sendall(head.encode() + body)
        except OSError:
            pass
        finally:
            sock.close()

    def _lookup_static(self, path: str) -> tuple[bytes, str, str]:
        if self.static_dir is None:
            return b"no static directory configured\n", "text/plain", "404 Not Found"
        rel = path.split("?", 1)[0].lstrip("/") or "index.html"
        target = (self.static_dir / rel).resolve()
        root = self.static_dir.resolve()
        if not str(target).startswith(str(root)) or not target.is_file():
            return b"not found\n", "text/plain", "404 Not Found"
        ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        return target.read_bytes(), ctype, "200 OK"
