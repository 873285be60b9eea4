"""Human-loop session service.

Speaks the wire protocol over a local TCP socket: newline-delimited JSON
messages, with an RFC6455 WebSocket upgrade auto-detected on the same port
(each text frame carries one JSON message) so a browser client needs no
bridge. Message vocabulary:

    {"type": "stimulus", "pattern_id": int, "level": float,
     "freq_hz": float, "dwell_s": float}              server -> client
    {"type": "response", "pattern_id": int, "value": int}   client -> server
    {"type": "heartbeat"}                                   either way
    {"type": "resume", "checkpoint": str}                   client -> server

Unknown fields are ignored; unknown types reject the session (abort with a
checkpoint). Out-of-range or mismatched responses get an error message and a
re-prompt. One session is active at a time; the first client message opens
it — a heartbeat starts fresh, a resume continues from a checkpoint file.
"""

from __future__ import annotations

import base64
import hashlib
import json
import socket
import struct
import threading

from .errors import SessionPaused, SessionProtocolError
from .harness import ExperimentConfig, run_experiment

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


class Disconnect(Exception):
    """Peer closed the connection."""


class _Ndjson:
    """Line-oriented JSON transport over a connected socket."""

    def __init__(self, sock: socket.socket, first_byte: bytes = b""):
        self.sock = sock
        self._buf = first_byte

    def send_json(self, obj) -> None:
        self.sock.sendall(json.dumps(obj, sort_keys=True).encode() + b"\n")

    def recv_json(self, timeout: float):
        """Next message, or None on timeout. Malformed lines are violations."""
        self.sock.settimeout(timeout)
        while True:
            nl = self._buf.find(b"\n")
            if nl >= 0:
                line = self._buf[:nl]
                self._buf = self._buf[nl + 1 :]
                if not line.strip():
                    continue
                try:
                    return json.loads(line)
                except json.JSONDecodeError as exc:
                    raise SessionProtocolError(f"malformed JSON line: {exc}") from None
            try:
                chunk = self.sock.recv(4096)
            except socket.timeout:
                return None
            if not chunk:
                raise Disconnect()
            self._buf += chunk

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class _WebSocket:
    """Minimal server-side WebSocket: text frames carry one JSON message each."""

    def __init__(self, sock: socket.socket, buffered: bytes):
        self.sock = sock
        self._buf = buffered

    @classmethod
    def handshake(cls, sock: socket.socket, first_byte: bytes) -> "_WebSocket":
        data = first_byte
        sock.settimeout(5.0)
        while b"\r\n\r\n" not in data:
            chunk = sock.recv(4096)
            if not chunk:
                raise Disconnect()
            data += chunk
        head, rest = data.split(b"\r\n\r\n", 1)
        key = None
        for line in head.split(b"\r\n")[1:]:
            name, _, value = line.partition(b":")
            if name.strip().lower() == b"sec-websocket-key":
                key = value.strip().decode()
        if key is None:
            raise SessionProtocolError("websocket upgrade without Sec-WebSocket-Key")
        accept = base64.b64encode(hashlib.sha1((key + WS_GUID).encode()).digest()).decode()
        sock.sendall(
            (
                "HTTP/1.1 101 Switching Protocols\r\n"
                "Upgrade: websocket\r\n"
                "Connection: Upgrade\r\n"
                f"Sec-WebSocket-Accept: {accept}\r\n\r\n"
            ).encode()
        )
        return cls(sock, rest)

    def _read(self, n: int, timeout: float) -> bytes:
        self.sock.settimeout(timeout)
        while len(self._buf) < n:
            chunk = self.sock.recv(4096)
            if not chunk:
                raise Disconnect()
            self._buf += chunk
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def send_json(self, obj) -> None:
        payload = json.dumps(obj, sort_keys=True).encode()
        head = b"\x81"  # FIN + text
        n = len(payload)
        if n < 126:
            head += bytes([n])
        elif n < 1 << 16:
            head += bytes([126]) + struct.pack(">H", n)
        else:
            head += bytes([127]) + struct.pack(">Q", n)
        self.sock.sendall(head + payload)

    def recv_json(self, timeout: float):
        while True:
            try:
                b1, b2 = self._read(2, timeout)
            except socket.timeout:
                return None
            if not b1 & 0x80:
                raise SessionProtocolError("fragmented websocket frames unsupported")
            opcode = b1 & 0x0F
            masked = bool(b2 & 0x80)
            length = b2 & 0x7F
            if length == 126:
                length = struct.unpack(">H", self._read(2, timeout))[0]
            elif length == 127:
                length = struct.unpack(">Q", self._read(8, timeout))[0]
            mask = self._read(4, timeout) if masked else b""
            payload = self._read(length, timeout)
            if masked:
                payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
            if opcode == 0x8:  # close
                raise Disconnect()
            if opcode == 0x9:  # ping -> pong
                self.sock.sendall(b"\x8a" + bytes([len(payload)]) + payload)
                continue
            if opcode == 0xA:  # pong
                continue
            if opcode != 0x1:
                raise SessionProtocolError(f"unsupported websocket opcode {opcode}")
            try:
                return json.loads(payload.decode())
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise SessionProtocolError(f"malformed JSON frame: {exc}") from None

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def _open_transport(conn: socket.socket):
    """ndjson by default; a leading HTTP GET upgrades to WebSocket."""
    conn.settimeout(5.0)
    first = conn.recv(4)
    if not first:
        raise Disconnect()
    if first.startswith(b"GET"):
        return _WebSocket.handshake(conn, first)
    return _Ndjson(conn, first)


class _SessionResponder:
    """Adapts the request/response wire exchange to the detector interface."""

    def __init__(self, transport, config: ExperimentConfig):
        self.transport = transport
        self.config = config

    def __call__(self, pattern_id: int, level: float, column_id: int, stripe: int) -> int:
        stimulus = {
            "type": "stimulus",
            "pattern_id": int(pattern_id),
            "level": float(level),
            "freq_hz": float(self.config.freq_hz),
            "dwell_s": float(self.config.dwell_s),
        }
        self.transport.send_json(stimulus)
        while True:
            try:
                msg = self.transport.recv_json(self.config.response_timeout_s)
            except Disconnect:
                raise SessionPaused(f"client disconnected at pattern {pattern_id}") from None
            except SessionProtocolError as exc:
                self._reject(str(exc))
                raise SessionPaused(f"protocol violation: {exc}") from None
            if msg is None:
                raise SessionPaused(f"response timeout at pattern {pattern_id}")
            kind = msg.get("type")
            if kind == "heartbeat":
                continue
            if kind != "response":
                self._reject(f"unknown message type {kind!r}")
                raise SessionPaused(f"protocol violation: unexpected type {kind!r}")
            value = msg.get("value")
            if msg.get("pattern_id") != pattern_id:
                self._reprompt(stimulus, f"response for wrong pattern {msg.get('pattern_id')}")
                continue
            if not isinstance(value, int) or isinstance(value, bool) or not (0 <= value <= 15):
                self._reprompt(stimulus, f"value {value!r} outside 0..15")
                continue
            return value

    def _reject(self, reason: str) -> None:
        try:
            self.transport.send_json({"type": "error", "reason": reason})
        except OSError:
            pass

    def _reprompt(self, stimulus: dict, reason: str) -> None:
        self._reject(reason)
        self.transport.send_json(stimulus)


class SessionService:
    """One-at-a-time human-loop sessions bound to a local TCP port."""

    def __init__(self, config: ExperimentConfig, out_dir, host: str = "127.0.0.1", port: int = 0):
        self.config = config
        self.out_dir = out_dir
        self._server = socket.create_server((host, port))
        self._server.settimeout(0.2)
        self.host, self.port = self._server.getsockname()[:2]
        self._stop = threading.Event()
        self._busy = threading.Lock()
        self._thread = None
        self.last_result = None
        self.last_error = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
        self._server.close()

    def serve_forever(self, max_sessions: int | None = None) -> None:
        served = 0
        while not self._stop.is_set():
            try:
                conn, _ = self._server.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            if not self._busy.acquire(blocking=False):
                # one active session at a time; tell latecomers and hang up
                try:
                    _Ndjson(conn).send_json({"type": "error", "reason": "session busy"})
                except OSError:
                    pass
                finally:
                    conn.close()
                continue
            worker = threading.Thread(target=self._run_session, args=(conn,), daemon=True)
            worker.start()
            if max_sessions is not None:
                worker.join()
                served += 1
                if served >= max_sessions:
                    return

    def _run_session(self, conn: socket.socket) -> None:
        try:
            self._handle(conn)
        finally:
            self._busy.release()

    def _handle(self, conn: socket.socket) -> None:
        transport = None
        try:
            transport = _open_transport(conn)
            opening = transport.recv_json(self.config.response_timeout_s)
            if opening is None:
                raise SessionProtocolError("no opening message (heartbeat or resume)")
            resume = None
            kind = opening.get("type")
            if kind == "resume":
                resume = opening.get("checkpoint")
                if not isinstance(resume, str):
                    raise SessionProtocolError("resume without checkpoint token")
            elif kind != "heartbeat":
                raise SessionProtocolError(f"session must open with heartbeat/resume, got {kind!r}")
            responder = _SessionResponder(transport, self.config)
            log = run_experiment(
                self.config, responder=responder, out_dir=self.out_dir, resume=resume
            )
            self.last_result = log
            transport.send_json({"type": "done", "patterns_used": log.patterns_used})
        except SessionPaused as paused:
            self.last_error = paused
            if transport is not None:
                try:
                    transport.send_json(
                        {
                            "type": "paused",
                            "reason": str(paused),
                            "checkpoint": paused.checkpoint,
                        }
                    )
                except (OSError, Disconnect):
                    pass
        except (SessionProtocolError, Disconnect, OSError, socket.timeout) as exc:
            self.last_error = exc
            if transport is not None and not isinstance(exc, (Disconnect, OSError)):
                try:
                    transport.send_json({"type": "error", "reason": str(exc)})
                except (OSError, Disconnect):
                    pass
        finally:
            if transport is not None:
                transport.close()
            else:
                conn.close()


def serve_session(bind: str, config: ExperimentConfig, out_dir) -> SessionService:
    """Bind the session service; returns it without blocking."""
    host, _, port = bind.partition(":")
    service = SessionService(config, out_dir, host=host or "127.0.0.1", port=int(port or 0))
    return service
