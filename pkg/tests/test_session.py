import base64
import hashlib
import json
import os
import socket
import struct
import time

import pytest

from ghostcarve import corpus
from ghostcarve.errors import SessionPaused
from ghostcarve.harness import ExperimentConfig
from ghostcarve.patterns import binarize, hadamard
from ghostcarve.session import WS_GUID, SessionService, serve_session

SCENE = "tee8"


def overlap_value(scene, column_id, stripe):
    hb = binarize(hadamard(3)).entries
    return int(min(15, hb[:, column_id - 1] @ scene[:, stripe]))


class NdjsonClient:
    def __init__(self, host, port, timeout=10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.file = self.sock.makefile("rwb")

    def send(self, obj):
        self.file.write((json.dumps(obj) + "\n").encode())
        self.file.flush()

    def send_raw(self, data: bytes):
        self.file.write(data)
        self.file.flush()

    def recv(self):
        line = self.file.readline()
        if not line:
            return None
        return json.loads(line)

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


@pytest.fixture()
def service(tmp_path):
    config = ExperimentConfig(
        scene_path=str(corpus.scene_path(SCENE)),
        detector="human",
        noise=False,
        response_timeout_s=2.0,
    )
    svc = SessionService(config, tmp_path)
    svc.start()
    yield svc
    svc.stop()


def drive_session(client, scene, misbehave=None):
    """Answer stimuli with overlap-proportional levels until done/paused."""
    stimuli = 0
    while True:
        msg = client.recv()
        if msg is None:
            return stimuli, None
        if msg["type"] == "stimulus":
            stimuli += 1
            pattern_id = msg["pattern_id"]
            stripe, column_id = divmod(pattern_id, 8)
            column_id += 1
            if misbehave is not None and misbehave(stimuli, msg, client):
                continue
            client.send(
                {
                    "type": "response",
                    "pattern_id": pattern_id,
                    "value": overlap_value(scene, column_id, stripe),
                }
            )
        elif msg["type"] in ("done", "paused", "error"):
            return stimuli, msg


class TestNdjsonSession:
    def test_happy_path(self, service, tmp_path):
        scene = corpus.load_scene_array(SCENE)
        client = NdjsonClient(service.host, service.port)
        client.send({"type": "heartbeat"})
        stimuli, final = drive_session(client, scene)
        client.close()
        assert final["type"] == "done"
        assert final["patterns_used"] == stimuli
        assert stimuli < 64  # empty columns carve down to one pattern
        assert (tmp_path / "session_log.json").exists()
        log = json.loads((tmp_path / "session_log.json").read_text())
        assert all(e["channel"] == "human" for e in log["events"])

    def test_out_of_range_value_reprompted(self, service):
        scene = corpus.load_scene_array(SCENE)
        client = NdjsonClient(service.host, service.port)
        client.send({"type": "heartbeat"})
        state = {"bad_sent": False, "errors": 0}

        def misbehave(nth, msg, cl):
            if nth == 1 and not state["bad_sent"]:
                state["bad_sent"] = True
                cl.send({"type": "response", "pattern_id": msg["pattern_id"], "value": 16})
                err = cl.recv()
                assert err["type"] == "error"
                state["errors"] += 1
                again = cl.recv()
                assert again["type"] == "stimulus"
                assert again["pattern_id"] == msg["pattern_id"]
                cl.send(
                    {"type": "response", "pattern_id": again["pattern_id"], "value": 0}
                )
                return True
            return False

        stimuli, final = drive_session(client, scene, misbehave)
        client.close()
        assert state["errors"] == 1
        assert final["type"] == "done"

    def test_wrong_pattern_id_reprompted(self, service):
        scene = corpus.load_scene_array(SCENE)
        client = NdjsonClient(service.host, service.port)
        client.send({"type": "heartbeat"})
        state = {"done": False}

        def misbehave(nth, msg, cl):
            if nth == 1 and not state["done"]:
                state["done"] = True
                cl.send({"type": "response", "pattern_id": 9999, "value": 3})
                err = cl.recv()
                assert err["type"] == "error"
                again = cl.recv()
                assert again["pattern_id"] == msg["pattern_id"]
                cl.send({"type": "response", "pattern_id": again["pattern_id"], "value": 0})
                return True
            return False

        _, final = drive_session(client, scene, misbehave)
        client.close()
        assert final["type"] == "done"

    def test_unknown_fields_ignored(self, service):
        scene = corpus.load_scene_array(SCENE)
        client = NdjsonClient(service.host, service.port)
        client.send({"type": "heartbeat", "shoe_size": 43})

        def misbehave(nth, msg, cl):
            pattern_id = msg["pattern_id"]
            stripe, column_id = divmod(pattern_id, 8)
            cl.send(
                {
                    "type": "response",
                    "pattern_id": pattern_id,
                    "value": overlap_value(scene, column_id + 1, stripe),
                    "latency_ms": 123,
                    "mood": "focused",
                }
            )
            return True

        _, final = drive_session(client, scene, misbehave)
        client.close()
        assert final["type"] == "done"

    def test_unknown_type_aborts_with_checkpoint(self, service, tmp_path):
        client = NdjsonClient(service.host, service.port)
        client.send({"type": "heartbeat"})
        msg = client.recv()
        assert msg["type"] == "stimulus"
        client.send({"type": "telemetry", "value": 1})
        err = client.recv()
        assert err["type"] == "error"
        final = client.recv()
        assert final["type"] == "paused"
        assert final["checkpoint"]
        client.close()
        time.sleep(0.1)
        assert isinstance(service.last_error, SessionPaused)

    def test_malformed_json_aborts(self, service):
        client = NdjsonClient(service.host, service.port)
        client.send({"type": "heartbeat"})
        msg = client.recv()
        assert msg["type"] == "stimulus"
        client.send_raw(b"{this is not json\n")
        msgs = []
        while True:
            got = client.recv()
            if got is None:
                break
            msgs.append(got["type"])
        client.close()
        assert "paused" in msgs or "error" in msgs

    def test_timeout_checkpoints_and_resume_completes(self, service, tmp_path):
        scene = corpus.load_scene_array(SCENE)
        client = NdjsonClient(service.host, service.port)
        client.send({"type": "heartbeat"})
        answered = 0
        while answered < 5:
            msg = client.recv()
            assert msg["type"] == "stimulus"
            stripe, col = divmod(msg["pattern_id"], 8)
            client.send(
                {
                    "type": "response",
                    "pattern_id": msg["pattern_id"],
                    "value": overlap_value(scene, col + 1, stripe),
                }
            )
            answered += 1
        # go silent: the 2 s response window lapses, session pauses
        msg = client.recv()  # next stimulus arrives first
        assert msg["type"] == "stimulus"
        paused = client.recv()
        assert paused["type"] == "paused"
        checkpoint = paused["checkpoint"]
        assert checkpoint and os.path.exists(checkpoint)
        client.close()

        resumed = NdjsonClient(service.host, service.port)
        resumed.send({"type": "resume", "checkpoint": checkpoint})
        stimuli, final = drive_session(resumed, scene)
        resumed.close()
        assert final["type"] == "done"
        assert final["patterns_used"] == stimuli + answered

    def test_second_connection_rejected_while_busy(self, service):
        scene = corpus.load_scene_array(SCENE)
        first = NdjsonClient(service.host, service.port)
        first.send({"type": "heartbeat"})
        msg = first.recv()
        assert msg["type"] == "stimulus"
        second = NdjsonClient(service.host, service.port)
        busy = second.recv()
        assert busy == {"reason": "session busy", "type": "error"}
        second.close()
        stripe, col = divmod(msg["pattern_id"], 8)
        first.send(
            {
                "type": "response",
                "pattern_id": msg["pattern_id"],
                "value": overlap_value(scene, col + 1, stripe),
            }
        )
        drive_session(first, scene)
        first.close()

    def test_heartbeats_ignored_mid_session(self, service):
        scene = corpus.load_scene_array(SCENE)
        client = NdjsonClient(service.host, service.port)
        client.send({"type": "heartbeat"})

        def misbehave(nth, msg, cl):
            cl.send({"type": "heartbeat"})
            stripe, col = divmod(msg["pattern_id"], 8)
            cl.send(
                {
                    "type": "response",
                    "pattern_id": msg["pattern_id"],
                    "value": overlap_value(scene, col + 1, stripe),
                }
            )
            return True

        _, final = drive_session(client, scene, misbehave)
        client.close()
        assert final["type"] == "done"


class WsClient:
    """Just enough RFC6455 to talk to the service: masked text frames."""

    def __init__(self, host, port, timeout=10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        key = base64.b64encode(os.urandom(16)).decode()
        self.sock.sendall(
            (
                f"GET /session HTTP/1.1\r\nHost: {host}:{port}\r\n"
                "Upgrade: websocket\r\nConnection: Upgrade\r\n"
                f"Sec-WebSocket-Key: {key}\r\nSec-WebSocket-Version: 13\r\n\r\n"
            ).encode()
        )
        response = b""
        while b"\r\n\r\n" not in response:
            response += self.sock.recv(4096)
        head, self.buf = response.split(b"\r\n\r\n", 1)
        assert b"101" in head.split(b"\r\n")[0]
        expect = base64.b64encode(hashlib.sha1((key + WS_GUID).encode()).digest())
        assert expect in head

    def send(self, obj):
        payload = json.dumps(obj).encode()
        mask = os.urandom(4)
        header = b"\x81"
        n = len(payload)
        if n < 126:
            header += bytes([0x80 | n])
        else:
            header += bytes([0x80 | 126]) + struct.pack(">H", n)
        masked = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        self.sock.sendall(header + mask + masked)

    def _read(self, n):
        while len(self.buf) < n:
            chunk = self.sock.recv(4096)
            if not chunk:
                raise ConnectionError("closed")
            self.buf += chunk
        out, self.buf = self.buf[:n], self.buf[n:]
        return out

    def recv(self):
        b1, b2 = self._read(2)
        length = b2 & 0x7F
        if length == 126:
            length = struct.unpack(">H", self._read(2))[0]
        elif length == 127:
            length = struct.unpack(">Q", self._read(8))[0]
        payload = self._read(length)
        if (b1 & 0x0F) == 0x8:
            return None
        return json.loads(payload.decode())

    def close(self):
        self.sock.close()


class TestWebSocketSession:
    def test_full_session_over_websocket(self, service, tmp_path):
        scene = corpus.load_scene_array(SCENE)
        client = WsClient(service.host, service.port)
        client.send({"type": "heartbeat"})
        stimuli = 0
        final = None
        while True:
            msg = client.recv()
            if msg is None:
                break
            if msg["type"] == "stimulus":
                stimuli += 1
                stripe, col = divmod(msg["pattern_id"], 8)
                client.send(
                    {
                        "type": "response",
                        "pattern_id": msg["pattern_id"],
                        "value": overlap_value(scene, col + 1, stripe),
                    }
                )
            else:
                final = msg
                break
        client.close()
        assert final["type"] == "done"
        assert final["patterns_used"] == stimuli
        assert (tmp_path / "recon_cgi_mask.pgm").exists()


def test_serve_session_binds_requested_host():
    config = ExperimentConfig(
        scene_path=str(corpus.scene_path(SCENE)), detector="human", noise=False
    )
    svc = serve_session("127.0.0.1:0", config, None)
    assert svc.host == "127.0.0.1"
    assert svc.port > 0
    svc._server.close()
