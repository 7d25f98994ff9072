"""Wire protocol, session command handling, and the live socket service."""

import json
import threading
import time

import numpy as np
import pytest

from gaitspace.config import default_config
from gaitspace.errors import MalformedMessage
from gaitspace.service import (
    PROTOCOL_VERSION,
    Service,
    Session,
    _ClientWriter,
    decode_command,
    encode_error,
    encode_fault,
    encode_telemetry,
)
from gaitspace.ws import WsConnection

HIGH_THRESHOLD = 1e9   # keeps the monitor armed but quiet


# ---------------------------------------------------------------------------
# Message decoding


def cmd(name, **fields):
    return json.dumps({"type": "command", "v": 1, "name": name, **fields})


def test_decode_valid_commands():
    assert decode_command(cmd("set_amplitude", value=0.08)) == \
        {"name": "set_amplitude", "value": 0.08}
    assert decode_command(cmd("set_twist", vx=0.1, vy=0, wz=-0.2)) == \
        {"name": "set_twist", "vx": 0.1, "vy": 0.0, "wz": -0.2}
    out = decode_command(cmd("inject_impulse", vector=[0.5, 0, 0]))
    assert out == {"name": "inject_impulse", "vector": [0.5, 0.0, 0.0],
                   "decay_s": 0.2}
    assert decode_command(cmd("set_auto_response", value=True))["value"] is True
    assert decode_command(cmd("reset")) == {"name": "reset"}
    # unknown extra fields are dropped
    assert "color" not in decode_command(cmd("reset", color="red"))


@pytest.mark.parametrize("text", [
    "not json",
    "[1, 2]",
    json.dumps({"type": "telemetry"}),
    json.dumps({"type": "command", "name": "self_destruct"}),
    cmd("set_amplitude"),                          # missing value
    cmd("set_amplitude", value="big"),
    cmd("set_amplitude", value=float("nan")),
    cmd("set_twist", vx=0.1, vy=0.0),              # missing wz
    cmd("inject_impulse", vector=[1, 2]),
    cmd("inject_impulse", vector=[1, 2, "x"]),
    cmd("inject_impulse", vector=[1, 2, 3], decay_s=0),
    cmd("set_auto_response", value=1),             # must be a real boolean
])
def test_decode_rejects_malformed(text):
    with pytest.raises(MalformedMessage):
        decode_command(text)


def test_decode_fuzz_random_bytes():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(0, 60))
        blob = bytes(rng.integers(32, 127, n)).decode("ascii")
        try:
            decode_command(blob)
        except MalformedMessage:
            pass


def test_encoders_tag_type_and_version():
    for text, kind in ((encode_error("x"), "error"),
                       (encode_fault("y"), "fault")):
        doc = json.loads(text)
        assert doc["type"] == kind and doc["v"] == PROTOCOL_VERSION


# ---------------------------------------------------------------------------
# Session


@pytest.fixture(scope="module")
def session(model):
    return Session(model, default_config(), seed=0, threshold=HIGH_THRESHOLD)


def test_session_telemetry_frame_shape(session):
    session.apply_command({"name": "reset"})
    frame = session.step()
    doc = json.loads(encode_telemetry(frame))
    assert doc["type"] == "telemetry" and doc["v"] == PROTOCOL_VERSION
    assert doc["drive"]["swing_period_s"] == pytest.approx(0.5)
    assert doc["drive"]["stance_duration_s"] == pytest.approx(0.08)
    assert len(doc["q"]) == 12
    assert len(doc["contacts"]) == 4
    assert len(doc["contact_probs"]) == session.model.config.contact_steps
    assert len(doc["foot_heights"]) == 4
    assert doc["threshold"] == HIGH_THRESHOLD
    assert np.isfinite(doc["elbo"])


def test_session_commands_take_effect(session):
    session.apply_command({"name": "reset"})
    session.apply_command({"name": "set_twist", "vx": 0.2, "vy": 0.0,
                           "wz": 0.0})
    session.apply_command({"name": "set_swing_period", "value": 0.25})
    session.apply_command({"name": "set_stance_duration", "value": 0.04})
    frame = session.step()
    assert frame.twist == [0.2, 0.0, 0.0]
    assert frame.swing_period_s == pytest.approx(0.25)
    assert frame.stance_duration_s == pytest.approx(0.04)
    session.apply_command({"name": "reset"})
    frame = session.step()
    assert frame.twist == [0.0, 0.0, 0.0]
    assert frame.swing_period_s == pytest.approx(0.5)


def test_session_zero_amplitude_stands(session):
    session.apply_command({"name": "reset"})
    session.apply_command({"name": "set_amplitude", "value": 0.0})
    frames = [session.step() for _ in range(120)]
    # after the current swing settles, every tick has four feet down
    assert all(all(f.contacts) for f in frames[60:])
    session.apply_command({"name": "set_amplitude", "value": 0.10})
    frames = [session.step() for _ in range(120)]
    assert any(not all(f.contacts) for f in frames[60:])


def test_session_impulse_disturbs_elbo(session):
    session.apply_command({"name": "reset"})
    baseline = max(session.step().elbo for _ in range(100))
    session.apply_command({"name": "inject_impulse",
                           "vector": [4.0, 0.0, 0.0], "decay_s": 0.2})
    spike = max(session.step().elbo for _ in range(20))
    assert spike > 2.0 * baseline


def test_client_writer_drops_when_full():
    release = threading.Event()
    sent = []

    class SlowClient:
        def send_text(self, message):
            release.wait(2.0)
            sent.append(message)

    writer = _ClientWriter(SlowClient(), depth=4)
    for k in range(20):
        writer.offer(str(k))
    assert writer.queue.qsize() <= 4
    release.set()
    writer.stop()
    writer.thread.join(timeout=2.0)
    assert len(sent) <= 6   # one in flight plus the queue depth


# ---------------------------------------------------------------------------
# Live socket service


@pytest.fixture()
def service(model):
    cfg = default_config()
    svc = Service(model, cfg, port=0, seed=0, threshold=HIGH_THRESHOLD)
    yield svc
    svc.stop()


def recv_telemetry(conn, limit=50):
    for _ in range(limit):
        doc = json.loads(conn.recv_text())
        if doc["type"] == "telemetry":
            return doc
    raise AssertionError("no telemetry received")


def test_service_streams_decimated_telemetry(service):
    service.start(duration_s=2.0)
    conn = WsConnection("127.0.0.1", service.port)
    try:
        first = recv_telemetry(conn)
        second = recv_telemetry(conn)
        assert first["v"] == PROTOCOL_VERSION
        # 100 Hz loop decimated to 20 Hz telemetry: 5 ticks per frame
        assert second["tick"] - first["tick"] == 5
        service.join()
        assert service.ticks_run == 200
    finally:
        conn.close()


def test_service_loop_holds_control_rate(service):
    t0 = time.monotonic()
    service.start(duration_s=2.0)
    service.join()
    elapsed = time.monotonic() - t0
    assert service.ticks_run == 200
    assert elapsed == pytest.approx(2.0, abs=0.25)


def test_service_applies_commands_and_rejects_garbage(service):
    service.start(duration_s=10.0)
    conn = WsConnection("127.0.0.1", service.port)
    try:
        recv_telemetry(conn)
        conn.send_text("garbage{{{")
        for _ in range(50):
            doc = json.loads(conn.recv_text())
            if doc["type"] == "error":
                break
        else:
            raise AssertionError("no error reply to malformed message")
        assert "JSON" in doc["message"]

        conn.send_text(cmd("set_twist", vx=0.25, vy=0.0, wz=0.0))
        deadline = time.monotonic() + 2.0
        while time.monotonic() < deadline:
            doc = recv_telemetry(conn)
            if doc["twist"][0] == pytest.approx(0.25):
                break
        else:
            raise AssertionError("set_twist never reflected in telemetry")
    finally:
        conn.close()
        service.stop()
