"""The walkthrough recorder endpoint: protocol, persistence, recordings."""

import base64
import io
import json
import time

import pytest
from PIL import Image as PILImage
from websockets.exceptions import ConnectionClosed
from websockets.sync.client import connect

from navcontrast.render import RenderConfig
from navcontrast.scene import generate_scene
from navcontrast.serve import RecorderServer
from navcontrast.trajectory import load_trajectory, validate_trajectory

RECV_TIMEOUT = 5.0


@pytest.fixture(scope="module")
def scene():
    return generate_scene(5)


@pytest.fixture
def server(scene, tmp_path):
    srv = RecorderServer(scene, tmp_path, port=0,
                         render_cfg=RenderConfig(32, 32))
    srv.start()
    yield srv
    srv.close()


def session(server):
    return connect(f"ws://127.0.0.1:{server.port}/session")


def recv(ws):
    return json.loads(ws.recv(timeout=RECV_TIMEOUT))


def drain_connect(ws):
    """Consume the three greeting messages, returning them by type."""
    msgs = [recv(ws) for _ in range(3)]
    assert [m["type"] for m in msgs] == ["scene_summary", "recording", "frame"]
    return dict(zip(("scene_summary", "recording", "frame"), msgs))


def send(ws, **payload):
    ws.send(json.dumps(payload))


def open_ready(server):
    """Connect and finish the greeting, retrying while the previous
    session's slot is still being released (the protocol's busy close)."""
    deadline = time.monotonic() + 5.0
    while True:
        ws = session(server)
        try:
            return ws, drain_connect(ws)
        except ConnectionClosed as exc:
            ws.close()
            busy = exc.rcvd is not None and exc.rcvd.code == 4000
            if not busy or time.monotonic() > deadline:
                raise
            time.sleep(0.05)


def test_connect_greeting(scene, server):
    with session(server) as ws:
        got = drain_connect(ws)
        summary = got["scene_summary"]
        b = scene.bounds
        assert summary["bounds"] == [b.xmin, b.ymin, b.xmax, b.ymax]
        assert len(summary["minimap_walls"]) == len(scene.walls)
        assert all(len(seg) == 4 for seg in summary["minimap_walls"])
        assert summary["light_ids"] == [p.id for p in scene.lighting_presets]
        assert got["recording"] == {"type": "recording", "active": False,
                                    "frames": 0}
        frame = got["frame"]
        assert frame["step"] == 0 and frame["t"] == 0.0
        png = base64.b64decode(frame["png_b64"])
        with PILImage.open(io.BytesIO(png)) as im:
            assert im.size == (32, 32) and im.mode == "RGB"


def test_each_command_yields_exactly_one_frame(server):
    with session(server) as ws:
        drain_connect(ws)
        send(ws, type="cmd", cmd="rotate_right")
        frame = recv(ws)
        assert frame["type"] == "frame" and frame["step"] == 1
        with pytest.raises(TimeoutError):
            ws.recv(timeout=0.3)  # no unsolicited messages follow


def test_rotation_updates_pose(server):
    with session(server) as ws:
        yaw0 = drain_connect(ws)["frame"]["pose"]["yaw"]
        send(ws, type="cmd", cmd="rotate_right")
        assert recv(ws)["pose"]["yaw"] == (yaw0 + 5.0) % 360.0
        send(ws, type="cmd", cmd="rotate_left")
        assert recv(ws)["pose"]["yaw"] == yaw0


def test_record_session_produces_replayable_trajectory(scene, server):
    with session(server) as ws:
        drain_connect(ws)
        send(ws, type="start_recording")
        assert recv(ws) == {"type": "recording", "active": True, "frames": 1}
        for i in range(3):
            send(ws, type="cmd", cmd="forward")
            assert recv(ws)["type"] == "frame"
            progress = recv(ws)
            assert progress["type"] == "recording"
            assert progress["frames"] == i + 2
        send(ws, type="stop_recording")
        stop = recv(ws)
    assert stop["active"] is False and stop["frames"] == 4
    assert stop["path"].endswith("trajectory_000.jsonl")
    traj = load_trajectory(stop["path"], scene_seed=scene.seed)
    assert len(traj.poses) == 4
    assert traj.poses[0].step == 0 and traj.poses[0].t == 0.0
    validate_trajectory(scene, traj)


def test_second_recording_gets_next_file_name(server):
    with session(server) as ws:
        drain_connect(ws)
        for expected in ("trajectory_000.jsonl", "trajectory_001.jsonl"):
            send(ws, type="start_recording")
            recv(ws)
            send(ws, type="cmd", cmd="idle")
            recv(ws)
            recv(ws)
            send(ws, type="stop_recording")
            assert recv(ws)["path"].endswith(expected)


def test_stop_without_start_is_harmless(server):
    with session(server) as ws:
        drain_connect(ws)
        send(ws, type="stop_recording")
        stop = recv(ws)
        assert stop == {"type": "recording", "active": False, "frames": 0}


def test_second_connection_refused_busy(server):
    with session(server) as first:
        drain_connect(first)
        with session(server) as second:
            with pytest.raises(ConnectionClosed) as exc:
                second.recv(timeout=RECV_TIMEOUT)
            assert exc.value.rcvd.code == 4000
            assert exc.value.rcvd.reason == "busy"
    # the slot frees up once the holder leaves
    ws, _ = open_ready(server)
    ws.close()


def test_unknown_path_refused(server):
    with connect(f"ws://127.0.0.1:{server.port}/elsewhere") as ws:
        with pytest.raises(ConnectionClosed) as exc:
            ws.recv(timeout=RECV_TIMEOUT)
        assert exc.value.rcvd.code == 4004


def test_state_survives_reconnect(server):
    with session(server) as ws:
        drain_connect(ws)
        send(ws, type="cmd", cmd="forward")
        moved = recv(ws)["pose"]
    ws, got = open_ready(server)
    try:
        assert got["frame"]["pose"] == moved
        assert got["frame"]["step"] == 1
    finally:
        ws.close()


def test_recording_survives_reconnect(server):
    with session(server) as ws:
        drain_connect(ws)
        send(ws, type="start_recording")
        recv(ws)
        send(ws, type="cmd", cmd="rotate_left")
        recv(ws)
        recv(ws)
    ws, got = open_ready(server)
    try:
        assert got["recording"]["active"] is True
        assert got["recording"]["frames"] == 2
    finally:
        ws.close()


def test_set_light_changes_recorded_schedule(scene, server):
    target = scene.lighting_presets[-1].id
    with session(server) as ws:
        drain_connect(ws)
        send(ws, type="set_light", id=target)
        assert recv(ws)["type"] == "frame"  # re-rendered under the new light
        send(ws, type="start_recording")
        recv(ws)
        send(ws, type="cmd", cmd="idle")
        recv(ws)
        recv(ws)
        send(ws, type="stop_recording")
        stop = recv(ws)
    traj = load_trajectory(stop["path"])
    assert traj.lighting_schedule == (target, target)


def test_malformed_messages_close_the_connection(server):
    cases = ("not json", json.dumps({"no": "type"}),
             json.dumps({"type": "warp"}),
             json.dumps({"type": "cmd", "cmd": "fly"}),
             json.dumps({"type": "set_light", "id": 99}))
    for raw in cases:
        ws, _ = open_ready(server)
        try:
            ws.send(raw)
            with pytest.raises(ConnectionClosed) as exc:
                ws.recv(timeout=RECV_TIMEOUT)
            assert exc.value.rcvd.code == 4002
        finally:
            ws.close()
