"""Interactive walkthrough recorder: a websocket session around one scene.

A browser (or any client) connects to ws://host:port/session, receives the
scene summary plus the current view, and then drives the avatar one command
at a time; the server applies each command with the exact same motion rules
as algorithmic walks and replies with exactly one freshly rendered frame.
Recording captures the poses walked while active and flushes them as a
trajectory file that replays and validates like any recorded walk.

The avatar is server-authoritative and survives disconnects: pose, lighting
choice, jump state, and an in-progress recording all persist, and a client
that reconnects resumes exactly where it left off. One session may be live
at a time; extra connections are turned away with close code 4000 ("busy").
"""

from __future__ import annotations

import base64
import json
import os
import threading

from websockets.sync.server import serve as ws_serve

from .pngio import encode_png
from .render import RenderConfig, render
from .scene import Scene
from .trajectory import (
    MotionParams,
    Pose,
    Trajectory,
    apply_command,
    random_walk,
    save_trajectory,
)

CLOSE_BUSY = 4000
CLOSE_BAD_MESSAGE = 4002
CLOSE_BAD_PATH = 4004


class RecorderServer:
    """Recorder endpoint bound to a port; serve in the foreground with
    `serve_forever` or in the background with `start`/`close`."""

    def __init__(self, scene: Scene, out_dir, host: str = "127.0.0.1",
                 port: int = 8765, params: MotionParams = MotionParams(),
                 render_cfg: RenderConfig = RenderConfig(),
                 start_seed: int = 0):
        params.validate()
        render_cfg.validate()
        self.scene = scene
        self.out_dir = str(out_dir)
        self.params = params
        self.render_cfg = render_cfg
        os.makedirs(self.out_dir, exist_ok=True)

        seed_walk = random_walk(scene, seed=start_seed, n_steps=1,
                                params=params)
        self.pose = seed_walk.poses[0]
        self.light = int(seed_walk.lighting_schedule[0])
        self.airborne = 0
        self.recording: list | None = None  # (position, yaw, light, cmd)
        self._rec_index = 0
        self._busy_lock = threading.Lock()
        self._busy = False
        self._thread: threading.Thread | None = None
        self._server = ws_serve(self._handle, host, port)

    @property
    def port(self) -> int:
        return self._server.socket.getsockname()[1]

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def start(self) -> None:
        self._thread = threading.Thread(target=self.serve_forever,
                                        daemon=True)
        self._thread.start()

    def close(self) -> None:
        self._server.shutdown()
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    # -- message builders ---------------------------------------------------

    def _scene_summary(self) -> dict:
        b = self.scene.bounds
        return {
            "type": "scene_summary",
            "bounds": [b.xmin, b.ymin, b.xmax, b.ymax],
            "minimap_walls": [[w.x0, w.y0, w.x1, w.y1]
                              for w in self.scene.walls],
            "light_ids": [p.id for p in self.scene.lighting_presets],
        }

    def _recording_msg(self, path=None) -> dict:
        msg = {"type": "recording", "active": self.recording is not None,
               "frames": len(self.recording) if self.recording else 0}
        if path is not None:
            msg["path"] = path
        return msg

    def _frame_msg(self) -> dict:
        lighting = self.scene.lighting(self.light)
        img, _ = render(self.scene, self.pose, lighting,
                        self.render_cfg.width, self.render_cfg.height,
                        self.render_cfg.fov_deg)
        return {
            "type": "frame",
            "step": self.pose.step,
            "t": self.pose.t,
            "pose": {"pos": list(self.pose.position), "yaw": self.pose.yaw},
            "png_b64": base64.b64encode(encode_png(img)).decode("ascii"),
        }

    # -- session ------------------------------------------------------------

    def _handle(self, conn) -> None:
        if conn.request.path != "/session":
            conn.close(CLOSE_BAD_PATH, "unknown path")
            return
        with self._busy_lock:
            if self._busy:
                conn.close(CLOSE_BUSY, "busy")
                return
            self._busy = True
        try:
            self._run_session(conn)
        finally:
            self._busy = False

    def _run_session(self, conn) -> None:
        send = lambda msg: conn.send(json.dumps(msg))
        send(self._scene_summary())
        send(self._recording_msg())
        send(self._frame_msg())
        for raw in conn:
            try:
                msg = json.loads(raw)
                kind = msg["type"]
            except (ValueError, TypeError, KeyError):
                conn.close(CLOSE_BAD_MESSAGE, "malformed message")
                return
            if kind == "cmd":
                if not self._apply(msg.get("cmd"), send, conn):
                    return
            elif kind == "set_light":
                if not self._set_light(msg.get("id"), send, conn):
                    return
            elif kind == "start_recording":
                if self.recording is None:
                    self.recording = [(self.pose.position, self.pose.yaw,
                                       self.light, "idle")]
                send(self._recording_msg())
            elif kind == "stop_recording":
                frames = len(self.recording) if self.recording else 0
                path = self._flush_recording()
                msg = {"type": "recording", "active": False, "frames": frames}
                if path is not None:
                    msg["path"] = path
                send(msg)
            else:
                conn.close(CLOSE_BAD_MESSAGE, f"unknown type {kind!r}")
                return

    def _apply(self, cmd, send, conn) -> bool:
        try:
            self.pose, self.airborne = apply_command(
                self.scene, self.pose, cmd, self.params, self.airborne)
        except ValueError:
            conn.close(CLOSE_BAD_MESSAGE, f"unknown command {cmd!r}")
            return False
        if self.recording is not None:
            self.recording.append((self.pose.position, self.pose.yaw,
                                   self.light, cmd))
        send(self._frame_msg())
        if self.recording is not None:
            send(self._recording_msg())
        return True

    def _set_light(self, light_id, send, conn) -> bool:
        ids = {p.id for p in self.scene.lighting_presets}
        if light_id not in ids:
            conn.close(CLOSE_BAD_MESSAGE, f"unknown light {light_id!r}")
            return False
        self.light = int(light_id)
        send(self._frame_msg())
        return True

    def _flush_recording(self):
        """Write the recorded poses, renumbered from step 0, and return the
        file path (None when nothing was recording)."""
        if self.recording is None:
            return None
        dt = self.params.dt
        poses = tuple(Pose(step=i, t=i * dt, position=pos, yaw=yaw)
                      for i, (pos, yaw, _, _) in enumerate(self.recording))
        traj = Trajectory(
            scene_seed=self.scene.seed, dt=dt, poses=poses,
            lighting_schedule=tuple(light for _, _, light, _ in self.recording),
            commands=tuple(cmd for _, _, _, cmd in self.recording))
        path = os.path.join(self.out_dir,
                            f"trajectory_{self._rec_index:03d}.jsonl")
        save_trajectory(traj, path)
        self._rec_index += 1
        self.recording = None
        return path


def run_server(scene: Scene, out_dir, host: str = "127.0.0.1",
               port: int = 8765, params: MotionParams = MotionParams(),
               render_cfg: RenderConfig = RenderConfig()) -> None:
    """Serve until interrupted; recordings land in `out_dir`."""
    server = RecorderServer(scene, out_dir, host=host, port=port,
                            params=params, render_cfg=render_cfg)
    print(f"serving on ws://{host}:{server.port}/session "
          f"(recordings in {server.out_dir})", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
