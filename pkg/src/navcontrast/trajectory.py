"""Egocentric trajectories: motion commands, random walks, recording, replay.

A trajectory is an ordered list of poses produced by applying one navigation
command per step. The per-frame record (step, timestamp, position, yaw,
lighting id, command) is what downstream pairing consumes.

Vertical motion: the pose z is the camera height above the floor. It rests at
`eye_height` and follows a parabolic arc after a jump command; the arc phase
is threaded explicitly through `apply_command`, since a pose alone cannot
distinguish the rising from the falling half of the arc.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import pngio
from .errors import ConfigError, DatasetError, PlacementError
from .render import RenderConfig, render
from .scene import Scene, is_free, load_scene, save_scene

COMMANDS = (
    "forward", "backward", "strafe_left", "strafe_right",
    "rotate_left", "rotate_right", "jump", "idle",
)


@dataclass(frozen=True)
class Pose:
    step: int
    t: float
    position: tuple[float, float, float]
    yaw: float  # degrees in [0, 360)


@dataclass(frozen=True)
class MotionParams:
    step_len: float = 0.1
    rot_step: float = 5.0
    jump_height: float = 0.3
    jump_steps: int = 6
    agent_radius: float = 0.2
    eye_height: float = 1.5
    dt: float = 0.1

    def validate(self) -> None:
        if self.step_len <= 0 or self.rot_step <= 0 or self.dt <= 0:
            raise ConfigError("step_len, rot_step and dt must be positive")
        if self.jump_steps < 2:
            raise ConfigError("jump_steps must be >= 2")
        if self.jump_height < 0 or self.agent_radius < 0:
            raise ConfigError("jump_height and agent_radius must be >= 0")


@dataclass(frozen=True)
class WalkPolicy:
    """Command distribution for algorithmic walks.

    `persistence` is the probability of repeating the previous command, which
    mimics held-down keys; the remaining mass samples `probs` fresh.
    """

    probs: tuple[tuple[str, float], ...] = (
        ("forward", 0.42), ("backward", 0.03),
        ("strafe_left", 0.05), ("strafe_right", 0.05),
        ("rotate_left", 0.17), ("rotate_right", 0.17),
        ("jump", 0.03), ("idle", 0.08),
    )
    persistence: float = 0.65
    light_block: int = 50

    def validate(self) -> None:
        names = [n for n, _ in self.probs]
        if sorted(names) != sorted(COMMANDS):
            raise ConfigError("policy must assign a probability to every command")
        total = sum(p for _, p in self.probs)
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"command probabilities sum to {total}, expected 1")
        if not 0.0 <= self.persistence < 1.0:
            raise ConfigError("persistence must lie in [0, 1)")
        if self.light_block < 1:
            raise ConfigError("light_block must be >= 1")


@dataclass(frozen=True)
class Trajectory:
    scene_seed: int | None
    dt: float
    poses: tuple[Pose, ...]
    lighting_schedule: tuple[int, ...]
    commands: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.poses)


def _jump_z(params: MotionParams, phase: int) -> float:
    """Camera height at an arc phase; phase 0 and jump_steps are exactly at
    rest so the arc closes without float drift."""
    if phase == 0 or phase == params.jump_steps:
        return params.eye_height
    # the integer product keeps mirrored phases bitwise equal in height
    shape = phase * (params.jump_steps - phase) / params.jump_steps ** 2
    return params.eye_height + 4.0 * params.jump_height * shape


def apply_command(scene: Scene, pose: Pose, cmd: str, params: MotionParams,
                  airborne: int = 0) -> tuple[Pose, int]:
    """Advance one step. Returns the new pose and the new airborne phase.

    Moves that would collide are silent no-ops on position (rotation still
    applies); step and t always advance. `airborne` is 0 on the ground,
    otherwise the number of steps since the jump started.
    """
    if cmd not in COMMANDS:
        raise ValueError(f"unknown command {cmd!r}")
    x, y, _ = pose.position
    yaw = pose.yaw

    if 0 < airborne < params.jump_steps:
        phase = airborne + 1
    elif cmd == "jump" and airborne == 0:
        phase = 1
    else:
        phase = 0
    z = _jump_z(params, phase)

    if cmd == "rotate_left":
        yaw = (yaw - params.rot_step) % 360.0
    elif cmd == "rotate_right":
        yaw = (yaw + params.rot_step) % 360.0
    elif cmd in ("forward", "backward", "strafe_left", "strafe_right"):
        head = math.radians(pose.yaw)
        if cmd == "forward":
            dx, dy = math.cos(head), math.sin(head)
        elif cmd == "backward":
            dx, dy = -math.cos(head), -math.sin(head)
        elif cmd == "strafe_left":
            dx, dy = -math.sin(head), math.cos(head)
        else:
            dx, dy = math.sin(head), -math.cos(head)
        nx = x + params.step_len * dx
        ny = y + params.step_len * dy
        # Checking at eye height (not the arc height) keeps the whole jump
        # column clear: a sphere free at eye level is free at any greater z,
        # so the agent can never drift over an obstacle and land inside it.
        if is_free(scene, (nx, ny, params.eye_height), params.agent_radius):
            x, y = nx, ny

    step = pose.step + 1
    # reaching the final arc phase is the landing, so the phase resets
    return Pose(step, step * params.dt, (x, y, z), yaw), phase % params.jump_steps


def random_walk(scene: Scene, seed: int, n_steps: int,
                params: MotionParams = MotionParams(),
                policy: WalkPolicy = WalkPolicy()) -> Trajectory:
    """Seeded algorithmic walk of `n_steps` poses (the start pose included).

    Lighting presets are re-drawn every `light_block` steps, so one walk mixes
    the scene's lighting conditions.
    """
    params.validate()
    policy.validate()
    if n_steps < 1:
        raise ConfigError("n_steps must be >= 1")
    rng = np.random.default_rng(seed)
    n_lights = len(scene.lighting_presets)

    margin = params.agent_radius + 0.05
    start = None
    for _ in range(1000):
        x = rng.uniform(scene.bounds.xmin + margin, scene.bounds.xmax - margin)
        y = rng.uniform(scene.bounds.ymin + margin, scene.bounds.ymax - margin)
        if is_free(scene, (x, y, params.eye_height), params.agent_radius):
            start = (x, y, params.eye_height)
            break
    if start is None:
        raise PlacementError(f"no free start pose found for walk seed {seed}")
    yaw = float(rng.uniform(0.0, 360.0))

    names = [n for n, _ in policy.probs]
    cum = np.cumsum([p for _, p in policy.probs])

    poses = [Pose(0, 0.0, start, yaw)]
    light = int(rng.integers(n_lights))
    lights = [light]
    commands = ["idle"]
    airborne = 0
    last_cmd = None
    for i in range(1, n_steps):
        u_persist = rng.random()
        u_cmd = rng.random()
        if last_cmd is not None and u_persist < policy.persistence:
            cmd = last_cmd
        else:
            cmd = names[int(np.searchsorted(cum, u_cmd, side="right"))]
        if i % policy.light_block == 0:
            light = int(rng.integers(n_lights))
        pose, airborne = apply_command(scene, poses[-1], cmd, params, airborne)
        poses.append(pose)
        lights.append(light)
        commands.append(cmd)
        last_cmd = cmd

    return Trajectory(scene.seed, params.dt, tuple(poses), tuple(lights),
                      tuple(commands))


# ---------------------------------------------------------------------------
# validation


def validation_errors(scene: Scene, traj: Trajectory,
                      params: MotionParams = MotionParams()) -> list[str]:
    """All invariant violations of a trajectory against a scene; empty when
    the trajectory is valid."""
    errs: list[str] = []
    if traj.scene_seed is not None and traj.scene_seed != scene.seed:
        errs.append(f"scene seed mismatch: trajectory {traj.scene_seed} "
                    f"vs scene {scene.seed}")
    if len(traj.poses) != len(traj.lighting_schedule):
        errs.append("lighting schedule length differs from pose count")
    n_lights = len(scene.lighting_presets)
    max_dz = 4.0 * params.jump_height / params.jump_steps
    max_step = params.step_len + max_dz + 1e-9
    for i, p in enumerate(traj.poses):
        if p.step != i:
            errs.append(f"pose {i}: step {p.step} != {i}")
        if p.t != p.step * traj.dt:
            errs.append(f"pose {i}: t {p.t!r} != step*dt")
        if not 0.0 <= p.yaw < 360.0:
            errs.append(f"pose {i}: yaw {p.yaw} outside [0, 360)")
        if not is_free(scene, p.position, params.agent_radius):
            errs.append(f"pose {i}: position {p.position} not free")
        if i < len(traj.lighting_schedule) and not \
                0 <= traj.lighting_schedule[i] < n_lights:
            errs.append(f"pose {i}: lighting id {traj.lighting_schedule[i]} unknown")
        if i > 0:
            q = traj.poses[i - 1]
            d = math.dist(p.position, q.position)
            if d > max_step:
                errs.append(f"pose {i}: displacement {d:.4f} exceeds {max_step:.4f}")
    return errs


def validate_trajectory(scene: Scene, traj: Trajectory,
                        params: MotionParams = MotionParams()) -> None:
    errs = validation_errors(scene, traj, params)
    if errs:
        raise DatasetError("; ".join(errs[:5]) +
                           (f" (+{len(errs) - 5} more)" if len(errs) > 5 else ""))


# ---------------------------------------------------------------------------
# record arrays and serialization


@dataclass(frozen=True)
class FrameRecords:
    """Column view of per-frame navigational records; `index` doubles as the
    frame's instance id for pairing."""

    index: np.ndarray  # (N,) int64
    step: np.ndarray   # (N,) int64
    t: np.ndarray      # (N,) float64
    pos: np.ndarray    # (N, 3) float64
    yaw: np.ndarray    # (N,) float64
    light: np.ndarray  # (N,) int64

    def __len__(self) -> int:
        return len(self.index)

    @staticmethod
    def from_trajectory(traj: Trajectory) -> "FrameRecords":
        n = len(traj.poses)
        return FrameRecords(
            index=np.arange(n, dtype=np.int64),
            step=np.array([p.step for p in traj.poses], dtype=np.int64),
            t=np.array([p.t for p in traj.poses], dtype=float),
            pos=np.array([p.position for p in traj.poses], dtype=float).reshape(n, 3),
            yaw=np.array([p.yaw for p in traj.poses], dtype=float),
            light=np.array(traj.lighting_schedule, dtype=np.int64),
        )

    def take(self, idx) -> "FrameRecords":
        return FrameRecords(self.index[idx], self.step[idx], self.t[idx],
                            self.pos[idx], self.yaw[idx], self.light[idx])


def save_trajectory(traj: Trajectory, path) -> None:
    """One JSON record per pose: step, t, pos, yaw, light, cmd."""
    with open(path, "w", encoding="utf-8") as f:
        for i, p in enumerate(traj.poses):
            rec = {
                "step": p.step,
                "t": p.t,
                "pos": [p.position[0], p.position[1], p.position[2]],
                "yaw": p.yaw,
                "light": int(traj.lighting_schedule[i]),
                "cmd": traj.commands[i],
            }
            f.write(json.dumps(rec) + "\n")


def load_trajectory(path, scene_seed: int | None = None) -> Trajectory:
    """Read a trajectory file. The line format carries no scene provenance,
    so callers that know the source scene pass `scene_seed` to re-arm the
    replay mismatch check."""
    poses, lights, commands = [], [], []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            poses.append(Pose(rec["step"], rec["t"], tuple(rec["pos"]), rec["yaw"]))
            lights.append(int(rec["light"]))
            commands.append(rec.get("cmd", "idle"))
    if not poses:
        raise DatasetError(f"trajectory file {path} is empty")
    dt = poses[1].t - poses[0].t if len(poses) > 1 else 0.1
    return Trajectory(scene_seed, dt, tuple(poses), tuple(lights), tuple(commands))


# ---------------------------------------------------------------------------
# replay to image datasets


@dataclass(frozen=True)
class Dataset:
    """An on-disk trajectory rendered to frames, loaded back into arrays."""

    scene: Scene
    records: FrameRecords
    frames: np.ndarray    # (N, H, W, 3) uint8
    catmaps: np.ndarray   # (N, H, W) int64, -1 for background
    render_cfg: RenderConfig

    def __len__(self) -> int:
        return len(self.records)


def render_frames(scene: Scene, traj: Trajectory,
                  cfg: RenderConfig = RenderConfig()
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Render every pose; returns (frames, category maps)."""
    frames = np.empty((len(traj), cfg.height, cfg.width, 3), dtype=np.uint8)
    catmaps = np.empty((len(traj), cfg.height, cfg.width), dtype=np.int64)
    for i, pose in enumerate(traj.poses):
        lighting = scene.lighting(traj.lighting_schedule[i])
        img, cat = render(scene, pose, lighting, cfg.width, cfg.height,
                          cfg.fov_deg)
        frames[i] = img
        catmaps[i] = cat
    return frames, catmaps


def replay(scene: Scene, traj: Trajectory, out_dir,
           cfg: RenderConfig = RenderConfig(),
           params: MotionParams = MotionParams()) -> None:
    """Re-render a trajectory into a dataset directory.

    Layout: manifest.json, scene.json, trajectory.jsonl, frames/frame_NNNNNN.png,
    labels/label_NNNNNN.png. Raises DatasetError when the trajectory does not
    belong to the scene or violates motion invariants.
    """
    validate_trajectory(scene, traj, params)
    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    os.makedirs(os.path.join(out_dir, "frames"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "labels"), exist_ok=True)
    save_scene(scene, os.path.join(out_dir, "scene.json"))
    save_trajectory(traj, os.path.join(out_dir, "trajectory.jsonl"))
    for i, pose in enumerate(traj.poses):
        lighting = scene.lighting(traj.lighting_schedule[i])
        img, cat = render(scene, pose, lighting, cfg.width, cfg.height,
                          cfg.fov_deg)
        pngio.save_image(os.path.join(out_dir, "frames", f"frame_{i:06d}.png"), img)
        pngio.save_catmap(os.path.join(out_dir, "labels", f"label_{i:06d}.png"), cat)
    manifest = {
        "scene_file": "scene.json",
        "trajectory_file": "trajectory.jsonl",
        "width": cfg.width,
        "height": cfg.height,
        "fov": cfg.fov_deg,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


def load_dataset(path) -> Dataset:
    """Load a replayed dataset directory back into memory."""
    manifest_path = os.path.join(path, "manifest.json")
    if not os.path.exists(manifest_path):
        raise DatasetError(f"{path} has no manifest.json")
    with open(manifest_path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    for key in ("scene_file", "trajectory_file", "width", "height", "fov"):
        if key not in manifest:
            raise DatasetError(f"manifest.json missing key {key!r}")
    scene = load_scene(os.path.join(path, manifest["scene_file"]))
    traj = load_trajectory(os.path.join(path, manifest["trajectory_file"]),
                           scene_seed=scene.seed)
    cfg = RenderConfig(int(manifest["width"]), int(manifest["height"]),
                       float(manifest["fov"]))
    n = len(traj)
    frames = np.empty((n, cfg.height, cfg.width, 3), dtype=np.uint8)
    catmaps = np.empty((n, cfg.height, cfg.width), dtype=np.int64)
    for i in range(n):
        frame_path = os.path.join(path, "frames", f"frame_{i:06d}.png")
        label_path = os.path.join(path, "labels", f"label_{i:06d}.png")
        if not os.path.exists(frame_path) or not os.path.exists(label_path):
            raise DatasetError(f"dataset {path} missing files for frame {i}")
        frames[i] = pngio.load_image(frame_path)
        catmaps[i] = pngio.load_catmap(label_path)
    return Dataset(scene, FrameRecords.from_trajectory(traj), frames, catmaps, cfg)
