"""Deterministic procedural indoor scenes.

A scene is a rectangular room (optionally split into sub-rooms by partition
walls with door gaps) furnished with categorized box and cylinder objects.
Everything is derived from a single integer seed, so identical (seed, config)
pairs produce byte-identical scenes.

Coordinates: x/y span the floor plane, z is up, all lengths in meters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError, PlacementError

FLOOR_ALBEDO = (0.45, 0.42, 0.38)
WALL_ALBEDO = (0.75, 0.73, 0.70)

# Categories use a fixed 3-level palette: any two distinct level tuples differ
# by >= 0.35 in some channel, and per-instance jitter is capped well below
# half of that, which keeps category albedo families separable.
_PALETTE_LEVELS = (0.15, 0.5, 0.85)
_ALBEDO_JITTER = 0.02


@dataclass(frozen=True)
class SceneConfig:
    room_count: int = 1
    object_count_range: tuple[int, int] = (12, 18)
    category_count: int = 6
    bounds_w: float = 10.0
    bounds_d: float = 8.0
    wall_height: float = 2.5
    wall_thickness: float = 0.1
    door_width: float = 1.2
    lighting_count: int = 3

    def validate(self) -> None:
        lo, hi = self.object_count_range
        if self.category_count < 2:
            raise ConfigError("category_count must be >= 2")
        if self.category_count > len(category_palette(27)):
            raise ConfigError("category_count exceeds the fixed palette size")
        if lo > hi or lo < 1:
            raise ConfigError(f"object_count_range {self.object_count_range} is empty")
        if lo < self.category_count:
            raise ConfigError(
                "object_count_range minimum must cover one object per category"
            )
        if self.room_count < 1 or self.room_count > 4:
            raise ConfigError("room_count must be in [1, 4]")
        if self.bounds_w <= 2.0 or self.bounds_d <= 2.0:
            raise ConfigError("bounds must exceed 2 m per side")
        if self.lighting_count < 1:
            raise ConfigError("lighting_count must be >= 1")


@dataclass(frozen=True)
class Rect:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, x: float, y: float, inset: float = 0.0) -> bool:
        return (
            self.xmin + inset <= x <= self.xmax - inset
            and self.ymin + inset <= y <= self.ymax - inset
        )


@dataclass(frozen=True)
class Wall:
    """Axis-aligned wall segment from (x0, y0) to (x1, y1), extruded upward."""

    x0: float
    y0: float
    x1: float
    y1: float
    height: float
    thickness: float

    def box(self) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
        """Solid extents as (min_corner, max_corner)."""
        h = self.thickness / 2.0
        xmin, xmax = min(self.x0, self.x1) - h, max(self.x0, self.x1) + h
        ymin, ymax = min(self.y0, self.y1) - h, max(self.y0, self.y1) + h
        return (xmin, ymin, 0.0), (xmax, ymax, self.height)


@dataclass(frozen=True)
class ObjectInstance:
    category_id: int
    shape: str  # "box" | "cylinder"
    position: tuple[float, float, float]  # center of the footprint, z = base
    size: tuple[float, float, float]  # full extents; cylinders: sx = sy = diameter
    albedo: tuple[float, float, float]

    def footprint_radius(self) -> float:
        sx, sy, _ = self.size
        if self.shape == "cylinder":
            return sx / 2.0
        return math.hypot(sx, sy) / 2.0


@dataclass(frozen=True)
class LightingPreset:
    id: int
    ambient: float
    sun_direction: tuple[float, float, float]
    sun_intensity: float


@dataclass(frozen=True)
class Scene:
    seed: int
    bounds: Rect
    walls: tuple[Wall, ...]
    objects: tuple[ObjectInstance, ...]
    lighting_presets: tuple[LightingPreset, ...]
    config: SceneConfig = field(default=SceneConfig(), compare=False)

    def lighting(self, preset_id: int) -> LightingPreset:
        for p in self.lighting_presets:
            if p.id == preset_id:
                return p
        raise KeyError(f"no lighting preset with id {preset_id}")


def category_palette(count: int) -> list[tuple[float, float, float]]:
    """Fixed category base colors: vivid two-level corners first, then the
    remaining three-level combinations in lexicographic order."""
    lo, mid, hi = _PALETTE_LEVELS
    corners = [
        (hi, lo, lo), (lo, hi, lo), (lo, lo, hi), (hi, hi, lo),
        (hi, lo, hi), (lo, hi, hi), (hi, hi, hi), (lo, lo, lo),
    ]
    rest = []
    for r in _PALETTE_LEVELS:
        for g in _PALETTE_LEVELS:
            for b in _PALETTE_LEVELS:
                c = (r, g, b)
                if c not in corners:
                    rest.append(c)
    palette = corners + rest
    if count > len(palette):
        raise ConfigError(f"palette supports at most {len(palette)} categories")
    return palette[:count]


def category_shape(category_id: int) -> str:
    return "box" if category_id % 2 == 0 else "cylinder"


def _perimeter_walls(bounds: Rect, cfg: SceneConfig) -> list[Wall]:
    h, th = cfg.wall_height, cfg.wall_thickness
    return [
        Wall(bounds.xmin, bounds.ymin, bounds.xmax, bounds.ymin, h, th),
        Wall(bounds.xmax, bounds.ymin, bounds.xmax, bounds.ymax, h, th),
        Wall(bounds.xmax, bounds.ymax, bounds.xmin, bounds.ymax, h, th),
        Wall(bounds.xmin, bounds.ymax, bounds.xmin, bounds.ymin, h, th),
    ]


def _partition_walls(
    bounds: Rect, cfg: SceneConfig, rng: np.random.Generator
) -> tuple[list[Wall], list[Rect]]:
    """Split the floor into `room_count` regions, returning partition wall
    segments (with door gaps) and the door rectangles that must stay clear."""
    walls: list[Wall] = []
    doors: list[Rect] = []
    regions = [bounds]
    for _ in range(cfg.room_count - 1):
        regions.sort(key=lambda r: (r.xmax - r.xmin) * (r.ymax - r.ymin), reverse=True)
        r = regions.pop(0)
        split_x = (r.xmax - r.xmin) >= (r.ymax - r.ymin)
        frac = rng.uniform(0.4, 0.6)
        if split_x:
            x = r.xmin + frac * (r.xmax - r.xmin)
            g0 = rng.uniform(r.ymin + 0.4, r.ymax - 0.4 - cfg.door_width)
            g1 = g0 + cfg.door_width
            walls.append(Wall(x, r.ymin, x, g0, cfg.wall_height, cfg.wall_thickness))
            walls.append(Wall(x, g1, x, r.ymax, cfg.wall_height, cfg.wall_thickness))
            doors.append(Rect(x - 0.5, g0, x + 0.5, g1))
            regions += [Rect(r.xmin, r.ymin, x, r.ymax), Rect(x, r.ymin, r.xmax, r.ymax)]
        else:
            y = r.ymin + frac * (r.ymax - r.ymin)
            g0 = rng.uniform(r.xmin + 0.4, r.xmax - 0.4 - cfg.door_width)
            g1 = g0 + cfg.door_width
            walls.append(Wall(r.xmin, y, g0, y, cfg.wall_height, cfg.wall_thickness))
            walls.append(Wall(g1, y, r.xmax, y, cfg.wall_height, cfg.wall_thickness))
            doors.append(Rect(g0, y - 0.5, g1, y + 0.5))
            regions += [Rect(r.xmin, r.ymin, r.xmax, y), Rect(r.xmin, y, r.xmax, r.ymax)]
    return walls, doors


def _draw_size(category_id: int, rng: np.random.Generator) -> tuple[float, float, float]:
    if category_shape(category_id) == "cylinder":
        d = rng.uniform(0.25, 0.7)
        h = rng.uniform(0.4, 1.6)
        return (d, d, h)
    sx = rng.uniform(0.3, 0.9)
    sy = rng.uniform(0.3, 0.9)
    sz = rng.uniform(0.4, 1.6)
    return (sx, sy, sz)


def _blocks_wall(x: float, y: float, r: float, wall: Wall) -> bool:
    (bx0, by0, _), (bx1, by1, _) = wall.box()
    dx = max(bx0 - x, 0.0, x - bx1)
    dy = max(by0 - y, 0.0, y - by1)
    return math.hypot(dx, dy) <= r


def generate_scene(seed: int, config: SceneConfig = SceneConfig()) -> Scene:
    """Generate a scene from a seed; pure in (seed, config).

    Objects are placed by rejection sampling with a capped retry budget; an
    infeasible config raises PlacementError naming the seed.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    bounds = Rect(0.0, 0.0, float(config.bounds_w), float(config.bounds_d))
    walls = _perimeter_walls(bounds, config)
    partitions, doors = _partition_walls(bounds, config, rng)
    walls_all = walls + partitions

    palette = category_palette(config.category_count)
    lo, hi = config.object_count_range
    n_objects = int(rng.integers(lo, hi + 1))
    categories = list(range(config.category_count))
    categories += [int(rng.integers(0, config.category_count))
                   for _ in range(n_objects - config.category_count)]
    rng.shuffle(categories)

    objects: list[ObjectInstance] = []
    placed: list[tuple[float, float, float]] = []  # (x, y, footprint radius)
    for cat in categories:
        size = _draw_size(cat, rng)
        base = palette[cat]
        albedo = tuple(
            float(np.clip(base[k] + rng.uniform(-_ALBEDO_JITTER, _ALBEDO_JITTER), 0.0, 1.0))
            for k in range(3)
        )
        shape = category_shape(cat)
        r = (size[0] / 2.0) if shape == "cylinder" else (math.hypot(size[0], size[1]) / 2.0)
        margin = max(size[0], size[1]) / 2.0 + 0.05
        ok = False
        for _ in range(1000):
            x = rng.uniform(bounds.xmin + margin, bounds.xmax - margin)
            y = rng.uniform(bounds.ymin + margin, bounds.ymax - margin)
            if any(math.hypot(x - px, y - py) < r + pr + 0.05 for px, py, pr in placed):
                continue
            if any(_blocks_wall(x, y, r + 0.05, w) for w in walls_all):
                continue
            # keep doorways passable
            if any(d.contains(x, y, inset=-(r + 0.45)) for d in doors):
                continue
            ok = True
            break
        if not ok:
            raise PlacementError(
                f"could not place object of category {cat} for seed {seed} "
                f"after 1000 attempts"
            )
        objects.append(ObjectInstance(cat, shape, (x, y, 0.0), size, albedo))
        placed.append((x, y, r))

    presets = _lighting_presets(config.lighting_count, rng)
    return Scene(
        seed=int(seed),
        bounds=bounds,
        walls=tuple(walls_all),
        objects=tuple(objects),
        lighting_presets=tuple(presets),
        config=config,
    )


def _lighting_presets(count: int, rng: np.random.Generator) -> list[LightingPreset]:
    presets = [
        LightingPreset(0, 0.55, _unit((0.35, 0.25, 0.9)), 0.45),
    ]
    for i in range(1, count):
        ambient = float(rng.uniform(0.25, 0.65))
        intensity = float(rng.uniform(0.2, min(0.8, 1.45 - ambient)))
        az = rng.uniform(0.0, 2.0 * math.pi)
        el = rng.uniform(math.radians(25.0), math.radians(75.0))
        d = (math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el))
        presets.append(LightingPreset(i, ambient, _unit(d), intensity))
    return presets


def _unit(v: tuple[float, float, float]) -> tuple[float, float, float]:
    n = math.sqrt(v[0] ** 2 + v[1] ** 2 + v[2] ** 2)
    return (v[0] / n, v[1] / n, v[2] / n)


# ---------------------------------------------------------------------------
# collision queries


@lru_cache(maxsize=16)
def _solids(scene: Scene):
    """Pack walls and objects into arrays for vectorized distance queries."""
    box_min, box_max = [], []
    for w in scene.walls:
        lo_c, hi_c = w.box()
        box_min.append(lo_c)
        box_max.append(hi_c)
    for o in scene.objects:
        if o.shape == "box":
            x, y, z = o.position
            sx, sy, sz = o.size
            box_min.append((x - sx / 2, y - sy / 2, z))
            box_max.append((x + sx / 2, y + sy / 2, z + sz))
    cyl = [(o.position[0], o.position[1], o.position[2], o.position[2] + o.size[2],
            o.size[0] / 2.0)
           for o in scene.objects if o.shape == "cylinder"]
    return (
        np.asarray(box_min, dtype=float).reshape(-1, 3),
        np.asarray(box_max, dtype=float).reshape(-1, 3),
        np.asarray(cyl, dtype=float).reshape(-1, 5),
    )


def is_free(scene: Scene, position, radius: float) -> bool:
    """True iff a sphere at `position` with `radius` stays inside the bounds
    and touches no wall or object. Boundary contact counts as not free."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    x, y, z = (float(position[0]), float(position[1]), float(position[2]))
    b = scene.bounds
    if not (b.xmin + radius <= x <= b.xmax - radius
            and b.ymin + radius <= y <= b.ymax - radius):
        return False
    box_min, box_max, cyl = _solids(scene)
    p = np.array([x, y, z])
    if len(box_min):
        d = np.maximum(np.maximum(box_min - p, 0.0), p - box_max)
        if np.any(np.einsum("ij,ij->i", d, d) <= radius * radius):
            return False
    if len(cyl):
        dxy = np.hypot(cyl[:, 0] - x, cyl[:, 1] - y)
        radial = np.maximum(dxy - cyl[:, 4], 0.0)
        dz = np.maximum(np.maximum(cyl[:, 2] - z, 0.0), z - cyl[:, 3])
        if np.any(radial * radial + dz * dz <= radius * radius):
            return False
    return True


# ---------------------------------------------------------------------------
# serialization


def scene_to_json(scene: Scene) -> str:
    doc = {
        "seed": scene.seed,
        "bounds": {"xmin": scene.bounds.xmin, "ymin": scene.bounds.ymin,
                   "xmax": scene.bounds.xmax, "ymax": scene.bounds.ymax},
        "walls": [
            {"x0": w.x0, "y0": w.y0, "x1": w.x1, "y1": w.y1,
             "height": w.height, "thickness": w.thickness}
            for w in scene.walls
        ],
        "objects": [
            {"category_id": o.category_id, "shape": o.shape,
             "position": list(o.position), "size": list(o.size),
             "albedo": list(o.albedo)}
            for o in scene.objects
        ],
        "lighting_presets": [
            {"id": p.id, "ambient": p.ambient,
             "sun_direction": list(p.sun_direction),
             "sun_intensity": p.sun_intensity}
            for p in scene.lighting_presets
        ],
        "config": {
            "room_count": scene.config.room_count,
            "object_count_range": list(scene.config.object_count_range),
            "category_count": scene.config.category_count,
            "bounds_w": scene.config.bounds_w,
            "bounds_d": scene.config.bounds_d,
            "wall_height": scene.config.wall_height,
            "wall_thickness": scene.config.wall_thickness,
            "door_width": scene.config.door_width,
            "lighting_count": scene.config.lighting_count,
        },
    }
    return json.dumps(doc, indent=2) + "\n"


def scene_from_json(text: str) -> Scene:
    doc = json.loads(text)
    cfg_doc = doc.get("config", {})
    cfg = SceneConfig(
        room_count=cfg_doc.get("room_count", 1),
        object_count_range=tuple(cfg_doc.get("object_count_range", (12, 18))),
        category_count=cfg_doc.get("category_count", 6),
        bounds_w=cfg_doc.get("bounds_w", 10.0),
        bounds_d=cfg_doc.get("bounds_d", 8.0),
        wall_height=cfg_doc.get("wall_height", 2.5),
        wall_thickness=cfg_doc.get("wall_thickness", 0.1),
        door_width=cfg_doc.get("door_width", 1.2),
        lighting_count=cfg_doc.get("lighting_count", 3),
    )
    b = doc["bounds"]
    return Scene(
        seed=doc["seed"],
        bounds=Rect(b["xmin"], b["ymin"], b["xmax"], b["ymax"]),
        walls=tuple(Wall(w["x0"], w["y0"], w["x1"], w["y1"], w["height"], w["thickness"])
                    for w in doc["walls"]),
        objects=tuple(
            ObjectInstance(o["category_id"], o["shape"], tuple(o["position"]),
                           tuple(o["size"]), tuple(o["albedo"]))
            for o in doc["objects"]
        ),
        lighting_presets=tuple(
            LightingPreset(p["id"], p["ambient"], tuple(p["sun_direction"]),
                           p["sun_intensity"])
            for p in doc["lighting_presets"]
        ),
        config=cfg,
    )


def save_scene(scene: Scene, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(scene_to_json(scene))


def load_scene(path) -> Scene:
    with open(path, "r", encoding="utf-8") as f:
        return scene_from_json(f.read())
