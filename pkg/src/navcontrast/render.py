"""Pure-function raycasting renderer.

Renders egocentric RGB views plus a per-pixel category map from a Scene and a
camera pose. Shading is local Lambertian plus ambient; no shadows, bounces, or
any hidden state, so identical inputs give byte-identical images.

Camera convention: pinhole at the pose position, yaw 0 looks along +x, yaw
increases counterclockwise, the view axis stays horizontal. The vertical field
of view is fov_deg * height / width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, OutOfBoundsError
from .scene import FLOOR_ALBEDO, WALL_ALBEDO, LightingPreset, Scene

SKY_ALBEDO = (0.55, 0.65, 0.82)
_EPS = 1e-9


@dataclass(frozen=True)
class RenderConfig:
    width: int = 64
    height: int = 64
    fov_deg: float = 90.0

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ConfigError("render size must be >= 1 pixel")
        if not 0.0 < self.fov_deg < 180.0:
            raise ConfigError("fov_deg must lie in (0, 180)")


@dataclass(frozen=True)
class Hit:
    distance: float
    category_id: int  # -1 for walls/floor
    normal: tuple[float, float, float]


@lru_cache(maxsize=16)
def _geometry(scene: Scene):
    """Pack scene solids into arrays: boxes (walls + box objects), vertical
    cylinders, and per-primitive category/albedo."""
    box_min, box_max, box_cat, box_alb = [], [], [], []
    for w in scene.walls:
        lo, hi = w.box()
        box_min.append(lo)
        box_max.append(hi)
        box_cat.append(-1)
        box_alb.append(WALL_ALBEDO)
    cyl, cyl_cat, cyl_alb = [], [], []
    for o in scene.objects:
        x, y, z = o.position
        sx, sy, sz = o.size
        if o.shape == "box":
            box_min.append((x - sx / 2, y - sy / 2, z))
            box_max.append((x + sx / 2, y + sy / 2, z + sz))
            box_cat.append(o.category_id)
            box_alb.append(o.albedo)
        else:
            cyl.append((x, y, z, z + sz, sx / 2.0))
            cyl_cat.append(o.category_id)
            cyl_alb.append(o.albedo)
    return (
        np.asarray(box_min, dtype=float).reshape(-1, 3),
        np.asarray(box_max, dtype=float).reshape(-1, 3),
        np.asarray(box_cat, dtype=np.int64),
        np.asarray(box_alb, dtype=float).reshape(-1, 3),
        np.asarray(cyl, dtype=float).reshape(-1, 5),
        np.asarray(cyl_cat, dtype=np.int64),
        np.asarray(cyl_alb, dtype=float).reshape(-1, 3),
    )


def camera_rays(position, yaw_deg: float, width: int, height: int,
                fov_deg: float) -> np.ndarray:
    """Unit ray directions through every pixel center, shape (H, W, 3).

    Row 0 is the top of the image; column index grows to the camera's right.
    """
    yaw = math.radians(yaw_deg)
    forward = np.array([math.cos(yaw), math.sin(yaw), 0.0])
    right = np.array([math.sin(yaw), -math.cos(yaw), 0.0])
    up = np.array([0.0, 0.0, 1.0])
    tan_h = math.tan(math.radians(fov_deg) / 2.0)
    tan_v = math.tan(math.radians(fov_deg * height / width) / 2.0)
    ndc_x = (np.arange(width) + 0.5) / width * 2.0 - 1.0
    ndc_y = (np.arange(height) + 0.5) / height * 2.0 - 1.0
    d = (forward[None, None, :]
         + tan_h * ndc_x[None, :, None] * right[None, None, :]
         - tan_v * ndc_y[:, None, None] * up[None, None, :])
    d /= np.linalg.norm(d, axis=2, keepdims=True)
    return d


def _safe_dirs(dirs: np.ndarray) -> np.ndarray:
    tiny = 1e-12
    return np.where(np.abs(dirs) < tiny, np.where(dirs >= 0.0, tiny, -tiny), dirs)


def _hit_rays(scene: Scene, origin: np.ndarray, dirs: np.ndarray):
    """Nearest intersection for N rays sharing one origin.

    Returns (t, category, normal, albedo, hit_mask); t is +inf where a ray
    leaves the scene without touching anything.
    """
    (box_min, box_max, box_cat, box_alb, cyl, cyl_cat, cyl_alb) = _geometry(scene)
    n = dirs.shape[0]
    d = _safe_dirs(dirs.astype(float))
    o = np.asarray(origin, dtype=float)

    best_t = np.full(n, np.inf)
    category = np.full(n, -1, dtype=np.int64)
    normal = np.zeros((n, 3))
    albedo = np.zeros((n, 3))

    # floor (rectangle of the bounds at z = 0)
    b = scene.bounds
    with np.errstate(divide="ignore", invalid="ignore"):
        t_f = -o[2] / d[:, 2]
    px = o[0] + t_f * d[:, 0]
    py = o[1] + t_f * d[:, 1]
    ok = (t_f > _EPS) & (px >= b.xmin) & (px <= b.xmax) & (py >= b.ymin) & (py <= b.ymax)
    upd = ok & (t_f < best_t)
    best_t[upd] = t_f[upd]
    normal[upd] = (0.0, 0.0, 1.0)
    albedo[upd] = FLOOR_ALBEDO
    category[upd] = -1

    # boxes (slab method)
    if len(box_min):
        t1 = (box_min[None, :, :] - o[None, None, :]) / d[:, None, :]
        t2 = (box_max[None, :, :] - o[None, None, :]) / d[:, None, :]
        tlo = np.minimum(t1, t2)
        thi = np.maximum(t1, t2)
        tnear = tlo.max(axis=2)
        tfar = thi.min(axis=2)
        hit = (tnear <= tfar) & (tnear > _EPS)
        t_box = np.where(hit, tnear, np.inf)
        j = np.argmin(t_box, axis=1)
        tb = t_box[np.arange(n), j]
        upd = tb < best_t
        if np.any(upd):
            rows = np.nonzero(upd)[0]
            cols = j[rows]
            best_t[rows] = tb[rows]
            category[rows] = box_cat[cols]
            albedo[rows] = box_alb[cols]
            axis = np.argmax(tlo[rows, cols, :], axis=1)
            nrm = np.zeros((rows.size, 3))
            nrm[np.arange(rows.size), axis] = -np.sign(d[rows, axis])
            normal[rows] = nrm

    # vertical cylinders: quadratic side wall plus top/bottom caps
    if len(cyl):
        cx, cy, z0, z1, r = (cyl[:, k] for k in range(5))
        ox = o[0] - cx[None, :]
        oy = o[1] - cy[None, :]
        a = (d[:, 0] ** 2 + d[:, 1] ** 2)[:, None]
        bq = 2.0 * (ox * d[:, 0:1] + oy * d[:, 1:2])
        cq = ox * ox + oy * oy - (r * r)[None, :]
        disc = bq * bq - 4.0 * a * cq
        sq = np.sqrt(np.maximum(disc, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t_side = (-bq - sq) / (2.0 * a)
        z_at = o[2] + t_side * d[:, 2:3]
        side_ok = (disc >= 0.0) & (t_side > _EPS) & (z_at >= z0) & (z_at <= z1)
        t_side = np.where(side_ok, t_side, np.inf)

        def cap_hits(zc):
            with np.errstate(divide="ignore", invalid="ignore"):
                t_c = (zc[None, :] - o[2]) / d[:, 2:3]
            qx = o[0] + t_c * d[:, 0:1] - cx[None, :]
            qy = o[1] + t_c * d[:, 1:2] - cy[None, :]
            ok = (t_c > _EPS) & (qx * qx + qy * qy <= (r * r)[None, :])
            return np.where(ok, t_c, np.inf)

        t_top = cap_hits(z1)
        t_bot = cap_hits(z0)
        t_all = np.stack([t_side, t_top, t_bot], axis=2)  # (n, Nc, 3)
        kind = np.argmin(t_all, axis=2)
        t_cyl = np.take_along_axis(t_all, kind[:, :, None], axis=2)[:, :, 0]
        j = np.argmin(t_cyl, axis=1)
        tc = t_cyl[np.arange(n), j]
        upd = tc < best_t
        if np.any(upd):
            rows = np.nonzero(upd)[0]
            cols = j[rows]
            best_t[rows] = tc[rows]
            category[rows] = cyl_cat[cols]
            albedo[rows] = cyl_alb[cols]
            k = kind[rows, cols]
            nrm = np.zeros((rows.size, 3))
            side = k == 0
            if np.any(side):
                rs, cs = rows[side], cols[side]
                hx = o[0] + best_t[rs] * d[rs, 0] - cx[cs]
                hy = o[1] + best_t[rs] * d[rs, 1] - cy[cs]
                inv = 1.0 / np.maximum(np.hypot(hx, hy), 1e-12)
                nrm[side, 0] = hx * inv
                nrm[side, 1] = hy * inv
            nrm[k == 1, 2] = 1.0
            nrm[k == 2, 2] = -1.0
            normal[rows] = nrm

    hit_mask = np.isfinite(best_t)
    return best_t, category, normal, albedo, hit_mask


def ray_hit(scene: Scene, origin, direction) -> Hit | None:
    """Nearest intersection of one ray, or None if it leaves the scene."""
    d = np.asarray(direction, dtype=float)
    nrm = float(np.linalg.norm(d))
    if abs(nrm - 1.0) > 1e-6:
        raise ValueError("direction must be unit length")
    t, cat, normal, _, mask = _hit_rays(scene, np.asarray(origin, float), d[None, :])
    if not mask[0]:
        return None
    return Hit(float(t[0]), int(cat[0]), tuple(float(v) for v in normal[0]))


def center_hit(scene: Scene, pose) -> Hit | None:
    """Debug query: the hit of the ray through the image center (the
    horizontal optical axis at the pose's yaw)."""
    yaw = math.radians(pose.yaw)
    d = np.array([math.cos(yaw), math.sin(yaw), 0.0])
    return ray_hit(scene, pose.position, d)


def shade(albedo: np.ndarray, normal: np.ndarray,
          lighting: LightingPreset) -> np.ndarray:
    """Lambert + ambient: albedo * (ambient + I * max(0, n.s)), clamped."""
    s = np.asarray(lighting.sun_direction, dtype=float)
    lam = np.maximum(normal @ s, 0.0)
    c = albedo * (lighting.ambient + lighting.sun_intensity * lam)[..., None]
    return np.clip(c, 0.0, 1.0)


def render(scene: Scene, pose, lighting: LightingPreset, width: int = 64,
           height: int = 64, fov_deg: float = 90.0):
    """Render (Image, CategoryMap) at a pose.

    Returns an (H, W, 3) uint8 image and an (H, W) int64 map holding the hit
    object's category id, -1 for walls, floor, and sky.
    """
    RenderConfig(width, height, fov_deg).validate()
    x, y, _ = pose.position
    if not scene.bounds.contains(x, y):
        raise OutOfBoundsError(
            f"pose position ({x:.3f}, {y:.3f}) outside scene bounds")
    dirs = camera_rays(pose.position, pose.yaw, width, height, fov_deg)
    flat = dirs.reshape(-1, 3)
    _, cat, normal, albedo, mask = _hit_rays(
        scene, np.asarray(pose.position, float), flat)

    color = shade(albedo, normal, lighting)
    if not mask.all():
        sky_lam = np.maximum(flat[~mask] @ np.asarray(lighting.sun_direction), 0.0)
        glow = np.clip(lighting.ambient + lighting.sun_intensity * sky_lam, 0.0, 1.0)
        color[~mask] = np.asarray(SKY_ALBEDO) * glow[:, None]
        cat = cat.copy()
        cat[~mask] = -1

    img = np.rint(255.0 * color).astype(np.uint8).reshape(height, width, 3)
    catmap = cat.reshape(height, width)
    return img, catmap
