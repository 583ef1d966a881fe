"""Stochastic view augmentation: crop, resize, flip, color jitter, grayscale.

Randomness is decoupled from application: a view consumes exactly seven
uniform draws in a fixed order (crop area, crop top, crop left, flip,
brightness, contrast, grayscale), and all seven are always drawn even when a
config disables the corresponding effect. That keeps draw streams aligned
when configs differ, so two training runs can be compared knowing they saw
identical randomness.

`augment` is the readable one-image implementation; `augment_batch` is the
vectorized equivalent used in training loops. They must produce bitwise
identical float32 output, and the tests hold them to that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

N_DRAWS = 7
_LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class AugmentConfig:
    crop_scale_range: tuple[float, float] = (0.4, 1.0)
    flip_prob: float = 0.5
    jitter_strength: float = 0.4
    grayscale_prob: float = 0.2
    out_size: int = 64

    def validate(self) -> None:
        lo, hi = self.crop_scale_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ConfigError(f"crop_scale_range {self.crop_scale_range} "
                              "must satisfy 0 < lo <= hi <= 1")
        for name in ("flip_prob", "grayscale_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if not 0.0 <= self.jitter_strength < 1.0:
            raise ConfigError("jitter_strength must lie in [0, 1)")
        if self.out_size < 1:
            raise ConfigError("out_size must be >= 1")


def identity_config(out_size: int) -> AugmentConfig:
    """A config whose augmentation is an exact no-op on images already at
    `out_size` (useful for evaluation paths)."""
    return AugmentConfig(crop_scale_range=(1.0, 1.0), flip_prob=0.0,
                         jitter_strength=0.0, grayscale_prob=0.0,
                         out_size=out_size)


def draw_view_params(rng: np.random.Generator, n: int) -> np.ndarray:
    """The (n, 7) uniform draws consumed by n augmented views."""
    return rng.random((n, N_DRAWS))


def _crop_geometry(draws, h, w, config):
    """Map the first three uniforms to (side, top, left) crop boxes."""
    lo, hi = config.crop_scale_range
    frac = lo + draws[..., 0] * (hi - lo)
    side = np.rint(np.sqrt(frac * h * w)).astype(np.int64)
    side = np.clip(side, 1, min(h, w))
    top = np.floor(draws[..., 1] * (h - side + 1)).astype(np.int64)
    left = np.floor(draws[..., 2] * (w - side + 1)).astype(np.int64)
    # guard the half-open draw landing exactly on the upper bound
    top = np.minimum(top, h - side)
    left = np.minimum(left, w - side)
    return side, top, left


def _axis_coords(side, offset, out):
    """Source sampling positions along one axis for every output pixel:
    returns integer neighbors and the float32 blend weight."""
    q = (np.arange(out, dtype=float) + 0.5) * (side[:, None] / out) - 0.5
    q = np.clip(q, 0.0, (side - 1)[:, None].astype(float))
    i0 = np.floor(q).astype(np.int64)
    i1 = np.minimum(i0 + 1, (side - 1)[:, None])
    f = (q - i0).astype(np.float32)
    return offset[:, None] + i0, offset[:, None] + i1, f


def augment(image: np.ndarray, config: AugmentConfig,
            draws: np.ndarray) -> np.ndarray:
    """Augment one (H, W, 3) uint8 image into a float32 (out, out, 3) view
    in [0, 1], consuming a (7,) draw vector."""
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError("expected (H, W, 3) uint8 image")
    draws = np.asarray(draws, dtype=float).reshape(N_DRAWS)
    h, w = image.shape[:2]
    side, top, left = _crop_geometry(draws[None, :], h, w, config)
    y0, y1, fy = _axis_coords(side, top, config.out_size)
    x0, x1, fx = _axis_coords(side, left, config.out_size)
    y0, y1, fy, x0, x1, fx = y0[0], y1[0], fy[0], x0[0], x1[0], fx[0]

    x = image.astype(np.float32) / np.float32(255.0)
    rows = x[y0] * (1.0 - fy)[:, None, None] + x[y1] * fy[:, None, None]
    view = (rows[:, x0] * (1.0 - fx)[None, :, None]
            + rows[:, x1] * fx[None, :, None])

    if draws[3] < config.flip_prob:
        # materialize so later reductions see the same memory layout as the
        # batched path and sum in the same order
        view = np.ascontiguousarray(view[:, ::-1])

    s = config.jitter_strength
    if s > 0.0:
        brightness = np.float32(1.0 + s * (2.0 * draws[4] - 1.0))
        contrast = np.float32(1.0 + s * (2.0 * draws[5] - 1.0))
        view = view * brightness
        mean = view.reshape(-1).mean(dtype=np.float32)
        view = contrast * (view - mean) + mean

    if draws[6] < config.grayscale_prob:
        luma = (view[..., 0] * np.float32(_LUMA[0])
                + view[..., 1] * np.float32(_LUMA[1])
                + view[..., 2] * np.float32(_LUMA[2]))
        view = np.repeat(luma[..., None], 3, axis=2)

    return np.clip(view, 0.0, 1.0).astype(np.float32)


def augment_batch(images: np.ndarray, config: AugmentConfig,
                  draws: np.ndarray) -> np.ndarray:
    """Vectorized `augment` over a (B, H, W, 3) uint8 stack with (B, 7)
    draws; produces bitwise the same views as the one-image path."""
    if images.ndim != 4 or images.shape[3] != 3 or images.dtype != np.uint8:
        raise ValueError("expected (B, H, W, 3) uint8 images")
    draws = np.asarray(draws, dtype=float)
    b, h, w = images.shape[:3]
    if draws.shape != (b, N_DRAWS):
        raise ValueError(f"expected ({b}, {N_DRAWS}) draws, got {draws.shape}")
    out = config.out_size
    side, top, left = _crop_geometry(draws, h, w, config)
    y0, y1, fy = _axis_coords(side, top, out)
    x0, x1, fx = _axis_coords(side, left, out)

    x = images.astype(np.float32) / np.float32(255.0)
    bi = np.arange(b)[:, None]
    rows = (x[bi, y0] * (1.0 - fy)[:, :, None, None]
            + x[bi, y1] * fy[:, :, None, None])          # (B, out, W, 3)
    # gather columns as rows of the transposed map: contiguous slabs index
    # an order of magnitude faster than per-pixel fancy indexing, and the
    # lerp still sees the same operands in the same order (bitwise stable)
    rows_t = np.ascontiguousarray(rows.transpose(0, 2, 1, 3))  # (B, W, out, 3)
    views_t = (rows_t[bi, x0] * (1.0 - fx)[:, :, None, None]
               + rows_t[bi, x1] * fx[:, :, None, None])  # (B, out_x, out_y, 3)
    views = np.ascontiguousarray(views_t.transpose(0, 2, 1, 3))

    flip = draws[:, 3] < config.flip_prob
    views[flip] = views[flip, :, ::-1]

    s = config.jitter_strength
    if s > 0.0:
        brightness = (1.0 + s * (2.0 * draws[:, 4] - 1.0)).astype(np.float32)
        contrast = (1.0 + s * (2.0 * draws[:, 5] - 1.0)).astype(np.float32)
        views = views * brightness[:, None, None, None]
        # flat per-item reduction: same summation order as the single path
        means = views.reshape(b, -1).mean(axis=1, dtype=np.float32)
        means = means[:, None, None, None]
        views = contrast[:, None, None, None] * (views - means) + means

    gray = draws[:, 6] < config.grayscale_prob
    if np.any(gray):
        luma = (views[gray, :, :, 0] * np.float32(_LUMA[0])
                + views[gray, :, :, 1] * np.float32(_LUMA[1])
                + views[gray, :, :, 2] * np.float32(_LUMA[2]))
        views[gray] = np.repeat(luma[..., None], 3, axis=3)

    return np.clip(views, 0.0, 1.0).astype(np.float32)
