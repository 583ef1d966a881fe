"""PNG persistence for rendered frames and category maps.

Images are 8-bit RGB. Category maps are 16-bit grayscale with ids shifted by
one (0 = background), so id -1 round-trips through unsigned storage.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image as PILImage


def encode_png(img: np.ndarray) -> bytes:
    """PNG bytes for an (H, W, 3) uint8 image, without touching disk."""
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("expected (H, W, 3) uint8 image")
    buf = io.BytesIO()
    PILImage.fromarray(img, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_image(path, img: np.ndarray) -> None:
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("expected (H, W, 3) uint8 image")
    PILImage.fromarray(img, mode="RGB").save(path, format="PNG")


def load_image(path) -> np.ndarray:
    with PILImage.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_catmap(path, ids: np.ndarray) -> None:
    if ids.ndim != 2:
        raise ValueError("expected (H, W) category map")
    if ids.min() < -1 or ids.max() > 65534:
        raise ValueError("category ids must lie in [-1, 65534]")
    arr = (ids.astype(np.int64) + 1).astype(np.uint16)
    PILImage.fromarray(arr).save(path, format="PNG")


def load_catmap(path) -> np.ndarray:
    with PILImage.open(path) as im:
        arr = np.asarray(im, dtype=np.int64)
    return arr - 1
