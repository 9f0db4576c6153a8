"""Raster utilities: the float image currency and PNG I/O.

Images are numpy float32 arrays in [0, 1]. Color images are H x W x 3,
grayscale H x W x 1, edge maps plain H x W.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

__all__ = [
    "InvalidInputError",
    "validate_image",
    "to_grayscale",
    "load_image",
    "save_image",
    "center_crop_square",
    "resize_bilinear",
    "area_downsample",
]

# BT.601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


class InvalidInputError(ValueError):
    """Raised when an input violates a documented precondition."""


def validate_image(image: np.ndarray) -> np.ndarray:
    """Check ImageBuffer invariants and return the array as float32."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise InvalidInputError(f"expected HxWx1 or HxWx3 image, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise InvalidInputError("zero-sized image")
    arr = arr.astype(np.float32, copy=False)
    if not np.isfinite(arr).all():
        raise InvalidInputError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise InvalidInputError("image values must lie in [0, 1]")
    return arr


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Collapse an HxWxC image to an HxW luma plane (float64 for accuracy)."""
    arr = validate_image(image).astype(np.float64)
    if arr.shape[2] == 1:
        return arr[:, :, 0]
    return arr @ _LUMA


def load_image(path) -> np.ndarray:
    """Load a PNG/JPEG as HxWx3 float32 in [0, 1]."""
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float32) / 255.0
    return arr


def save_image(image: np.ndarray, path) -> None:
    """Write an HxWx3 or HxW array in [0, 1] as an 8-bit PNG."""
    arr = np.asarray(image)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    data = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    mode = "L" if data.ndim == 2 else "RGB"
    Image.fromarray(data, mode=mode).save(path, format="PNG")


def center_crop_square(image: np.ndarray) -> np.ndarray:
    h, w = image.shape[:2]
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    return image[top : top + side, left : left + side]


def resize_bilinear(image: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize of an HxWx3 image to size x size."""
    arr = validate_image(image)
    if arr.shape[0] == size and arr.shape[1] == size:
        return arr
    channels = [
        np.asarray(
            Image.fromarray(arr[:, :, c].astype(np.float32), mode="F").resize(
                (size, size), Image.BILINEAR
            )
        )
        for c in range(arr.shape[2])
    ]
    return np.clip(np.stack(channels, axis=2), 0.0, 1.0).astype(np.float32)


def area_downsample(plane: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Area-average an HxW plane down to out_hw.

    Integer-factor reductions are exact block means; other ratios fall back
    to Pillow's box filter.
    """
    h, w = plane.shape
    oh, ow = out_hw
    if (h, w) == (oh, ow):
        return plane.astype(np.float64)
    if h % oh == 0 and w % ow == 0:
        fh, fw = h // oh, w // ow
        return plane.reshape(oh, fh, ow, fw).astype(np.float64).mean(axis=(1, 3))
    resized = Image.fromarray(plane.astype(np.float32), mode="F").resize((ow, oh), Image.BOX)
    return np.asarray(resized, dtype=np.float64)
