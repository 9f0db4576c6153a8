"""Edge-domain standardization.

Photos (during training) and hand-drawn sketches (during inference) are both
mapped into a single edge-map domain, so that the conditioning channels the
model sees at inference look like the ones it was trained on. The built-in
detector is a classical Canny-style pipeline; externally computed edge files
(e.g. from a learned detector) come in through ``load_external_edges``.

Internal polarity is fixed: 1 = edge, 0 = background. Files on disk store
edges white-on-black; dark-line-on-white files are inverted on load.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .images import (
    InvalidInputError,
    area_downsample,
    load_image,
    to_grayscale,
    validate_image,
)

__all__ = [
    "EdgeParams",
    "standardize",
    "load_external_edges",
    "batch_standardize",
]


@dataclass(frozen=True)
class EdgeParams:
    blur_sigma: float = 1.0
    low_threshold: float = 0.1
    high_threshold: float = 0.2
    binarize: bool = False

    def __post_init__(self):
        if self.blur_sigma <= 0:
            raise InvalidInputError("blur_sigma must be positive")
        if not (0 < self.low_threshold < 1 and 0 < self.high_threshold < 1):
            raise InvalidInputError("thresholds must lie in (0, 1)")
        if self.low_threshold >= self.high_threshold:
            raise InvalidInputError("low_threshold must be < high_threshold")


def _gaussian_kernel1d(sigma: float) -> np.ndarray:
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _blur(gray: np.ndarray, sigma: float) -> np.ndarray:
    # Separable convolution with reflect padding; small images are padded
    # only as far as they allow, repeating reflection if needed.
    k = _gaussian_kernel1d(sigma)
    r = len(k) // 2
    out = gray
    for axis in (0, 1):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (r, r)
        padded = np.pad(out, pad, mode="symmetric")
        while padded.shape[axis] < out.shape[axis] + 2 * r:
            extra = out.shape[axis] + 2 * r - padded.shape[axis]
            grow = [(0, 0), (0, 0)]
            grow[axis] = (0, extra)
            padded = np.pad(padded, grow, mode="symmetric")
        out = np.apply_along_axis(lambda m: np.convolve(m, k, mode="valid"), axis, padded)
    return out


def _central_gradient(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Central differences with edge-replicated borders.
    padded = np.pad(gray, 1, mode="edge")
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    return gx, gy


def _nms(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Suppress pixels that are not local maxima along the gradient direction.

    The gradient angle is quantized to 4 directions; a pixel survives when its
    magnitude is >= both neighbors along that direction (out-of-bounds
    neighbors count as 0).
    """
    h, w = mag.shape
    angle = np.arctan2(gy, gx)  # [-pi, pi]
    sector = np.rint(angle / (np.pi / 4.0)).astype(int) % 4  # 0=E, 1=NE, 2=N, 3=NW
    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}
    padded = np.pad(mag, 1, mode="constant")
    keep = np.zeros_like(mag, dtype=bool)
    for s, (dy, dx) in offsets.items():
        sel = sector == s
        fwd = padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        bwd = padded[1 - dy : 1 - dy + h, 1 - dx : 1 - dx + w]
        keep |= sel & (mag >= fwd) & (mag >= bwd)
    return keep & (mag > 0)


def _hysteresis(mag: np.ndarray, low: float, high: float) -> np.ndarray:
    weak = mag >= low
    strong = mag >= high
    if not strong.any():
        return np.zeros_like(strong)
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    keep_labels = np.unique(labels[strong])
    return weak & np.isin(labels, keep_labels[keep_labels > 0])


def standardize(image: np.ndarray, params: EdgeParams = EdgeParams()) -> np.ndarray:
    """Map a photo or sketch raster to the standardized edge domain.

    Pipeline: grayscale -> Gaussian blur -> central-difference gradient
    magnitude (normalized to max 1) -> non-maximum suppression -> hysteresis
    with (low, high) relative thresholds -> optional binarization. Soft
    output keeps the surviving normalized magnitudes.
    """
    arr = validate_image(image)
    gray = to_grayscale(arr)
    blurred = _blur(gray, params.blur_sigma)
    gx, gy = _central_gradient(blurred)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak > 0:
        mag = mag / peak
    thinned = np.where(_nms(mag, gx, gy), mag, 0.0)
    mask = _hysteresis(thinned, params.low_threshold, params.high_threshold)
    if params.binarize:
        edge = mask.astype(np.float64)
    else:
        edge = np.where(mask, thinned, 0.0)
    return edge.astype(np.float32)


def load_external_edges(path, expected_size: tuple[int, int]) -> np.ndarray:
    """Read a precomputed edge PNG, normalizing polarity and size.

    The file must be 8-bit grayscale. Dark-lines-on-white inputs (mean
    intensity > 0.5) are inverted so 1 always means edge; mismatched sizes
    are reduced by area averaging.
    """
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"edge file not found: {p}")
    with Image.open(p) as im:
        if im.mode != "L":
            raise InvalidInputError(f"expected 8-bit grayscale PNG, got mode {im.mode!r}: {p}")
        plane = np.asarray(im, dtype=np.float64) / 255.0
    if plane.mean() > 0.5:
        plane = 1.0 - plane
    if plane.shape != tuple(expected_size):
        plane = area_downsample(plane, tuple(expected_size))
    return np.clip(plane, 0.0, 1.0).astype(np.float32)


def batch_standardize(input_dir, output_dir, params: EdgeParams = EdgeParams()) -> dict:
    """Standardize every readable image in a directory tree's top level.

    Writes one white-on-black edge PNG per input, same stem. Per-file
    failures are collected, not raised.
    """
    in_dir = Path(input_dir)
    if not in_dir.is_dir():
        raise InvalidInputError(f"not a directory: {in_dir}")
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    failures: list[dict] = []
    for name in sorted(os.listdir(in_dir)):
        src = in_dir / name
        if not src.is_file():
            continue
        try:
            image = load_image(src)
            edge = standardize(image, params)
            data = np.clip(np.rint(edge * 255.0), 0, 255).astype(np.uint8)
            Image.fromarray(data, mode="L").save(out_dir / f"{src.stem}.png", format="PNG")
            count += 1
        except Exception as exc:  # per-file isolation
            failures.append({"path": str(src), "error": str(exc)})
    return {"count": count, "failures": failures}
