"""Sketch conditioning channels concatenated to the denoiser input.

Two variants:
  concat1 — one clean channel (edge map downsampled to the latent grid and
            remapped to [-1, 1]), the depth-to-image style.
  concat3 — the same channel replicated to 3 and corrupted by the forward
            process at a sampled augmentation level, with the level handed
            to the network as an extra embedding, the upscaler style.
"""

from __future__ import annotations

import numpy as np
import torch

from .images import InvalidInputError, area_downsample
from .schedule import NoiseSchedule, q_sample

__all__ = ["make_concat1", "make_concat3", "drop_sketch", "T_AUG_DEFAULT"]

T_AUG_DEFAULT = 100


def _downsample_rescale(edge: np.ndarray, latent_hw: tuple[int, int]) -> np.ndarray:
    if edge.ndim != 2:
        raise InvalidInputError(f"edge map must be HxW, got shape {edge.shape}")
    h, w = latent_hw
    eh, ew = edge.shape
    if eh % h or ew % w:
        raise InvalidInputError(
            f"edge size {edge.shape} is not an integer multiple of latent grid {latent_hw}"
        )
    small = area_downsample(edge.astype(np.float64), (h, w))
    return (2.0 * small - 1.0).astype(np.float32)  # background -1, edges +1


def make_concat1(edge: np.ndarray, latent_hw: tuple[int, int]) -> np.ndarray:
    """Edge map -> h x w x 1 condition channel in [-1, 1]."""
    return _downsample_rescale(edge, latent_hw)[:, :, None]


def make_concat3(
    edge: np.ndarray,
    latent_hw: tuple[int, int],
    aug_level: int,
    schedule: NoiseSchedule,
    rng: torch.Generator,
) -> tuple[np.ndarray, int]:
    """Edge map -> h x w x 3 noise-augmented condition channels + the level.

    Level 0 is the exact clean replication; level k >= 1 applies the forward
    process at step k of the (truncated) augmentation schedule.
    """
    t_aug = min(schedule.T, T_AUG_DEFAULT)
    if not 0 <= aug_level < t_aug:
        raise InvalidInputError(f"aug_level {aug_level} out of range [0, {t_aug})")
    base = _downsample_rescale(edge, latent_hw)
    channels = np.repeat(base[:, :, None], 3, axis=2)
    if aug_level == 0:
        return channels, 0
    clean = torch.from_numpy(channels)
    eps = torch.randn(clean.shape, generator=rng)
    noised = q_sample(clean, aug_level, eps, schedule)
    return noised.numpy(), aug_level


def drop_sketch(channels: np.ndarray, p: float, rng: torch.Generator) -> np.ndarray:
    """With probability p, replace the condition channels with zeros."""
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError("drop probability must lie in [0, 1]")
    if p > 0 and float(torch.rand((), generator=rng)) < p:
        return np.zeros_like(channels)
    return channels
