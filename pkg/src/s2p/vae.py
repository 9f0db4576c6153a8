"""Convolutional VAE defining the latent space the diffusion model runs in.

Small stride-2 encoder / mirror decoder, trained with MSE reconstruction plus
a lightly weighted KL term. After training, a calibration pass sets
``latent_scale`` to 1/std of the latent components so scaled latents are
roughly unit-variance, which keeps them diffusion-friendly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn as nn

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .images import InvalidInputError, validate_image

__all__ = [
    "AutoencoderConfig",
    "ConvVAE",
    "LatentCodec",
    "train_autoencoder",
    "load_codec",
]

VAE_KIND = "vae"


@dataclass(frozen=True)
class AutoencoderConfig:
    downsample_factor: int = 4
    latent_channels: int = 4
    kl_weight: float = 1e-6
    base_width: int = 32
    learning_rate: float = 2e-3
    steps: int = 2000
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.downsample_factor not in (2, 4, 8):
            raise InvalidInputError("downsample_factor must be one of {2, 4, 8}")
        if self.kl_weight < 0:
            raise InvalidInputError("kl_weight must be >= 0")


class _ResBlock(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.conv1 = nn.Conv2d(width, width, 3, padding=1)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1)
        self.act = nn.SiLU()

    def forward(self, x):
        h = self.conv2(self.act(self.conv1(self.act(x))))
        return x + h


class ConvVAE(nn.Module):
    """Stride-2 conv pyramid; widths double per level (capped at 4x base).

    Each downsampling happens before the residual work at that level, which
    keeps almost all compute at reduced resolution.
    """

    def __init__(self, config: AutoencoderConfig):
        super().__init__()
        self.config = config
        n_down = int(math.log2(config.downsample_factor))
        widths = [min(config.base_width * 2**i, config.base_width * 4) for i in range(n_down)]

        enc: list[nn.Module] = []
        c_in = 3
        for w in widths:
            enc += [nn.Conv2d(c_in, w, 4, stride=2, padding=1), _ResBlock(w)]
            c_in = w
        enc += [nn.SiLU(), nn.Conv2d(c_in, 2 * config.latent_channels, 1)]
        self.encoder = nn.Sequential(*enc)

        dec: list[nn.Module] = [nn.Conv2d(config.latent_channels, widths[-1], 3, padding=1)]
        c_in = widths[-1]
        for w in reversed(widths):
            dec += [_ResBlock(c_in), nn.ConvTranspose2d(c_in, w, 4, stride=2, padding=1)]
            c_in = w
        dec += [_ResBlock(c_in), nn.SiLU(), nn.Conv2d(c_in, 3, 1)]
        self.decoder = nn.Sequential(*dec)

    def encode_params(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        mu, logvar = self.encoder(x).chunk(2, dim=1)
        return mu, logvar.clamp(-30.0, 20.0)

    def decode_raw(self, z: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.decoder(z))


class LatentCodec:
    """Frozen encode/decode wrapper around a trained ConvVAE checkpoint."""

    def __init__(self, model: ConvVAE, latent_scale: float = 1.0):
        self.model = model.eval()
        for p in self.model.parameters():
            p.requires_grad_(False)
        self.latent_scale = float(latent_scale)
        self.config = model.config

    def encode(self, image: np.ndarray, mode: str = "mean", rng: torch.Generator | None = None) -> np.ndarray:
        """Image (HxWx3 in [0,1]) -> scaled latent (h x w x c_z)."""
        arr = validate_image(image)
        if arr.shape[2] != 3:
            raise InvalidInputError("encode expects a 3-channel image")
        f = self.config.downsample_factor
        if arr.shape[0] % f or arr.shape[1] % f:
            raise InvalidInputError(f"image dims must be divisible by {f}, got {arr.shape[:2]}")
        x = torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)
        with torch.no_grad():
            mu, logvar = self.model.encode_params(x)
            if mode == "mean":
                z = mu
            elif mode == "sample":
                if rng is None:
                    raise InvalidInputError("mode='sample' requires an rng")
                eps = torch.randn(mu.shape, generator=rng)
                z = mu + torch.exp(0.5 * logvar) * eps
            else:
                raise InvalidInputError(f"unknown encode mode {mode!r}")
        z = z * self.latent_scale
        return z.squeeze(0).permute(1, 2, 0).numpy()

    def encode_batch(self, images: torch.Tensor) -> torch.Tensor:
        """NCHW image batch -> scaled latent means, staying in torch."""
        with torch.no_grad():
            mu, _ = self.model.encode_params(images)
        return mu * self.latent_scale

    def decode(self, latent: np.ndarray) -> np.ndarray:
        lat = np.asarray(latent, dtype=np.float32)
        c_z = self.config.latent_channels
        if lat.ndim != 3 or lat.shape[2] != c_z:
            raise InvalidInputError(f"expected h x w x {c_z} latent, got shape {lat.shape}")
        z = torch.from_numpy(lat).permute(2, 0, 1).unsqueeze(0) / self.latent_scale
        with torch.no_grad():
            x = self.model.decode_raw(z)
        out = x.squeeze(0).permute(1, 2, 0).numpy()
        return np.clip(out, 0.0, 1.0)

    def decode_batch(self, latents: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return self.model.decode_raw(latents / self.latent_scale).clamp(0.0, 1.0)


def _as_batch(images: list[np.ndarray]) -> torch.Tensor:
    return torch.stack([torch.from_numpy(validate_image(im)).permute(2, 0, 1) for im in images])


def train_autoencoder(
    images: list[np.ndarray],
    config: AutoencoderConfig,
    rng: torch.Generator | None = None,
) -> tuple[Checkpoint, list[float]]:
    """Train the VAE on a list of HxWx3 images; returns checkpoint + loss log.

    Loss = reconstruction MSE + kl_weight * KL(q(z|x) || N(0, I)).
    """
    if not images:
        raise InvalidInputError("empty training set")
    if rng is None:
        rng = torch.Generator().manual_seed(config.seed)
    torch.manual_seed(config.seed)
    model = ConvVAE(config)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    data = _as_batch(images)
    n = data.shape[0]

    losses: list[float] = []
    for _ in range(config.steps):
        idx = torch.randint(0, n, (min(config.batch_size, n),), generator=rng)
        x = data[idx]
        mu, logvar = model.encode_params(x)
        eps = torch.randn(mu.shape, generator=rng)
        z = mu + torch.exp(0.5 * logvar) * eps
        recon = model.decode_raw(z)
        rec_loss = torch.mean((recon - x) ** 2)
        kl = 0.5 * torch.mean(torch.sum(mu**2 + logvar.exp() - 1.0 - logvar, dim=1))
        loss = rec_loss + config.kl_weight * kl
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(float(loss.detach()))

    # Calibrate latent_scale = 1 / std of raw latent means over the set.
    with torch.no_grad():
        mu, _ = model.encode_params(data)
    std = float(mu.std())
    latent_scale = 1.0 / std if std > 0 else 1.0

    ckpt = Checkpoint(
        kind=VAE_KIND,
        config=asdict(config),
        state_dict=model.state_dict(),
        step=config.steps,
        extra={"latent_scale": latent_scale},
    )
    return ckpt, losses


def codec_from_checkpoint(ckpt: Checkpoint) -> LatentCodec:
    if ckpt.kind != VAE_KIND:
        raise InvalidInputError(f"not a VAE checkpoint: kind={ckpt.kind!r}")
    config = AutoencoderConfig(**ckpt.config)
    model = ConvVAE(config)
    model.load_state_dict(ckpt.state_dict)
    return LatentCodec(model, latent_scale=ckpt.extra["latent_scale"])


def load_codec(path) -> LatentCodec:
    return codec_from_checkpoint(load_checkpoint(path))


def save_codec_checkpoint(ckpt: Checkpoint, path) -> None:
    save_checkpoint(ckpt, path)
