import numpy as np
import pytest
import torch

torch.set_num_threads(1)


def make_images(n: int, res: int = 64, seed: int = 0) -> list[np.ndarray]:
    """Synthetic photos: colored gradients with a few solid shapes.

    Distinct shape layouts give each image a distinct edge map, which is what
    the sketch-conditioning tests rely on.
    """
    rng = np.random.default_rng(seed)
    images = []
    for _ in range(n):
        img = np.zeros((res, res, 3), np.float32)
        gx = np.linspace(0, 1, res)
        gy = np.linspace(0, 1, res)
        img += rng.random(3) * 0.5
        img[:, :, 0] += 0.4 * gx[None, :] * rng.random()
        img[:, :, 1] += 0.4 * gy[:, None] * rng.random()
        for _ in range(3):
            cy, cx = rng.integers(res // 8, res - res // 8, 2)
            r = rng.integers(res // 16, res // 5)
            yy, xx = np.ogrid[:res, :res]
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
            img[mask] = rng.random(3)
        images.append(np.clip(img, 0, 1).astype(np.float32))
    return images


CAPTION_WORDS = ["mountain", "church", "river", "forest", "tower", "bridge", "valley", "harbor"]


def make_captions(n: int) -> list[str]:
    return [f"a color photograph of a {CAPTION_WORDS[i % len(CAPTION_WORDS)]}" for i in range(n)]


@pytest.fixture(scope="session")
def tiny_codec():
    """Barely trained 16x16 VAE (f=2): right shapes, wrong pictures."""
    from s2p.vae import AutoencoderConfig, codec_from_checkpoint, train_autoencoder

    config = AutoencoderConfig(
        downsample_factor=2, latent_channels=2, base_width=8, steps=5, batch_size=2, seed=7
    )
    ckpt, _ = train_autoencoder(make_images(2, res=16, seed=3), config)
    return codec_from_checkpoint(ckpt)


@pytest.fixture(scope="session")
def tiny_model(tiny_codec):
    """Untrained-but-functional concat1 diffusion bundle at 16x16."""
    from s2p.diffusion import DiffusionConfig, SketchDiffusion
    from s2p.text import build_vocab

    torch.manual_seed(11)
    config = DiffusionConfig(T=20, resolution=16, steps=1, batch_size=2, seed=11)
    vocab = build_vocab(make_captions(8), max_size=64)
    return SketchDiffusion(
        config, tiny_codec, vocab, text_width=16, seq_len=8, base_width=8, heads=2
    )
