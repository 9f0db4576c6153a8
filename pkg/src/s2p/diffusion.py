"""Denoiser network and the self-supervised sketch-conditioned training loop.

Training needs no sketch data: each photo is pushed through the edge
standardizer to fabricate its own conditioning, the frozen autoencoder maps
it into latent space, and the denoiser learns to predict the injected noise
given (noisy latent + sketch channels, timestep, text embedding). The text
branch is replaced by the learned null embedding with probability p_uncond
so classifier-free guidance is available at sampling time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, field, fields

import numpy as np
import torch
import torch.nn as nn

from .checkpoint import Checkpoint
from .conditioning import T_AUG_DEFAULT, make_concat1, make_concat3
from .edges import EdgeParams, standardize
from .images import InvalidInputError
from .schedule import NoiseSchedule, make_schedule, q_sample
from .text import TextEncoder, Vocabulary, sinusoidal_positions, tokenize
from .vae import LatentCodec

__all__ = [
    "DiffusionConfig",
    "DenoiserInputs",
    "CondUNet",
    "SketchDiffusion",
    "predict_eps",
    "training_step",
    "train_diffusion",
]

DIFFUSION_KIND = "diffusion"


@dataclass(frozen=True)
class DiffusionConfig:
    T: int = 200
    schedule: str = "linear"
    variant: str = "concat1"
    p_uncond: float = 0.1
    T_aug: int = T_AUG_DEFAULT
    learning_rate: float = 1e-4
    steps: int = 3000
    batch_size: int = 8
    resolution: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.variant not in ("concat1", "concat3"):
            raise InvalidInputError(f"unknown variant {self.variant!r}")
        if not 0.0 <= self.p_uncond < 1.0:
            raise InvalidInputError("p_uncond must lie in [0, 1)")

    @property
    def cond_channels(self) -> int:
        return 1 if self.variant == "concat1" else 3

    def to_kv_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in fields(self))

    @classmethod
    def from_kv_text(cls, text: str) -> "DiffusionConfig":
        casts = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InvalidInputError(f"bad config line: {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in casts:
                raise InvalidInputError(f"unknown config key: {key!r}")
            kwargs[key] = value
        typed = {}
        for f in fields(cls):
            if f.name not in kwargs:
                continue
            raw = kwargs[f.name]
            typed[f.name] = raw if f.type == "str" else (float(raw) if f.type == "float" else int(raw))
        return cls(**typed)


@dataclass
class DenoiserInputs:
    z_t: torch.Tensor  # (c_z + k, h, w) or batched (B, c_z + k, h, w)
    t: int
    text: torch.Tensor  # (L, d_txt) or (B, L, d_txt)
    aug_level: int | None = None


class _TimeResBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, t_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(1, c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.t_proj = nn.Linear(t_dim, c_out)
        self.norm2 = nn.GroupNorm(1, c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()
        self.act = nn.SiLU()

    def forward(self, x, t_emb):
        h = self.conv1(self.act(self.norm1(x)))
        h = h + self.t_proj(self.act(t_emb))[:, :, None, None]
        h = self.conv2(self.act(self.norm2(h)))
        return self.skip(x) + h


class _SelfAttention(nn.Module):
    def __init__(self, channels: int, heads: int):
        super().__init__()
        self.norm = nn.GroupNorm(1, channels)
        self.attn = nn.MultiheadAttention(channels, heads, batch_first=True)

    def forward(self, x):
        b, c, h, w = x.shape
        seq = self.norm(x).flatten(2).transpose(1, 2)
        out, _ = self.attn(seq, seq, seq, need_weights=False)
        return x + out.transpose(1, 2).reshape(b, c, h, w)


class _CrossAttention(nn.Module):
    def __init__(self, channels: int, text_width: int, heads: int):
        super().__init__()
        self.norm = nn.GroupNorm(1, channels)
        self.attn = nn.MultiheadAttention(
            channels, heads, kdim=text_width, vdim=text_width, batch_first=True
        )

    def forward(self, x, text):
        b, c, h, w = x.shape
        seq = self.norm(x).flatten(2).transpose(1, 2)
        out, _ = self.attn(seq, text, text, need_weights=False)
        return x + out.transpose(1, 2).reshape(b, c, h, w)


def _time_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freq = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / half)
    freq = freq.to(t.dtype)
    angles = t[:, None].to(freq.dtype) * freq[None, :]
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=1)


class CondUNet(nn.Module):
    """Three-resolution UNet over the latent grid.

    Self-attention at the lowest resolution, cross-attention to the text
    sequence at the two lowest; the augmentation-level embedding (concat3)
    is added onto the timestep embedding.
    """

    def __init__(
        self,
        latent_channels: int = 4,
        cond_channels: int = 1,
        base_width: int = 48,
        text_width: int = 128,
        heads: int = 4,
        use_aug_embedding: bool = False,
    ):
        super().__init__()
        self.latent_channels = latent_channels
        self.cond_channels = cond_channels
        self.use_aug_embedding = use_aug_embedding
        w1, w2, w3 = base_width, 2 * base_width, 3 * base_width
        t_dim = 4 * base_width
        self.t_dim = t_dim
        self.t_mlp = nn.Sequential(nn.Linear(t_dim, t_dim), nn.SiLU(), nn.Linear(t_dim, t_dim))
        if use_aug_embedding:
            self.aug_mlp = nn.Sequential(nn.Linear(t_dim, t_dim), nn.SiLU(), nn.Linear(t_dim, t_dim))

        self.stem = nn.Conv2d(latent_channels + cond_channels, w1, 3, padding=1)
        self.down1 = _TimeResBlock(w1, w1, t_dim)
        self.pool1 = nn.Conv2d(w1, w2, 4, stride=2, padding=1)
        self.down2 = _TimeResBlock(w2, w2, t_dim)
        self.cross2 = _CrossAttention(w2, text_width, heads)
        self.pool2 = nn.Conv2d(w2, w3, 4, stride=2, padding=1)
        self.mid = _TimeResBlock(w3, w3, t_dim)
        self.mid_self = _SelfAttention(w3, heads)
        self.mid_cross = _CrossAttention(w3, text_width, heads)
        self.mid2 = _TimeResBlock(w3, w3, t_dim)
        self.unpool2 = nn.ConvTranspose2d(w3, w2, 4, stride=2, padding=1)
        self.up2 = _TimeResBlock(2 * w2, w2, t_dim)
        self.up_cross2 = _CrossAttention(w2, text_width, heads)
        self.unpool1 = nn.ConvTranspose2d(w2, w1, 4, stride=2, padding=1)
        self.up1 = _TimeResBlock(2 * w1, w1, t_dim)
        self.head = nn.Sequential(
            nn.GroupNorm(1, w1), nn.SiLU(), nn.Conv2d(w1, latent_channels, 3, padding=1)
        )

    def forward(
        self,
        x: torch.Tensor,
        t: torch.Tensor,
        text: torch.Tensor,
        aug_level: torch.Tensor | None = None,
    ) -> torch.Tensor:
        if x.shape[1] != self.latent_channels + self.cond_channels:
            raise InvalidInputError(
                f"expected {self.latent_channels + self.cond_channels} input channels, got {x.shape[1]}"
            )
        dtype = self.stem.weight.dtype
        t_emb = self.t_mlp(_time_embedding(t.to(dtype), self.t_dim))
        if self.use_aug_embedding:
            if aug_level is None:
                aug_level = torch.zeros_like(t)
            t_emb = t_emb + self.aug_mlp(_time_embedding(aug_level.to(dtype), self.t_dim))
        h1 = self.down1(self.stem(x), t_emb)
        h2 = self.down2(self.pool1(h1), t_emb)
        h2 = self.cross2(h2, text)
        m = self.mid(self.pool2(h2), t_emb)
        m = self.mid_cross(self.mid_self(m), text)
        m = self.mid2(m, t_emb)
        u2 = self.up2(torch.cat([self.unpool2(m), h2], dim=1), t_emb)
        u2 = self.up_cross2(u2, text)
        u1 = self.up1(torch.cat([self.unpool1(u2), h1], dim=1), t_emb)
        return self.head(u1)


class SketchDiffusion(nn.Module):
    """Denoiser + text encoder bundle, with the frozen codec alongside."""

    def __init__(
        self,
        config: DiffusionConfig,
        codec: LatentCodec,
        vocab: Vocabulary,
        text_width: int = 128,
        seq_len: int = 16,
        base_width: int = 48,
        heads: int = 4,
    ):
        super().__init__()
        self.config = config
        self.codec = codec  # plain attribute: not a submodule, never trained
        self.vocab = vocab
        self.seq_len = seq_len
        self.text_encoder = TextEncoder(len(vocab), seq_len=seq_len, width=text_width, heads=heads)
        self.unet = CondUNet(
            latent_channels=codec.config.latent_channels,
            cond_channels=config.cond_channels,
            base_width=base_width,
            text_width=text_width,
            heads=heads,
            use_aug_embedding=(config.variant == "concat3"),
        )
        self.hparams = {"text_width": text_width, "seq_len": seq_len, "base_width": base_width, "heads": heads}
        # CFG plumbing instrumentation
        self.null_branch_count = 0
        self.cond_branch_count = 0

    @property
    def latent_hw(self) -> tuple[int, int]:
        f = self.codec.config.downsample_factor
        return (self.config.resolution // f, self.config.resolution // f)

    def embed_prompt(self, prompt: str) -> torch.Tensor:
        ids = torch.tensor(tokenize(prompt, self.vocab, self.seq_len), dtype=torch.long)
        return self.text_encoder(ids).squeeze(0)

    def null_text(self) -> torch.Tensor:
        return self.text_encoder.null_embedding(1).squeeze(0)


def predict_eps(model: SketchDiffusion, inputs: DenoiserInputs) -> torch.Tensor:
    """Evaluate the denoiser on one example; condition channels are consumed."""
    x = inputs.z_t
    squeeze = x.dim() == 3
    if squeeze:
        x = x.unsqueeze(0)
    text = inputs.text
    if text.dim() == 2:
        text = text.unsqueeze(0).expand(x.shape[0], -1, -1)
    t = torch.full((x.shape[0],), inputs.t, dtype=torch.long)
    aug = None
    if inputs.aug_level is not None:
        aug = torch.full((x.shape[0],), inputs.aug_level, dtype=torch.long)
    with torch.no_grad():
        out = model.unet(x, t, text, aug)
    if not torch.isfinite(out).all():
        raise RuntimeError("denoiser produced non-finite values")
    return out.squeeze(0) if squeeze else out


def _prepare_item(
    model: SketchDiffusion,
    photo: np.ndarray,
    caption: str,
    schedule: NoiseSchedule,
    config: DiffusionConfig,
    rng: torch.Generator,
    edge_params: EdgeParams,
):
    """Self-supervised sample assembly for one (photo, caption) pair."""
    # Edge extraction and mean-encoding are deterministic; memoize per photo.
    cache = getattr(model, "_prep_cache", None)
    if cache is None:
        cache = model._prep_cache = {}
    key = (hash(photo.tobytes()), edge_params)
    if key in cache:
        edge, z0 = cache[key]
    else:
        edge = standardize(photo, edge_params)
        z0 = torch.from_numpy(model.codec.encode(photo, mode="mean")).permute(2, 0, 1)
        if len(cache) < 4096:
            cache[key] = (edge, z0)
    t = int(torch.randint(1, schedule.T + 1, (), generator=rng))
    eps = torch.randn(z0.shape, generator=rng)
    zt = q_sample(z0, t, eps, schedule)

    if config.variant == "concat1":
        cond = make_concat1(edge, model.latent_hw)
        aug_level = 0
    else:
        t_aug = min(config.T_aug, schedule.T)
        aug_level = int(torch.randint(0, t_aug, (), generator=rng))
        cond, aug_level = make_concat3(edge, model.latent_hw, aug_level, schedule, rng)
    cond_t = torch.from_numpy(cond).permute(2, 0, 1)

    ids = torch.tensor(tokenize(caption, model.vocab, model.seq_len), dtype=torch.long)
    use_null = float(torch.rand((), generator=rng)) < config.p_uncond
    return zt, cond_t, eps, t, aug_level, ids, use_null


def training_step(
    batch: list[tuple[np.ndarray, str]],
    model: SketchDiffusion,
    schedule: NoiseSchedule,
    config: DiffusionConfig,
    rng: torch.Generator,
    optimizer: torch.optim.Optimizer | None = None,
    edge_params: EdgeParams = EdgeParams(),
) -> float:
    """One optimization step over a (photo, caption) batch; returns the loss.

    The autoencoder stays frozen; only the denoiser and text encoder move.
    """
    if not batch:
        raise InvalidInputError("empty batch")
    if optimizer is None:
        optimizer = torch.optim.Adam(
            list(model.unet.parameters()) + list(model.text_encoder.parameters()),
            lr=config.learning_rate,
        )

    items = [
        _prepare_item(model, photo, caption, schedule, config, rng, edge_params)
        for photo, caption in batch
    ]

    texts = []
    for zt, cond, eps, t, aug_level, ids, use_null in items:
        if use_null:
            texts.append(model.text_encoder.null_embedding(1).squeeze(0))
            model.null_branch_count += 1
        else:
            texts.append(model.text_encoder(ids.unsqueeze(0)).squeeze(0))
            model.cond_branch_count += 1
    x = torch.stack([torch.cat([zt, cond], dim=0) for zt, cond, *_ in items])
    eps = torch.stack([item[2] for item in items])
    t_tensor = torch.tensor([item[3] for item in items], dtype=torch.long)
    aug = (
        torch.tensor([item[4] for item in items], dtype=torch.long)
        if config.variant == "concat3"
        else None
    )
    eps_hat = model.unet(x, t_tensor, torch.stack(texts), aug)
    loss = torch.mean((eps_hat - eps) ** 2)

    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return float(loss.detach())


def _smooth(values: list[float], window: int) -> float:
    chunk = values[:window] if window > 0 else values
    return float(np.mean(chunk))


def train_diffusion(
    dataset: list[tuple[np.ndarray, str]],
    config: DiffusionConfig,
    codec: LatentCodec,
    rng: torch.Generator | None = None,
    vocab: Vocabulary | None = None,
    edge_params: EdgeParams = EdgeParams(),
    model_hparams: dict | None = None,
) -> tuple[Checkpoint, list[float], SketchDiffusion]:
    """Train the sketch-conditioned denoiser on (photo, caption) pairs."""
    if not dataset:
        raise InvalidInputError("empty dataset")
    if rng is None:
        rng = torch.Generator().manual_seed(config.seed)
    torch.manual_seed(config.seed)

    if vocab is None:
        from .text import build_vocab

        vocab = build_vocab([cap for _, cap in dataset] or [""], max_size=512)
    model = SketchDiffusion(config, codec, vocab, **(model_hparams or {}))
    schedule = make_schedule(config.T, config.schedule)
    optimizer = torch.optim.Adam(
        list(model.unet.parameters()) + list(model.text_encoder.parameters()),
        lr=config.learning_rate,
    )

    n = len(dataset)
    losses: list[float] = []
    for _ in range(config.steps):
        idx = torch.randint(0, n, (min(config.batch_size, n),), generator=rng)
        batch = [dataset[int(i)] for i in idx]
        losses.append(
            training_step(batch, model, schedule, config, rng, optimizer, edge_params)
        )

    ckpt = Checkpoint(
        kind=DIFFUSION_KIND,
        config=asdict(config),
        state_dict={f"model.{k}": v for k, v in model.state_dict().items()},
        step=config.steps,
        extra={"vocab": vocab.to_tokens(), "hparams": model.hparams},
    )
    return ckpt, losses, model


def model_from_checkpoint(ckpt: Checkpoint, codec: LatentCodec) -> SketchDiffusion:
    if ckpt.kind != DIFFUSION_KIND:
        raise InvalidInputError(f"not a diffusion checkpoint: kind={ckpt.kind!r}")
    config = DiffusionConfig(**ckpt.config)
    vocab = Vocabulary(ckpt.extra["vocab"])
    model = SketchDiffusion(config, codec, vocab, **ckpt.extra.get("hparams", {}))
    state = {k.removeprefix("model."): v for k, v in ckpt.state_dict.items()}
    model.load_state_dict(state)
    model.eval()
    return model
