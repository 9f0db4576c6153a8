"""Classifier-free-guidance sampling from pure noise.

The reverse chain always starts from a standard-normal latent; there is no
partial-noising / strength mode. At every step the denoiser is evaluated
twice, once with the null text embedding and once with the prompt embedding,
and the two predictions are extrapolated by the guidance scale. The sketch
channels stay concatenated on both branches by default.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .diffusion import SketchDiffusion
from .images import InvalidInputError
from .schedule import NoiseSchedule, make_schedule

__all__ = ["SamplerConfig", "guided_eps", "sampler_step", "sample", "sample_latent"]


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 50
    guidance_scale: float = 7.5
    method: str = "ddim"
    eta: float = 0.0
    seed: int = 0
    aug_level: int = 0
    null_sketch: bool = False  # null the sketch channels on the unconditional branch too

    def __post_init__(self):
        if self.guidance_scale < 0:
            raise InvalidInputError("guidance_scale must be >= 0")
        if self.method not in ("ddpm", "ddim"):
            raise InvalidInputError(f"unknown sampler method {self.method!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise InvalidInputError("eta must lie in [0, 1]")
        if self.steps < 1:
            raise InvalidInputError("steps must be >= 1")


def guided_eps(eps_uncond: torch.Tensor, eps_cond: torch.Tensor, s: float) -> torch.Tensor:
    """eps_uncond + s * (eps_cond - eps_uncond), elementwise."""
    if eps_uncond.shape != eps_cond.shape:
        raise InvalidInputError("guided_eps shape mismatch")
    if s == 1.0:
        return eps_cond
    return eps_uncond + s * (eps_cond - eps_uncond)


def sampler_step(
    z_t: torch.Tensor,
    eps_hat: torch.Tensor,
    t: int,
    schedule: NoiseSchedule,
    method: str = "ddim",
    eta: float = 0.0,
    rng: torch.Generator | None = None,
    t_prev: int | None = None,
) -> torch.Tensor:
    """One reverse update from timestep t to t_prev (default t-1; 0 = clean).

    DDPM uses the ancestral posterior variance; DDIM interpolates between
    deterministic (eta=0) and ancestral (eta=1). The final step adds no noise.
    """
    if not 1 <= t <= schedule.T:
        raise InvalidInputError(f"timestep {t} out of range")
    if t_prev is None:
        t_prev = t - 1
    if not 0 <= t_prev < t:
        raise InvalidInputError("t_prev must lie in [0, t)")
    ab_t = schedule.alpha_bar_at(t)
    ab_prev = 1.0 if t_prev == 0 else schedule.alpha_bar_at(t_prev)

    x0 = (z_t - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t)

    if method == "ddpm":
        var = (1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - ab_t / ab_prev)
        mean = (
            np.sqrt(ab_prev) * x0
            + np.sqrt(max(1.0 - ab_prev - var, 0.0)) * eps_hat
        )
        if t_prev == 0:
            return mean
        if rng is None:
            raise InvalidInputError("ddpm sampling requires an rng")
        return mean + np.sqrt(var) * torch.randn(z_t.shape, generator=rng)
    # ddim
    var = eta**2 * (1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - ab_t / ab_prev)
    mean = np.sqrt(ab_prev) * x0 + np.sqrt(max(1.0 - ab_prev - var, 0.0)) * eps_hat
    if t_prev == 0 or eta == 0.0:
        return mean
    if rng is None:
        raise InvalidInputError("stochastic ddim sampling requires an rng")
    return mean + np.sqrt(var) * torch.randn(z_t.shape, generator=rng)


def _timestep_path(T: int, steps: int) -> list[int]:
    if steps > T:
        raise InvalidInputError(f"steps {steps} exceeds schedule length {T}")
    ts = np.unique(np.rint(np.linspace(1, T, steps)).astype(int))
    return list(ts[::-1])


def _build_condition(model: SketchDiffusion, sketch: np.ndarray, cfg: SamplerConfig, schedule, rng):
    from .conditioning import make_concat1, make_concat3

    hw = model.latent_hw
    if model.config.variant == "concat1":
        cond = make_concat1(sketch, hw)
        aug = None
    else:
        cond, aug = make_concat3(sketch, hw, cfg.aug_level, schedule, rng)
    return torch.from_numpy(cond).permute(2, 0, 1), aug


def sample_latent(
    model: SketchDiffusion,
    sketch: np.ndarray,
    prompt: str,
    cfg: SamplerConfig,
    use_cfg: bool = True,
) -> torch.Tensor:
    """Run the full reverse chain; returns the final clean latent (c_z, h, w).

    ``use_cfg=False`` evaluates only the conditional branch (equivalent to
    guidance scale 1 but with half the denoiser calls).
    """
    schedule = make_schedule(model.config.T, model.config.schedule)
    rng = torch.Generator().manual_seed(cfg.seed)
    cond, aug = _build_condition(model, sketch, cfg, schedule, rng)
    h, w = model.latent_hw
    c_z = model.codec.config.latent_channels
    if cond.shape[1:] != (h, w):
        raise InvalidInputError(f"sketch maps to grid {tuple(cond.shape[1:])}, expected {(h, w)}")

    with torch.no_grad():
        text_cond = model.embed_prompt(prompt).unsqueeze(0)
        text_null = model.null_text().unsqueeze(0)

    z = torch.randn((1, c_z, h, w), generator=rng)
    cond_b = cond.unsqueeze(0)
    null_cond_b = torch.zeros_like(cond_b) if cfg.null_sketch else cond_b
    path = _timestep_path(schedule.T, cfg.steps)
    with torch.no_grad():
        for i, t in enumerate(path):
            t_prev = path[i + 1] if i + 1 < len(path) else 0
            t_tensor = torch.tensor([t], dtype=torch.long)
            aug_t = torch.tensor([aug or 0], dtype=torch.long) if aug is not None else None
            if model.config.variant == "concat3" and aug_t is None:
                aug_t = torch.tensor([cfg.aug_level], dtype=torch.long)
            eps_c = model.unet(torch.cat([z, cond_b], dim=1), t_tensor, text_cond, aug_t)
            if use_cfg:
                eps_u = model.unet(torch.cat([z, null_cond_b], dim=1), t_tensor, text_null, aug_t)
                eps_hat = guided_eps(eps_u, eps_c, cfg.guidance_scale)
            else:
                eps_hat = eps_c
            z = sampler_step(z, eps_hat, t, schedule, cfg.method, cfg.eta, rng, t_prev=t_prev)
    if not torch.isfinite(z).all():
        raise RuntimeError("sampler produced non-finite latent")
    return z.squeeze(0)


def sample(
    model: SketchDiffusion,
    sketch: np.ndarray,
    prompt: str,
    cfg: SamplerConfig,
    use_cfg: bool = True,
) -> np.ndarray:
    """Sketch + prompt -> decoded image (HxWx3 in [0, 1]).

    No implicit prompt prefix is applied; callers compose their own (for
    example "a color photograph of ...").
    """
    z = sample_latent(model, sketch, prompt, cfg, use_cfg=use_cfg)
    return model.codec.decode(z.permute(1, 2, 0).numpy())
