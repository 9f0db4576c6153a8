"""Forward-process noise schedule and q-sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .images import InvalidInputError

__all__ = ["NoiseSchedule", "make_schedule", "q_sample"]


@dataclass(frozen=True)
class NoiseSchedule:
    kind: str
    beta: np.ndarray  # length T, beta[t-1] is the step-t value
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def T(self) -> int:
        return len(self.beta)

    def alpha_bar_at(self, t: int) -> float:
        if not 1 <= t <= self.T:
            raise InvalidInputError(f"timestep {t} out of range [1, {self.T}]")
        return float(self.alpha_bar[t - 1])


def make_schedule(T: int, kind: str = "linear") -> NoiseSchedule:
    """Build a T-step schedule.

    Linear betas span 1e-4..0.02 at the reference length of 1000 steps and
    are rescaled by 1000/T for other lengths, so the terminal alpha_bar stays
    near zero regardless of T. Cosine uses the standard squared-cosine
    alpha_bar curve.
    """
    if T < 2:
        raise InvalidInputError("schedule needs at least 2 steps")
    if kind == "linear":
        scale = 1000.0 / T
        beta = np.linspace(1e-4 * scale, 0.02 * scale, T, dtype=np.float64)
        beta = np.clip(beta, 0.0, 0.999)
    elif kind == "cosine":
        s = 0.008
        steps = np.arange(T + 1, dtype=np.float64)
        f = np.cos((steps / T + s) / (1 + s) * np.pi / 2) ** 2
        alpha_bar = f / f[0]
        beta = np.clip(1.0 - alpha_bar[1:] / alpha_bar[:-1], 0.0, 0.999)
    else:
        raise InvalidInputError(f"unknown schedule kind {kind!r}")
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    sched = NoiseSchedule(kind=kind, beta=beta, alpha=alpha, alpha_bar=alpha_bar)
    _check_invariants(sched)
    return sched


def _check_invariants(s: NoiseSchedule) -> None:
    if not ((s.beta > 0).all() and (s.beta < 1).all()):
        raise InvalidInputError("schedule betas must lie in (0, 1)")
    if not (np.diff(s.alpha_bar) < 0).all():
        raise InvalidInputError("alpha_bar must be strictly decreasing")


def q_sample(z0: torch.Tensor, t: int, eps: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    """Noise a clean latent to timestep t: sqrt(ab)*z0 + sqrt(1-ab)*eps."""
    if eps.shape != z0.shape:
        raise InvalidInputError(f"eps shape {tuple(eps.shape)} != z0 shape {tuple(z0.shape)}")
    ab = schedule.alpha_bar_at(t)
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps
