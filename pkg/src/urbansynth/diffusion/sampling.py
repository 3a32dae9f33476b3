"""Ancestral sampling from noise to image, with optional mid-trajectory
feature capture at a fixed timestep."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .schedule import NoiseSchedule
from .vae import ImageVAE


@dataclass
class SampleResult:
    image: torch.Tensor                       # (h, w, 3) in [0, 1]
    latent: torch.Tensor                      # final z_0 estimate (c, h, w)
    features: dict[str, torch.Tensor] | None  # decoder taps captured at t*


def _stacked_noise(shape, generators: list[torch.Generator]) -> torch.Tensor:
    return torch.stack([torch.randn(shape, generator=g) for g in generators])


@torch.no_grad()
def sample(
    model: nn.Module,
    vae: ImageVAE,
    schedule: NoiseSchedule,
    text: torch.Tensor,
    seeds: list[int],
    masks: torch.Tensor | None = None,
    branch: nn.Module | None = None,
    capture_t_star: int | None = None,
    resolution: int = 64,
) -> list[SampleResult]:
    """Run the full reverse chain for a batch of conditions.

    Noise is drawn from one generator per sample, so a given (seed, cond,
    weights) triple reproduces the same output regardless of how samples are
    batched together.
    """
    if text.dim() != 3 or text.shape[0] != len(seeds):
        raise ValueError("text must be (b, L, d) matching the seed list")
    if capture_t_star is not None and not (1 <= capture_t_star <= schedule.timesteps):
        raise ValueError(f"capture timestep {capture_t_star} out of [1, T]")
    b = len(seeds)
    if masks is not None:
        if masks.shape[0] != b:
            raise ValueError("mask batch size mismatch")
        resolution = masks.shape[-1]
    generators = [torch.Generator().manual_seed(s) for s in seeds]

    c = vae.latent_channels
    hw = resolution // vae.downsample_factor
    z = _stacked_noise((c, hw, hw), generators)
    captured: dict[str, torch.Tensor] | None = None

    model.eval()
    for t in range(schedule.timesteps, 0, -1):
        tt = torch.full((b,), t, dtype=torch.long)
        control = branch(z, tt, text, masks) if branch is not None else None
        want_features = capture_t_star == t
        out = model(z, tt, text, control=control, return_features=want_features)
        if want_features:
            eps, captured = out
        else:
            eps = out
        alpha = float(schedule.alphas[t - 1])
        alpha_bar = float(schedule.alpha_bars[t - 1])
        beta = float(schedule.betas[t - 1])
        mean = (z - beta / (1.0 - alpha_bar) ** 0.5 * eps) / alpha**0.5
        if t > 1:
            z = mean + beta**0.5 * _stacked_noise((c, hw, hw), generators)
        else:
            z = mean

    images = vae.decode(z).clamp(0.0, 1.0)
    results = []
    for i in range(b):
        feats = None
        if captured is not None:
            feats = {k: v[i] for k, v in captured.items()}
        results.append(
            SampleResult(image=images[i].permute(1, 2, 0), latent=z[i], features=feats)
        )
    return results
