"""Training loops for the VAE and the latent denoiser, plus the noise
prediction objective shared with control-branch training."""

from __future__ import annotations

from typing import Callable, Iterable

import torch
from torch import nn

from .schedule import NoiseSchedule
from .textcond import TextEncoder
from .vae import ImageVAE


def ldm_loss(
    model: nn.Module,
    schedule: NoiseSchedule,
    z0: torch.Tensor,
    text: torch.Tensor,
    generator: torch.Generator | None = None,
    control_fn: Callable | None = None,
) -> torch.Tensor:
    """Noise-prediction MSE with timesteps drawn uniformly from [1, T].

    ``control_fn(z_t, t, text) -> residual dict`` routes the same objective
    through a control branch when training one.
    """
    if z0.shape[0] == 0:
        raise ValueError("empty batch")
    b = z0.shape[0]
    t = torch.randint(1, schedule.timesteps + 1, (b,), generator=generator)
    eps = torch.randn(z0.shape, generator=generator, dtype=z0.dtype)
    zt = schedule.add_noise_batch(z0, t, eps)
    control = control_fn(zt, t, text) if control_fn is not None else None
    pred = model(zt, t, text, control=control)
    return torch.mean((pred - eps) ** 2)


def _batches(n: int, batch_size: int, steps: int, generator: torch.Generator) -> Iterable[torch.Tensor]:
    for _ in range(steps):
        yield torch.randint(0, n, (min(batch_size, n),), generator=generator)


def train_vae(
    vae: ImageVAE,
    images: torch.Tensor,
    steps: int = 1500,
    batch_size: int = 16,
    lr: float = 2e-3,
    seed: int = 0,
    kl_weight: float = 1e-5,
) -> list[float]:
    """Train the VAE on an (n, 3, h, w) image tensor; returns the loss curve."""
    if images.shape[0] == 0:
        raise ValueError("empty corpus")
    torch.manual_seed(seed)
    generator = torch.Generator().manual_seed(seed)
    opt = torch.optim.Adam(vae.parameters(), lr=lr)
    history: list[float] = []
    vae.train()
    for idx in _batches(images.shape[0], batch_size, steps, generator):
        x = images[idx]
        mu, logvar = vae.encode_params(x)
        noise = torch.randn(mu.shape, generator=generator)
        z = mu + torch.exp(0.5 * logvar) * noise
        recon = vae.decode(z)
        recon_loss = torch.mean((recon - x) ** 2)
        kl = -0.5 * torch.mean(1 + logvar - mu.pow(2) - logvar.exp())
        loss = recon_loss + kl_weight * kl
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(float(loss.detach()))
    vae.eval()
    vae.calibrate_latent_scale(images[: min(64, images.shape[0])])
    return history


def train_ldm(
    model: nn.Module,
    schedule: NoiseSchedule,
    latents: torch.Tensor,
    token_ids: torch.Tensor,
    text_encoder: TextEncoder,
    steps: int = 2000,
    batch_size: int = 16,
    lr: float = 2e-3,
    seed: int = 0,
    parameters: Iterable[torch.nn.Parameter] | None = None,
    control_fn: Callable | None = None,
    train_text: bool = True,
) -> list[float]:
    """Optimize the noise-prediction objective over cached (n, c, h, w)
    latents and per-tile (n, L) prompt tokens; returns the loss curve.

    Backbone training optimizes the denoiser and text encoder jointly.
    Control training passes ``parameters`` (branch only), ``control_fn`` and
    ``train_text=False``, leaving backbone and text weights untouched.
    """
    if latents.shape[0] == 0:
        raise ValueError("empty corpus")
    torch.manual_seed(seed)
    generator = torch.Generator().manual_seed(seed)
    if parameters is not None:
        params = list(parameters)
    else:
        params = list(model.parameters())
        if train_text:
            params += list(text_encoder.parameters())
    opt = torch.optim.Adam(params, lr=lr)
    history: list[float] = []
    for idx in _batches(latents.shape[0], batch_size, steps, generator):
        if train_text:
            text = text_encoder(token_ids[idx])
        else:
            with torch.no_grad():
                text = text_encoder(token_ids[idx])
        loss = ldm_loss(
            model, schedule, latents[idx], text, generator=generator, control_fn=control_fn
        )
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(float(loss.detach()))
    return history
