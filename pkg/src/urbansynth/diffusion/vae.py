"""Small convolutional VAE: 4x spatial downsampling, 4 latent channels.

A trainable stand-in for a pretrained image autoencoder; anything exposing
encode/decode with the same shapes drops in behind the same interface.
"""

from __future__ import annotations

import torch
from torch import nn

from .types import LatentGrid


def _gn(channels: int) -> nn.GroupNorm:
    groups = max(g for g in range(1, min(8, channels) + 1) if channels % g == 0)
    return nn.GroupNorm(groups, channels)


class _ResBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.block = nn.Sequential(
            _gn(channels), nn.SiLU(), nn.Conv2d(channels, channels, 3, padding=1),
            _gn(channels), nn.SiLU(), nn.Conv2d(channels, channels, 3, padding=1),
        )

    def forward(self, x):
        return x + self.block(x)


class ImageVAE(nn.Module):
    downsample_factor = 4

    def __init__(self, in_channels: int = 3, base: int = 32, latent_channels: int = 4):
        super().__init__()
        self.latent_channels = latent_channels
        self.encoder = nn.Sequential(
            nn.Conv2d(in_channels, base, 3, stride=2, padding=1),
            _gn(base), nn.SiLU(),
            nn.Conv2d(base, base * 2, 3, stride=2, padding=1),
            _ResBlock(base * 2),
            _gn(base * 2), nn.SiLU(),
            nn.Conv2d(base * 2, latent_channels * 2, 3, padding=1),
        )
        self.decoder = nn.Sequential(
            nn.Conv2d(latent_channels, base * 2, 3, padding=1),
            _ResBlock(base * 2),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(base * 2, base, 3, padding=1),
            _gn(base), nn.SiLU(),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(base, base, 3, padding=1),
            _gn(base), nn.SiLU(),
            nn.Conv2d(base, in_channels, 3, padding=1),
            nn.Sigmoid(),
        )
        # calibrated after training so diffusion sees roughly unit-scale latents
        self.register_buffer("latent_scale", torch.tensor(1.0))

    def encode_params(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if x.dim() != 4 or x.shape[1] != 3:
            raise ValueError(f"expected (b, 3, h, w) image batch, got {tuple(x.shape)}")
        if x.shape[2] % self.downsample_factor or x.shape[3] % self.downsample_factor:
            raise ValueError("image size must be divisible by the downsampling factor")
        mu, logvar = self.encoder(x).chunk(2, dim=1)
        return mu, logvar

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        """Deterministic latent (posterior mean, scale-calibrated)."""
        mu, _ = self.encode_params(x)
        return mu * self.latent_scale

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        return self.decoder(z / self.latent_scale)

    def encode_image(self, image: torch.Tensor) -> LatentGrid:
        """Single (h, w, 3) image in [0,1] -> LatentGrid at t=0."""
        if image.dim() != 3 or image.shape[-1] != 3:
            raise ValueError(f"expected (h, w, 3) image, got {tuple(image.shape)}")
        if image.min() < 0 or image.max() > 1:
            raise ValueError("image values must lie in [0, 1]")
        batch = image.permute(2, 0, 1).unsqueeze(0).float()
        with torch.no_grad():
            z = self.encode(batch)[0]
        return LatentGrid(data=z, timestep=0)

    def decode_image(self, latent: LatentGrid) -> torch.Tensor:
        """LatentGrid -> (h, w, 3) image in [0,1]."""
        with torch.no_grad():
            x = self.decode(latent.data.unsqueeze(0))[0]
        return x.clamp(0.0, 1.0).permute(1, 2, 0)

    def calibrate_latent_scale(self, images: torch.Tensor) -> float:
        """Set latent_scale to 1/std of posterior means over a corpus batch."""
        with torch.no_grad():
            self.latent_scale.fill_(1.0)
            mu, _ = self.encode_params(images)
            std = mu.std().clamp(min=1e-6)
            self.latent_scale.fill_(1.0 / std)
        return float(self.latent_scale)
