"""Denoising U-Net over VAE latents with text conditioning, named control
injection sites, and taps on the four decoder blocks for feature harvesting."""

from __future__ import annotations

import torch
from torch import nn

from .textcond import sinusoidal_embedding

# Control residuals attach at the bottleneck and at every skip connection
# into the decoder, mirroring the reference control topology.
CONTROL_SITES = ("mid", "skip8", "skip16")

# Fixed, documented ordering of the decoder taps used for feature fusion.
FEATURE_BLOCKS = ("mid", "up8", "up16", "final16")


def _gn(channels: int) -> nn.GroupNorm:
    groups = max(g for g in range(1, min(8, channels) + 1) if channels % g == 0)
    return nn.GroupNorm(groups, channels)


class ResBlock(nn.Module):
    """GroupNorm/SiLU conv block with additive timestep conditioning."""

    def __init__(self, in_channels: int, out_channels: int, time_dim: int):
        super().__init__()
        self.norm1 = _gn(in_channels)
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, out_channels)
        self.norm2 = _gn(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        self.skip = (
            nn.Conv2d(in_channels, out_channels, 1) if in_channels != out_channels else nn.Identity()
        )
        self.act = nn.SiLU()

    def forward(self, x, temb):
        h = self.conv1(self.act(self.norm1(x)))
        h = h + self.time_proj(temb)[:, :, None, None]
        h = self.conv2(self.act(self.norm2(h)))
        return h + self.skip(x)


class CrossAttention(nn.Module):
    """Single multi-head cross-attention from spatial positions to tokens."""

    def __init__(self, channels: int, context_dim: int, heads: int = 4):
        super().__init__()
        self.norm = _gn(channels)
        self.attn = nn.MultiheadAttention(
            channels, heads, kdim=context_dim, vdim=context_dim, batch_first=True
        )

    def forward(self, x, context):
        b, c, h, w = x.shape
        q = self.norm(x).flatten(2).transpose(1, 2)  # (b, hw, c)
        out, _ = self.attn(q, context, context, need_weights=False)
        return x + out.transpose(1, 2).reshape(b, c, h, w)


class DenoiserUNet(nn.Module):
    """Three-resolution U-Net (16 -> 8 -> 4 at desk scale) predicting noise."""

    def __init__(self, latent_channels: int = 4, base: int = 48, text_dim: int = 64):
        super().__init__()
        ch16, ch8, ch4 = base, base * 3 // 2, base * 2
        self.channels = {"mid": ch4, "up8": ch8, "up16": ch16, "final16": ch16}
        time_dim = base * 2

        self.time_mlp = nn.Sequential(
            nn.Linear(time_dim, time_dim), nn.SiLU(), nn.Linear(time_dim, time_dim)
        )
        self.text_pool = nn.Linear(text_dim, time_dim)
        self.time_dim = time_dim

        self.stem = nn.Conv2d(latent_channels, ch16, 3, padding=1)
        self.enc16 = ResBlock(ch16, ch16, time_dim)
        self.down8 = nn.Conv2d(ch16, ch8, 3, stride=2, padding=1)
        self.enc8 = ResBlock(ch8, ch8, time_dim)
        self.down4 = nn.Conv2d(ch8, ch4, 3, stride=2, padding=1)

        self.mid1 = ResBlock(ch4, ch4, time_dim)
        self.mid_attn = CrossAttention(ch4, text_dim)
        self.mid2 = ResBlock(ch4, ch4, time_dim)

        self.up8 = nn.Sequential(nn.Upsample(scale_factor=2, mode="nearest"), nn.Conv2d(ch4, ch8, 3, padding=1))
        self.dec8 = ResBlock(ch8 * 2, ch8, time_dim)
        self.up16 = nn.Sequential(nn.Upsample(scale_factor=2, mode="nearest"), nn.Conv2d(ch8, ch16, 3, padding=1))
        self.dec16 = ResBlock(ch16 * 2, ch16, time_dim)
        self.final = ResBlock(ch16, ch16, time_dim)
        self.out = nn.Sequential(_gn(ch16), nn.SiLU(), nn.Conv2d(ch16, latent_channels, 3, padding=1))

    def embed_conditioning(self, t: torch.Tensor, text: torch.Tensor) -> torch.Tensor:
        temb = self.time_mlp(sinusoidal_embedding(t, self.time_dim))
        return temb + self.text_pool(text.mean(dim=1))

    def encode_path(self, z, temb):
        """Shared encoder trunk; the control branch runs a trainable copy."""
        h16 = self.enc16(self.stem(z), temb)
        h8 = self.enc8(self.down8(h16), temb)
        h4 = self.down4(h8)
        return h16, h8, h4

    def forward(
        self,
        z: torch.Tensor,
        t: torch.Tensor,
        text: torch.Tensor,
        control: dict[str, torch.Tensor] | None = None,
        return_features: bool = False,
    ):
        """Predict epsilon for a (b, c, h, w) latent batch at timesteps t.

        ``control`` carries per-site residual tensors (CONTROL_SITES keys);
        ``return_features`` additionally returns the decoder tap activations.
        """
        if control is not None:
            unknown = set(control) - set(CONTROL_SITES)
            if unknown:
                raise ValueError(f"unknown control sites: {sorted(unknown)}")
        temb = self.embed_conditioning(t, text)
        h16, h8, h4 = self.encode_path(z, temb)

        m = self.mid2(self.mid_attn(self.mid1(h4, temb), text), temb)
        if control is not None and "mid" in control:
            m = m + control["mid"]

        skip8 = h8 if control is None or "skip8" not in control else h8 + control["skip8"]
        u8 = self.dec8(torch.cat([self.up8(m), skip8], dim=1), temb)

        skip16 = h16 if control is None or "skip16" not in control else h16 + control["skip16"]
        u16 = self.dec16(torch.cat([self.up16(u8), skip16], dim=1), temb)

        f = self.final(u16, temb)
        eps = self.out(f)
        if not return_features:
            return eps
        features = {"mid": m, "up8": u8, "up16": u16, "final16": f}
        return eps, features
