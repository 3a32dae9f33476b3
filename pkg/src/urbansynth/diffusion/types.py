"""Shared value types passed between diffusion components."""

from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass
class LatentGrid:
    """A latent-space grid (c, h, w) at a known diffusion timestep."""

    data: torch.Tensor
    timestep: int = 0

    def __post_init__(self):
        if self.data.dim() != 3:
            raise ValueError(f"latent grid must be (c, h, w), got {tuple(self.data.shape)}")
        if not torch.isfinite(self.data).all():
            raise ValueError("latent grid contains non-finite values")


@dataclass
class ConditioningBundle:
    """Everything the denoiser is conditioned on for one sample.

    ``text_embedding`` is a (tokens, d) sequence; ``constraint_mask`` is the
    rasterized (channels, H, W) geospatial constraint, consumed by the control
    branch when one is attached.
    """

    text_embedding: torch.Tensor
    constraint_mask: torch.Tensor | None = None
