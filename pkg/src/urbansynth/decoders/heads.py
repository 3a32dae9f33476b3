"""Segmentation heads that turn fused latent features into class maps.

Lightweight convolutional heads with channel attention standing in for the
full-scale transformer segmentation architecture; any module mapping the
fused grid to (n_classes, H, W) logits drops in behind the same interface.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

HEAD_KINDS = {"height": 5, "energy": 4}


def _gn(channels: int) -> nn.GroupNorm:
    groups = max(g for g in range(1, min(8, channels) + 1) if channels % g == 0)
    return nn.GroupNorm(groups, channels)


class _SEBlock(nn.Module):
    """Squeeze-excitation channel attention."""

    def __init__(self, channels: int, reduction: int = 4):
        super().__init__()
        self.fc = nn.Sequential(
            nn.Linear(channels, channels // reduction),
            nn.SiLU(),
            nn.Linear(channels // reduction, channels),
            nn.Sigmoid(),
        )

    def forward(self, x):
        weights = self.fc(x.mean(dim=(2, 3)))
        return x * weights[:, :, None, None]


class _ResBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.block = nn.Sequential(
            _gn(channels), nn.SiLU(), nn.Conv2d(channels, channels, 3, padding=1),
            _gn(channels), nn.SiLU(), nn.Conv2d(channels, channels, 3, padding=1),
        )
        self.se = _SEBlock(channels)

    def forward(self, x):
        return x + self.se(self.block(x))


class DecoderHead(nn.Module):
    """Fused features (c, h, w) -> per-pixel class distribution at 4x h."""

    def __init__(
        self,
        kind: str,
        in_channels: int,
        width: int = 96,
        class_weights: torch.Tensor | None = None,
    ):
        super().__init__()
        if kind not in HEAD_KINDS:
            raise ValueError(f"unknown head kind {kind!r}")
        self.kind = kind
        self.n_classes = HEAD_KINDS[kind]
        self.in_channels = in_channels
        if class_weights is not None:
            class_weights = torch.as_tensor(class_weights, dtype=torch.float32)
            if class_weights.numel() != self.n_classes:
                raise ValueError("class_weights length must equal n_classes")
            if (class_weights <= 0).any() or not torch.isfinite(class_weights).all():
                raise ValueError("class weights must be positive and finite")
        self.register_buffer(
            "class_weights",
            class_weights if class_weights is not None else torch.ones(self.n_classes),
        )
        self.net = nn.Sequential(
            nn.Conv2d(in_channels, width, 1),
            _ResBlock(width),
            nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False),
            nn.Conv2d(width, width // 2, 3, padding=1),
            _ResBlock(width // 2),
            nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False),
            nn.Conv2d(width // 2, width // 2, 3, padding=1),
            _gn(width // 2), nn.SiLU(),
            nn.Conv2d(width // 2, self.n_classes, 1),
        )

    def forward(self, fused: torch.Tensor) -> torch.Tensor:
        """(b, c, h, w) fused features -> (b, n_classes, 4h, 4w) logits."""
        if fused.shape[1] != self.in_channels:
            raise ValueError(
                f"head expects {self.in_channels} feature channels, got {fused.shape[1]}"
            )
        return self.net(fused)

    @torch.no_grad()
    def predict_proba(self, fused: torch.Tensor) -> torch.Tensor:
        """Single (c, h, w) bundle -> (4h, 4w, n_classes) probability map."""
        self.eval()
        logits = self.forward(fused.unsqueeze(0))[0]
        return F.softmax(logits, dim=0).permute(1, 2, 0)

    @torch.no_grad()
    def predict_labels(self, fused: torch.Tensor) -> torch.Tensor:
        self.eval()
        logits = self.forward(fused.unsqueeze(0))[0]
        return logits.argmax(dim=0)
