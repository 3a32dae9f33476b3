"""Constraint-injection branch: a trainable copy of the denoiser encoder
whose activations enter the frozen backbone through zero-initialized 1x1
convolutions, so conditioning starts as an exact no-op."""

from __future__ import annotations

import copy

import torch
from torch import nn

from ..diffusion.unet import CONTROL_SITES, DenoiserUNet


def _zero_conv(channels: int) -> nn.Conv2d:
    conv = nn.Conv2d(channels, channels, 1)
    nn.init.zeros_(conv.weight)
    nn.init.zeros_(conv.bias)
    return conv


class ControlBranch(nn.Module):
    """Copied encoder trunk + hint encoder + per-site zero convolutions.

    Calling the branch yields the residual dict the backbone adds at its
    bottleneck and decoder skip connections. At initialization every residual
    is exactly zero for any input, so the controlled forward pass is bitwise
    identical to the uncontrolled one.
    """

    def __init__(self, backbone: DenoiserUNet, constraint_channels: int = 3):
        super().__init__()
        ch16 = backbone.channels["up16"]
        ch8 = backbone.channels["up8"]
        ch4 = backbone.channels["mid"]

        # trainable copies; the backbone itself is never modified
        self.stem = copy.deepcopy(backbone.stem)
        self.enc16 = copy.deepcopy(backbone.enc16)
        self.down8 = copy.deepcopy(backbone.down8)
        self.enc8 = copy.deepcopy(backbone.enc8)
        self.down4 = copy.deepcopy(backbone.down4)
        self.mid1 = copy.deepcopy(backbone.mid1)
        self.mid_attn = copy.deepcopy(backbone.mid_attn)
        self.mid2 = copy.deepcopy(backbone.mid2)
        self.time_mlp = copy.deepcopy(backbone.time_mlp)
        self.text_pool = copy.deepcopy(backbone.text_pool)
        self.time_dim = backbone.time_dim

        # 4-layer strided hint encoder: constraint mask at image resolution
        # down to the latent grid, final projection zero-initialized
        hidden = ch16 // 2
        self.hint_encoder = nn.Sequential(
            nn.Conv2d(constraint_channels, hidden, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(hidden, hidden, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(hidden, hidden, 3, padding=1),
            nn.SiLU(),
            _zero_conv_like(hidden, ch16),
        )
        self.zero_convs = nn.ModuleDict(
            {"skip16": _zero_conv(ch16), "skip8": _zero_conv(ch8), "mid": _zero_conv(ch4)}
        )

    def forward(
        self,
        z: torch.Tensor,
        t: torch.Tensor,
        text: torch.Tensor,
        masks: torch.Tensor,
    ) -> dict[str, torch.Tensor]:
        """Residuals for every control site, keyed per CONTROL_SITES."""
        if masks is None:
            raise ValueError("control branch requires a constraint mask")
        if masks.shape[0] != z.shape[0]:
            raise ValueError("constraint mask batch size mismatch")
        from ..diffusion.textcond import sinusoidal_embedding

        temb = self.time_mlp(sinusoidal_embedding(t, self.time_dim)) + self.text_pool(
            text.mean(dim=1)
        )
        hint = self.hint_encoder(masks.float())
        if hint.shape[-2:] != z.shape[-2:]:
            raise ValueError(
                f"hint resolution {tuple(hint.shape[-2:])} does not match latent "
                f"{tuple(z.shape[-2:])}; constraint mask must be at tile resolution"
            )
        h16 = self.enc16(self.stem(z) + hint, temb)
        h8 = self.enc8(self.down8(h16), temb)
        h4 = self.down4(h8)
        m = self.mid2(self.mid_attn(self.mid1(h4, temb), text), temb)
        return {
            "skip16": self.zero_convs["skip16"](h16),
            "skip8": self.zero_convs["skip8"](h8),
            "mid": self.zero_convs["mid"](m),
        }

    def zero_conv_weight_norm(self) -> float:
        total = 0.0
        for conv in self.zero_convs.values():
            total += float(conv.weight.abs().sum() + conv.bias.abs().sum())
        return total


def _zero_conv_like(in_channels: int, out_channels: int) -> nn.Conv2d:
    conv = nn.Conv2d(in_channels, out_channels, 3, padding=1)
    nn.init.zeros_(conv.weight)
    nn.init.zeros_(conv.bias)
    return conv


def controlled_forward(
    backbone: DenoiserUNet,
    branch: ControlBranch,
    z: torch.Tensor,
    t: torch.Tensor,
    text: torch.Tensor,
    masks: torch.Tensor,
    return_features: bool = False,
):
    """One denoiser forward pass with the branch's residuals injected."""
    residuals = branch(z, t, text, masks)
    assert set(residuals) == set(CONTROL_SITES)
    return backbone(z, t, text, control=residuals, return_features=return_features)
