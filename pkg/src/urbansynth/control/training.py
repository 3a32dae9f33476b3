"""Control-branch training against a frozen backbone."""

from __future__ import annotations

import torch

from ..diffusion.checkpoint import state_digest
from ..diffusion.schedule import NoiseSchedule
from ..diffusion.textcond import TextEncoder
from ..diffusion.training import ldm_loss
from ..diffusion.unet import DenoiserUNet
from .branch import ControlBranch


def train_control(
    backbone: DenoiserUNet,
    branch: ControlBranch,
    text_encoder: TextEncoder,
    schedule: NoiseSchedule,
    latents: torch.Tensor,
    token_ids: torch.Tensor,
    masks: torch.Tensor,
    steps: int = 2000,
    batch_size: int = 16,
    lr: float = 2e-3,
    seed: int = 0,
) -> list[float]:
    """Optimize only the branch parameters on the noise-prediction objective.

    The backbone and text encoder are frozen for the duration; their weight
    digests are asserted unchanged afterwards.
    """
    if latents.shape[0] == 0:
        raise ValueError("empty corpus")
    if masks.shape[0] != latents.shape[0]:
        raise ValueError("constraint masks must align with latents")
    backbone_digest = state_digest(backbone)
    text_digest = state_digest(text_encoder)
    backbone.requires_grad_(False)
    text_encoder.requires_grad_(False)
    backbone.eval()

    mask_bank = masks.float()
    batch_masks: dict[str, torch.Tensor] = {}

    def control_fn(zt, t, text):
        return branch(zt, t, text, batch_masks["current"])

    torch.manual_seed(seed)
    generator = torch.Generator().manual_seed(seed)
    opt = torch.optim.Adam(branch.parameters(), lr=lr)
    history: list[float] = []
    n = latents.shape[0]
    for _ in range(steps):
        idx = torch.randint(0, n, (min(batch_size, n),), generator=generator)
        with torch.no_grad():
            text = text_encoder(token_ids[idx])
        batch_masks["current"] = mask_bank[idx]
        loss = ldm_loss(
            backbone, schedule, latents[idx], text, generator=generator, control_fn=control_fn
        )
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(float(loss.detach()))

    backbone.requires_grad_(True)
    text_encoder.requires_grad_(True)
    if state_digest(backbone) != backbone_digest:
        raise RuntimeError("backbone weights changed during control training")
    if state_digest(text_encoder) != text_digest:
        raise RuntimeError("text encoder weights changed during control training")
    return history
