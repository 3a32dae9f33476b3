"""Decoder-head training over cached feature bundles."""

from __future__ import annotations

import torch

from .heads import DecoderHead
from .losses import head_loss


def train_head(
    head: DecoderHead,
    fused: torch.Tensor,
    labels: torch.Tensor,
    steps: int = 800,
    batch_size: int = 16,
    lr: float = 2e-3,
    seed: int = 0,
    weighted: bool = True,
) -> list[float]:
    """Train one head on (n, c, h, w) fused features and (n, H, W) labels.

    ``weighted`` applies the head's class weights to the CE term; height
    heads default to unweighted training and flip this on via config.
    """
    if fused.shape[0] == 0:
        raise ValueError("empty corpus")
    if fused.shape[0] != labels.shape[0]:
        raise ValueError("features and labels must align")
    torch.manual_seed(seed)
    generator = torch.Generator().manual_seed(seed)
    opt = torch.optim.AdamW(head.parameters(), lr=lr, weight_decay=1e-4)
    weights = head.class_weights if weighted else None
    history: list[float] = []
    head.train()
    n = fused.shape[0]
    for _ in range(steps):
        idx = torch.randint(0, n, (min(batch_size, n),), generator=generator)
        loss = head_loss(head(fused[idx]), labels[idx], weights)
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(float(loss.detach()))
    head.eval()
    return history
