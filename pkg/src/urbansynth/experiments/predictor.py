"""Reference downstream predictor: a generic encoder-decoder segmentation
model mapping imagery straight to class maps. Stands in for the external
baseline models; the augmentation delta it measures is what the experiments
compare, so one architecture serves every arm."""

from __future__ import annotations

import torch
from torch import nn

from ..decoders.losses import head_loss


def _gn(channels: int) -> nn.GroupNorm:
    groups = max(g for g in range(1, min(8, channels) + 1) if channels % g == 0)
    return nn.GroupNorm(groups, channels)


class ReferencePredictor(nn.Module):
    def __init__(self, n_classes: int, width: int = 32):
        super().__init__()
        self.n_classes = n_classes
        w = width
        self.net = nn.Sequential(
            nn.Conv2d(3, w, 3, stride=2, padding=1), _gn(w), nn.SiLU(),
            nn.Conv2d(w, w * 2, 3, stride=2, padding=1), _gn(w * 2), nn.SiLU(),
            nn.Conv2d(w * 2, w * 2, 3, padding=1), _gn(w * 2), nn.SiLU(),
            nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False),
            nn.Conv2d(w * 2, w, 3, padding=1), _gn(w), nn.SiLU(),
            nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False),
            nn.Conv2d(w, w, 3, padding=1), _gn(w), nn.SiLU(),
            nn.Conv2d(w, n_classes, 1),
        )

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """(b, 3, h, w) images -> (b, n_classes, h, w) logits."""
        return self.net(images)

    @torch.no_grad()
    def predict_labels(self, images: torch.Tensor) -> torch.Tensor:
        self.eval()
        return self.forward(images).argmax(dim=1)


def train_predictor(
    model: ReferencePredictor,
    images: torch.Tensor,
    labels: torch.Tensor,
    steps: int = 300,
    batch_size: int = 8,
    lr: float = 2e-3,
    seed: int = 0,
    class_weights: torch.Tensor | None = None,
) -> list[float]:
    """Train on pooled (n, 3, h, w) images / (n, h, w) labels; same loss
    family as the decoder heads so evaluation paths stay comparable."""
    if images.shape[0] == 0:
        raise ValueError("empty corpus")
    torch.manual_seed(seed)
    generator = torch.Generator().manual_seed(seed)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    history: list[float] = []
    model.train()
    n = images.shape[0]
    for _ in range(steps):
        idx = torch.randint(0, n, (min(batch_size, n),), generator=generator)
        loss = head_loss(model(images[idx]), labels[idx], class_weights)
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(float(loss.detach()))
    model.eval()
    return history
