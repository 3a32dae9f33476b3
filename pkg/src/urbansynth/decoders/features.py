"""Multi-scale feature harvesting from the denoiser at a fixed timestep.

The four decoder taps are bilinearly upsampled to the finest tap resolution
and concatenated channelwise in the fixed FEATURE_BLOCKS order, giving one
fused grid shared by every decoding head.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from ..diffusion.schedule import NoiseSchedule
from ..diffusion.unet import DenoiserUNet, FEATURE_BLOCKS
from ..diffusion.vae import ImageVAE


@dataclass
class FeatureBundle:
    """Per-tile feature set: native-resolution taps plus the fused grid."""

    features: dict[str, torch.Tensor]  # block name -> (c_i, h_i, w_i)
    fused: torch.Tensor                # (sum c_i, h_max, w_max)
    t_star: int

    def __post_init__(self):
        if len(self.features) < 2:
            raise ValueError("feature fusion needs at least 2 blocks")
        expected = sum(f.shape[0] for f in self.features.values())
        if self.fused.shape[0] != expected:
            raise ValueError(
                f"fused channel count {self.fused.shape[0]} != sum of taps {expected}"
            )


def fuse_features(features: dict[str, torch.Tensor], t_star: int) -> FeatureBundle:
    """Upsample every tap to the finest resolution and concatenate."""
    missing = [b for b in FEATURE_BLOCKS if b not in features]
    if missing:
        raise ValueError(f"missing feature blocks: {missing}")
    target = max(f.shape[-1] for f in features.values())
    resized = []
    for name in FEATURE_BLOCKS:  # fixed, documented channel ordering
        f = features[name]
        if f.shape[-1] != target:
            f = F.interpolate(
                f.unsqueeze(0), size=(target, target), mode="bilinear", align_corners=False
            )[0]
        resized.append(f)
    return FeatureBundle(features=dict(features), fused=torch.cat(resized, dim=0), t_star=t_star)


def noise_seed_for(tile_id: str, epoch: int = 0, base_seed: int = 0) -> int:
    """Stable per-(tile, epoch) seed so feature extraction replays exactly."""
    digest = hashlib.sha256(f"{tile_id}:{epoch}:{base_seed}".encode()).digest()
    return int.from_bytes(digest[:8], "little") % (2**62)


class FeatureExtractor:
    """Runs encode -> noise-to-t* -> one denoising pass and captures taps."""

    def __init__(
        self,
        backbone: DenoiserUNet,
        vae: ImageVAE,
        schedule: NoiseSchedule,
        text_encoder,
        branch=None,
        t_star: int | None = None,
    ):
        self.backbone = backbone
        self.vae = vae
        self.schedule = schedule
        self.text_encoder = text_encoder
        self.branch = branch
        self.t_star = t_star if t_star is not None else max(1, schedule.timesteps // 4)
        if not (1 <= self.t_star <= schedule.timesteps):
            raise ValueError(f"t_star {self.t_star} out of [1, {schedule.timesteps}]")

    @torch.no_grad()
    def extract(
        self,
        image: torch.Tensor,
        token_ids: torch.Tensor,
        constraint_mask: torch.Tensor | None = None,
        noise_seed: int = 0,
    ) -> FeatureBundle:
        """FeatureBundle for one (h, w, 3) image in [0, 1].

        The noising draw comes from ``noise_seed`` only, so a fixed
        (image, conditioning, seed) triple reproduces the same bundle.
        """
        self.backbone.eval()
        z0 = self.vae.encode_image(image).data.unsqueeze(0)
        gen = torch.Generator().manual_seed(noise_seed)
        eps = torch.randn(z0.shape, generator=gen)
        zt = self.schedule.add_noise(z0, self.t_star, eps)
        text = self.text_encoder.encode(token_ids).unsqueeze(0)
        t = torch.tensor([self.t_star])
        control = None
        if self.branch is not None and constraint_mask is not None:
            control = self.branch(zt, t, text, constraint_mask.unsqueeze(0).float())
        _, taps = self.backbone(zt, t, text, control=control, return_features=True)
        features = {name: taps[name][0] for name in FEATURE_BLOCKS}
        return fuse_features(features, self.t_star)

    @torch.no_grad()
    def extract_from_latent_features(self, taps: dict[str, torch.Tensor]) -> FeatureBundle:
        """Fuse taps already captured during a generation trajectory."""
        return fuse_features(taps, self.t_star)
