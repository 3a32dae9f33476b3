"""Annotated synthetic tile generation.

One sampling run produces the image and, mid-trajectory at t*, the fused
feature bundle both decoder heads read their class maps from, so the image
and annotations share a single latent trajectory by construction.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch

from ..decoders.features import fuse_features
from ..diffusion.sampling import sample
from ..pipeline import Pipeline
from ..tiles.model import ClassMap, DensityMetrics
from ..tiles.prompts import render_prompt
from ..tiles.transforms import reconstruct_from_classes


@dataclass
class SyntheticTile:
    """Generated layers plus the provenance that proves their alignment."""

    image: np.ndarray            # (h, w, 3) in [0, 1]
    constraint_mask: np.ndarray  # the conditioning mask, (h, w, 3)
    height_classes: ClassMap
    energy_classes: ClassMap
    height_map: np.ndarray       # meters, bin representatives
    energy_map: np.ndarray       # log1p(kBtu), bin representatives
    city: str
    density: DensityMetrics
    generator_digest: str
    seed: int
    source_tile_id: str | None = None


def stack_digest(pipe: Pipeline) -> str:
    """Digest over backbone + control + heads: the full generator identity."""
    from ..diffusion.checkpoint import state_digest

    h = hashlib.sha256()
    h.update(pipe.backbone_digest().encode())
    if pipe.branch is not None:
        h.update(state_digest(pipe.branch).encode())
    for kind in sorted(pipe.heads):
        h.update(state_digest(pipe.heads[kind]).encode())
    return h.hexdigest()


def generate_batch(
    pipe: Pipeline,
    masks: np.ndarray | torch.Tensor,
    densities: list[DensityMetrics],
    cities: list[str],
    seeds: list[int],
    source_tile_ids: list[str] | None = None,
) -> list[SyntheticTile]:
    """Generate aligned synthetic tiles for a batch of conditions."""
    if pipe.branch is None or "height" not in pipe.heads or "energy" not in pipe.heads:
        raise ValueError("generation requires control branch and both decoder heads")
    if not pipe.bins:
        raise ValueError("generation requires the frozen bin specs")
    masks = torch.as_tensor(np.asarray(masks)).float()
    if masks.dim() == 3:
        masks = masks.unsqueeze(0)
    if masks.shape[-1] == pipe.config.constraint_channels:  # (b, h, w, c) -> (b, c, h, w)
        masks = masks.permute(0, 3, 1, 2)
    b = masks.shape[0]
    if not (len(densities) == len(cities) == len(seeds) == b):
        raise ValueError("batch size mismatch between masks, densities, cities, seeds")

    token_ids = torch.stack(
        [pipe.tokenizer.encode(render_prompt(c, d)) for c, d in zip(cities, densities)]
    )
    with torch.no_grad():
        text = pipe.text_encoder(token_ids)
    results = sample(
        pipe.backbone,
        pipe.vae,
        pipe.schedule,
        text,
        seeds=seeds,
        masks=masks,
        branch=pipe.branch,
        capture_t_star=pipe.config.t_star,
    )
    digest = stack_digest(pipe)
    tiles = []
    for i, res in enumerate(results):
        bundle = fuse_features(res.features, pipe.config.t_star)
        maps = {}
        grids = {}
        for kind in ("height", "energy"):
            labels = pipe.heads[kind].predict_labels(bundle.fused).numpy()
            bins = pipe.bins[kind]
            maps[kind] = ClassMap(
                labels=labels,
                n_classes=pipe.heads[kind].n_classes,
                bin_edges=bins.edges,
                source=kind,
            )
            grids[kind] = reconstruct_from_classes(labels, bins).astype(np.float32)
        tiles.append(
            SyntheticTile(
                image=res.image.numpy(),
                constraint_mask=masks[i].permute(1, 2, 0).numpy().astype(np.uint8),
                height_classes=maps["height"],
                energy_classes=maps["energy"],
                height_map=grids["height"],
                energy_map=grids["energy"],
                city=cities[i],
                density=densities[i],
                generator_digest=digest,
                seed=seeds[i],
                source_tile_id=None if source_tile_ids is None else source_tile_ids[i],
            )
        )
    return tiles


def generate_annotated(
    pipe: Pipeline,
    constraint_mask: np.ndarray,
    density: DensityMetrics,
    city: str,
    seed: int,
    source_tile_id: str | None = None,
) -> SyntheticTile:
    """Single-tile generation; one call is one reproducible trajectory."""
    return generate_batch(
        pipe,
        constraint_mask[None] if constraint_mask.ndim == 3 else constraint_mask,
        [density],
        [city],
        [seed],
        None if source_tile_id is None else [source_tile_id],
    )[0]
