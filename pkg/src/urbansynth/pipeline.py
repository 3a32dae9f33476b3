"""End-to-end orchestration: dataset tensors, staged training, checkpoint
wiring and evaluation of the trained stack."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig
from .control.branch import ControlBranch
from .control.training import train_control
from .decoders.features import FeatureExtractor, noise_seed_for
from .decoders.heads import DecoderHead
from .decoders.losses import fit_class_weights
from .decoders.training import train_head
from .diffusion.checkpoint import load_checkpoint, save_checkpoint, state_digest
from .diffusion.schedule import NoiseSchedule
from .diffusion.textcond import PromptTokenizer, TextEncoder
from .diffusion.training import train_ldm, train_vae
from .diffusion.unet import DenoiserUNet, FEATURE_BLOCKS
from .diffusion.vae import ImageVAE
from .metrics.report import CalibrationReport, evaluate_maps
from .tiles.model import ClassMap, QCStatus, Tile
from .tiles.prompts import render_prompt
from .tiles.store import TileStore
from .tiles.transforms import BinSpec, discretize

CHECKPOINT_FILES = {
    "vae": "vae.pt",
    "backbone": "backbone.pt",
    "control": "control.pt",
    "head_height": "head_height.pt",
    "head_energy": "head_energy.pt",
}


@dataclass
class TileBatch:
    """Corpus tensors for training/evaluation."""

    tile_ids: list[str]
    images: torch.Tensor        # (n, 3, h, w)
    masks: torch.Tensor         # (n, 3, h, w)
    token_ids: torch.Tensor     # (n, L)
    height_labels: torch.Tensor | None = None  # (n, h, w) long
    energy_labels: torch.Tensor | None = None


@dataclass
class Pipeline:
    """The full model stack plus the frozen bin specs it was trained with."""

    config: RunConfig
    tokenizer: PromptTokenizer
    text_encoder: TextEncoder
    vae: ImageVAE
    backbone: DenoiserUNet
    schedule: NoiseSchedule
    branch: ControlBranch | None = None
    heads: dict[str, DecoderHead] = field(default_factory=dict)
    bins: dict[str, BinSpec] = field(default_factory=dict)
    histories: dict[str, list[float]] = field(default_factory=dict)

    @classmethod
    def initialize(cls, config: RunConfig, seed: int | None = None) -> "Pipeline":
        torch.manual_seed(config.seed if seed is None else seed)
        tokenizer = PromptTokenizer()
        return cls(
            config=config,
            tokenizer=tokenizer,
            text_encoder=TextEncoder(
                tokenizer.vocab_size, embed_dim=config.text_embed_dim, layers=config.text_layers
            ),
            vae=ImageVAE(base=config.vae_channels, latent_channels=config.latent_channels),
            backbone=DenoiserUNet(
                latent_channels=config.latent_channels,
                base=config.unet_channels,
                text_dim=config.text_embed_dim,
            ),
            schedule=NoiseSchedule(
                timesteps=config.timesteps,
                beta_start=config.beta_start,
                beta_end=config.beta_end,
            ),
        )

    # the digest that dependent checkpoints pin: denoiser + autoencoder + text
    def backbone_digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for module in (self.backbone, self.vae, self.text_encoder):
            h.update(state_digest(module).encode())
        return h.hexdigest()

    def fused_channels(self) -> int:
        return sum(self.backbone.channels[b] for b in FEATURE_BLOCKS)

    def extractor(self) -> FeatureExtractor:
        return FeatureExtractor(
            self.backbone,
            self.vae,
            self.schedule,
            self.text_encoder,
            branch=self.branch,
            t_star=self.config.t_star,
        )

    # -- persistence --------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        base_meta = {
            "config_fingerprint": self.config.fingerprint(),
            "resolution": self.config.resolution,
        }
        save_checkpoint(directory / CHECKPOINT_FILES["vae"], "vae", self.vae, dict(base_meta))
        backbone_meta = dict(
            base_meta,
            schedule=self.schedule.to_dict(),
            vocab=self.tokenizer.to_dict(),
        )
        save_checkpoint(
            directory / CHECKPOINT_FILES["backbone"],
            "backbone",
            torch.nn.ModuleDict({"unet": self.backbone, "text": self.text_encoder}),
            backbone_meta,
        )
        digest = self.backbone_digest()
        if self.branch is not None:
            save_checkpoint(
                directory / CHECKPOINT_FILES["control"],
                "control",
                self.branch,
                dict(base_meta, backbone_digest=digest),
            )
        for kind, head in self.heads.items():
            save_checkpoint(
                directory / CHECKPOINT_FILES[f"head_{kind}"],
                f"head_{kind}",
                head,
                dict(
                    base_meta,
                    backbone_digest=digest,
                    t_star=self.config.t_star,
                    blocks=list(FEATURE_BLOCKS),
                    class_weights=head.class_weights.tolist(),
                ),
            )
        for name, bins in self.bins.items():
            bins.save(directory / f"bins_{name}.json")

    @classmethod
    def load(cls, config: RunConfig, directory: str | Path, strict: bool = True) -> "Pipeline":
        """Restore whatever checkpoints exist in ``directory``.

        With ``strict`` (the default) the vae and backbone files must exist;
        staged CLI training loads non-strict to resume mid-pipeline.
        """
        directory = Path(directory)
        pipe = cls.initialize(config)
        vae_path = directory / CHECKPOINT_FILES["vae"]
        backbone_path = directory / CHECKPOINT_FILES["backbone"]
        if strict and not vae_path.exists():
            raise FileNotFoundError(f"missing checkpoint {vae_path}")
        if strict and not backbone_path.exists():
            raise FileNotFoundError(f"missing checkpoint {backbone_path}")
        if vae_path.exists():
            load_checkpoint(vae_path, "vae", pipe.vae)
        if not backbone_path.exists():
            return pipe
        wrapper = torch.nn.ModuleDict({"unet": pipe.backbone, "text": pipe.text_encoder})
        payload = load_checkpoint(backbone_path, "backbone", wrapper)
        pipe.schedule = NoiseSchedule.from_dict(payload["meta"]["schedule"])
        pipe.tokenizer = PromptTokenizer.from_dict(payload["meta"]["vocab"])
        digest = pipe.backbone_digest()
        control_path = directory / CHECKPOINT_FILES["control"]
        if control_path.exists():
            pipe.branch = ControlBranch(pipe.backbone, config.constraint_channels)
            load_checkpoint(control_path, "control", pipe.branch, expect_backbone_digest=digest)
        for kind in ("height", "energy"):
            head_path = directory / CHECKPOINT_FILES[f"head_{kind}"]
            if head_path.exists():
                meta = torch.load(head_path, map_location="cpu", weights_only=False)["meta"]
                head = DecoderHead(
                    kind,
                    in_channels=pipe.fused_channels(),
                    width=config.head_channels,
                    class_weights=torch.tensor(meta["class_weights"]),
                )
                load_checkpoint(head_path, f"head_{kind}", head, expect_backbone_digest=digest)
                if meta["t_star"] != config.t_star:
                    raise ValueError(
                        f"{kind} head was trained at t*={meta['t_star']}, config says {config.t_star}"
                    )
                pipe.heads[kind] = head
        for name in ("height", "energy"):
            bins_path = directory / f"bins_{name}.json"
            if bins_path.exists():
                pipe.bins[name] = BinSpec.load(bins_path)
        return pipe


# -- corpus tensors ---------------------------------------------------------


def tiles_to_batch(
    tiles: list[Tile],
    tokenizer: PromptTokenizer,
    bins: dict[str, BinSpec] | None = None,
) -> TileBatch:
    if not tiles:
        raise ValueError("empty tile list")
    images = torch.stack([torch.from_numpy(np.ascontiguousarray(t.image)).permute(2, 0, 1) for t in tiles])
    masks = torch.stack(
        [torch.from_numpy(np.ascontiguousarray(t.constraint_mask)).permute(2, 0, 1).float() for t in tiles]
    )
    token_ids = torch.stack([tokenizer.encode(render_prompt(t.city, t.density)) for t in tiles])
    height_labels = energy_labels = None
    if bins:
        height_labels = torch.stack(
            [
                torch.from_numpy(discretize(t.height_map, "height_quintile_4", bins["height"]).labels)
                for t in tiles
            ]
        )
        energy_labels = torch.stack(
            [
                torch.from_numpy(discretize(t.energy_map, "energy_tertile", bins["energy"]).labels)
                for t in tiles
            ]
        )
    return TileBatch(
        tile_ids=[t.tile_id for t in tiles],
        images=images.float(),
        masks=masks,
        token_ids=token_ids,
        height_labels=height_labels,
        energy_labels=energy_labels,
    )


def load_split(store: TileStore, split: str, qc: QCStatus | None = QCStatus.ACCEPTED) -> list[Tile]:
    tiles = list(store.iter_tiles(split=split, qc=qc))
    if not tiles:
        raise ValueError(f"no tiles in split {split!r}")
    return tiles


# -- staged training --------------------------------------------------------


def encode_corpus(pipe: Pipeline, batch: TileBatch, chunk: int = 16) -> torch.Tensor:
    outs = []
    with torch.no_grad():
        for i in range(0, batch.images.shape[0], chunk):
            outs.append(pipe.vae.encode(batch.images[i : i + chunk]))
    return torch.cat(outs)


def extract_corpus_bundles(pipe: Pipeline, batch: TileBatch, epoch: int = 0) -> torch.Tensor:
    """Fused feature grids for every tile, with per-tile deterministic noise."""
    extractor = pipe.extractor()
    fused = []
    for i, tile_id in enumerate(batch.tile_ids):
        bundle = extractor.extract(
            batch.images[i].permute(1, 2, 0),
            batch.token_ids[i],
            constraint_mask=batch.masks[i],
            noise_seed=noise_seed_for(tile_id, epoch, pipe.config.seed),
        )
        fused.append(bundle.fused)
    return torch.stack(fused)


def _dihedral(grid: torch.Tensor, variant: int) -> torch.Tensor:
    """One of the 8 flip/rotation symmetries, applied to (..., h, w)."""
    if variant % 2:
        grid = torch.flip(grid, dims=[-1])
    return torch.rot90(grid, k=(variant // 2) % 4, dims=[-2, -1])


def head_training_set(
    pipe: Pipeline,
    batch: TileBatch,
    n_draws: int = 4,
    augment: bool = True,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Fused features + labels over several noise draws per tile.

    Repeated deterministic draws (and dihedral flips/rotations applied to
    features and labels together) keep the heads from memorizing any single
    noise realization, which is what they would otherwise do on a corpus
    this small.
    """
    fused_all, hl_all, el_all = [], [], []
    for epoch in range(n_draws):
        fused = extract_corpus_bundles(pipe, batch, epoch=epoch)
        hl, el = batch.height_labels, batch.energy_labels
        if augment and epoch > 0:
            variant = epoch % 8
            fused = _dihedral(fused, variant)
            hl = _dihedral(hl, variant)
            el = _dihedral(el, variant)
        fused_all.append(fused)
        hl_all.append(hl)
        el_all.append(el)
    return torch.cat(fused_all), torch.cat(hl_all), torch.cat(el_all)


def train_full_stack(
    store: TileStore,
    config: RunConfig,
    vae_steps: int = 1500,
    ldm_steps: int = 2000,
    control_steps: int = 2000,
    head_steps: int = 1000,
    head_draws: int = 4,
    seed: int | None = None,
    height_weighted: bool = False,
) -> Pipeline:
    """Train VAE -> denoiser -> control branch -> decoder heads on the
    accepted training split; returns the pipeline with training histories."""
    seed = config.seed if seed is None else seed
    pipe = Pipeline.initialize(config, seed=seed)
    pipe.bins = {
        "height": BinSpec.load(store.root / "bins_height.json"),
        "energy": BinSpec.load(store.root / "bins_energy.json"),
    }
    tiles = load_split(store, "train")
    batch = tiles_to_batch(tiles, pipe.tokenizer, pipe.bins)

    pipe.histories["vae"] = train_vae(
        pipe.vae, batch.images, steps=vae_steps, batch_size=config.batch_size,
        lr=config.learning_rate, seed=seed,
    )
    latents = encode_corpus(pipe, batch)
    pipe.histories["ldm"] = train_ldm(
        pipe.backbone, pipe.schedule, latents, batch.token_ids, pipe.text_encoder,
        steps=ldm_steps, batch_size=config.batch_size, lr=config.learning_rate, seed=seed,
    )
    pipe.branch = ControlBranch(pipe.backbone, config.constraint_channels)
    pipe.histories["control"] = train_control(
        pipe.backbone, pipe.branch, pipe.text_encoder, pipe.schedule,
        latents, batch.token_ids, batch.masks,
        steps=control_steps, batch_size=config.batch_size, lr=config.learning_rate, seed=seed,
    )

    fused, height_labels, energy_labels = head_training_set(pipe, batch, n_draws=head_draws)
    energy_weights = fit_class_weights(
        [l.numpy() for l in batch.energy_labels], n_classes=4
    )
    height_weights = fit_class_weights(
        [l.numpy() for l in batch.height_labels], n_classes=5
    )
    pipe.heads["height"] = DecoderHead(
        "height", in_channels=pipe.fused_channels(), width=config.head_channels,
        class_weights=torch.tensor(height_weights, dtype=torch.float32),
    )
    pipe.heads["energy"] = DecoderHead(
        "energy", in_channels=pipe.fused_channels(), width=config.head_channels,
        class_weights=torch.tensor(energy_weights, dtype=torch.float32),
    )
    digest_before = pipe.backbone_digest()
    pipe.histories["head_height"] = train_head(
        pipe.heads["height"], fused, height_labels,
        steps=head_steps, batch_size=config.batch_size, lr=config.learning_rate,
        seed=seed, weighted=height_weighted,
    )
    pipe.histories["head_energy"] = train_head(
        pipe.heads["energy"], fused, energy_labels,
        steps=head_steps, batch_size=config.batch_size, lr=config.learning_rate,
        seed=seed, weighted=True,
    )
    if pipe.backbone_digest() != digest_before:
        raise RuntimeError("head training modified backbone weights")
    return pipe


# -- evaluation -------------------------------------------------------------


def vae_reconstruction_error(pipe: Pipeline, batch: TileBatch) -> float:
    """Mean absolute reconstruction error per channel over a tile batch."""
    with torch.no_grad():
        recon = pipe.vae.decode(pipe.vae.encode(batch.images))
    return float((recon - batch.images).abs().mean())


def predict_class_maps(
    pipe: Pipeline, batch: TileBatch, kind: str, epoch: int = 0
) -> list[ClassMap]:
    head = pipe.heads[kind]
    bins = pipe.bins[kind]
    extractor = pipe.extractor()
    maps = []
    for i, tile_id in enumerate(batch.tile_ids):
        bundle = extractor.extract(
            batch.images[i].permute(1, 2, 0),
            batch.token_ids[i],
            constraint_mask=batch.masks[i],
            noise_seed=noise_seed_for(tile_id, epoch, pipe.config.seed),
        )
        labels = head.predict_labels(bundle.fused).numpy()
        maps.append(
            ClassMap(
                labels=labels,
                n_classes=head.n_classes,
                bin_edges=bins.edges,
                source=kind,
            )
        )
    return maps


def truth_class_maps(tiles: list[Tile], kind: str, bins: BinSpec) -> list[ClassMap]:
    scheme = "height_quintile_4" if kind == "height" else "energy_tertile"
    grids = [t.height_map if kind == "height" else t.energy_map for t in tiles]
    return [discretize(g, scheme, bins) for g in grids]


def evaluate_decoder(
    pipe: Pipeline, store: TileStore, split: str, kind: str
) -> CalibrationReport:
    tiles = load_split(store, split)
    batch = tiles_to_batch(tiles, pipe.tokenizer)
    preds = predict_class_maps(pipe, batch, kind)
    truths = truth_class_maps(tiles, kind, pipe.bins[kind])
    return evaluate_maps(preds, truths, pipe.bins[kind], source=kind)
