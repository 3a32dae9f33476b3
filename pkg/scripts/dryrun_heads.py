"""Phase-split dry run: train (or reuse) the backbone stack, then sweep head
training settings and report held-out decoder quality per variant."""

import json
import sys
import time
from pathlib import Path

import numpy as np
import torch

torch.set_num_threads(1)

from urbansynth.config import RunConfig
from urbansynth.control.branch import ControlBranch
from urbansynth.control.training import train_control
from urbansynth.decoders.heads import DecoderHead
from urbansynth.decoders.losses import fit_class_weights
from urbansynth.decoders.training import train_head
from urbansynth.diffusion.training import train_ldm, train_vae
from urbansynth.oracle import build_oracle_corpus
from urbansynth.pipeline import (
    Pipeline,
    encode_corpus,
    evaluate_decoder,
    head_training_set,
    load_split,
    tiles_to_batch,
)
from urbansynth.tiles.store import TileStore
from urbansynth.tiles.transforms import BinSpec

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("/tmp/dryrun_heads")
OUT.mkdir(parents=True, exist_ok=True)
t0 = time.time()


def log(msg):
    print(f"[{time.time()-t0:6.0f}s] {msg}", flush=True)


cfg = RunConfig(data_root=str(OUT / "tiles"), checkpoint_dir=str(OUT / "ckpt"))
if not (OUT / "tiles" / "manifest.tsv").exists():
    corpus = build_oracle_corpus(cfg.data_root, n_tiles=110, seed=0)
    log(f"corpus built: {sum(len(v) for v in corpus.accepted.values())} accepted")
store = TileStore(cfg.data_root)

if (Path(cfg.checkpoint_dir) / "control.pt").exists():
    pipe = Pipeline.load(cfg, cfg.checkpoint_dir)
    pipe.bins = {
        "height": BinSpec.load(store.root / "bins_height.json"),
        "energy": BinSpec.load(store.root / "bins_energy.json"),
    }
    log("backbone stack loaded from cache")
else:
    pipe = Pipeline.initialize(cfg)
    pipe.bins = {
        "height": BinSpec.load(store.root / "bins_height.json"),
        "energy": BinSpec.load(store.root / "bins_energy.json"),
    }
    tiles = load_split(store, "train")
    batch = tiles_to_batch(tiles, pipe.tokenizer, pipe.bins)
    h = train_vae(pipe.vae, batch.images, steps=1500, batch_size=16, lr=cfg.learning_rate, seed=0)
    log(f"vae {np.mean(h[:20]):.4f} -> {np.mean(h[-20:]):.4f}")
    latents = encode_corpus(pipe, batch)
    h = train_ldm(pipe.backbone, pipe.schedule, latents, batch.token_ids, pipe.text_encoder,
                  steps=2000, batch_size=16, lr=cfg.learning_rate, seed=0)
    log(f"ldm {np.mean(h[:20]):.4f} -> {np.mean(h[-20:]):.4f}")
    pipe.branch = ControlBranch(pipe.backbone, cfg.constraint_channels)
    h = train_control(pipe.backbone, pipe.branch, pipe.text_encoder, pipe.schedule,
                      latents, batch.token_ids, batch.masks,
                      steps=2500, batch_size=16, lr=3e-3, seed=0)
    log(f"control {np.mean(h[:10]):.4f} -> {np.mean(h[-20:]):.4f} "
        f"(halved: {np.mean(h[-20:]) < 0.5 * np.mean(h[:10])})")
    pipe.save(cfg.checkpoint_dir)
    log("stack saved")

tiles = load_split(store, "train")
batch = tiles_to_batch(tiles, pipe.tokenizer, pipe.bins)

variants = [
    {"n_draws": 4, "steps": 1000, "width": 96},
    {"n_draws": 8, "steps": 1500, "width": 96},
]
results = {}
for v in variants:
    key = json.dumps(v)
    fused, hl, el = head_training_set(pipe, batch, n_draws=v["n_draws"])
    log(f"{key}: training set {tuple(fused.shape)}")
    pipe.heads = {}
    for kind, labels, n in (("height", hl, 5), ("energy", el, 4)):
        src = batch.height_labels if kind == "height" else batch.energy_labels
        weights = fit_class_weights([x.numpy() for x in src], n)
        head = DecoderHead(kind, in_channels=pipe.fused_channels(), width=v["width"],
                           class_weights=torch.tensor(weights, dtype=torch.float32))
        hist = train_head(head, fused, labels, steps=v["steps"], batch_size=16,
                          lr=cfg.learning_rate, seed=0, weighted=(kind == "energy"))
        pipe.heads[kind] = head
        rep = evaluate_decoder(pipe, store, "val", kind)
        results[f"{key}:{kind}"] = {"miou": rep.miou, "acc": rep.accuracy,
                                    "train_loss_tail": float(np.mean(hist[-20:]))}
        log(f"  {kind}: val mIoU={rep.miou:.4f} acc={rep.accuracy:.4f} "
            f"tail_loss={np.mean(hist[-20:]):.4f}")

(OUT / "head_results.json").write_text(json.dumps(results, indent=2))
log("done")
