"""Check the control-loss halving criterion on the adjacency-driven oracle."""

import sys
import time
from pathlib import Path

import numpy as np
import torch

torch.set_num_threads(1)

from urbansynth.config import RunConfig
from urbansynth.control.branch import ControlBranch
from urbansynth.control.training import train_control
from urbansynth.diffusion.training import train_ldm, train_vae
from urbansynth.oracle import build_oracle_corpus
from urbansynth.pipeline import Pipeline, encode_corpus, load_split, tiles_to_batch
from urbansynth.tiles.transforms import BinSpec

OUT = Path(sys.argv[1])
OUT.mkdir(parents=True, exist_ok=True)
t0 = time.time()


def log(msg):
    print(f"[{time.time()-t0:6.0f}s] {msg}", flush=True)


cfg = RunConfig(data_root=str(OUT / "tiles"), checkpoint_dir=str(OUT / "ckpt"))
corpus = build_oracle_corpus(cfg.data_root, n_tiles=110, seed=0)
log(f"corpus: {sum(len(v) for v in corpus.accepted.values())} accepted")

pipe = Pipeline.initialize(cfg)
pipe.bins = {"height": corpus.height_bins, "energy": corpus.energy_bins}
tiles = load_split(corpus.store, "train")
batch = tiles_to_batch(tiles, pipe.tokenizer, pipe.bins)

h = train_vae(pipe.vae, batch.images, steps=1500, batch_size=16, lr=cfg.learning_rate, seed=0)
log(f"vae {np.mean(h[:20]):.4f} -> {np.mean(h[-20:]):.4f}")
latents = encode_corpus(pipe, batch)
h = train_ldm(pipe.backbone, pipe.schedule, latents, batch.token_ids, pipe.text_encoder,
              steps=2000, batch_size=16, lr=cfg.learning_rate, seed=0)
log(f"ldm first10={np.mean(h[:10]):.4f} last100={np.mean(h[-100:]):.4f} "
    f"halved={np.mean(h[-100:]) < 0.5*np.mean(h[:10])}")
pipe.branch = ControlBranch(pipe.backbone, cfg.constraint_channels)
h = train_control(pipe.backbone, pipe.branch, pipe.text_encoder, pipe.schedule,
                  latents, batch.token_ids, batch.masks,
                  steps=2000, batch_size=16, lr=cfg.learning_rate, seed=0)
log(f"control first10={np.mean(h[:10]):.4f} last100={np.mean(h[-100:]):.4f} "
    f"ratio={np.mean(h[-100:])/np.mean(h[:10]):.3f} "
    f"halved={np.mean(h[-100:]) < 0.5*np.mean(h[:10])}")
pipe.save(cfg.checkpoint_dir)
log("stack saved")
