"""Head-generalization probe: cached backbone, fresh larger corpus, small
head, low-noise t*."""

import time

import numpy as np
import torch

torch.set_num_threads(1)
t0 = time.time()

from urbansynth.config import RunConfig
from urbansynth.decoders.features import noise_seed_for
from urbansynth.decoders.heads import DecoderHead
from urbansynth.decoders.training import train_head
from urbansynth.oracle import build_oracle_corpus
from urbansynth.pipeline import Pipeline, head_training_set, load_split, tiles_to_batch
from urbansynth.tiles.store import TileStore

cfg = RunConfig(data_root="/tmp/dh/tiles", checkpoint_dir="/tmp/dh/ckpt", t_star_fraction=4 / 200)
pipe = Pipeline.load(cfg, cfg.checkpoint_dir)
pipe.config = cfg

corpus = build_oracle_corpus("/tmp/dh/tiles_big", n_tiles=200, seed=7)
store = corpus.store
pipe.bins = {"height": corpus.height_bins, "energy": corpus.energy_bins}
tb = tiles_to_batch(load_split(store, "train"), pipe.tokenizer, pipe.bins)
vb = tiles_to_batch(load_split(store, "val"), pipe.tokenizer, pipe.bins)
print(f"train {len(tb.tile_ids)} val {len(vb.tile_ids)} ({time.time()-t0:.0f}s)", flush=True)


def miou_of(head, feats, labels):
    from urbansynth.metrics import confusion_and_seg_metrics

    preds = [head.predict_labels(feats[i]).numpy() for i in range(feats.shape[0])]
    return confusion_and_seg_metrics(
        np.stack(preds).ravel(), labels.numpy().ravel(), head.n_classes
    ).miou


fused, hl, el = head_training_set(pipe, tb, n_draws=6)
ex = pipe.extractor()
fva = torch.stack(
    [
        ex.extract(
            vb.images[i].permute(1, 2, 0),
            vb.token_ids[i],
            constraint_mask=vb.masks[i],
            noise_seed=noise_seed_for(tid, 0, 0),
        ).fused
        for i, tid in enumerate(vb.tile_ids)
    ]
)
print(f"features ready {tuple(fused.shape)} ({time.time()-t0:.0f}s)", flush=True)

for kind, ltr, lva in (("energy", el, vb.energy_labels), ("height", hl, vb.height_labels)):
    head = DecoderHead(kind, in_channels=fused.shape[1], width=32)
    hist = train_head(
        head, fused, ltr, steps=1500, batch_size=16, lr=2e-3, seed=0, weighted=(kind == "energy")
    )
    print(
        f"{kind} w32 s1500 d6 n={len(tb.tile_ids)}: tail={np.mean(hist[-20:]):.4f} "
        f"val={miou_of(head, fva, lva):.3f} ({time.time()-t0:.0f}s)",
        flush=True,
    )
