"""Development dry run: train the full stack on an oracle corpus and report
every end-to-end quality number the acceptance suite will assert."""

import json
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import torch

torch.set_num_threads(1)

from urbansynth.config import RunConfig
from urbansynth.oracle import build_oracle_corpus, constraint_fidelity
from urbansynth.pipeline import (
    Pipeline,
    load_split,
    tiles_to_batch,
    train_full_stack,
    vae_reconstruction_error,
    evaluate_decoder,
)
from urbansynth.diffusion.sampling import sample

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("/tmp/dryrun")
OUT.mkdir(parents=True, exist_ok=True)

t0 = time.time()
cfg = RunConfig(data_root=str(OUT / "tiles"))
corpus = build_oracle_corpus(cfg.data_root, n_tiles=110, seed=0)
print(f"[{time.time()-t0:6.0f}s] corpus: "
      f"train={len(corpus.accepted['train'])} val={len(corpus.accepted['val'])} "
      f"test={len(corpus.accepted['test'])} rejected={len(corpus.rejected)}", flush=True)

pipe = train_full_stack(
    corpus.store, cfg, vae_steps=1500, ldm_steps=2000, control_steps=2000, head_steps=800
)
print(f"[{time.time()-t0:6.0f}s] training done", flush=True)

report = {}
for name, hist in pipe.histories.items():
    head = float(np.mean(hist[:20]))
    tail = float(np.mean(hist[-20:]))
    report[f"{name}_first20"] = head
    report[f"{name}_last20"] = tail
    print(f"  {name}: first20={head:.4f} last20={tail:.4f} ratio={tail/head:.3f}", flush=True)

val_tiles = load_split(corpus.store, "val")
val_batch = tiles_to_batch(val_tiles, pipe.tokenizer)
report["vae_recon_mae"] = vae_reconstruction_error(pipe, val_batch)
print(f"[{time.time()-t0:6.0f}s] vae recon MAE: {report['vae_recon_mae']:.4f}", flush=True)

for kind in ("height", "energy"):
    rep = evaluate_decoder(pipe, corpus.store, "val", kind)
    report[f"{kind}_miou"] = rep.miou
    report[f"{kind}_accuracy"] = rep.accuracy
    print(f"[{time.time()-t0:6.0f}s] {kind}: mIoU={rep.miou:.4f} acc={rep.accuracy:.4f} "
          f"nmbe={rep.nmbe:+.2f} cvrmse={rep.cvrmse:.2f}", flush=True)

# constraint fidelity on held-out val constraints
n_gen = 8
masks = val_batch.masks[:n_gen]
with torch.no_grad():
    text = pipe.text_encoder(val_batch.token_ids[:n_gen])
results = sample(
    pipe.backbone, pipe.vae, pipe.schedule, text,
    seeds=list(range(100, 100 + n_gen)), masks=masks, branch=pipe.branch,
)
ious = []
for i, res in enumerate(results):
    iou = constraint_fidelity(masks[i][2].numpy(), res.image.numpy())
    ious.append(iou)
report["fidelity_ious"] = ious
report["fidelity_mean"] = float(np.mean(ious))
print(f"[{time.time()-t0:6.0f}s] constraint fidelity IoUs: "
      f"{[round(v, 3) for v in ious]} mean={np.mean(ious):.3f}", flush=True)

report["wall_seconds"] = time.time() - t0
(OUT / "report.json").write_text(json.dumps(report, indent=2))
print("WROTE", OUT / "report.json", flush=True)
