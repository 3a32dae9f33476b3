"""Command-line surface for the full pipeline.

Every command resolves a RunConfig (file + flags), logs the effective config
next to its outputs, and is replayable from that file plus the recorded
seeds.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np
import torch

from .config import RunConfig, load_config

torch.set_num_threads(max(1, torch.get_num_threads()))


def _resolve_config(config_path, **overrides) -> RunConfig:
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return load_config(config_path, **overrides)


def _log_config(cfg: RunConfig, directory: str | Path, extra: dict | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cfg.save(directory / "run_config.yaml")
    if extra:
        (directory / "run_args.json").write_text(json.dumps(extra, indent=2, default=str))


config_option = click.option("--config", "config_path", type=click.Path(exists=True), default=None)
seed_option = click.option("--seed", type=int, default=None, help="override config seed")


@click.group()
def main():
    """Co-generation of urban imagery with aligned height/energy class maps."""


@main.command()
@config_option
@click.option("--oracle", "n_oracle", type=int, default=None, help="generate N synthetic-city tiles")
@click.option("--muse-manifests", is_flag=True, help="verify the published per-city manifests")
@click.option("--defect-rate", type=float, default=0.1)
@seed_option
def ingest(config_path, n_oracle, muse_manifests, defect_rate, seed):
    """Populate the tile store (synthetic-city corpus) or check manifests."""
    cfg = _resolve_config(config_path, seed=seed)
    if muse_manifests:
        from .tiles.muse import verify_city_counts

        stats = verify_city_counts()
        for city, s in stats.items():
            click.echo(f"{city}: {s.accepted}/{s.total} accepted")
        return
    if n_oracle is None:
        raise click.UsageError("give --oracle N or --muse-manifests")
    from .oracle import build_oracle_corpus

    corpus = build_oracle_corpus(
        cfg.data_root, n_tiles=n_oracle, seed=cfg.seed,
        resolution=cfg.resolution, defect_rate=defect_rate,
        qc_threshold=cfg.qc_max_null_block_fraction,
    )
    _log_config(cfg, cfg.data_root, {"command": "ingest", "n_oracle": n_oracle})
    counts = {k: len(v) for k, v in corpus.accepted.items()}
    click.echo(f"ingested {n_oracle} tiles: accepted {counts}, rejected {len(corpus.rejected)}")


@main.command()
@config_option
@click.option("--threshold", type=float, default=None)
@click.option("--overrides", "overrides_path", type=click.Path(exists=True), default=None)
def qc(config_path, threshold, overrides_path):
    """Re-run quality control over every tile in the store."""
    from .tiles.qc import load_overrides, qc_filter
    from .tiles.store import TileStore

    cfg = _resolve_config(config_path)
    threshold = threshold if threshold is not None else cfg.qc_max_null_block_fraction
    overrides = load_overrides(overrides_path) if overrides_path else None
    store = TileStore(cfg.data_root)
    counts = {"accepted": 0, "rejected": 0}
    for row in store.read_manifest():
        tile = store.load_tile(row.tile_id)
        decision = qc_filter(tile, threshold, overrides)
        store.set_qc(row.tile_id, decision.status, decision.reason)
        counts[decision.status.value] += 1
    click.echo(json.dumps(counts))


@main.command()
@config_option
def discretize(config_path):
    """Fit quantile bins on the accepted training split and freeze them."""
    from .tiles.model import QCStatus
    from .tiles.store import TileStore
    from .tiles.transforms import fit_bins

    cfg = _resolve_config(config_path)
    store = TileStore(cfg.data_root)
    heights, energies = [], []
    for tile in store.iter_tiles(split="train", qc=QCStatus.ACCEPTED):
        heights.append(tile.height_map[tile.height_map > 0])
        energies.append(tile.energy_map[tile.energy_map > 0])
    if not heights:
        raise click.ClickException("no accepted training tiles to fit on")
    hb = fit_bins(np.concatenate(heights), "height_quintile_4")
    eb = fit_bins(np.concatenate(energies), "energy_tertile")
    hb.save(Path(cfg.data_root) / "bins_height.json")
    eb.save(Path(cfg.data_root) / "bins_energy.json")
    click.echo(f"height edges: {hb.edges}\nenergy edges: {eb.edges}")


def _staged_pipeline(cfg: RunConfig):
    from .pipeline import Pipeline

    ckpt = Path(cfg.checkpoint_dir)
    if (ckpt / "vae.pt").exists():
        return Pipeline.load(cfg, ckpt, strict=False)
    return Pipeline.initialize(cfg)


def _train_data(cfg: RunConfig, pipe, with_bins=False):
    from .pipeline import load_split, tiles_to_batch
    from .tiles.store import TileStore
    from .tiles.transforms import BinSpec

    store = TileStore(cfg.data_root)
    if with_bins and not pipe.bins:
        pipe.bins = {
            "height": BinSpec.load(store.root / "bins_height.json"),
            "energy": BinSpec.load(store.root / "bins_energy.json"),
        }
    tiles = load_split(store, "train")
    return store, tiles_to_batch(tiles, pipe.tokenizer, pipe.bins if with_bins else None)


@main.command("train-vae")
@config_option
@click.option("--steps", type=int, default=1500, help="0 = initialize and save only")
@seed_option
def train_vae_cmd(config_path, steps, seed):
    """Stage 1: train the image autoencoder."""
    from .diffusion.training import train_vae

    cfg = _resolve_config(config_path, seed=seed)
    pipe = _staged_pipeline(cfg)
    _, batch = _train_data(cfg, pipe)
    if steps > 0:
        history = train_vae(
            pipe.vae, batch.images, steps=steps, batch_size=cfg.batch_size,
            lr=cfg.learning_rate, seed=cfg.seed,
        )
        click.echo(f"vae loss {history[0]:.4f} -> {history[-1]:.4f}")
    pipe.save(cfg.checkpoint_dir)
    _log_config(cfg, cfg.checkpoint_dir, {"command": "train-vae", "steps": steps})


@main.command("train-ldm")
@config_option
@click.option("--steps", type=int, default=2000)
@seed_option
def train_ldm_cmd(config_path, steps, seed):
    """Stage 2: train the latent denoiser with text conditioning."""
    from .diffusion.training import train_ldm
    from .pipeline import encode_corpus

    cfg = _resolve_config(config_path, seed=seed)
    pipe = _staged_pipeline(cfg)
    _, batch = _train_data(cfg, pipe)
    if steps > 0:
        latents = encode_corpus(pipe, batch)
        history = train_ldm(
            pipe.backbone, pipe.schedule, latents, batch.token_ids, pipe.text_encoder,
            steps=steps, batch_size=cfg.batch_size, lr=cfg.learning_rate, seed=cfg.seed,
        )
        click.echo(f"ldm loss {history[0]:.4f} -> {history[-1]:.4f}")
    pipe.save(cfg.checkpoint_dir)
    _log_config(cfg, cfg.checkpoint_dir, {"command": "train-ldm", "steps": steps})


@main.command("train-control")
@config_option
@click.option("--steps", type=int, default=2000)
@seed_option
def train_control_cmd(config_path, steps, seed):
    """Stage 3: train the constraint branch against the frozen backbone."""
    from .control.branch import ControlBranch
    from .control.training import train_control
    from .pipeline import encode_corpus

    cfg = _resolve_config(config_path, seed=seed)
    pipe = _staged_pipeline(cfg)
    _, batch = _train_data(cfg, pipe)
    if pipe.branch is None:
        pipe.branch = ControlBranch(pipe.backbone, cfg.constraint_channels)
    if steps > 0:
        latents = encode_corpus(pipe, batch)
        history = train_control(
            pipe.backbone, pipe.branch, pipe.text_encoder, pipe.schedule,
            latents, batch.token_ids, batch.masks,
            steps=steps, batch_size=cfg.batch_size, lr=cfg.learning_rate, seed=cfg.seed,
        )
        click.echo(f"control loss {history[0]:.4f} -> {history[-1]:.4f}")
    pipe.save(cfg.checkpoint_dir)
    _log_config(cfg, cfg.checkpoint_dir, {"command": "train-control", "steps": steps})


@main.command("train-decoder")
@click.argument("kind", type=click.Choice(["height", "energy"]))
@config_option
@click.option("--steps", type=int, default=1000)
@click.option("--draws", type=int, default=4, help="noise draws per tile")
@click.option("--weighted/--unweighted", default=None,
              help="class-weighted CE; defaults to weighted for energy only")
@seed_option
def train_decoder_cmd(kind, config_path, steps, draws, weighted, seed):
    """Stage 4: train a decoding head on fused denoiser features."""
    from .decoders.heads import DecoderHead
    from .decoders.losses import fit_class_weights
    from .decoders.training import train_head
    from .pipeline import head_training_set

    cfg = _resolve_config(config_path, seed=seed)
    pipe = _staged_pipeline(cfg)
    _, batch = _train_data(cfg, pipe, with_bins=True)
    labels = batch.height_labels if kind == "height" else batch.energy_labels
    n_classes = 5 if kind == "height" else 4
    weights = fit_class_weights([l.numpy() for l in labels], n_classes)
    if kind not in pipe.heads:
        pipe.heads[kind] = DecoderHead(
            kind, in_channels=pipe.fused_channels(), width=cfg.head_channels,
            class_weights=torch.tensor(weights, dtype=torch.float32),
        )
    if steps > 0:
        fused, height_labels, energy_labels = head_training_set(pipe, batch, n_draws=draws)
        labels_aug = height_labels if kind == "height" else energy_labels
        history = train_head(
            pipe.heads[kind], fused, labels_aug, steps=steps, batch_size=cfg.batch_size,
            lr=cfg.learning_rate, seed=cfg.seed,
            weighted=(kind == "energy") if weighted is None else weighted,
        )
        click.echo(f"{kind} head loss {history[0]:.4f} -> {history[-1]:.4f}")
    pipe.save(cfg.checkpoint_dir)
    _log_config(cfg, cfg.checkpoint_dir, {"command": f"train-decoder {kind}", "steps": steps})


@main.command()
@config_option
@click.option("--constraints-tile", type=str, default=None, help="reuse a stored tile's constraints")
@click.option("--geometry-json", type=click.Path(exists=True), default=None)
@click.option("--city", type=str, default="oracleville")
@click.option("--bcr", type=float, default=20.0)
@click.option("--bvd", type=float, default=3.0)
@click.option("--rd", type=float, default=1.0)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def generate(config_path, constraints_tile, geometry_json, city, bcr, bvd, rd, seed, out_dir):
    """Generate one annotated synthetic tile from constraints and a prompt."""
    from .experiments.generate import generate_annotated
    from .pipeline import Pipeline
    from .server.wire import encode_float_raster, image_to_png_bytes, mask_to_png_bytes
    from .tiles.model import DensityMetrics
    from .tiles.store import TileStore

    cfg = _resolve_config(config_path)
    pipe = Pipeline.load(cfg, cfg.checkpoint_dir)
    if constraints_tile:
        tile = TileStore(cfg.data_root).load_tile(constraints_tile)
        mask, density = tile.constraint_mask, tile.density
        city = tile.city
    else:
        density = DensityMetrics(bcr=bcr, bvd=bvd, rd=rd)
        if geometry_json:
            mask = _rasterize_file(geometry_json, cfg.resolution)
        else:
            raise click.UsageError("give --constraints-tile or --geometry-json")
    synth = generate_annotated(pipe, mask, density, city, seed, source_tile_id=constraints_tile)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "image.png").write_bytes(image_to_png_bytes(synth.image))
    (out / "constraints.png").write_bytes(mask_to_png_bytes(synth.constraint_mask))
    np.save(out / "height_classes.npy", synth.height_classes.labels)
    np.save(out / "energy_classes.npy", synth.energy_classes.labels)
    (out / "height.bin").write_bytes(encode_float_raster(synth.height_map, "height_m"))
    (out / "energy.bin").write_bytes(encode_float_raster(synth.energy_map, "energy_log1p"))
    import hashlib

    layer_digest = hashlib.sha256()
    for name in ("image.png", "height_classes.npy", "energy_classes.npy"):
        layer_digest.update((out / name).read_bytes())
    meta = {
        "city": city,
        "seed": seed,
        "generator_digest": synth.generator_digest,
        "output_digest": layer_digest.hexdigest(),
        "source_tile_id": synth.source_tile_id,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2))
    _log_config(cfg, out, {"command": "generate", "seed": seed, "city": city})
    click.echo(json.dumps(meta))


def _rasterize_file(path, resolution):
    from .server.app import UNIT_BBOX
    from .tiles.raster import Geometry, rasterize_constraints

    payload = json.loads(Path(path).read_text())
    geoms = [
        Geometry(
            channel=g["channel"], kind=g["kind"],
            coords=tuple(map(tuple, g["coords"])), width_px=g.get("width_px", 1.0),
        )
        for g in payload["geometries"]
    ]
    mask, errors = rasterize_constraints(geoms, UNIT_BBOX, (resolution, resolution))
    if errors:
        raise click.ClickException(f"invalid geometries: {errors}")
    return mask


@main.command()
@config_option
@click.option("--geometry-json", type=click.Path(exists=True), required=True)
@click.option("--resolution", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
def rasterize(config_path, geometry_json, resolution, out_path):
    """Rasterize unit-square geometries to a JSON mask (parity checks)."""
    cfg = _resolve_config(config_path, **({"resolution": resolution} if resolution else {}))
    mask = _rasterize_file(geometry_json, cfg.resolution)
    Path(out_path).write_text(json.dumps({"shape": list(mask.shape), "mask": mask.tolist()}))
    click.echo(f"wrote {out_path}")


@main.command()
@config_option
@click.option("--split", type=str, default="val")
@click.option("--task", type=click.Choice(["height", "energy", "both"]), default="both")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--figures/--no-figures", default=True, help="emit confusion-matrix images")
def evaluate(config_path, split, task, out_dir, figures):
    """Score the trained decoders on a split; writes reports and figures."""
    from .metrics.report import render_report_table, save_confusion_figure
    from .pipeline import Pipeline, evaluate_decoder
    from .tiles.store import TileStore

    cfg = _resolve_config(config_path)
    pipe = Pipeline.load(cfg, cfg.checkpoint_dir)
    store = TileStore(cfg.data_root)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kinds = ["height", "energy"] if task == "both" else [task]
    for kind in kinds:
        report = evaluate_decoder(pipe, store, split, kind)
        report.to_json(out / f"report_{kind}.json")
        table = render_report_table(report)
        (out / f"report_{kind}.txt").write_text(table + "\n")
        if figures:
            save_confusion_figure(report, out / f"confusion_{kind}.png")
        click.echo(f"== {kind} ({split}) ==\n{table}")
    _log_config(cfg, out, {"command": "evaluate", "split": split, "task": task})


@main.command()
@config_option
@click.option("--plan", "plan_path", type=click.Path(exists=True), default=None)
@click.option("--fractions", type=str, default="0.1,0.2,0.4")
@click.option("--strategies", type=str, default="real_only,mixed,synthetic_only")
@click.option("--seeds", type=str, default="0,1,2")
@click.option("--synthetic-count", type=int, default=32)
@click.option("--task", type=click.Choice(["height", "energy"]), default="energy")
@click.option("--predictor-steps", type=int, default=300)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def experiment(config_path, plan_path, fractions, strategies, seeds, synthetic_count,
               task, predictor_steps, out_dir):
    """Run augmentation arms (or one plan file) and write the sweep outputs."""
    from .experiments.plan import load_plan
    from .experiments.runner import run_arm, run_sweep, write_sweep_outputs
    from .pipeline import Pipeline
    from .tiles.store import TileStore

    cfg = _resolve_config(config_path)
    pipe = Pipeline.load(cfg, cfg.checkpoint_dir)
    store = TileStore(cfg.data_root)
    if plan_path:
        results = [run_arm(store, pipe, load_plan(plan_path))]
    else:
        results = run_sweep(
            store, pipe,
            fractions=[float(f) for f in fractions.split(",")],
            strategies=strategies.split(","),
            seeds=[int(s) for s in seeds.split(",")],
            synthetic_count=synthetic_count,
            task=task,
            predictor_steps=predictor_steps,
        )
    paths = write_sweep_outputs(results, out_dir)
    _log_config(cfg, out_dir, {"command": "experiment", "seeds": seeds, "fractions": fractions})
    for r in results:
        click.echo(
            f"{r.task} {r.strategy} f={r.real_fraction} seed={r.seed} "
            f"mIoU={r.miou:.4f} ({r.n_real} real + {r.n_synthetic} synthetic)"
        )
    click.echo(f"outputs: {paths['arms']}, {paths['sweep']}, {paths['figure']}")


@main.command("ablate-tstar")
@config_option
@click.option("--fractions", type=str, default="0.02,0.05,0.1,0.25")
@click.option("--steps", type=int, default=1000)
@click.option("--draws", type=int, default=4)
@click.option("--task", type=click.Choice(["height", "energy"]), default="energy")
@click.option("--out", "out_dir", type=click.Path(), required=True)
def ablate_tstar(config_path, fractions, steps, draws, task, out_dir):
    """Sweep the feature-harvest timestep and report held-out decoder mIoU."""
    import csv

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .decoders.heads import DecoderHead
    from .decoders.training import train_head
    from .pipeline import Pipeline, evaluate_decoder, head_training_set
    from .tiles.store import TileStore

    base_cfg = _resolve_config(config_path)
    store = TileStore(base_cfg.data_root)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for frac in (float(f) for f in fractions.split(",")):
        cfg = _resolve_config(config_path, t_star_fraction=frac)
        pipe = Pipeline.load(cfg, cfg.checkpoint_dir, strict=False)
        _, batch = _train_data(cfg, pipe, with_bins=True)
        fused, hl, el = head_training_set(pipe, batch, n_draws=draws)
        labels = hl if task == "height" else el
        pipe.heads[task] = DecoderHead(task, in_channels=pipe.fused_channels(), width=cfg.head_channels)
        train_head(pipe.heads[task], fused, labels, steps=steps, batch_size=cfg.batch_size,
                   lr=cfg.learning_rate, seed=cfg.seed, weighted=(task == "energy"))
        report = evaluate_decoder(pipe, store, "val", task)
        rows.append((frac, cfg.t_star, report.miou, report.accuracy))
        click.echo(f"t*={cfg.t_star} (frac {frac}): val mIoU {report.miou:.4f}")
    with (out / "tstar_sweep.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_star_fraction", "t_star", "miou", "accuracy"])
        writer.writerows(rows)
    fig, ax = plt.subplots(figsize=(4.5, 3))
    ax.plot([r[0] for r in rows], [r[2] for r in rows], marker="o")
    ax.set_xlabel("t* fraction of T")
    ax.set_ylabel(f"{task} val mIoU")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out / "tstar_sweep.png", dpi=150)
    plt.close(fig)
    click.echo(f"wrote {out / 'tstar_sweep.csv'}")


@main.command()
@config_option
@click.option("--host", type=str, default=None)
@click.option("--port", type=int, default=None)
def serve(config_path, host, port):
    """Start the HTTP gateway (refuses mismatched checkpoints)."""
    import uvicorn

    from .server.app import create_app

    cfg = _resolve_config(config_path, host=host, port=port)
    app = create_app(cfg)
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")


if __name__ == "__main__":
    sys.exit(main())
