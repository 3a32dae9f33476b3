"""Augmentation experiment arms and the real-fraction sweep.

Constraint masks and density prompts are treated as cheap (available for
every tile); energy/height labels are the scarce resource the real_fraction
rations. Synthetic tiles are therefore conditioned on training-split
constraints, never on test tiles, and every run re-asserts that no training
input overlaps the fixed test manifest.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from statistics import median

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import torch

from ..metrics.report import CalibrationReport, evaluate_maps
from ..pipeline import Pipeline, tiles_to_batch, truth_class_maps
from ..tiles.model import ClassMap, QCStatus
from ..tiles.store import TileStore
from .generate import generate_batch
from .plan import ExperimentPlan, STRATEGIES
from .predictor import ReferencePredictor, train_predictor


@dataclass
class ArmResult:
    strategy: str
    real_fraction: float
    seed: int
    task: str
    n_real: int
    n_synthetic: int
    report: CalibrationReport

    @property
    def miou(self) -> float:
        return self.report.miou


def _real_subset(train_ids: list[str], fraction: float, seed: int) -> list[str]:
    rng = np.random.default_rng(seed)
    n = max(1, int(round(fraction * len(train_ids))))
    return sorted(rng.choice(sorted(train_ids), size=n, replace=False).tolist())


def _synthetic_pool(
    pipe: Pipeline,
    store: TileStore,
    source_ids: list[str],
    count: int,
    seed: int,
    batch: int = 8,
):
    tiles = [store.load_tile(tid) for tid in source_ids]
    images, labels_h, labels_e = [], [], []
    produced = 0
    while produced < count:
        take = min(batch, count - produced)
        chosen = [tiles[(produced + k) % len(tiles)] for k in range(take)]
        synth = generate_batch(
            pipe,
            np.stack([t.constraint_mask for t in chosen]),
            [t.density for t in chosen],
            [t.city for t in chosen],
            seeds=[seed * 100_000 + produced + k for k in range(take)],
            source_tile_ids=[t.tile_id for t in chosen],
        )
        for s in synth:
            images.append(torch.from_numpy(s.image).permute(2, 0, 1))
            labels_h.append(torch.from_numpy(s.height_classes.labels))
            labels_e.append(torch.from_numpy(s.energy_classes.labels))
        produced += take
    return torch.stack(images).float(), torch.stack(labels_h), torch.stack(labels_e)


def run_arm(store: TileStore, pipe: Pipeline, plan: ExperimentPlan) -> ArmResult:
    """Train the reference predictor under one strategy and score it on the
    fixed real test set."""
    train_ids = sorted(store.tile_ids(split="train", qc=QCStatus.ACCEPTED))
    plan.check_leakage(train_ids)
    real_ids = _real_subset(train_ids, plan.real_fraction, plan.seed)
    plan.check_leakage(real_ids)

    kind = plan.task
    n_classes = 5 if kind == "height" else 4
    real_tiles = [store.load_tile(tid) for tid in real_ids]
    real_batch = tiles_to_batch(real_tiles, pipe.tokenizer, pipe.bins)
    real_labels = real_batch.height_labels if kind == "height" else real_batch.energy_labels

    images, labels = real_batch.images, real_labels
    n_synth = 0
    if plan.strategy in ("mixed", "synthetic_only"):
        s_imgs, s_h, s_e = _synthetic_pool(
            pipe, store, train_ids, plan.synthetic_count, plan.seed
        )
        s_labels = s_h if kind == "height" else s_e
        n_synth = s_imgs.shape[0]
        if plan.strategy == "mixed":
            images = torch.cat([images, s_imgs])
            labels = torch.cat([labels, s_labels])
        else:
            images, labels = s_imgs, s_labels

    torch.manual_seed(plan.seed)
    predictor = ReferencePredictor(n_classes=n_classes)
    train_predictor(
        predictor, images, labels, steps=plan.predictor_steps, seed=plan.seed
    )

    test_tiles = [store.load_tile(tid) for tid in plan.test_manifest]
    test_batch = tiles_to_batch(test_tiles, pipe.tokenizer)
    bins = pipe.bins[kind]
    preds = [
        ClassMap(
            labels=predictor.predict_labels(test_batch.images[i : i + 1])[0].numpy(),
            n_classes=n_classes,
            bin_edges=bins.edges,
            source=kind,
        )
        for i in range(test_batch.images.shape[0])
    ]
    truths = truth_class_maps(test_tiles, kind, bins)
    report = evaluate_maps(preds, truths, bins, source=kind)
    return ArmResult(
        strategy=plan.strategy,
        real_fraction=plan.real_fraction,
        seed=plan.seed,
        task=kind,
        n_real=len(real_ids) if plan.strategy != "synthetic_only" else 0,
        n_synthetic=n_synth,
        report=report,
    )


def run_sweep(
    store: TileStore,
    pipe: Pipeline,
    fractions: list[float],
    strategies: list[str],
    seeds: list[int],
    synthetic_count: int,
    task: str = "energy",
    predictor_steps: int = 300,
) -> list[ArmResult]:
    test_ids = tuple(sorted(store.tile_ids(split="test", qc=QCStatus.ACCEPTED)))
    results = []
    for fraction in fractions:
        for strategy in strategies:
            for seed in seeds:
                plan = ExperimentPlan(
                    strategy=strategy,
                    real_fraction=fraction,
                    synthetic_count=synthetic_count,
                    seed=seed,
                    test_manifest=test_ids,
                    task=task,
                    predictor_steps=predictor_steps,
                )
                results.append(run_arm(store, pipe, plan))
    return results


def write_sweep_outputs(results: list[ArmResult], out_dir: str | Path) -> dict[str, Path]:
    """Arm-level CSV, the fraction-vs-mIoU pivot table, and the sweep figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    arms_path = out_dir / "arms.csv"
    with arms_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["task", "strategy", "real_fraction", "seed", "n_real", "n_synthetic",
             "miou", "accuracy", "nmbe", "cvrmse", "verdict"]
        )
        for r in results:
            writer.writerow(
                [r.task, r.strategy, r.real_fraction, r.seed, r.n_real, r.n_synthetic,
                 f"{r.miou:.6f}", f"{r.report.accuracy:.6f}",
                 f"{r.report.nmbe:.4f}", f"{r.report.cvrmse:.4f}", r.report.verdict]
            )

    fractions = sorted({r.real_fraction for r in results})
    strategies = [s for s in STRATEGIES if any(r.strategy == s for r in results)]
    pivot = {
        (f, s): median([r.miou for r in results if r.real_fraction == f and r.strategy == s])
        for f in fractions
        for s in strategies
        if any(r.real_fraction == f and r.strategy == s for r in results)
    }
    sweep_path = out_dir / "sweep.csv"
    with sweep_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["real_fraction"] + [f"{s}_miou" for s in strategies])
        for f in fractions:
            writer.writerow([f] + [f"{pivot.get((f, s), float('nan')):.6f}" for s in strategies])

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for s in strategies:
        xs = [f for f in fractions if (f, s) in pivot]
        ax.plot(xs, [pivot[(f, s)] for f in xs], marker="o", label=s)
    ax.set_xlabel("real data fraction")
    ax.set_ylabel("mIoU (median over seeds)")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    figure_path = out_dir / "sweep.png"
    fig.savefig(figure_path, dpi=150)
    plt.close(fig)
    return {"arms": arms_path, "sweep": sweep_path, "figure": figure_path}
