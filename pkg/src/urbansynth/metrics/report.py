"""Evaluation report assembly: segmentation metrics plus calibration metrics
in physical and log domains, written as JSON, a readable table, and optional
confusion-matrix figures."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from ..tiles.model import ClassMap
from ..tiles.transforms import BinSpec, reconstruct_from_classes
from .calibration import ashrae_verdict, cvrmse, nmbe
from .reconstruct import reconstruct_energy, tile_totals
from .segmentation import confusion_and_seg_metrics

CLASS_NAMES = {
    "energy": ("background", "low", "medium", "high"),
    "height": ("background", "low_rise", "mid_rise", "high_rise", "tall"),
}


@dataclass
class CalibrationReport:
    nmbe: float
    cvrmse: float
    nmbe_log: float
    cvrmse_log: float
    per_class: list[dict]
    confusion: list[list[int]]
    accuracy: float
    miou: float
    verdict: str
    n_tiles: int
    source: str

    def validate(self) -> None:
        conf = np.asarray(self.confusion)
        for row in self.per_class:
            iou, dice = row["iou"], row["dice"]
            if not (np.isnan(iou) or 0.0 <= iou <= dice <= 1.0):
                raise ValueError(f"per-class invariant violated: iou={iou}, dice={dice}")
        if conf.sum(axis=1).min() < 0:
            raise ValueError("confusion rows must be counts")
        expected = ashrae_verdict(self.nmbe, self.cvrmse)
        if self.verdict != expected:
            raise ValueError(f"verdict {self.verdict!r} inconsistent with metrics")

    def to_json(self, path: str | Path | None = None) -> str:
        data = asdict(self)
        # undefined per-class metrics (class absent from both maps) -> null
        data["per_class"] = [
            {k: (None if isinstance(v, float) and np.isnan(v) else v) for k, v in row.items()}
            for row in data["per_class"]
        ]
        text = json.dumps(data, indent=2, allow_nan=False)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, path: str | Path) -> "CalibrationReport":
        data = json.loads(Path(path).read_text())
        data["per_class"] = [
            {k: (float("nan") if v is None else v) for k, v in row.items()}
            for row in data["per_class"]
        ]
        return cls(**data)


def evaluate_maps(
    pred_maps: list[ClassMap],
    truth_maps: list[ClassMap],
    bins: BinSpec,
    source: str = "energy",
) -> CalibrationReport:
    """Score predicted class maps against ground truth over a set of tiles.

    Segmentation metrics are pooled over all pixels; calibration metrics
    compare per-tile reconstructed totals (physical domain) and per-tile
    summed transformed values (log domain).
    """
    if len(pred_maps) != len(truth_maps) or not pred_maps:
        raise ValueError("need equal, nonzero numbers of predicted and truth maps")
    n_classes = truth_maps[0].n_classes
    for p, t in zip(pred_maps, truth_maps):
        if p.labels.shape != t.labels.shape or p.n_classes != n_classes:
            raise ValueError("map shape or class-count mismatch")

    pred_all = np.concatenate([p.labels.ravel() for p in pred_maps])
    truth_all = np.concatenate([t.labels.ravel() for t in truth_maps])
    seg = confusion_and_seg_metrics(pred_all, truth_all, n_classes)

    pred_phys = tile_totals([reconstruct_energy(p, bins) for p in pred_maps])
    truth_phys = tile_totals([reconstruct_energy(t, bins) for t in truth_maps])
    pred_log = tile_totals([reconstruct_from_classes(p.labels, bins) for p in pred_maps])
    truth_log = tile_totals([reconstruct_from_classes(t.labels, bins) for t in truth_maps])

    nmbe_val = nmbe(truth_phys, pred_phys)
    cvrmse_val = cvrmse(truth_phys, pred_phys)
    names = CLASS_NAMES.get(source, tuple(str(i) for i in range(n_classes)))
    per_class = [
        dict(name=names[c] if c < len(names) else str(c), **row)
        for c, row in enumerate(
            {k: v for k, v in m.items() if k != "class"} for m in seg.class_table()
        )
    ]
    report = CalibrationReport(
        nmbe=nmbe_val,
        cvrmse=cvrmse_val,
        nmbe_log=nmbe(truth_log, pred_log),
        cvrmse_log=cvrmse(truth_log, pred_log),
        per_class=per_class,
        confusion=seg.confusion.tolist(),
        accuracy=seg.accuracy,
        miou=seg.miou,
        verdict=ashrae_verdict(nmbe_val, cvrmse_val),
        n_tiles=len(pred_maps),
        source=source,
    )
    report.validate()
    return report


def render_report_table(report: CalibrationReport) -> str:
    """Human-readable summary: one per-class row plus the overall line."""
    lines = [
        f"{'class':<12}{'precision':>10}{'recall':>10}{'iou':>10}{'dice':>10}",
    ]
    for row in report.per_class:
        lines.append(
            f"{row['name']:<12}"
            f"{row['precision']:>10.4f}{row['recall']:>10.4f}"
            f"{row['iou']:>10.4f}{row['dice']:>10.4f}"
        )
    lines.append(
        f"{'overall':<12}{'':>10}{'':>10}{report.miou:>10.4f}{'':>10}  "
        f"accuracy {report.accuracy:.4f}"
    )
    lines.append(
        f"NMBE {report.nmbe:+.2f}%  CVRMSE {report.cvrmse:.2f}%  "
        f"NMBE(log) {report.nmbe_log:+.2f}%  CVRMSE(log) {report.cvrmse_log:.2f}%  "
        f"-> {report.verdict}"
    )
    return "\n".join(lines)


def save_confusion_figure(report: CalibrationReport, path: str | Path) -> Path:
    """Render the row-normalized confusion matrix to an image file."""
    conf = np.asarray(report.confusion, dtype=float)
    rows = conf.sum(axis=1, keepdims=True)
    normalized = np.divide(conf, rows, out=np.zeros_like(conf), where=rows > 0)
    names = [row["name"] for row in report.per_class]

    fig, ax = plt.subplots(figsize=(4.2, 3.8))
    im = ax.imshow(normalized, cmap="Blues", vmin=0, vmax=1)
    ax.set_xticks(range(len(names)), names, rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(len(names)), names, fontsize=8)
    ax.set_xlabel("predicted")
    ax.set_ylabel("ground truth")
    for i in range(len(names)):
        for j in range(len(names)):
            ax.text(
                j, i, f"{normalized[i, j]:.2f}",
                ha="center", va="center", fontsize=7,
                color="white" if normalized[i, j] > 0.5 else "black",
            )
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
