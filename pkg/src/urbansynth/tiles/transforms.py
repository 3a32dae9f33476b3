"""Value transforms and quantile discretization for height/energy layers."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .model import ClassMap

# scheme name -> (source, n_classes, fitting percentiles over positive pixels)
SCHEMES = {
    "height_quintile_4": ("height", 5, (25.0, 50.0, 75.0)),
    "energy_tertile": ("energy", 4, (33.0, 66.0)),
}


def log1p_transform(raw: np.ndarray) -> np.ndarray:
    """Elementwise natural log(1 + v); rejects negative or non-finite input."""
    raw = np.asarray(raw)
    bad = ~np.isfinite(raw) | (raw < 0)
    if bad.any():
        raise ValueError(f"log1p input invalid at {int(bad.sum())} pixel(s)")
    return np.log1p(raw)


def expm1_transform(values: np.ndarray) -> np.ndarray:
    """Inverse of log1p_transform."""
    values = np.asarray(values)
    if not np.all(np.isfinite(values)):
        raise ValueError("expm1 input contains non-finite values")
    return np.expm1(values)


@dataclass(frozen=True)
class BinSpec:
    """Frozen quantile bins fit on one population of positive values.

    ``representatives`` are per-bin medians of the fitting population, used to
    invert class predictions back to physical values. Fit once on the training
    split and reused everywhere, so labels stay comparable across splits.
    """

    scheme: str
    n_classes: int
    edges: tuple[float, ...]
    representatives: tuple[float, ...]  # one per positive class, class order
    percentile_method: str = "linear"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "BinSpec":
        data = json.loads(Path(path).read_text())
        data["edges"] = tuple(data["edges"])
        data["representatives"] = tuple(data["representatives"])
        return cls(**data)


def fit_bins(values: np.ndarray, scheme: str) -> BinSpec:
    """Fit quantile bin edges and per-bin medians over positive values only."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    _, n_classes, percentiles = SCHEMES[scheme]
    values = np.asarray(values, dtype=float).ravel()
    if np.isnan(values).any():
        raise ValueError("NaN present in values to fit")
    positive = values[values > 0]
    required = n_classes - 1
    if len(np.unique(positive)) < required:
        raise ValueError(
            f"need at least {required} distinct positive values to fit "
            f"{scheme}, got {len(np.unique(positive))}"
        )
    edges = tuple(float(np.percentile(positive, p, method="linear")) for p in percentiles)
    if not all(b > a for a, b in zip(edges, edges[1:])):
        raise ValueError(f"degenerate bin edges {edges}; values too concentrated")
    labels = np.searchsorted(np.asarray(edges), positive, side="right")
    reps = []
    for c in range(n_classes - 1):
        members = positive[labels == c]
        # an interpolated edge can leave an interior bin empty only for
        # pathological near-constant data, already rejected above
        reps.append(float(np.median(members)) if len(members) else float(edges[max(c - 1, 0)]))
    return BinSpec(
        scheme=scheme,
        n_classes=n_classes,
        edges=edges,
        representatives=tuple(reps),
    )


def discretize(values: np.ndarray, scheme: str, bins: BinSpec | None = None) -> ClassMap:
    """Discretize a real grid into a ClassMap.

    Background (value 0) maps to class 0. Positive values are binned by the
    given ``bins`` or, when None, by bins fit on this grid's own positive
    pixels. An all-zero grid yields a degenerate background-only map.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    source, n_classes, _ = SCHEMES[scheme]
    values = np.asarray(values, dtype=float)
    if np.isnan(values).any():
        raise ValueError("NaN present in grid to discretize")
    if values.min() < 0:
        raise ValueError("negative values cannot be discretized")

    positive = values > 0
    if bins is None:
        if not positive.any():
            return ClassMap(
                labels=np.zeros(values.shape, dtype=np.int64),
                n_classes=n_classes,
                bin_edges=None,
                source=source,
                degenerate=True,
            )
        bins = fit_bins(values, scheme)
    elif bins.scheme != scheme:
        raise ValueError(f"bin spec fitted for {bins.scheme!r}, not {scheme!r}")

    labels = np.zeros(values.shape, dtype=np.int64)
    edges = np.asarray(bins.edges)
    labels[positive] = np.searchsorted(edges, values[positive], side="right") + 1
    return ClassMap(
        labels=labels,
        n_classes=n_classes,
        bin_edges=bins.edges,
        source=source,
    )


def reconstruct_from_classes(
    labels: np.ndarray,
    bins: BinSpec,
    representative_rule: str = "bin_median",
) -> np.ndarray:
    """Map class labels back to the transformed-domain values of their bins.

    Class 0 stays 0; class c takes the bin representative (default: median of
    the fitting population within the bin).
    """
    if representative_rule != "bin_median":
        raise ValueError(f"unknown representative rule {representative_rule!r}")
    labels = np.asarray(labels)
    if labels.max() >= bins.n_classes or labels.min() < 0:
        raise ValueError("labels out of range for bin spec")
    lut = np.concatenate([[0.0], np.asarray(bins.representatives, dtype=float)])
    return lut[labels]
