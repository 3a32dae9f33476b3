import math

import numpy as np
import pytest

from urbansynth.metrics import evaluate_maps, reconstruct_energy, render_report_table, save_confusion_figure
from urbansynth.metrics.report import CalibrationReport
from urbansynth.tiles import BinSpec, discretize, fit_bins


def make_bins():
    rng = np.random.default_rng(1)
    values = rng.uniform(0.5, 8.0, size=4000)  # log1p-domain energies
    return fit_bins(values, "energy_tertile"), values


def test_background_reconstructs_to_zero():
    bins, _ = make_bins()
    labels = np.zeros((8, 8), dtype=np.int64)
    out = reconstruct_energy(labels, bins)
    assert np.all(out == 0.0)


def test_single_pixel_log1_gives_e_minus_one():
    bins = BinSpec(
        scheme="energy_tertile",
        n_classes=4,
        edges=(0.5, 2.0),
        representatives=(0.2, 1.0, 3.0),
    )
    labels = np.array([[2]])
    out = reconstruct_energy(labels, bins)
    assert out[0, 0] == pytest.approx(math.e - 1, rel=1e-12)


def test_round_trip_total_within_quantization_bound():
    # discretize ground truth, reconstruct, compare tile totals: the error is
    # bounded by the worst within-bin spread of expm1 values
    bins, values = make_bins()
    rng = np.random.default_rng(2)
    grid = np.zeros((32, 32))
    mask = rng.uniform(size=grid.shape) < 0.5
    grid[mask] = rng.choice(values, size=int(mask.sum()))
    cm = discretize(grid, "energy_tertile", bins=bins)
    recon = reconstruct_energy(cm, bins)

    true_kbtu = np.expm1(grid)
    rel_err = abs(recon.sum() - true_kbtu.sum()) / true_kbtu.sum()
    # frozen regression threshold measured on the synthetic-corpus fit
    assert rel_err < 0.35
    # per-pixel: reconstructed values use each bin's representative
    for c in (1, 2, 3):
        sel = cm.labels == c
        if sel.any():
            assert np.allclose(recon[sel], np.expm1(bins.representatives[c - 1]))


def test_evaluate_maps_perfect_prediction(tmp_path):
    bins, values = make_bins()
    rng = np.random.default_rng(3)
    maps = []
    for _ in range(4):
        grid = np.zeros((16, 16))
        mask = rng.uniform(size=grid.shape) < 0.6
        grid[mask] = rng.choice(values, size=int(mask.sum()))
        maps.append(discretize(grid, "energy_tertile", bins=bins))
    report = evaluate_maps(maps, maps, bins, source="energy")
    assert report.miou == 1.0
    assert report.accuracy == 1.0
    assert report.nmbe == 0.0
    assert report.cvrmse == 0.0
    assert report.verdict == "calibrated"

    # report round-trips through json and renders
    path = tmp_path / "report.json"
    report.to_json(path)
    loaded = CalibrationReport.from_json(path)
    assert loaded.miou == report.miou
    table = render_report_table(report)
    assert "calibrated" in table
    fig = save_confusion_figure(report, tmp_path / "confusion.png")
    assert fig.exists() and fig.stat().st_size > 0


def test_evaluate_maps_biased_prediction_uncalibrated():
    bins = BinSpec(
        scheme="energy_tertile",
        n_classes=4,
        edges=(1.0, 2.0),
        representatives=(0.5, 1.5, 4.0),
    )
    truth = discretize(np.full((8, 8), 0.5), "energy_tertile", bins=bins)
    pred = discretize(np.full((8, 8), 4.0), "energy_tertile", bins=bins)
    report = evaluate_maps([pred], [truth], bins)
    assert report.nmbe > 10
    assert report.verdict == "uncalibrated"
