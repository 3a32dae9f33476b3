"""Industry-standard calibration metrics over per-tile energy totals and the
calibration verdict against the hourly tolerance bands (|NMBE| <= 10%,
CVRMSE <= 30%)."""

from __future__ import annotations

import math

import numpy as np

ASHRAE_NMBE_LIMIT = 10.0    # percent, symmetric
ASHRAE_CVRMSE_LIMIT = 30.0  # percent


def _as_pair(truth_totals, pred_totals) -> tuple[np.ndarray, np.ndarray]:
    truth = np.asarray(truth_totals, dtype=np.float64).ravel()
    pred = np.asarray(pred_totals, dtype=np.float64).ravel()
    if truth.size == 0:
        raise ValueError("need at least one sample")
    if truth.shape != pred.shape:
        raise ValueError(f"length mismatch: {truth.shape} vs {pred.shape}")
    if not (np.all(np.isfinite(truth)) and np.all(np.isfinite(pred))):
        raise ValueError("totals must be finite")
    return truth, pred


def nmbe(truth_totals, pred_totals) -> float:
    """Normalized mean bias error in percent; positive = over-prediction."""
    truth, pred = _as_pair(truth_totals, pred_totals)
    denom = truth.sum()
    if denom <= 0:
        raise ValueError("sum of ground-truth totals must be positive")
    return float((pred - truth).sum() / denom * 100.0)


def cvrmse(truth_totals, pred_totals) -> float:
    """Coefficient of variation of RMSE in percent."""
    truth, pred = _as_pair(truth_totals, pred_totals)
    mean = truth.mean()
    if mean <= 0:
        raise ValueError("mean of ground-truth totals must be positive")
    rmse = math.sqrt(float(np.mean((pred - truth) ** 2)))
    return float(rmse / mean * 100.0)


def ashrae_verdict(nmbe_percent: float, cvrmse_percent: float) -> str:
    """'calibrated' iff |NMBE| <= 10 and CVRMSE <= 30, boundaries inclusive."""
    if not (math.isfinite(nmbe_percent) and math.isfinite(cvrmse_percent)):
        raise ValueError("verdict requires finite metrics")
    ok = abs(nmbe_percent) <= ASHRAE_NMBE_LIMIT and cvrmse_percent <= ASHRAE_CVRMSE_LIMIT
    return "calibrated" if ok else "uncalibrated"
