"""NMSE in decibels over real-stacked channel vectors."""

import numpy as np

NMSE_FLOOR_DB = -100.0
NMSE_CEIL_DB = 40.0


def clamp_db(value):
    return float(np.clip(value, NMSE_FLOOR_DB, NMSE_CEIL_DB))


def nmse_ratio(h_true, h_est):
    """Per-sample ``||h - h_est||^2 / ||h||^2`` along the last axis."""
    h_true = np.asarray(h_true, dtype=np.float64)
    h_est = np.asarray(h_est, dtype=np.float64)
    power = np.sum(h_true * h_true, axis=-1)
    if np.any(power <= 0):
        raise ValueError("NMSE undefined for a zero-norm ground truth")
    err = h_true - h_est
    return np.sum(err * err, axis=-1) / power


def nmse_db(h_true, h_est):
    """NMSE in dB; for a batch the per-sample ratios are averaged before the log."""
    ratio = float(np.mean(nmse_ratio(h_true, h_est)))
    with np.errstate(divide="ignore"):
        return clamp_db(10.0 * np.log10(ratio))
