"""Isotonic probability calibration.

Fits the non-decreasing least-squares map from raw hazard probabilities
to calibrated ones via pool-adjacent-violators, applies it as a clamped
step function, and wires the end-to-end pipeline: hazard fit on a
training split, isotonic fit on a loan-disjoint calibration split,
calibrated prediction on evaluation samples.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from driftsurv import kernels
from driftsurv.errors import DataError
from driftsurv.hazard import HazardModel, TrainingConfig, make_variant, predict
from driftsurv.landmarking import LandmarkDataset

# Calibrated outputs are clamped away from exact 0/1 so degenerate blocks
# cannot dominate downstream Brier/log computations.
PROB_CLAMP = 1e-6


@dataclass(frozen=True)
class IsotonicMap:
    """Monotone step function from raw to calibrated probabilities.

    ``boundaries`` are the strictly ascending raw-score knots (the unique
    fitting scores); ``values`` the non-decreasing fitted value at each
    knot. Evaluation is stepwise-constant with clamped extension.
    """

    boundaries: np.ndarray
    values: np.ndarray
    n_fit: int

    def __post_init__(self) -> None:
        b, v = self.boundaries, self.values
        if b.shape != v.shape or b.ndim != 1 or b.shape[0] == 0:
            raise ValueError("boundaries/values must be equal-length 1-D")
        if np.any(np.diff(b) <= 0):
            raise ValueError("boundaries must be strictly ascending")
        if np.any(np.diff(v) < -1e-15):
            raise ValueError("values must be non-decreasing")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("values must lie in [0, 1]")


def fit_isotonic(raw, labels) -> IsotonicMap:
    """Least-squares non-decreasing fit of labels on raw scores.

    Points are sorted by raw score, exact ties pre-pooled into one block
    with the mean label, then pool-adjacent-violators merges violating
    neighbours; each fitted value is its block's (weighted) mean label.
    All labels identical is a valid degenerate case: a constant map.
    """
    raw = np.asarray(raw, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if raw.shape != y.shape or raw.ndim != 1:
        raise ValueError("raw and labels must be equal-length 1-D")
    if raw.shape[0] < 2:
        raise DataError("need at least two fitting pairs")
    if raw.min() < 0.0 or raw.max() > 1.0:
        raise ValueError("raw scores must lie in [0, 1]")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    order = np.argsort(raw, kind="mergesort")
    rs, ys = raw[order], y[order]
    knots, start_idx, counts = np.unique(rs, return_index=True, return_counts=True)
    sums = np.add.reduceat(ys, start_idx)
    means = sums / counts
    fitted = kernels.pava(means, counts.astype(np.float64))
    return IsotonicMap(boundaries=knots, values=np.asarray(fitted),
                       n_fit=int(raw.shape[0]))


def apply_isotonic(iso: IsotonicMap, p) -> np.ndarray | float:
    """Stepwise-constant evaluation of the fitted map.

    A query between two knots takes the left knot's value; queries below
    the first knot take the first value, above the last the last value.
    """
    arr = np.asarray(p, dtype=np.float64)
    scalar = arr.ndim == 0
    idx = np.searchsorted(iso.boundaries, np.atleast_1d(arr), side="right") - 1
    idx = np.clip(idx, 0, iso.boundaries.shape[0] - 1)
    out = iso.values[idx]
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class CalibrationResult:
    """Output of the end-to-end calibrated pipeline."""

    probabilities: np.ndarray
    model: HazardModel
    isotonic: IsotonicMap


def calibrate_pipeline(variant: str, train_split: LandmarkDataset,
                       calib_split: LandmarkDataset,
                       eval_samples: LandmarkDataset,
                       config: TrainingConfig = TrainingConfig()
                       ) -> CalibrationResult:
    """Fit hazard on the training split, isotonic on the calibration split,
    and return clamped calibrated probabilities for the evaluation samples.

    The calibration split must be loan-disjoint from the training split.
    """
    overlap = set(train_split.loan_id) & set(calib_split.loan_id)
    if overlap:
        raise DataError(
            f"calibration split shares {len(overlap)} loans with training split")
    model = make_variant(train_split, variant, config)
    raw_calib = predict(model, calib_split)
    labels = calib_split.label
    if labels.min() == labels.max():
        warnings.warn("calibration split has a single class; isotonic map "
                      "is constant", stacklevel=2)
    iso = fit_isotonic(raw_calib, labels)
    if eval_samples.n_samples == 0:
        return CalibrationResult(probabilities=np.empty(0), model=model,
                                 isotonic=iso)
    p_cal = apply_isotonic(iso, predict(model, eval_samples))
    p_cal = np.clip(p_cal, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return CalibrationResult(probabilities=p_cal, model=model, isotonic=iso)
