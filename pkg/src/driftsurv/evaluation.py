"""Grouped cross-validation, metrics and the experiment runner.

Runs the (scenario x fold x variant) grid: drift the panel, build one
shared landmark dataset per scenario, fit each ablation variant on the
training folds (with its weighting scheme; isotonic calibration on a
loan-grouped split for the calibrated variant), score the held-out fold,
and aggregate mean (SD) per metric.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from driftsurv.calibration import PROB_CLAMP, calibrate_pipeline
from driftsurv.data_model import LoanPanel
from driftsurv.drift import DriftConfig, drift_scenario
from driftsurv.errors import ConfigError, DataError
from driftsurv.hazard import TrainingConfig, make_variant, predict, variant_spec
from driftsurv.landmarking import (DEFAULT_HORIZON, DEFAULT_MIN_RISK,
                                   DEFAULT_START, DEFAULT_STEP,
                                   LandmarkDataset, build_landmark_dataset,
                                   landmark_grid)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FoldAssignment:
    """Loan-level fold map: every sample of a loan shares its fold."""

    k: int
    seed: int
    loan_to_fold: dict[str, int]

    def fold_of(self, loan_ids: np.ndarray) -> np.ndarray:
        return np.array([self.loan_to_fold[lid] for lid in loan_ids],
                        dtype=np.int64)


def grouped_kfold(loan_ids: Sequence[str], k: int, seed: int = 42
                  ) -> FoldAssignment:
    """Deterministic round-robin assignment of shuffled loans to k folds."""
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    ids = sorted(set(loan_ids))
    if len(ids) < k:
        raise DataError(f"{len(ids)} distinct loans < k={k}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ids))
    mapping = {ids[int(j)]: int(pos % k) for pos, j in enumerate(perm)}
    return FoldAssignment(k=k, seed=seed, loan_to_fold=mapping)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def auc(labels, scores) -> float | None:
    """Mann-Whitney AUC via rank sums, ties counting one half.

    Returns None (with a warning) when only one class is present.
    """
    y = np.asarray(labels, dtype=np.float64)
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int((y == 1).sum())
    n_neg = int(y.shape[0] - n_pos)
    if n_pos == 0 or n_neg == 0:
        warnings.warn("AUC undefined for one-class labels", stacklevel=2)
        return None
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    ranks = np.empty(y.shape[0])
    # average ranks over tie groups (1-based)
    boundaries = np.flatnonzero(np.diff(sorted_s)) + 1
    starts = np.concatenate(([0], boundaries))
    stops = np.concatenate((boundaries, [y.shape[0]]))
    for a, b in zip(starts, stops):
        ranks[order[a:b]] = 0.5 * (a + 1 + b)
    rank_sum = float(ranks[y == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def brier(labels, probs) -> float:
    """Mean squared error between probabilities and binary outcomes."""
    y = np.asarray(labels, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    if p.min() < 0.0 or p.max() > 1.0:
        raise ValueError("probabilities must lie in [0, 1]")
    return float(np.mean((p - y) ** 2))


def f1(labels, probs, threshold: float = 0.5) -> float:
    """F1 of thresholded probabilities: p >= threshold predicts positive."""
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must lie in (0, 1)")
    y = np.asarray(labels, dtype=np.float64)
    pred = np.asarray(probs, dtype=np.float64) >= threshold
    tp = float(np.sum(pred & (y == 1)))
    fp = float(np.sum(pred & (y == 0)))
    fn = float(np.sum(~pred & (y == 1)))
    if tp == 0.0:
        return 0.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


# ---------------------------------------------------------------------------
# Experiment runner
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalConfig:
    """Settings of one experiment run."""

    landmark_start: int = DEFAULT_START
    landmark_step: int = DEFAULT_STEP
    horizon: int = DEFAULT_HORIZON
    min_risk: int = DEFAULT_MIN_RISK
    k_folds: int = 5
    cv_seed: int = 42
    ridge_lambda: float = 1e-6
    l2: float = 1e-4
    td_half_life: float = 12.0
    iw_clip: tuple[float, float] = (0.1, 10.0)
    class_weight: str = "none"
    f1_threshold: float = 0.5
    calibration_fraction: float = 0.2
    calibration_seed: int = 7
    jobs: int | None = None

    def training(self) -> TrainingConfig:
        return TrainingConfig(l2=self.l2, td_half_life=self.td_half_life,
                              iw_clip=self.iw_clip,
                              class_weight=self.class_weight)


@dataclass(frozen=True)
class FoldMetrics:
    variant: str
    scenario: str
    fold: int
    n_samples: int
    n_positives: int
    auc: float | None
    brier: float
    f1: float
    f1_prevalence: float


@dataclass(frozen=True)
class EvalReport:
    """Per-fold metrics plus mean (SD) aggregates."""

    rows: tuple[FoldMetrics, ...]
    k: int
    scenarios: tuple[str, ...]
    variants: tuple[str, ...]

    def aggregates(self) -> list[dict]:
        out = []
        for scenario in self.scenarios:
            for variant in self.variants:
                cell = [r for r in self.rows
                        if r.scenario == scenario and r.variant == variant]
                agg: dict = {"scenario": scenario, "variant": variant,
                             "n_folds": len(cell)}
                for metric in ("auc", "brier", "f1", "f1_prevalence"):
                    vals = [getattr(r, metric) for r in cell
                            if getattr(r, metric) is not None]
                    agg[f"{metric}_mean"] = float(np.mean(vals)) if vals else None
                    agg[f"{metric}_sd"] = (float(np.std(vals, ddof=1))
                                           if len(vals) > 1 else 0.0)
                    agg[f"{metric}_n"] = len(vals)
                agg["incomplete"] = any(r.auc is None for r in cell)
                out.append(agg)
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "k_folds": self.k,
            "scenarios": list(self.scenarios),
            "variants": list(self.variants),
            "folds": [
                {"variant": r.variant, "scenario": r.scenario, "fold": r.fold,
                 "n_samples": r.n_samples, "n_positives": r.n_positives,
                 "auc": r.auc, "brier": r.brier, "f1": r.f1,
                 "f1_prevalence": r.f1_prevalence}
                for r in self.rows
            ],
            "aggregates": self.aggregates(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table_text(self, scenario: str) -> str:
        """Aligned 'Model | AUC | Brier | F1' table with mean (SD) cells."""
        lines = [f"scenario: {scenario}",
                 f"{'Model':<14}| {'AUC':<14}| {'Brier':<14}| {'F1':<14}"]
        for agg in self.aggregates():
            if agg["scenario"] != scenario:
                continue
            cells = []
            for metric in ("auc", "brier", "f1"):
                mean = agg[f"{metric}_mean"]
                sd = agg[f"{metric}_sd"]
                cells.append("--" if mean is None
                             else f"{mean:.3f} ({sd:.3f})")
            lines.append(f"{agg['variant']:<14}| {cells[0]:<14}| "
                         f"{cells[1]:<14}| {cells[2]:<14}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["scenario", "variant", "fold", "n_samples",
                             "n_positives", "auc", "brier", "f1",
                             "f1_prevalence"])
            for r in self.rows:
                writer.writerow([
                    r.scenario, r.variant, r.fold, r.n_samples, r.n_positives,
                    "" if r.auc is None else repr(r.auc),
                    repr(r.brier), repr(r.f1), repr(r.f1_prevalence)])


def _grouped_calibration_split(train: LandmarkDataset, fraction: float,
                               seed_key: Sequence[int]
                               ) -> tuple[LandmarkDataset, LandmarkDataset]:
    """Split a training set into (fit, calibration) parts, grouped by loan."""
    loans = sorted(set(train.loan_id))
    rng = np.random.default_rng(list(seed_key))
    perm = rng.permutation(len(loans))
    n_cal = max(1, int(round(fraction * len(loans))))
    cal_loans = {loans[int(j)] for j in perm[:n_cal]}
    cal_mask = np.array([lid in cal_loans for lid in train.loan_id])
    return train.subset(~cal_mask), train.subset(cal_mask)


def _evaluate_cell(ds: LandmarkDataset, fold_of: np.ndarray, fold: int,
                   variant: str, cfg: EvalConfig, scenario: str) -> FoldMetrics:
    train_mask = fold_of != fold
    test_mask = ~train_mask
    train_ds = ds.subset(train_mask)
    test_ds = ds.subset(test_mask)
    vs = variant_spec(variant)
    tc = cfg.training()
    if vs.calibrated:
        fit_ds, cal_ds = _grouped_calibration_split(
            train_ds, cfg.calibration_fraction,
            (cfg.calibration_seed, fold))
        result = calibrate_pipeline(variant, fit_ds, cal_ds, test_ds, config=tc)
        probs = result.probabilities
    else:
        model = make_variant(
            train_ds, variant, tc,
            eval_samples=test_ds if vs.weighting == "importance" else None)
        probs = np.clip(predict(model, test_ds), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = test_ds.label
    train_prev = float(train_ds.label.mean())
    thr_prev = float(np.quantile(probs, 1.0 - train_prev)) if probs.size else 0.5
    thr_prev = min(max(thr_prev, PROB_CLAMP), 1.0 - PROB_CLAMP)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        auc_val = auc(y, probs)
    return FoldMetrics(
        variant=variant, scenario=scenario, fold=fold,
        n_samples=test_ds.n_samples, n_positives=int(y.sum()),
        auc=auc_val, brier=brier(y, probs),
        f1=f1(y, probs, cfg.f1_threshold),
        f1_prevalence=f1(y, probs, thr_prev),
    )


def run_experiment(panel: LoanPanel, scenarios: Sequence[DriftConfig],
                   variants: Sequence[str],
                   cv: FoldAssignment | None = None,
                   config: EvalConfig = EvalConfig()) -> EvalReport:
    """Run the full (scenario x fold x variant) grid on one panel.

    One fold assignment is drawn over the panel's loans and reused for
    every variant and scenario. Each scenario drifts the panel and builds
    one shared landmark dataset; cells run independently (optionally in a
    thread pool) and results are assembled in deterministic order.
    """
    for v in variants:
        variant_spec(v)
    if cv is None:
        cv = grouped_kfold(panel.loan_ids, config.k_folds, config.cv_seed)

    datasets: dict[str, LandmarkDataset] = {}
    scenario_names: list[str] = []
    for dcfg in scenarios:
        name = dcfg.kind
        if name in datasets:
            raise ConfigError(f"duplicate scenario {name!r}")
        scenario_names.append(name)
        drifted = drift_scenario(panel, dcfg)
        grid = landmark_grid(drifted, config.landmark_start,
                             config.landmark_step, config.horizon,
                             config.min_risk)
        datasets[name] = build_landmark_dataset(
            drifted, grid, config.horizon, ridge_lambda=config.ridge_lambda)
        logger.info("scenario %s: %d landmarks, %d samples", name,
                    len(grid), datasets[name].n_samples)

    tasks = [(scenario, fold, variant)
             for scenario in scenario_names
             for fold in range(cv.k)
             for variant in variants]
    fold_cache = {name: cv.fold_of(datasets[name].loan_id)
                  for name in scenario_names}

    def run_cell(key):
        scenario, fold, variant = key
        return _evaluate_cell(datasets[scenario], fold_cache[scenario],
                              fold, variant, config, scenario)

    jobs = config.jobs or os.cpu_count() or 1
    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_cell, tasks))
    else:
        results = [run_cell(t) for t in tasks]

    return EvalReport(rows=tuple(results), k=cv.k,
                      scenarios=tuple(scenario_names),
                      variants=tuple(variants))
