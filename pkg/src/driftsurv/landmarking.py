"""Landmarking: aligned (landmark, horizon) prediction tasks.

At each landmark age L, every loan still at risk contributes one sample:
covariates observed at L (last observation carried forward up to a short
window), the fitted marker value from months <= L, and a binary target
indicating default inside (L, L+H].
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from driftsurv.data_model import LoanPanel
from driftsurv.errors import ConfigError
from driftsurv.longitudinal import DEFAULT_RIDGE_LAMBDA, trajectories_at_landmarks

logger = logging.getLogger(__name__)

DEFAULT_START = 12
DEFAULT_STEP = 3
DEFAULT_HORIZON = 12
DEFAULT_MIN_RISK = 100
LOCF_WINDOW = 3

NUMERIC_FEATURES = (
    "credit_score", "dti", "orig_upb", "orig_ltv", "orig_interest_rate",
    "orig_loan_term", "num_borrowers", "cur_int_rate", "eltv", "age_frac",
    "assistance",
)
CATEGORICAL_FEATURES = ("occupancy", "loan_purpose")


@dataclass(frozen=True)
class LandmarkDataset:
    """Flat sample table: one row per (loan at risk, landmark)."""

    loan_id: np.ndarray            # object
    landmark: np.ndarray           # int64
    label: np.ndarray              # int64, {0, 1}
    marker: np.ndarray             # float64, NaN = missing
    numeric: dict[str, np.ndarray]
    categorical: dict[str, np.ndarray]
    landmark_grid: tuple[int, ...]
    horizon: int

    @property
    def n_samples(self) -> int:
        return int(self.label.shape[0])

    def subset(self, mask: np.ndarray) -> "LandmarkDataset":
        return replace(
            self,
            loan_id=self.loan_id[mask],
            landmark=self.landmark[mask],
            label=self.label[mask],
            marker=self.marker[mask],
            numeric={k: v[mask] for k, v in self.numeric.items()},
            categorical={k: v[mask] for k, v in self.categorical.items()},
        )

    def to_delimited(self, path: str | Path, delimiter: str = "|") -> None:
        """One row per sample; schema documented in the README."""
        num_names = sorted(self.numeric)
        cat_names = sorted(self.categorical)
        header = ["loan_id", "landmark", "horizon", "label", "marker",
                  *num_names, *cat_names]
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(delimiter.join(header) + "\n")
            for i in range(self.n_samples):
                row = [str(self.loan_id[i]), str(int(self.landmark[i])),
                       str(self.horizon), str(int(self.label[i])),
                       _cell(self.marker[i])]
                row += [_cell(self.numeric[k][i]) for k in num_names]
                row += [self.categorical[k][i] or "" for k in cat_names]
                fh.write(delimiter.join(row) + "\n")


def _cell(v: float) -> str:
    return "" if np.isnan(v) else repr(float(v))


def _risk_ages(panel: LoanPanel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per loan: first delinquent age, first zero-balance age, first observed age.

    0 marks "never" for the first two; ages are positive by construction.
    """
    n = panel.n_loans
    status = panel.perf["cur_loan_del"]
    zbc = panel.perf["zero_bal_code"]
    ages = panel.perf["loan_age"]
    first_del = np.zeros(n, dtype=np.int64)
    first_zb = np.zeros(n, dtype=np.int64)
    first_obs = np.zeros(n, dtype=np.int64)
    for i in range(n):
        s = panel.loan_slice(i)
        a = ages[s]
        if a.shape[0] == 0:
            continue
        first_obs[i] = int(a[0])
        st = status[s]
        hit = np.flatnonzero(st > 0)  # NaN compares false: unknown is not default
        if hit.shape[0]:
            first_del[i] = int(a[hit[0]])
        zb = zbc[s.start:s.stop]
        for j in range(zb.shape[0]):
            if zb[j] is not None:
                first_zb[i] = int(a[j])
                break
    return first_del, first_zb, first_obs


def _at_risk(first_del: np.ndarray, first_zb: np.ndarray, first_obs: np.ndarray,
             landmark: int) -> np.ndarray:
    no_default = (first_del == 0) | (first_del > landmark)
    no_exit = (first_zb == 0) | (first_zb > landmark)
    observed = (first_obs > 0) & (first_obs <= landmark)
    return no_default & no_exit & observed


def landmark_grid(panel: LoanPanel, start: int = DEFAULT_START,
                  step: int = DEFAULT_STEP, horizon: int = DEFAULT_HORIZON,
                  min_risk: int = DEFAULT_MIN_RISK) -> tuple[int, ...]:
    """Landmark ages {start, start+step, ...} with a feasibility cut.

    The grid stops at the last landmark L such that at least ``min_risk``
    loans are at risk at L and L + horizon does not exceed the maximum
    observed loan age.
    """
    if start < 1 or step < 1:
        raise ConfigError("start and step must be >= 1")
    ages = panel.perf["loan_age"]
    max_age = int(ages.max()) if ages.shape[0] else 0
    first_del, first_zb, first_obs = _risk_ages(panel)
    grid: list[int] = []
    lm = start
    while lm + horizon <= max_age:
        n_risk = int(_at_risk(first_del, first_zb, first_obs, lm).sum())
        if n_risk < min_risk:
            break
        grid.append(lm)
        lm += step
    if not grid:
        n_start = int(_at_risk(first_del, first_zb, first_obs, start).sum())
        raise ConfigError(
            f"empty landmark grid: max observed age {max_age}, "
            f"start+horizon {start + horizon}, at-risk loans at start {n_start} "
            f"(min_risk {min_risk})")
    return tuple(grid)


def build_landmark_dataset(panel: LoanPanel, grid: Sequence[int],
                           horizon: int = DEFAULT_HORIZON,
                           ridge_lambda: float = DEFAULT_RIDGE_LAMBDA,
                           locf_window: int = LOCF_WINDOW) -> LandmarkDataset:
    """Assemble the aligned sample table over a landmark grid.

    Dynamic covariates come from the record at age L, or the latest record
    within ``locf_window`` months before L; loans without one are excluded
    from that landmark. The label is 1 iff a known delinquent status
    occurs at some age in (L, L+H]; loans that exit or run out of observed
    months inside the horizon keep label 0.
    """
    if not grid:
        raise ConfigError("landmark grid is empty")
    grid = tuple(int(g) for g in grid)
    first_del, first_zb, first_obs = _risk_ages(panel)
    marker, _ = trajectories_at_landmarks(panel, grid, lam=ridge_lambda)

    ages = panel.perf["loan_age"]
    o = panel.orig
    p = panel.perf

    loan_rows: list[np.ndarray] = []
    lm_rows: list[np.ndarray] = []
    label_rows: list[np.ndarray] = []
    marker_rows_: list[np.ndarray] = []
    num_rows: dict[str, list[np.ndarray]] = {k: [] for k in NUMERIC_FEATURES}
    cat_rows: dict[str, list[np.ndarray]] = {k: [] for k in CATEGORICAL_FEATURES}
    loan_ids_arr = np.asarray(panel.loan_ids, dtype=object)
    n_censored_exit = 0

    for k, lm in enumerate(grid):
        risk = _at_risk(first_del, first_zb, first_obs, lm)
        idx = np.flatnonzero(risk)
        if idx.shape[0] == 0:
            continue
        # locate the feature record: latest age <= lm within the LOCF window
        rec = np.full(idx.shape[0], -1, dtype=np.int64)
        for j, i in enumerate(idx):
            s = panel.loan_slice(int(i))
            pos = int(np.searchsorted(ages[s.start:s.stop], lm, side="right"))
            if pos == 0:
                continue
            row = s.start + pos - 1
            if ages[row] >= lm - locf_window:
                rec[j] = row
        keep = rec >= 0
        idx = idx[keep]
        rec = rec[keep]
        if idx.shape[0] == 0:
            continue

        fd = first_del[idx]
        labels = ((fd > lm) & (fd <= lm + horizon) & (fd > 0)).astype(np.int64)
        fz = first_zb[idx]
        n_censored_exit += int(((fz > lm) & (fz <= lm + horizon) & (labels == 0)).sum())

        loan_rows.append(loan_ids_arr[idx])
        lm_rows.append(np.full(idx.shape[0], lm, dtype=np.int64))
        label_rows.append(labels)
        marker_rows_.append(marker[idx, k])

        terms = o["orig_loan_term"][idx].astype(np.float64)
        assist = np.array(
            [1.0 if p["assistance_code"][r] is not None else 0.0 for r in rec])
        num_rows["credit_score"].append(o["credit_score"][idx])
        num_rows["dti"].append(o["dti"][idx])
        num_rows["orig_upb"].append(o["orig_upb"][idx])
        num_rows["orig_ltv"].append(o["orig_ltv"][idx])
        num_rows["orig_interest_rate"].append(o["orig_interest_rate"][idx])
        num_rows["orig_loan_term"].append(terms)
        num_rows["num_borrowers"].append(o["num_borrowers"][idx])
        num_rows["cur_int_rate"].append(p["cur_int_rate"][rec])
        num_rows["eltv"].append(p["eltv"][rec])
        num_rows["age_frac"].append(lm / terms)
        num_rows["assistance"].append(assist)
        cat_rows["occupancy"].append(o["occupancy"][idx])
        cat_rows["loan_purpose"].append(o["loan_purpose"][idx])

    if not loan_rows:
        raise ConfigError("no landmark produced any sample")
    if n_censored_exit:
        logger.info("%d samples exit via zero-balance inside the horizon "
                    "(labeled 0)", n_censored_exit)
    return LandmarkDataset(
        loan_id=np.concatenate(loan_rows),
        landmark=np.concatenate(lm_rows),
        label=np.concatenate(label_rows),
        marker=np.concatenate(marker_rows_),
        numeric={k: np.concatenate(v).astype(np.float64)
                 for k, v in num_rows.items()},
        categorical={k: np.concatenate(v) for k, v in cat_rows.items()},
        landmark_grid=grid,
        horizon=int(horizon),
    )
