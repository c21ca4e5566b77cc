"""Longitudinal behavioural marker.

Scheduled amortization balance, balance-deviation marker, and the
per-loan ridge line fit that summarises each loan's marker trajectory as
an intercept (level) and slope (trend) over normalized age.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from driftsurv import kernels
from driftsurv.data_model import LoanPanel

# Scheduled balances below EPS_BAL_FRACTION * OrigUPB make the deviation
# ratio numerically unstable; the marker is treated as missing there.
EPS_BAL_FRACTION = 1e-6

DEFAULT_RIDGE_LAMBDA = 1e-6


@dataclass(frozen=True)
class MarkerObservation:
    """One observed marker point: loan age, normalized age and value."""

    t: int
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.x <= 1.0):
            raise ValueError(f"normalized age out of [0, 1]: {self.x}")
        if not np.isfinite(self.y):
            raise ValueError("marker value must be finite")


@dataclass(frozen=True)
class TrajectoryFit:
    """Per-loan trajectory summary: level, trend, observation count."""

    b0: float
    b1: float
    n_obs: int
    lam: float


def scheduled_balance(monthly_rate: float, term: int, orig_upb: float,
                      t: int | float) -> float:
    """Scheduled outstanding balance after ``t`` months of level payments.

    For positive rates this is the annuity closed form
    ``((1+r)^N - (1+r)^t) / ((1+r)^N - 1) * OrigUPB``; at r = 0 it reduces
    to straight-line amortization ``(1 - t/N) * OrigUPB``.
    """
    if term < 1:
        raise ValueError(f"term must be >= 1, got {term}")
    if t < 0 or t > term:
        raise ValueError(f"month {t} outside [0, {term}]")
    if orig_upb <= 0:
        raise ValueError("orig_upb must be positive")
    if monthly_rate < 0:
        raise ValueError("monthly_rate must be non-negative")
    g_n = (1.0 + monthly_rate) ** term
    if g_n == 1.0:  # r == 0, or so small the power rounds to 1
        return (1.0 - t / term) * orig_upb
    g_t = (1.0 + monthly_rate) ** t
    return (g_n - g_t) / (g_n - 1.0) * orig_upb


def scheduled_balance_path(annual_rate_pct: float, term: int, orig_upb: float,
                           ages: np.ndarray) -> np.ndarray:
    """Vectorized :func:`scheduled_balance` over an array of ages.

    Takes the note rate in annual percent; the monthly fraction is
    ``annual_rate_pct / 1200``.
    """
    r = annual_rate_pct / 1200.0
    ages = np.asarray(ages, dtype=np.float64)
    g_n = (1.0 + r) ** term
    if g_n == 1.0:
        return (1.0 - ages / term) * orig_upb
    return (g_n - (1.0 + r) ** ages) / (g_n - 1.0) * orig_upb


def balance_deviation(upb_cur: float, b_sch: float, eps: float = 0.0) -> float:
    """Relative gap between the actual and scheduled balance.

    Positive means behind schedule, negative ahead. Returns NaN when the
    scheduled balance is at or below ``eps`` (amortization tail) or when
    the current balance is missing.
    """
    if np.isnan(upb_cur) or np.isnan(b_sch) or b_sch <= eps or b_sch <= 0.0:
        return float("nan")
    return (upb_cur - b_sch) / b_sch


def fit_trajectory(obs: Sequence[MarkerObservation] | Sequence[tuple[float, float]],
                   lam: float = DEFAULT_RIDGE_LAMBDA) -> TrajectoryFit:
    """Closed-form ridge line fit of marker values on normalized age.

    ``b1 = S_xy / (S_xx + lam)`` and ``b0 = ybar - b1 * xbar`` with the
    centered sums taken over exactly the observed months. The ridge term
    stabilises the slope when observations are few; a single observation
    yields slope 0 and intercept equal to the observed value.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    if len(obs) == 0:
        raise ValueError("need at least one observation")
    if isinstance(obs[0], MarkerObservation):
        x = np.array([o.x for o in obs])
        y = np.array([o.y for o in obs])
    else:
        x = np.array([o[0] for o in obs], dtype=np.float64)
        y = np.array([o[1] for o in obs], dtype=np.float64)
    xbar = x.mean()
    ybar = y.mean()
    dx = x - xbar
    s_xx = float(np.dot(dx, dx))
    s_xy = float(np.dot(dx, y - ybar))
    b1 = s_xy / (s_xx + lam)
    b0 = ybar - b1 * xbar
    return TrajectoryFit(b0=float(b0), b1=float(b1), n_obs=len(obs), lam=lam)


def evaluate_marker(fit: TrajectoryFit, t: int | float, term: int) -> float:
    """Fitted marker value at month ``t``: ``b0 + b1 * t/term``."""
    if term < 1:
        raise ValueError(f"term must be >= 1, got {term}")
    return fit.b0 + fit.b1 * (t / term)


# ---------------------------------------------------------------------------
# Panel-level machinery
# ---------------------------------------------------------------------------

def marker_rows(panel: LoanPanel) -> tuple[np.ndarray, np.ndarray]:
    """Per performance row: normalized age x and marker value y.

    y is NaN where the current balance is missing or the scheduled path
    has amortized to (near) zero.
    """
    terms = panel.orig["orig_loan_term"]
    rates = panel.orig["orig_interest_rate"]
    upb0 = panel.orig["orig_upb"]
    ages = panel.perf["loan_age"]
    cur = panel.perf["cur_act_upb"]
    x = np.empty(panel.n_rows)
    y = np.empty(panel.n_rows)
    for i in range(panel.n_loans):
        s = panel.loan_slice(i)
        n_i = int(terms[i])
        b_sch = scheduled_balance_path(float(rates[i]), n_i, float(upb0[i]),
                                       ages[s])
        x[s] = ages[s] / n_i
        eps = EPS_BAL_FRACTION * float(upb0[i])
        with np.errstate(invalid="ignore", divide="ignore"):
            dev = (cur[s] - b_sch) / b_sch
        dev[~(b_sch > eps)] = np.nan
        y[s] = dev
    return x, y


def trajectories_at_landmarks(panel: LoanPanel, landmarks: Sequence[int],
                              lam: float = DEFAULT_RIDGE_LAMBDA,
                              ) -> tuple[np.ndarray, np.ndarray]:
    """Fitted marker value at each landmark, using only months <= L.

    Returns ``(marker, n_obs)`` of shape (n_loans, n_landmarks); marker is
    NaN for loans with no usable observation by the landmark. Fitting per
    landmark from scratch keeps the fit leakage-free: months after L never
    enter.
    """
    x, y = marker_rows(panel)
    ages = panel.perf["loan_age"]
    terms = panel.orig["orig_loan_term"]
    n = panel.n_loans
    out_m = np.full((n, len(landmarks)), np.nan)
    out_n = np.zeros((n, len(landmarks)), dtype=np.int64)
    ends = np.empty((n, len(landmarks)), dtype=np.int64)
    lms = np.asarray(landmarks, dtype=np.int64)
    for i in range(n):
        s = panel.loan_slice(i)
        ends[i] = s.start + np.searchsorted(ages[s.start:s.stop], lms, side="right")
    starts = panel.perf_start
    for k, lm in enumerate(lms):
        b0, b1, nobs = kernels.segment_linfit(x, y, starts, ends[:, k], lam)
        out_m[:, k] = b0 + b1 * (lm / terms)
        out_n[:, k] = nobs
    out_m[out_n == 0] = np.nan
    return out_m, out_n


def write_trajectory_csv(panel: LoanPanel, path: str | Path,
                         lam: float = DEFAULT_RIDGE_LAMBDA,
                         up_to_age: int | None = None) -> None:
    """Dump per-loan (loan_id, b0, b1, n_obs) fits for inspection."""
    x, y = marker_rows(panel)
    ages = panel.perf["loan_age"]
    stops = panel.perf_stop.copy()
    if up_to_age is not None:
        for i in range(panel.n_loans):
            s = panel.loan_slice(i)
            stops[i] = s.start + np.searchsorted(ages[s.start:s.stop],
                                                 up_to_age, side="right")
    b0, b1, nobs = kernels.segment_linfit(x, y, panel.perf_start, stops, lam)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["loan_id", "b0", "b1", "n_obs"])
        for i, lid in enumerate(panel.loan_ids):
            writer.writerow([lid, repr(float(b0[i])), repr(float(b1[i])),
                             int(nobs[i])])
