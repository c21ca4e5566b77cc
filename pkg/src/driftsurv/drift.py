"""Drift simulation and drift-severity diagnostics.

Three parametric covariate-drift schedules (sudden, incremental,
recurring) over the observation month index, mortgage feasibility
constraints (per-loan non-increasing balances, long-run ELTV decay,
physical clipping), probabilistic label flipping toward a monthly
prevalence schedule, and the per-loan severity diagnostic that grades
each variable's temporal change as None/Slight/Moderate/Severe.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from driftsurv import kernels
from driftsurv.data_model import LoanPanel
from driftsurv.errors import ConfigError

logger = logging.getLogger(__name__)

DRIFT_KINDS = ("sudden", "incremental", "recurring", "none")
SEVERITY_LEVELS = ("None", "Slight", "Moderate", "Severe", "Insufficient")

NUMERIC_DRIFT_VARS = ("cur_act_upb", "cur_int_rate", "eltv", "cnib_upb")
CATEGORICAL_DRIFT_VARS = ("cur_loan_del", "zero_bal_code", "assistance_code")

ELTV_MAX = 250.0


@dataclass(frozen=True)
class DriftConfig:
    """Parameters of one drift scenario.

    ``t_s``/``t_e`` default to floor(T/3) and floor(2T/3) of the panel's
    observation span. All schedule constants default to the shipped
    scenario definitions and stay configurable.
    """

    kind: str
    seed: int = 0
    t_s: int | None = None
    t_e: int | None = None
    period: int = 12
    # covariate schedule constants
    rate_step: float = 1.0
    rate_ramp: float = 1.5
    rate_amp: float = 0.5
    eltv_scale: float = 1.2
    eltv_ramp: float = 0.15
    eltv_amp: float = 0.05
    eltv_phase: float = math.pi / 6
    upb_break_cut: float = 0.05
    upb_ramp: float = 0.09
    upb_amp: float = 0.02
    upb_phase: float = math.pi / 3
    # constraint constants
    eltv_decay_rate: float = 0.004
    # label schedule constants
    label_base: float = 0.025
    label_sudden_to: float = 0.10
    label_incremental_to: float = 0.12
    label_recurring_mean: float = 0.06
    label_recurring_amp: float = 0.035
    label_recurring_phase: float = -math.pi / 4

    def __post_init__(self) -> None:
        if self.kind not in DRIFT_KINDS:
            raise ConfigError(f"unknown drift kind {self.kind!r}; "
                              f"expected one of {DRIFT_KINDS}")
        if self.period < 1:
            raise ConfigError("period must be positive")
        for p in (self.label_base, self.label_sudden_to,
                  self.label_incremental_to, self.label_recurring_mean):
            if not (0.0 < p < 1.0):
                raise ConfigError(f"prevalence target {p} outside (0, 1)")

    def breakpoints(self, span: int) -> tuple[int, int]:
        t_s = self.t_s if self.t_s is not None else span // 3
        t_e = self.t_e if self.t_e is not None else (2 * span) // 3
        if not (1 <= t_s <= t_e <= span):
            raise ConfigError(
                f"break months must satisfy 1 <= t_s <= t_e <= T: "
                f"t_s={t_s}, t_e={t_e}, T={span}")
        return t_s, t_e


def ramp(t, t_s: int, t_e: int):
    """Linear ramp: 0 up to t_s, 1 from t_e on, linear in between.

    The degenerate t_e == t_s collapses to a step that activates at t_s.
    """
    t = np.asarray(t, dtype=np.float64)
    if t_e > t_s:
        out = np.clip((t - t_s) / (t_e - t_s), 0.0, 1.0)
    else:
        out = (t >= t_s).astype(np.float64)
    return float(out) if out.ndim == 0 else out


def _check_provenance(panel: LoanPanel, prefix: str) -> None:
    prior = [tag for tag in panel.provenance if tag.startswith(prefix)]
    if prior:
        raise ConfigError(
            f"panel already carries {prior[0]!r}; drift application is "
            "one-shot and not idempotent")


def apply_covariate_drift(panel: LoanPanel, cfg: DriftConfig) -> LoanPanel:
    """Apply one covariate-drift schedule plus feasibility constraints.

    Schedules act on cur_int_rate, eltv and cur_act_upb by observation
    month index; missing values stay missing. Constraints then run in
    order: per-loan cumulative-min on balances, multiplicative long-run
    ELTV decay, and clipping to physical ranges. ``kind="none"`` is the
    identity.
    """
    if cfg.kind == "none":
        return panel
    _check_provenance(panel, "covariate:")
    if panel.n_rows == 0:
        raise ConfigError("cannot drift an empty panel")
    span = panel.observation_span
    t_s, t_e = cfg.breakpoints(span)
    t = panel.perf["month_index"].astype(np.float64)
    rate = panel.perf["cur_int_rate"].copy()
    eltv = panel.perf["eltv"].copy()
    upb = panel.perf["cur_act_upb"].copy()

    if cfg.kind == "sudden":
        post = t >= t_s
        rate[post] += cfg.rate_step
        eltv[post] *= cfg.eltv_scale
        month = panel.perf["month_index"]
        for i in range(panel.n_loans):
            s = panel.loan_slice(i)
            hit = np.flatnonzero(month[s.start:s.stop] >= t_s)
            if hit.shape[0]:
                upb[s.start + hit[0]] *= 1.0 - cfg.upb_break_cut
    elif cfg.kind == "incremental":
        tau = ramp(t, t_s, t_e)
        rate += cfg.rate_ramp * tau
        eltv *= 1.0 + cfg.eltv_ramp * tau
        upb *= 1.0 - cfg.upb_ramp * tau
    else:  # recurring
        w = 2.0 * math.pi * t / cfg.period
        rate += cfg.rate_amp * np.sin(w)
        eltv *= 1.0 + cfg.eltv_amp * np.sin(w + cfg.eltv_phase)
        upb *= 1.0 - cfg.upb_amp * (0.5 + 0.5 * np.sin(w + cfg.upb_phase))

    # feasibility constraints, in order
    upb = kernels.segment_cummin(upb, panel.perf_start, panel.perf_stop)
    t0 = float(panel.perf["month_index"].min())
    eltv *= (1.0 - cfg.eltv_decay_rate) ** (t - t0)
    with np.errstate(invalid="ignore"):
        rate = np.maximum(rate, 0.0)
        eltv = np.minimum(eltv, ELTV_MAX)
        upb = np.maximum(upb, 0.0)

    out = panel.replace_perf(cur_int_rate=rate, eltv=eltv, cur_act_upb=upb)
    return out.with_provenance(f"covariate:{cfg.kind}")


def label_target(cfg: DriftConfig, month: int, span: int) -> float:
    """Target delinquency prevalence p(t) for one observation month."""
    t_s, t_e = cfg.breakpoints(span)
    if cfg.kind == "sudden":
        return cfg.label_sudden_to if month >= t_s else cfg.label_base
    if cfg.kind == "incremental":
        tau = ramp(month, t_s, t_e)
        return cfg.label_base + (cfg.label_incremental_to - cfg.label_base) * tau
    if cfg.kind == "recurring":
        return cfg.label_recurring_mean + cfg.label_recurring_amp * math.sin(
            2.0 * math.pi * month / cfg.period + cfg.label_recurring_phase)
    raise ConfigError(f"no label schedule for kind {cfg.kind!r}")


def apply_label_drift(panel: LoanPanel, cfg: DriftConfig) -> LoanPanel:
    """Flip delinquency statuses toward the monthly prevalence schedule.

    Statuses are reduced to binary first (originals kept in the
    ``cur_loan_del_raw`` shadow column). Within each month, current rows
    flip up with probability (p-c)/(1-c) when prevalence c is below the
    target p, and delinquent rows flip down with probability (c-p)/c when
    above. Random streams derive from (seed, month), so results are
    reproducible regardless of execution order.
    """
    if cfg.kind == "none":
        return panel
    _check_provenance(panel, "label:")
    span = panel.observation_span
    status_raw = panel.perf["cur_loan_del"]
    status = np.where(np.isnan(status_raw), np.nan,
                      (status_raw != 0).astype(np.float64))
    month = panel.perf["month_index"]
    for m in range(1, span + 1):
        rows = np.flatnonzero((month == m) & ~np.isnan(status))
        if rows.shape[0] == 0:
            logger.warning("month %d has no non-missing statuses; skipped", m)
            continue
        p = label_target(cfg, m, span)
        c = float((status[rows] > 0).mean())
        if c < p:
            pr = (p - c) / (1.0 - c)
            if pr > 0.0:
                cur = rows[status[rows] == 0]
                rng = np.random.default_rng([cfg.seed, m])
                status[cur[rng.random(cur.shape[0]) < pr]] = 1.0
        elif c > p:
            pr = (c - p) / c
            if pr > 0.0:
                dlq = rows[status[rows] > 0]
                rng = np.random.default_rng([cfg.seed, m])
                status[dlq[rng.random(dlq.shape[0]) < pr]] = 0.0
    out = panel.replace_perf(cur_loan_del=status,
                             cur_loan_del_raw=status_raw.copy())
    return out.with_provenance(f"label:{cfg.kind}")


def drift_scenario(panel: LoanPanel, cfg: DriftConfig) -> LoanPanel:
    """Covariate drift followed by label drift (independent mechanisms)."""
    if cfg.kind == "none":
        return panel
    return apply_label_drift(apply_covariate_drift(panel, cfg), cfg)


# ---------------------------------------------------------------------------
# Severity diagnostic
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeveritySlice:
    """Severity distribution of one variable: per-loan scores and levels."""

    variable: str
    scores: np.ndarray        # NaN where insufficient
    levels: tuple[str, ...]   # per loan
    percentages: dict[str, float]
    scale: float              # normalizing IQR (numeric) or NaN (categorical)


def _numeric_level(score: float) -> str:
    # left-open, right-closed intervals; score 0 is None
    if score <= 0.1:
        return "None"
    if score <= 0.3:
        return "Slight"
    if score <= 0.7:
        return "Moderate"
    return "Severe"


def _categorical_level(rate: float) -> str:
    if rate == 0.0:
        return "None"
    if rate <= 0.1:
        return "Slight"
    if rate <= 0.3:
        return "Moderate"
    return "Severe"


def _percentages(levels: Sequence[str]) -> dict[str, float]:
    n = len(levels)
    return {lv: 100.0 * sum(1 for x in levels if x == lv) / n
            for lv in SEVERITY_LEVELS}


def drift_severity_numeric(panel: LoanPanel, variable: str,
                           reference: LoanPanel | None = None) -> SeveritySlice:
    """Grade a numeric variable's temporal change per loan.

    Score = median |month-over-month change| over adjacent non-missing
    record pairs, normalized by the variable's global IQR. The IQR comes
    from ``reference`` when given (e.g. the undrifted panel, putting all
    scenarios on a common scale) and from the panel itself otherwise.
    Loans without two adjacent non-missing observations are Insufficient;
    a zero IQR degenerates to Severe for any change and None for no change.
    """
    if variable not in NUMERIC_DRIFT_VARS:
        raise ConfigError(f"{variable!r} is not a numeric drift variable")
    values = panel.perf[variable]
    ref_values = (reference or panel).perf[variable]
    finite_ref = ref_values[np.isfinite(ref_values)]
    if finite_ref.shape[0]:
        iqr = float(np.percentile(finite_ref, 75) - np.percentile(finite_ref, 25))
    else:
        iqr = 0.0
    scores = np.full(panel.n_loans, np.nan)
    levels: list[str] = []
    for i in range(panel.n_loans):
        s = panel.loan_slice(i)
        v = values[s]
        pair_ok = np.isfinite(v[:-1]) & np.isfinite(v[1:])
        if not pair_ok.any():
            levels.append("Insufficient")
            continue
        changes = np.abs(v[1:] - v[:-1])[pair_ok]
        med = float(np.median(changes))
        if iqr > 0.0:
            score = med / iqr
        else:
            score = math.inf if med > 0.0 else 0.0
        scores[i] = score
        levels.append(_numeric_level(score))
    return SeveritySlice(variable=variable, scores=scores,
                         levels=tuple(levels),
                         percentages=_percentages(levels), scale=iqr)


def drift_severity_categorical(panel: LoanPanel, variable: str) -> SeveritySlice:
    """Grade a categorical variable's state-change rate per loan.

    The delinquency status is binarized (0 vs nonzero) before computing
    the rate of changes between successive observed states. Loans with
    fewer than two observed states are Insufficient; a rate of exactly 0
    is None.
    """
    if variable not in CATEGORICAL_DRIFT_VARS:
        raise ConfigError(f"{variable!r} is not a categorical drift variable")
    col = panel.perf[variable]
    scores = np.full(panel.n_loans, np.nan)
    levels: list[str] = []
    for i in range(panel.n_loans):
        s = panel.loan_slice(i)
        if variable == "cur_loan_del":
            v = col[s]
            states = [(x > 0) for x in v if not math.isnan(x)]
        else:
            states = [x for x in col[s.start:s.stop] if x is not None]
        if len(states) < 2:
            levels.append("Insufficient")
            continue
        changes = sum(1 for a, b in zip(states, states[1:]) if a != b)
        rate = changes / (len(states) - 1)
        scores[i] = rate
        levels.append(_categorical_level(rate))
    return SeveritySlice(variable=variable, scores=scores,
                         levels=tuple(levels),
                         percentages=_percentages(levels), scale=float("nan"))


def severity_report(panel: LoanPanel, variables: Sequence[str],
                    reference: LoanPanel | None = None
                    ) -> dict[str, SeveritySlice]:
    """Severity slices for a list of variables, numeric or categorical."""
    out: dict[str, SeveritySlice] = {}
    for var in variables:
        if var in NUMERIC_DRIFT_VARS:
            out[var] = drift_severity_numeric(panel, var, reference=reference)
        elif var in CATEGORICAL_DRIFT_VARS:
            out[var] = drift_severity_categorical(panel, var)
        else:
            raise ConfigError(f"unknown drift variable {var!r}")
    return out


def severity_report_to_dict(report: Mapping[str, SeveritySlice]) -> dict:
    return {
        "variables": {
            var: {
                "levels": {lv: sl.percentages[lv] for lv in SEVERITY_LEVELS},
                "n_loans": len(sl.levels),
                "iqr": None if math.isnan(sl.scale) else sl.scale,
            }
            for var, sl in report.items()
        }
    }


def write_severity_json(report: Mapping[str, SeveritySlice],
                        path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(severity_report_to_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_severity_csv(report: Mapping[str, SeveritySlice],
                       path: str | Path) -> None:
    """Stacked-bar-ready CSV: one row per (variable, level)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variable", "level", "percentage"])
        for var in sorted(report):
            for lv in SEVERITY_LEVELS:
                writer.writerow([var, lv, f"{report[var].percentages[lv]:.4f}"])
