from __future__ import annotations

import numpy as np
import pytest

from driftsurv.data_model import (LoanOrigination, PerformanceRecord,
                                  SyntheticConfig, join_panel,
                                  generate_synthetic_portfolio)

ORIG_DEFAULTS = dict(credit_score=720.0, occupancy="owner", dti=30.0,
                     orig_upb=200_000.0, orig_ltv=80.0,
                     orig_interest_rate=6.0, loan_purpose="purchase",
                     orig_loan_term=360, num_borrowers=1)
PERF_DEFAULTS = dict(cur_act_upb=199_000.0, cur_loan_del=0,
                     cur_int_rate=6.0, cnib_upb=None, eltv=79.0,
                     zero_bal_code=None, assistance_code=None)


def make_orig(loan_id, **kw):
    return LoanOrigination(loan_id=loan_id, **{**ORIG_DEFAULTS, **kw})


def make_perf(loan_id, loan_age, period=None, **kw):
    period = loan_age if period is None else period
    return PerformanceRecord(loan_id=loan_id, period=period,
                             loan_age=loan_age, **{**PERF_DEFAULTS, **kw})


def build_panel(loans):
    """Build a panel from compact specs.

    ``loans`` maps loan_id -> (orig overrides, [per-month perf overrides]);
    perf rows get ages 1..n unless 'loan_age' is overridden.
    """
    origs, perfs = [], []
    for loan_id, (orig_kw, months) in loans.items():
        origs.append(make_orig(loan_id, **orig_kw))
        for age, kw in enumerate(months, start=1):
            kw = dict(kw)
            age = kw.pop("loan_age", age)
            perfs.append(make_perf(loan_id, age, **kw))
    panel, _ = join_panel(origs, perfs)
    return panel


def constant_panel(n_loans=4, n_months=24, rate=5.0, eltv=80.0,
                   upb=150_000.0, term=360):
    """Panel whose time-varying columns are constant per loan."""
    loans = {}
    for i in range(n_loans):
        months = [dict(cur_act_upb=upb, cur_int_rate=rate, eltv=eltv)
                  for _ in range(n_months)]
        loans[f"C{i:03d}"] = (dict(orig_upb=upb, orig_interest_rate=rate,
                                   orig_loan_term=term), months)
    return build_panel(loans)


@pytest.fixture(scope="session")
def small_synthetic_panel():
    cfg = SyntheticConfig(n_loans=300, n_months=48, marker_coef=4.0,
                          hazard_coef={"credit_score": -0.4},
                          base_logit=-4.8, prepay_rate=0.004)
    return generate_synthetic_portfolio(cfg, seed=20)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
