from __future__ import annotations

import numpy as np
import pytest

from driftsurv.data_model import SyntheticConfig, generate_portfolio_with_oracle
from driftsurv.errors import ConfigError, DataError
from driftsurv.hazard import (FeatureEncodingSpec, TrainingConfig, encode,
                              expit, fit_encoding, fit_hazard,
                              importance_weights, linear_predictor, load_model,
                              logit, make_variant, model_from_dict,
                              models_equal, predict, predict_design,
                              save_model, time_decay_weights)
from driftsurv.landmarking import LandmarkDataset


def toy_dataset(n, seed=0, *, n_cats=3, landmarks=(12, 15), label_rate=0.3):
    rng = np.random.default_rng(seed)
    labels = (rng.random(n) < label_rate).astype(np.int64)
    return LandmarkDataset(
        loan_id=np.array([f"L{i}" for i in range(n)], dtype=object),
        landmark=rng.choice(np.asarray(landmarks, dtype=np.int64), size=n),
        label=labels,
        marker=rng.normal(0, 0.1, n),
        numeric={"a": rng.normal(5, 2, n), "b": rng.normal(-1, 1, n)},
        categorical={"c": rng.choice(np.array(["x", "y", "z"], dtype=object)[:n_cats],
                                     size=n)},
        landmark_grid=tuple(landmarks), horizon=12)


TOY_TC = TrainingConfig(numeric_features=("a", "b"), categorical_features=("c",))


def weighted_nll(beta, X, y, w, l2):
    xb = np.column_stack([np.ones(len(y)), X])
    eta = xb @ beta
    ll = np.logaddexp(0, eta) - y * eta
    return float(w @ ll) / len(y) + 0.5 * l2 * float(beta[1:] @ beta[1:])


# ---------------------------------------------------------------------------
# encoding
# ---------------------------------------------------------------------------

def test_encode_standardization_identity():
    ds = toy_dataset(100, seed=1)
    spec = fit_encoding(ds, include_marker=False, include_landmark_onehot=False,
                        numeric_features=("a",), categorical_features=())
    st = spec.numeric[0]
    ds.numeric["a"][0] = st.mean  # value at the training mean encodes to 0
    X, y = encode(ds, spec)
    assert X[0, 0] == pytest.approx(0.0)
    assert X.shape == (100, 1)


def test_encode_reference_landmark_all_zero():
    ds = toy_dataset(50, seed=2)
    spec = fit_encoding(ds, include_marker=True, include_landmark_onehot=True,
                        numeric_features=("a",), categorical_features=())
    X, _ = encode(ds, spec)
    names = spec.column_names()
    lm_cols = [i for i, n in enumerate(names) if n.startswith("landmark=")]
    ref_rows = ds.landmark == min(ds.landmark_grid)
    assert np.all(X[np.ix_(ref_rows, lm_cols)] == 0.0)


def test_encode_hand_computed_fixture():
    ds = LandmarkDataset(
        loan_id=np.array(["a", "b", "c", "d"], dtype=object),
        landmark=np.array([12, 15, 12, 15], dtype=np.int64),
        label=np.array([0, 1, 0, 1], dtype=np.int64),
        marker=np.array([0.1, 0.2, 0.3, 0.4]),
        numeric={"v": np.array([1.0, 2.0, 3.0, 4.0])},
        categorical={"c": np.array(["x", "y", "z", "x"], dtype=object)},
        landmark_grid=(12, 15), horizon=12)
    spec = fit_encoding(ds, include_marker=True, include_landmark_onehot=True,
                        numeric_features=("v",), categorical_features=("c",))
    X, y = encode(ds, spec)
    mean, sd = 2.5, np.std([1.0, 2.0, 3.0, 4.0])
    want = np.array([
        [(1 - mean) / sd, 0, 0, 0.1, 0],
        [(2 - mean) / sd, 1, 0, 0.2, 1],
        [(3 - mean) / sd, 0, 1, 0.3, 0],
        [(4 - mean) / sd, 0, 0, 0.4, 1],
    ])
    np.testing.assert_allclose(X, want, atol=1e-12)
    assert spec.column_names() == ("v", "c=y", "c=z", "marker", "landmark=15")


def test_encode_missing_value_gets_indicator():
    ds = toy_dataset(40, seed=3)
    ds.numeric["a"][5] = np.nan
    spec = fit_encoding(ds, include_marker=False, include_landmark_onehot=False,
                        numeric_features=("a",), categorical_features=())
    X, _ = encode(ds, spec)
    assert spec.column_names() == ("a", "a__missing")
    assert X[5, 0] == 0.0 and X[5, 1] == 1.0
    assert X[0, 1] == 0.0


def test_encode_unseen_category_maps_to_reference():
    train = toy_dataset(60, seed=4, n_cats=2)  # levels x, y only
    spec = fit_encoding(train, include_marker=False,
                        include_landmark_onehot=False,
                        numeric_features=(), categorical_features=("c",))
    test = toy_dataset(30, seed=5, n_cats=3)   # includes unseen z
    X, _ = encode(test, spec)
    z_rows = test.categorical["c"] == "z"
    assert np.all(X[z_rows] == 0.0)


# ---------------------------------------------------------------------------
# fit_hazard
# ---------------------------------------------------------------------------

def test_intercept_only_recovers_logit_of_mean():
    rng = np.random.default_rng(6)
    y = (rng.random(500) < 0.23).astype(int)
    X = np.zeros((500, 2))
    model = fit_hazard(X, y, l2=0.0)
    assert model.converged
    assert model.intercept == pytest.approx(logit(y.mean()), abs=1e-8)
    np.testing.assert_allclose(model.beta[1:], 0.0, atol=1e-10)


def test_gradient_matches_finite_differences(rng):
    n, k = 200, 4
    X = rng.normal(0, 1, (n, k))
    y = (rng.random(n) < 0.4).astype(int)
    w = rng.uniform(0.5, 2.0, n)
    l2 = 0.3
    xb = np.column_stack([np.ones(n), X])
    for _ in range(10):
        beta = rng.normal(0, 0.5, k + 1)
        p = expit(xb @ beta)
        pen = np.concatenate(([0.0], beta[1:]))
        grad = xb.T @ (w * (p - y)) / n + l2 * pen
        for j in range(k + 1):
            e = np.zeros(k + 1)
            e[j] = 1e-5
            fd = (weighted_nll(beta + e, X, y, w, l2)
                  - weighted_nll(beta - e, X, y, w, l2)) / 2e-5
            assert abs(grad[j] - fd) <= 1e-4 * max(1.0, abs(fd))


def test_fit_is_stationary_point(rng):
    X = rng.normal(0, 1, (300, 3))
    y = (rng.random(300) < expit(X @ np.array([0.5, -1.0, 0.2]))).astype(int)
    model = fit_hazard(X, y, l2=1e-6)
    assert model.converged
    xb = np.column_stack([np.ones(300), X])
    p = expit(xb @ model.beta)
    pen = np.concatenate(([0.0], model.beta[1:]))
    grad = xb.T @ (p - y) / 300 + 1e-6 * pen
    assert np.max(np.abs(grad)) <= 1e-8


def test_coefficient_recovery_within_3_se():
    cfg = SyntheticConfig(n_loans=2200, n_months=48, marker_coef=3.0,
                          base_logit=-4.5,
                          hazard_coef={"credit_score": -0.4, "orig_ltv": 0.3},
                          prepay_rate=0.0)
    _, oracle = generate_portfolio_with_oracle(cfg, seed=13)
    n = oracle.default.shape[0]
    assert n >= 50_000
    X = np.column_stack([oracle.z[:50_000], oracle.marker[:50_000]])
    y = oracle.default[:50_000]
    model = fit_hazard(X, y, l2=1e-6)
    truth = np.array([oracle.true_intercept, *oracle.true_coef,
                      oracle.true_marker_coef])
    # standard errors from the observed information at the optimum
    xb = np.column_stack([np.ones(X.shape[0]), X])
    p = expit(xb @ model.beta)
    hess = (xb * (p * (1 - p))[:, None]).T @ xb
    se = np.sqrt(np.diag(np.linalg.inv(hess)))
    assert np.all(np.abs(model.beta - truth) <= 3 * se)


def test_fit_rejects_bad_inputs(rng):
    X = rng.normal(0, 1, (20, 2))
    with pytest.raises(DataError):
        fit_hazard(X, np.ones(20, dtype=int))
    with pytest.raises(DataError):
        bad = X.copy()
        bad[0, 0] = np.inf
        fit_hazard(bad, (rng.random(20) < 0.5).astype(int))


def test_loss_path_non_increasing(rng):
    X = rng.normal(0, 2, (400, 5))
    y = (rng.random(400) < expit(X @ rng.normal(0, 1, 5))).astype(int)
    model = fit_hazard(X, y, l2=1e-4)
    diffs = np.diff(model.loss_path)
    assert np.all(diffs <= 0)


def test_fit_deterministic(rng):
    X = rng.normal(0, 1, (150, 3))
    y = (rng.random(150) < 0.3).astype(int)
    w = rng.uniform(0.5, 1.5, 150)
    a = fit_hazard(X, y, weights=w, l2=1e-4)
    b = fit_hazard(X, y, weights=w, l2=1e-4)
    assert np.array_equal(a.beta, b.beta)
    assert a.loss_path == b.loss_path


def test_predict_numerics():
    ds = toy_dataset(10, seed=7)
    spec = fit_encoding(ds, include_marker=False, include_landmark_onehot=False,
                        numeric_features=("a",), categorical_features=())
    X, y = encode(ds, spec)
    from driftsurv.hazard import HazardModel
    zero = HazardModel(beta=np.zeros(2), column_names=("a",), l2=0.0,
                       converged=True, n_iter=0, loss_path=(0.0,),
                       encoding=spec)
    np.testing.assert_allclose(predict(zero, ds), 0.5)
    # linear predictor 40: no overflow, complement stays representable
    big = HazardModel(beta=np.array([40.0, 0.0]), column_names=("a",), l2=0.0,
                      converged=True, n_iter=0, loss_path=(0.0,), encoding=spec)
    probs = predict(big, ds)
    assert np.all(np.isfinite(probs))
    assert np.all(probs < 1.0) and np.all(1.0 - probs > 0.0)
    lo = predict_design(big, np.array([[-50.0]]))
    assert np.all(lo > 0.0)


def test_predict_hand_computed():
    ds = toy_dataset(3, seed=8)
    spec = fit_encoding(ds, include_marker=True, include_landmark_onehot=False,
                        numeric_features=("a",), categorical_features=())
    from driftsurv.hazard import HazardModel
    beta = np.array([-1.0, 0.5, 2.0])
    model = HazardModel(beta=beta, column_names=spec.column_names(), l2=0.0,
                        converged=True, n_iter=0, loss_path=(0.0,),
                        encoding=spec)
    X, _ = encode(ds, spec)
    want = 1.0 / (1.0 + np.exp(-(beta[0] + X @ beta[1:])))
    np.testing.assert_allclose(predict(model, ds), want, atol=1e-12)


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------

def test_time_decay_weight_values():
    lms = np.array([12, 24, 36], dtype=np.int64)
    tw = time_decay_weights(lms, half_life=12.0)
    raw = np.array([0.25, 0.5, 1.0])
    np.testing.assert_allclose(tw.values, raw / raw.mean())
    # raw weight at L_max is maximal, at L_max - half_life exactly half
    assert tw.values[2] == tw.values.max()
    assert tw.values[1] / tw.values[2] == pytest.approx(0.5)


def test_time_decay_infinite_half_life_uniform():
    ds = toy_dataset(50, seed=9)
    tw = time_decay_weights(ds, half_life=np.inf)
    np.testing.assert_allclose(tw.values, 1.0)


def test_importance_weights_identical_distributions(rng):
    X_tr = rng.normal(0, 1, (5000, 3))
    X_te = rng.normal(0, 1, (5000, 3))
    iw = importance_weights(X_tr, X_te, clip=(0.1, 10.0))
    assert iw.values.mean() == pytest.approx(1.0)
    assert np.all(iw.values >= 0.5) and np.all(iw.values <= 2.0)


def _spearman(a, b):
    def avg_ranks(v):
        order = np.argsort(v, kind="mergesort")
        sv = v[order]
        ranks = np.empty(len(v))
        bounds = np.flatnonzero(np.diff(sv)) + 1
        starts = np.concatenate(([0], bounds))
        stops = np.concatenate((bounds, [len(v)]))
        for s, e in zip(starts, stops):
            ranks[order[s:e]] = 0.5 * (s + 1 + e)
        return ranks
    return float(np.corrcoef(avg_ranks(np.asarray(a)),
                             avg_ranks(np.asarray(b)))[0, 1])


def test_importance_weights_track_shift(rng):
    # moderate shift: the classifier stays non-separating, so weights vary
    # smoothly with the shifted feature
    X_tr = rng.normal(0, 1, (4000, 2))
    X_te = rng.normal(0, 1, (4000, 2))
    X_te[:, 0] += 1.0
    iw = importance_weights(X_tr, X_te, clip=(0.05, 20.0))
    assert _spearman(X_tr[:, 0], iw.values) > 0.5
    # extreme shift: most weights pin at the clip bounds, but the
    # association stays positive
    X_far = X_te.copy()
    X_far[:, 0] += 4.0
    iw_far = importance_weights(X_tr, X_far, clip=(0.05, 20.0))
    assert _spearman(X_tr[:, 0], iw_far.values) > 0.0


def test_importance_weights_degenerate_clip(rng):
    X_tr = rng.normal(0, 1, (500, 2))
    X_te = rng.normal(3, 1, (500, 2))
    iw = importance_weights(X_tr, X_te, clip=(1.0, 1.0))
    np.testing.assert_allclose(iw.values, 1.0)


# ---------------------------------------------------------------------------
# variants
# ---------------------------------------------------------------------------

def test_variant_flag_mapping():
    ds = toy_dataset(300, seed=10)
    m1 = make_variant(ds, "M1", TOY_TC)
    assert not m1.encoding.include_marker
    assert not m1.encoding.include_landmark_onehot
    lm = make_variant(ds, "M1-LM", TOY_TC)
    assert lm.encoding.include_marker and lm.encoding.include_landmark_onehot
    with pytest.raises(ConfigError):
        make_variant(ds, "M2", TOY_TC)
    with pytest.raises(ConfigError):
        make_variant(ds, "M1-IW", TOY_TC)  # needs eval samples


def test_class_balanced_weights_shift_intercept():
    from driftsurv.hazard import class_balance_weights
    rng = np.random.default_rng(30)
    y = (rng.random(2000) < 0.1).astype(int)
    X = np.zeros((2000, 1))
    w = class_balance_weights(y)
    assert w.mean() == pytest.approx(1.0)
    model = fit_hazard(X, y, weights=w, l2=0.0)
    # both classes carry equal total weight, so the balanced fit centers at 0.5
    assert model.intercept == pytest.approx(0.0, abs=1e-7)
    ds = toy_dataset(600, seed=16, label_rate=0.15)
    balanced = make_variant(ds, "M1-LM", TrainingConfig(
        class_weight="balanced", numeric_features=("a", "b"),
        categorical_features=("c",)))
    plain = make_variant(ds, "M1-LM", TOY_TC)
    assert balanced.intercept > plain.intercept
    with pytest.raises(ConfigError):
        make_variant(ds, "M1", TrainingConfig(
            class_weight="bogus", numeric_features=("a", "b"),
            categorical_features=("c",)))


def test_variant_td_limit_equals_joint():
    ds = toy_dataset(400, seed=11)
    tc = TrainingConfig(td_half_life=np.inf, numeric_features=("a", "b"),
                        categorical_features=("c",))
    td = make_variant(ds, "M1-TD", tc)
    joint = make_variant(ds, "M1-Joint", tc)
    np.testing.assert_allclose(td.beta, joint.beta, atol=1e-8)


def test_folded_baseline_equals_full_predictor():
    ds = toy_dataset(500, seed=12, label_rate=0.4)
    model = make_variant(ds, "M1-LM", TOY_TC)
    eta_full = linear_predictor(model, ds)
    baselines = model.landmark_baselines()
    spec_nolm = FeatureEncodingSpec(
        numeric=model.encoding.numeric,
        categorical=model.encoding.categorical,
        include_marker=model.encoding.include_marker,
        marker_missing_indicator=model.encoding.marker_missing_indicator,
        include_landmark_onehot=False, landmark_levels=())
    X_core, _ = encode(ds, spec_nolm)
    n_core = X_core.shape[1]
    eta_folded = (np.array([baselines[int(l)] for l in ds.landmark])
                  + X_core @ model.beta[1:1 + n_core])
    np.testing.assert_allclose(eta_full, eta_folded, atol=1e-12)


def test_gamma_sign_recovery_through_pipeline():
    from driftsurv.landmarking import build_landmark_dataset, landmark_grid
    cfg = SyntheticConfig(n_loans=1500, n_months=42, marker_coef=5.0,
                          base_logit=-5.0, bd_slope_sd=0.25,
                          hazard_coef={"credit_score": -0.3})
    panel, _ = generate_portfolio_with_oracle(cfg, seed=21)
    grid = landmark_grid(panel, min_risk=50)
    ds = build_landmark_dataset(panel, grid)
    model = make_variant(ds, "M1-Joint", TrainingConfig())
    assert model.marker_coef is not None and model.marker_coef > 0


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_model_json_round_trip(tmp_path):
    ds = toy_dataset(200, seed=14)
    ds.numeric["a"][3] = np.nan
    model = make_variant(ds, "M1-LM", TOY_TC)
    path = tmp_path / "model.json"
    save_model(model, path)
    loaded, cal = load_model(path)
    assert cal is None
    assert models_equal(model, loaded)


def test_model_json_round_trip_with_calibration(tmp_path):
    from driftsurv.calibration import IsotonicMap
    ds = toy_dataset(200, seed=15)
    model = make_variant(ds, "M1", TOY_TC)
    iso = IsotonicMap(boundaries=np.array([0.1, 0.5]),
                      values=np.array([0.2, 0.7]), n_fit=2)
    path = tmp_path / "model.json"
    save_model(model, path, calibration=iso)
    loaded, cal = load_model(path)
    assert models_equal(model, loaded)
    np.testing.assert_array_equal(cal.boundaries, iso.boundaries)
    np.testing.assert_array_equal(cal.values, iso.values)
    assert cal.n_fit == 2


def test_model_dict_rejects_wrong_format():
    with pytest.raises(DataError):
        model_from_dict({"format": "something-else"})
