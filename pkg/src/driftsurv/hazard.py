"""Discrete-time logistic hazard on landmark samples.

Feature encoding (training-fold standardization, one-hot categoricals,
missing indicators, optional marker and landmark one-hot columns), a
deterministic Newton fitter for the weighted L2-penalized likelihood,
prediction, the two drift-aware training weight schemes, and the ablation
variant registry.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from driftsurv.errors import ConfigError, DataError
from driftsurv.landmarking import CATEGORICAL_FEATURES, NUMERIC_FEATURES, LandmarkDataset

logger = logging.getLogger(__name__)

MISSING_LEVEL = "(missing)"
GRADIENT_TOL = 1e-8
MAX_ITER = 500
DEFAULT_L2 = 1e-4
DOMAIN_CLASSIFIER_L2 = 1e-4


def expit(x: np.ndarray | float) -> np.ndarray | float:
    """Numerically stable logistic function."""
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out[0]) if scalar else out


def logit(p: float) -> float:
    return float(np.log(p / (1.0 - p)))


# ---------------------------------------------------------------------------
# Feature encoding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NumericStat:
    name: str
    mean: float
    sd: float
    missing_indicator: bool


@dataclass(frozen=True)
class CategoryMap:
    name: str
    levels: tuple[str, ...]  # levels[0] is the reference


@dataclass(frozen=True)
class FeatureEncodingSpec:
    """Frozen description of the design-matrix layout.

    Standardization statistics and category levels come from training
    rows only; the landmark levels are the task grid, fixed at fit time
    with the smallest landmark as the one-hot reference.
    """

    numeric: tuple[NumericStat, ...]
    categorical: tuple[CategoryMap, ...]
    include_marker: bool
    marker_missing_indicator: bool
    include_landmark_onehot: bool
    landmark_levels: tuple[int, ...]

    def columns(self) -> tuple[tuple[str, str], ...]:
        """(kind, name) per design column, in matrix order."""
        cols: list[tuple[str, str]] = []
        for st in self.numeric:
            cols.append(("num", st.name))
            if st.missing_indicator:
                cols.append(("num_missing", f"{st.name}__missing"))
        for cm in self.categorical:
            for level in cm.levels[1:]:
                cols.append(("cat", f"{cm.name}={level}"))
        if self.include_marker:
            cols.append(("marker", "marker"))
            if self.marker_missing_indicator:
                cols.append(("marker_missing", "marker__missing"))
        if self.include_landmark_onehot:
            for lm in self.landmark_levels[1:]:
                cols.append(("landmark", f"landmark={lm}"))
        return tuple(cols)

    def column_names(self) -> tuple[str, ...]:
        return tuple(name for _, name in self.columns())


def fit_encoding(train: LandmarkDataset, *, include_marker: bool,
                 include_landmark_onehot: bool,
                 numeric_features: Sequence[str] | None = None,
                 categorical_features: Sequence[str] | None = None,
                 ) -> FeatureEncodingSpec:
    """Learn standardization stats and category maps from training rows."""
    numeric_features = (NUMERIC_FEATURES if numeric_features is None
                        else tuple(numeric_features))
    categorical_features = (CATEGORICAL_FEATURES if categorical_features is None
                            else tuple(categorical_features))
    stats = []
    for name in numeric_features:
        v = train.numeric[name]
        finite = np.isfinite(v)
        mean = float(v[finite].mean()) if finite.any() else 0.0
        sd = float(v[finite].std()) if finite.any() else 0.0
        stats.append(NumericStat(name=name, mean=mean,
                                 sd=sd if sd > 0 else 1.0,
                                 missing_indicator=bool((~finite).any())))
    cats = []
    for name in categorical_features:
        v = train.categorical[name]
        levels = sorted({MISSING_LEVEL if x is None else str(x) for x in v})
        cats.append(CategoryMap(name=name, levels=tuple(levels)))
    marker_missing = include_marker and bool((~np.isfinite(train.marker)).any())
    return FeatureEncodingSpec(
        numeric=tuple(stats),
        categorical=tuple(cats),
        include_marker=include_marker,
        marker_missing_indicator=marker_missing,
        include_landmark_onehot=include_landmark_onehot,
        landmark_levels=train.landmark_grid,
    )


def encode(samples: LandmarkDataset, spec: FeatureEncodingSpec
           ) -> tuple[np.ndarray, np.ndarray]:
    """Design matrix + label vector under a fitted encoding.

    Numerics are standardized with training stats, missing values become
    0 plus an indicator column; categoricals are reference-coded one-hots
    (unseen levels map to the reference and are logged); the marker and
    the landmark one-hot are appended when the spec includes them.
    """
    n = samples.n_samples
    blocks: list[np.ndarray] = []
    for st in spec.numeric:
        v = samples.numeric[st.name]
        miss = ~np.isfinite(v)
        z = (np.where(miss, st.mean, v) - st.mean) / st.sd
        z[miss] = 0.0
        blocks.append(z)
        if st.missing_indicator:
            blocks.append(miss.astype(np.float64))
    for cm in spec.categorical:
        v = samples.categorical[cm.name]
        vals = np.array([MISSING_LEVEL if x is None else str(x) for x in v])
        levels = np.asarray(cm.levels)  # sorted at fit time
        pos = np.searchsorted(levels, vals)
        known = pos < len(levels)
        known[known] &= levels[pos[known]] == vals[known]
        codes = np.where(known, pos, 0)  # unseen level -> reference
        unseen = int((~known).sum())
        if unseen:
            logger.warning("%d unseen %r levels mapped to reference",
                           unseen, cm.name)
        for k in range(1, len(cm.levels)):
            blocks.append((codes == k).astype(np.float64))
    if spec.include_marker:
        m = samples.marker
        miss = ~np.isfinite(m)
        mm = np.where(miss, 0.0, m)
        blocks.append(mm)
        if spec.marker_missing_indicator:
            blocks.append(miss.astype(np.float64))
    if spec.include_landmark_onehot:
        for lm in spec.landmark_levels[1:]:
            blocks.append((samples.landmark == lm).astype(np.float64))
    X = np.column_stack(blocks) if blocks else np.empty((n, 0))
    return np.ascontiguousarray(X, dtype=np.float64), samples.label.astype(np.int64)


# ---------------------------------------------------------------------------
# Training weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainingWeights:
    """Positive per-sample weights, rescaled to mean 1."""

    values: np.ndarray
    scheme: str  # uniform | time-decay | importance

    def __post_init__(self) -> None:
        v = self.values
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("weights must be positive and finite")


def uniform_weights(n: int) -> TrainingWeights:
    return TrainingWeights(values=np.ones(n), scheme="uniform")


def class_balance_weights(labels: np.ndarray) -> np.ndarray:
    """Per-sample factors equalizing the two classes' total weight.

    ``w = n / (2 * n_class)``; the factors average to 1 over the sample.
    """
    y = np.asarray(labels)
    n = y.shape[0]
    n_pos = int((y == 1).sum())
    if n_pos == 0 or n_pos == n:
        raise DataError("class weighting needs both classes")
    w_pos = n / (2.0 * n_pos)
    w_neg = n / (2.0 * (n - n_pos))
    return np.where(y == 1, w_pos, w_neg)


def time_decay_weights(samples: LandmarkDataset | np.ndarray,
                       half_life: float) -> TrainingWeights:
    """Exponential decay by distance to the newest landmark in the fold.

    ``w = 2^(-(L_max - L)/half_life)``, then rescaled to mean 1. An
    infinite half-life gives uniform weights.
    """
    if not half_life > 0:
        raise ValueError("half_life must be positive")
    landmarks = samples.landmark if isinstance(samples, LandmarkDataset) \
        else np.asarray(samples, dtype=np.float64)
    l_max = float(landmarks.max())
    raw = np.power(2.0, -(l_max - landmarks.astype(np.float64)) / half_life)
    return TrainingWeights(values=raw / raw.mean(), scheme="time-decay")


def importance_weights(train_design: np.ndarray, test_design: np.ndarray,
                       clip: tuple[float, float] = (0.1, 10.0)
                       ) -> TrainingWeights:
    """Covariate-shift weights from a train-vs-test domain classifier.

    A logistic classifier (label 1 = evaluation row) is fit on the stacked
    designs; training rows get ``p/(1-p) * n_train/n_test`` clipped to
    ``clip`` and rescaled to mean 1. Falls back to uniform weights with a
    warning when the classifier fails to converge.
    """
    lo, hi = clip
    if not (0 < lo <= hi):
        raise ValueError(f"invalid clip range {clip}")
    n_tr, n_te = train_design.shape[0], test_design.shape[0]
    X = np.vstack([train_design, test_design])
    y = np.concatenate([np.zeros(n_tr, dtype=np.int64),
                        np.ones(n_te, dtype=np.int64)])
    model = fit_hazard(X, y, l2=DOMAIN_CLASSIFIER_L2)
    if not model.converged:
        warnings.warn("domain classifier did not converge; using uniform "
                      "importance weights", stacklevel=2)
        return TrainingWeights(values=np.ones(n_tr), scheme="importance")
    p = predict_design(model, train_design)
    w = p / (1.0 - p) * (n_tr / n_te)
    w = np.clip(w, lo, hi)
    return TrainingWeights(values=w / w.mean(), scheme="importance")


# ---------------------------------------------------------------------------
# Model and fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HazardModel:
    """Fitted hazard: intercept-first coefficient vector plus metadata."""

    beta: np.ndarray
    column_names: tuple[str, ...]
    l2: float
    converged: bool
    n_iter: int
    loss_path: tuple[float, ...]
    encoding: FeatureEncodingSpec | None = None
    variant: str | None = None

    @property
    def intercept(self) -> float:
        return float(self.beta[0])

    def _kinds(self) -> tuple[str, ...]:
        if self.encoding is None:
            return tuple("num" for _ in self.column_names)
        return tuple(kind for kind, _ in self.encoding.columns())

    @property
    def coef(self) -> dict[str, float]:
        """Covariate coefficients (everything except marker and landmark)."""
        kinds = self._kinds()
        return {name: float(b) for name, kind, b in
                zip(self.column_names, kinds, self.beta[1:])
                if kind not in ("marker", "marker_missing", "landmark")}

    @property
    def marker_coef(self) -> float | None:
        kinds = self._kinds()
        for kind, b in zip(kinds, self.beta[1:]):
            if kind == "marker":
                return float(b)
        return None

    @property
    def landmark_coefs(self) -> dict[int, float]:
        """Per-landmark intercept adjustment; the reference level maps to 0."""
        if self.encoding is None or not self.encoding.include_landmark_onehot:
            return {}
        out = {int(self.encoding.landmark_levels[0]): 0.0}
        kinds = self._kinds()
        for name, kind, b in zip(self.column_names, kinds, self.beta[1:]):
            if kind == "landmark":
                out[int(name.split("=", 1)[1])] = float(b)
        return out

    def landmark_baselines(self) -> dict[int, float]:
        """Folded baseline per landmark: intercept + landmark adjustment."""
        return {lm: self.intercept + d for lm, d in self.landmark_coefs.items()}


def _nll(eta: np.ndarray, y: np.ndarray, w: np.ndarray,
         beta: np.ndarray, l2: float) -> float:
    # mean of -w*(y*log p + (1-y)*log(1-p)) = mean of w*(log(1+e^eta) - y*eta);
    # the mean scale keeps the 1e-8 gradient tolerance meaningful at any n
    ll = np.logaddexp(0.0, eta) - y * eta
    pen = 0.5 * l2 * float(np.dot(beta[1:], beta[1:]))
    return float(np.dot(w, ll)) / y.shape[0] + pen


def fit_hazard(design: np.ndarray, labels: np.ndarray,
               weights: TrainingWeights | np.ndarray | None = None,
               l2: float = DEFAULT_L2, *,
               encoding: FeatureEncodingSpec | None = None,
               variant: str | None = None,
               column_names: Sequence[str] | None = None,
               max_iter: int = MAX_ITER, tol: float = GRADIENT_TOL
               ) -> HazardModel:
    """Newton minimization of the weighted penalized negative log-likelihood.

    The intercept is unpenalized; the objective is
    ``sum_i w_i * nll_i + l2/2 * ||beta[1:]||^2``. Deterministic from zero
    initialization; step halving keeps the objective non-increasing.
    Convergence means gradient max-norm <= ``tol``.
    """
    X = np.asarray(design, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("design must be 2-D")
    if not np.all(np.isfinite(X)):
        raise DataError("design matrix contains non-finite entries")
    y = np.asarray(labels, dtype=np.float64)
    if X.shape[0] != y.shape[0]:
        raise ValueError("design and labels differ in length")
    if not np.all((y == 0) | (y == 1)):
        raise DataError("labels must be binary")
    if y.min() == y.max():
        raise DataError("labels are all one class; cannot fit")
    if l2 < 0:
        raise ValueError("l2 must be non-negative")
    if isinstance(weights, TrainingWeights):
        w = weights.values
    elif weights is None:
        w = np.ones(X.shape[0])
    else:
        w = np.asarray(weights, dtype=np.float64)
    if w.shape[0] != X.shape[0] or np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be positive, finite, one per row")

    n, k = X.shape
    xb = np.empty((n, k + 1))
    xb[:, 0] = 1.0
    xb[:, 1:] = X
    beta = np.zeros(k + 1)
    pen_mask = np.ones(k + 1)
    pen_mask[0] = 0.0

    inv_n = 1.0 / n
    eta = xb @ beta
    loss = _nll(eta, y, w, beta, l2)
    loss_path = [loss]
    converged = False
    steps = 0
    for _ in range(max_iter):
        p = expit(eta)
        grad = xb.T @ (w * (p - y)) * inv_n + l2 * pen_mask * beta
        if np.max(np.abs(grad)) <= tol:
            converged = True
            break
        wdiag = w * p * (1.0 - p)
        hess = (xb * wdiag[:, None]).T @ xb * inv_n
        hess[np.diag_indices_from(hess)] += l2 * pen_mask
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        improved = False
        t = 1.0
        for _ in range(60):
            cand = beta - t * step
            cand_eta = xb @ cand
            cand_loss = _nll(cand_eta, y, w, cand, l2)
            if cand_loss <= loss:
                improved = True
                break
            t *= 0.5
        if not improved:
            break  # stalled at numeric precision
        beta, eta, loss = cand, cand_eta, cand_loss
        steps += 1
        loss_path.append(loss)
    if not converged:
        p = expit(eta)
        grad = xb.T @ (w * (p - y)) * inv_n + l2 * pen_mask * beta
        converged = bool(np.max(np.abs(grad)) <= tol)
    it = steps

    names = tuple(column_names) if column_names is not None else (
        encoding.column_names() if encoding is not None
        else tuple(f"x{j}" for j in range(k)))
    if len(names) != k:
        raise ValueError("column_names length mismatch")
    return HazardModel(beta=beta, column_names=names, l2=float(l2),
                       converged=converged, n_iter=it,
                       loss_path=tuple(loss_path), encoding=encoding,
                       variant=variant)


# open-interval bounds: predictions never round to exactly 0 or 1, so the
# complement of any probability stays representable
_P_LO = float(np.nextafter(0.0, 1.0))
_P_HI = float(np.nextafter(1.0, 0.0))


def predict_design(model: HazardModel, design: np.ndarray) -> np.ndarray:
    """Probabilities for pre-encoded rows, strictly inside (0, 1)."""
    X = np.asarray(design, dtype=np.float64)
    return np.clip(expit(model.beta[0] + X @ model.beta[1:]), _P_LO, _P_HI)


def linear_predictor(model: HazardModel, samples: LandmarkDataset) -> np.ndarray:
    if model.encoding is None:
        raise ValueError("model has no encoding; use predict_design")
    X, _ = encode(samples, model.encoding)
    return model.beta[0] + X @ model.beta[1:]


def predict(model: HazardModel, samples: LandmarkDataset) -> np.ndarray:
    """Raw default probabilities for landmark samples, strictly inside (0, 1)."""
    return np.clip(expit(linear_predictor(model, samples)), _P_LO, _P_HI)


# ---------------------------------------------------------------------------
# Ablation variants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VariantSpec:
    name: str
    include_marker: bool
    include_landmark_onehot: bool
    weighting: str   # uniform | time-decay | importance
    calibrated: bool


_VARIANTS: dict[str, VariantSpec] = {
    "M1": VariantSpec("M1", False, False, "uniform", False),
    "M1-Joint": VariantSpec("M1-Joint", True, False, "uniform", False),
    "M1-LM": VariantSpec("M1-LM", True, True, "uniform", False),
    "M1-TD": VariantSpec("M1-TD", True, False, "time-decay", False),
    "M1-IW": VariantSpec("M1-IW", True, False, "importance", False),
    "M1-LMISO-base": VariantSpec("M1-LMISO-base", True, True, "uniform", False),
    "M1-LMISO": VariantSpec("M1-LMISO", True, True, "uniform", True),
}


def variant_spec(name: str) -> VariantSpec:
    try:
        return _VARIANTS[name]
    except KeyError:
        raise ConfigError(
            f"unknown variant {name!r}; expected one of {sorted(_VARIANTS)}")


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters shared by all variants.

    ``class_weight="balanced"`` equalizes the classes' total training
    weight (on top of the variant's own scheme); the default is no class
    weighting, leaving probability-scale correction to calibration.
    """

    l2: float = DEFAULT_L2
    td_half_life: float = 12.0
    iw_clip: tuple[float, float] = (0.1, 10.0)
    class_weight: str = "none"  # none | balanced
    numeric_features: tuple[str, ...] | None = None
    categorical_features: tuple[str, ...] | None = None


def make_variant(dataset: LandmarkDataset, variant: str,
                 config: TrainingConfig = TrainingConfig(),
                 eval_samples: LandmarkDataset | None = None) -> HazardModel:
    """Fit one ablation variant on a training dataset.

    ``eval_samples`` supplies the (unlabeled) evaluation rows needed by the
    importance-weighting variant's domain classifier.
    """
    vs = variant_spec(variant)
    spec = fit_encoding(dataset,
                        include_marker=vs.include_marker,
                        include_landmark_onehot=vs.include_landmark_onehot,
                        numeric_features=config.numeric_features,
                        categorical_features=config.categorical_features)
    X, y = encode(dataset, spec)
    if vs.weighting == "time-decay":
        weights: TrainingWeights | None = time_decay_weights(
            dataset, config.td_half_life)
    elif vs.weighting == "importance":
        if eval_samples is None:
            raise ConfigError(f"variant {variant!r} needs eval_samples")
        X_eval, _ = encode(eval_samples, spec)
        weights = importance_weights(X, X_eval, clip=config.iw_clip)
    else:
        weights = None
    if config.class_weight == "balanced":
        w = weights.values if weights is not None else np.ones(y.shape[0])
        w = w * class_balance_weights(y)
        weights = TrainingWeights(values=w / w.mean(),
                                  scheme=weights.scheme if weights else "uniform")
    elif config.class_weight != "none":
        raise ConfigError(f"unknown class_weight {config.class_weight!r}")
    return fit_hazard(X, y, weights=weights, l2=config.l2,
                      encoding=spec, variant=vs.name)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_FORMAT = "driftsurv-hazard-model"
_VERSION = 1


def model_to_dict(model: HazardModel, calibration=None) -> dict:
    enc = None
    if model.encoding is not None:
        e = model.encoding
        enc = {
            "numeric": [{"name": s.name, "mean": s.mean, "sd": s.sd,
                         "missing_indicator": s.missing_indicator}
                        for s in e.numeric],
            "categorical": [{"name": c.name, "levels": list(c.levels)}
                            for c in e.categorical],
            "include_marker": e.include_marker,
            "marker_missing_indicator": e.marker_missing_indicator,
            "include_landmark_onehot": e.include_landmark_onehot,
            "landmark_levels": list(e.landmark_levels),
        }
    doc = {
        "format": _FORMAT,
        "version": _VERSION,
        "variant": model.variant,
        "l2": model.l2,
        "converged": model.converged,
        "n_iter": model.n_iter,
        "loss_path": list(model.loss_path),
        "beta": [float(b) for b in model.beta],
        "columns": list(model.column_names),
        "encoding": enc,
    }
    if calibration is not None:
        doc["calibration"] = {
            "boundaries": [float(b) for b in calibration.boundaries],
            "values": [float(v) for v in calibration.values],
            "n_fit": calibration.n_fit,
        }
    return doc


def model_from_dict(doc: Mapping) -> tuple[HazardModel, "object | None"]:
    if doc.get("format") != _FORMAT:
        raise DataError("not a hazard model document")
    if doc.get("version") != _VERSION:
        raise DataError(f"unsupported model version {doc.get('version')}")
    enc = None
    if doc.get("encoding") is not None:
        e = doc["encoding"]
        enc = FeatureEncodingSpec(
            numeric=tuple(NumericStat(s["name"], s["mean"], s["sd"],
                                      s["missing_indicator"])
                          for s in e["numeric"]),
            categorical=tuple(CategoryMap(c["name"], tuple(c["levels"]))
                              for c in e["categorical"]),
            include_marker=e["include_marker"],
            marker_missing_indicator=e["marker_missing_indicator"],
            include_landmark_onehot=e["include_landmark_onehot"],
            landmark_levels=tuple(int(v) for v in e["landmark_levels"]),
        )
    model = HazardModel(
        beta=np.asarray(doc["beta"], dtype=np.float64),
        column_names=tuple(doc["columns"]),
        l2=float(doc["l2"]),
        converged=bool(doc["converged"]),
        n_iter=int(doc["n_iter"]),
        loss_path=tuple(float(v) for v in doc["loss_path"]),
        encoding=enc,
        variant=doc.get("variant"),
    )
    cal = None
    if doc.get("calibration") is not None:
        from driftsurv.calibration import IsotonicMap
        c = doc["calibration"]
        cal = IsotonicMap(boundaries=np.asarray(c["boundaries"]),
                          values=np.asarray(c["values"]),
                          n_fit=int(c["n_fit"]))
    return model, cal


def save_model(model: HazardModel, path: str | Path, calibration=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, calibration), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path: str | Path) -> tuple[HazardModel, "object | None"]:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def models_equal(a: HazardModel, b: HazardModel) -> bool:
    return (np.array_equal(a.beta, b.beta)
            and a.column_names == b.column_names
            and a.l2 == b.l2 and a.converged == b.converged
            and a.n_iter == b.n_iter and a.loss_path == b.loss_path
            and a.encoding == b.encoding and a.variant == b.variant)
