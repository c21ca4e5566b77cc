"""driftsurv: landmark-based dynamic default prediction under data drift.

A library and CLI for loan-level survival prediction that combines a
balance-deviation behavioural marker, discrete-time logistic hazards with
landmark one-hot baselines, isotonic probability calibration, parametric
drift simulators with feasibility constraints, drift-severity diagnostics
and a grouped cross-validation evaluation harness.
"""

__version__ = "0.1.0"

from driftsurv.calibration import IsotonicMap, apply_isotonic, fit_isotonic
from driftsurv.data_model import (LoanOrigination, LoanPanel,
                                  PerformanceRecord, SyntheticConfig,
                                  generate_synthetic_portfolio, join_panel,
                                  parse_origination, parse_performance,
                                  read_panel, write_panel)
from driftsurv.drift import DriftConfig, apply_covariate_drift, apply_label_drift
from driftsurv.evaluation import EvalConfig, auc, brier, f1, grouped_kfold, run_experiment
from driftsurv.hazard import (HazardModel, TrainingConfig, fit_hazard,
                              make_variant, predict)
from driftsurv.landmarking import (LandmarkDataset, build_landmark_dataset,
                                   landmark_grid)
from driftsurv.longitudinal import (TrajectoryFit, balance_deviation,
                                    evaluate_marker, fit_trajectory,
                                    scheduled_balance)

__all__ = [
    "__version__",
    "IsotonicMap", "apply_isotonic", "fit_isotonic",
    "LoanOrigination", "LoanPanel", "PerformanceRecord", "SyntheticConfig",
    "generate_synthetic_portfolio", "join_panel", "parse_origination",
    "parse_performance", "read_panel", "write_panel",
    "DriftConfig", "apply_covariate_drift", "apply_label_drift",
    "EvalConfig", "auc", "brier", "f1", "grouped_kfold", "run_experiment",
    "HazardModel", "TrainingConfig", "fit_hazard", "make_variant", "predict",
    "LandmarkDataset", "build_landmark_dataset", "landmark_grid",
    "TrajectoryFit", "balance_deviation", "evaluate_marker",
    "fit_trajectory", "scheduled_balance",
]
