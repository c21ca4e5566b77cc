"""Command-line interface.

Subcommands: ingest, synth, simulate, drift-report, run. Every command is
deterministic given its config and seeds; all experiment state lives on
disk. Exit codes: 0 success, 1 usage/config error, 2 data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from driftsurv import __version__
from driftsurv.data_model import (FileSchema, ORIGINATION_SCHEMA,
                                  PERFORMANCE_SCHEMA, SyntheticConfig,
                                  generate_synthetic_portfolio, join_panel,
                                  parse_origination, parse_performance,
                                  read_panel, write_panel)
from driftsurv.drift import (DRIFT_KINDS, CATEGORICAL_DRIFT_VARS, DriftConfig,
                             NUMERIC_DRIFT_VARS, apply_covariate_drift,
                             apply_label_drift, severity_report,
                             write_severity_csv, write_severity_json)
from driftsurv.errors import ConfigError, DataError, NumericError
from driftsurv.evaluation import EvalConfig, run_experiment

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

DEFAULT_VARIANTS = ("M1", "M1-Joint", "M1-LM", "M1-TD", "M1-IW", "M1-LMISO")
DEFAULT_SCENARIOS = ("sudden", "incremental", "recurring")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are 1
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="driftsurv",
                     description="Landmark-based default prediction under "
                                 "data drift: simulate, diagnose, evaluate.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[], help="parse and join raw files "
                       "into a canonical panel")
    p.add_argument("--orig", required=True, help="origination file")
    p.add_argument("--perf", required=True, help="monthly performance file")
    p.add_argument("--orig-schema", help="JSON column-mapping for --orig")
    p.add_argument("--perf-schema", help="JSON column-mapping for --perf")
    p.add_argument("--out", required=True, help="output panel file")
    p.add_argument("--report", help="where to write the JSON join report")

    p = sub.add_parser("synth", help="generate a synthetic panel")
    p.add_argument("--config", help="JSON of generator parameters")
    p.add_argument("--n-loans", type=int, help="override n_loans")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="apply one drift scenario to a panel")
    p.add_argument("--kind", required=True, choices=DRIFT_KINDS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("drift-report", help="drift-severity distribution")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--vars", required=True,
                   help="comma-separated variable list")
    p.add_argument("--reference", help="undrifted panel giving the "
                   "normalization scale")
    p.add_argument("--out", required=True, help="JSON output (a CSV with "
                   "the same stem is written next to it)")

    p = sub.add_parser("run", help="run a full experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the config's output_dir")
    p.add_argument("--jobs", type=int, help="worker pool size")
    return parser


# ---------------------------------------------------------------------------
# Experiment config
# ---------------------------------------------------------------------------

_MODEL_KEYS = {"l2", "ridge_lambda", "td_half_life", "iw_clip", "class_weight",
               "f1_threshold", "calibration_fraction", "calibration_seed"}
_LANDMARK_KEYS = {"start", "step", "horizon", "min_risk"}
_CV_KEYS = {"k", "seed"}
_TOP_KEYS = {"data", "scenarios", "drift", "variants", "landmarks", "cv",
             "model", "output_dir"}


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def load_experiment_config(path: str | Path) -> dict:
    """Load, validate and default-fill an experiment config document."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("experiment config must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS, "config")

    data = raw.get("data")
    if not isinstance(data, dict) or len(data) != 1 or \
            next(iter(data)) not in ("synthetic", "panel", "files"):
        raise ConfigError("config.data must be exactly one of "
                          "{'synthetic': {...}} | {'panel': path} | "
                          "{'files': {...}}")
    source_kind = next(iter(data))
    if source_kind == "synthetic":
        synth = dict(data["synthetic"])
        fields = {f.name for f in dataclasses.fields(SyntheticConfig)}
        _reject_unknown(synth, fields | {"seed"}, "data.synthetic")
        synth.setdefault("seed", 0)
        data = {"synthetic": synth}
    elif source_kind == "files":
        files = dict(data["files"])
        _reject_unknown(files, {"orig", "perf", "orig_schema", "perf_schema"},
                        "data.files")
        if "orig" not in files or "perf" not in files:
            raise ConfigError("data.files needs 'orig' and 'perf'")
        data = {"files": files}

    scenarios = raw.get("scenarios", list(DEFAULT_SCENARIOS))
    if not scenarios or not all(s in DRIFT_KINDS for s in scenarios):
        raise ConfigError(f"scenarios must be drawn from {DRIFT_KINDS}")
    if len(set(scenarios)) != len(scenarios):
        raise ConfigError("duplicate scenario names")

    drift = dict(raw.get("drift", {}))
    drift_fields = {f.name for f in dataclasses.fields(DriftConfig)} - {"kind"}
    _reject_unknown(drift, drift_fields, "drift")
    drift.setdefault("seed", 0)

    variants = raw.get("variants", list(DEFAULT_VARIANTS))
    landmarks = dict(raw.get("landmarks", {}))
    _reject_unknown(landmarks, _LANDMARK_KEYS, "landmarks")
    cv = dict(raw.get("cv", {}))
    _reject_unknown(cv, _CV_KEYS, "cv")
    model = dict(raw.get("model", {}))
    _reject_unknown(model, _MODEL_KEYS, "model")

    return {
        "data": data,
        "scenarios": list(scenarios),
        "drift": drift,
        "variants": list(variants),
        "landmarks": {"start": landmarks.get("start", 12),
                      "step": landmarks.get("step", 3),
                      "horizon": landmarks.get("horizon", 12),
                      "min_risk": landmarks.get("min_risk", 100)},
        "cv": {"k": cv.get("k", 5), "seed": cv.get("seed", 42)},
        "model": {"l2": model.get("l2", 1e-4),
                  "ridge_lambda": model.get("ridge_lambda", 1e-6),
                  "td_half_life": model.get("td_half_life", 12.0),
                  "iw_clip": list(model.get("iw_clip", [0.1, 10.0])),
                  "class_weight": model.get("class_weight", "none"),
                  "f1_threshold": model.get("f1_threshold", 0.5),
                  "calibration_fraction": model.get("calibration_fraction", 0.2),
                  "calibration_seed": model.get("calibration_seed", 7)},
        "output_dir": raw.get("output_dir", "driftsurv-out"),
    }


def _panel_from_config(cfg: dict):
    data = cfg["data"]
    if "synthetic" in data:
        synth = dict(data["synthetic"])
        seed = synth.pop("seed")
        tupled = {k: tuple(v) if isinstance(v, list) else v
                  for k, v in synth.items()}
        return generate_synthetic_portfolio(SyntheticConfig(**tupled), seed), {
            "source": "synthetic", "seed": seed}
    if "panel" in data:
        return read_panel(data["panel"]), {"source": "panel",
                                           "path": str(data["panel"])}
    files = data["files"]
    oschema = (FileSchema.from_json(files["orig_schema"])
               if files.get("orig_schema") else ORIGINATION_SCHEMA)
    pschema = (FileSchema.from_json(files["perf_schema"])
               if files.get("perf_schema") else PERFORMANCE_SCHEMA)
    panel, report = join_panel(parse_origination(files["orig"], oschema),
                               parse_performance(files["perf"], pschema))
    return panel, {"source": "files", "orig": files["orig"],
                   "perf": files["perf"], "join_report": report.to_dict()}


# ---------------------------------------------------------------------------
# Command handlers
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    for path in (args.orig, args.perf):
        if not Path(path).exists():
            raise DataError(f"input file not found: {path}")
    oschema = (FileSchema.from_json(args.orig_schema) if args.orig_schema
               else ORIGINATION_SCHEMA)
    pschema = (FileSchema.from_json(args.perf_schema) if args.perf_schema
               else PERFORMANCE_SCHEMA)
    origs = parse_origination(args.orig, oschema)
    perfs = parse_performance(args.perf, pschema)
    if not origs and not perfs:
        print("warning: both inputs are empty", file=sys.stderr)
    panel, report = join_panel(origs, perfs)
    write_panel(panel, args.out)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(f"wrote {panel.n_loans} loans / {panel.n_rows} rows to {args.out} "
          f"(dropped {report.orig_dropped} originations, "
          f"{report.perf_rows_dropped} perf rows)")
    return EXIT_OK


def cmd_synth(args) -> int:
    params: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            params = json.load(fh)
        fields = {f.name for f in dataclasses.fields(SyntheticConfig)}
        _reject_unknown(params, fields, "generator config")
        params = {k: tuple(v) if isinstance(v, list) else v
                  for k, v in params.items()}
    if args.n_loans is not None:
        params["n_loans"] = args.n_loans
    panel = generate_synthetic_portfolio(SyntheticConfig(**params), args.seed)
    write_panel(panel, args.out)
    print(f"wrote {panel.n_loans} loans / {panel.n_rows} rows to {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if not Path(args.input).exists():
        raise DataError(f"input file not found: {args.input}")
    panel = read_panel(args.input)
    cfg = DriftConfig(kind=args.kind, seed=args.seed)
    panel = apply_covariate_drift(panel, cfg)
    panel = apply_label_drift(panel, cfg)
    write_panel(panel, args.out)
    print(f"wrote {args.kind}-drifted panel to {args.out} "
          f"(provenance: {','.join(panel.provenance) or 'none'})")
    return EXIT_OK


def cmd_drift_report(args) -> int:
    if not Path(args.input).exists():
        raise DataError(f"input file not found: {args.input}")
    panel = read_panel(args.input)
    reference = read_panel(args.reference) if args.reference else None
    variables = [v.strip() for v in args.vars.split(",") if v.strip()]
    if not variables:
        raise ConfigError("--vars must name at least one variable; known: "
                          f"{NUMERIC_DRIFT_VARS + CATEGORICAL_DRIFT_VARS}")
    report = severity_report(panel, variables, reference=reference)
    out = Path(args.out)
    write_severity_json(report, out)
    write_severity_csv(report, out.with_suffix(".csv"))
    print(f"wrote severity report to {out} and {out.with_suffix('.csv')}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_experiment_config(args.config)
    if args.out:
        cfg["output_dir"] = args.out
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "tables").mkdir(exist_ok=True)

    panel, provenance = _panel_from_config(cfg)
    scenarios = [DriftConfig(kind=name, **cfg["drift"])
                 for name in cfg["scenarios"]]
    eval_cfg = EvalConfig(
        landmark_start=cfg["landmarks"]["start"],
        landmark_step=cfg["landmarks"]["step"],
        horizon=cfg["landmarks"]["horizon"],
        min_risk=cfg["landmarks"]["min_risk"],
        k_folds=cfg["cv"]["k"],
        cv_seed=cfg["cv"]["seed"],
        ridge_lambda=cfg["model"]["ridge_lambda"],
        l2=cfg["model"]["l2"],
        td_half_life=cfg["model"]["td_half_life"],
        iw_clip=tuple(cfg["model"]["iw_clip"]),
        class_weight=cfg["model"]["class_weight"],
        f1_threshold=cfg["model"]["f1_threshold"],
        calibration_fraction=cfg["model"]["calibration_fraction"],
        calibration_seed=cfg["model"]["calibration_seed"],
        jobs=args.jobs,
    )
    report = run_experiment(panel, scenarios, cfg["variants"], config=eval_cfg)

    with open(out_dir / "config.json", "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "panel_provenance.json", "w", encoding="utf-8") as fh:
        json.dump({"input": provenance,
                   "panel_provenance": [],
                   "n_loans": panel.n_loans,
                   "observation_span": panel.observation_span},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    for scenario in report.scenarios:
        with open(out_dir / "tables" / f"{scenario}.txt", "w",
                  encoding="utf-8") as fh:
            fh.write(report.table_text(scenario))
    report.write_csv(out_dir / "metrics.csv")
    print(f"experiment complete: {len(report.rows)} cells -> {out_dir}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {
            "ingest": cmd_ingest,
            "synth": cmd_synth,
            "simulate": cmd_simulate,
            "drift-report": cmd_drift_report,
            "run": cmd_run,
        }[args.command]
        return handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
