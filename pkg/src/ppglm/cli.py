"""Command-line front end: fit, infer, simulate, and compare workflows.

Configuration comes from an optional flat ``key = value`` file plus
command-line overrides; every effective setting is echoed into the JSON
report for provenance. Exit codes: 0 success, 2 configuration error,
3 data error, 4 empty selected model, 5 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import (
    ConfigError,
    DataValidationError,
    EmptyModelError,
    NumericError,
    PpglmError,
)
from .glm_core import Dataset, Family, fit_mle, validate_response
from .pipeline import run_inference
from .sim_harness import Scenario, run_replications

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_EMPTY = 4
EXIT_NUMERIC = 5

METHOD_SETS = {
    "ppl": ("ppl",),
    "polyhedral": ("ppl", "polyhedral"),
    "naive": ("naive",),
    "all": ("ppl", "polyhedral", "naive"),
}


def _parse_family(text: str) -> Family:
    try:
        return Family(text.lower())
    except ValueError:
        raise ConfigError(
            f"unknown family {text!r}; expected logistic, poisson, or beta"
        ) from None


def ingest_csv(path, response: str, family: Family, one_hot=()):
    """Load a rectangular CSV with header into a validated Dataset.

    Columns named in ``one_hot`` are expanded into reference-level indicator
    columns; all remaining columns must be numeric and complete. Returns
    ``(dataset, covariate_names)``.
    """
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise DataValidationError(f"no such file: {path}") from None
    except Exception as err:
        raise DataValidationError(f"cannot parse CSV: {err}") from None
    if response not in frame.columns:
        raise DataValidationError(f"response column {response!r} not in header")
    if frame.isna().any().any():
        col = frame.columns[frame.isna().any().to_numpy()][0]
        row = int(frame[frame[col].isna()].index[0])
        raise DataValidationError(f"missing value in column {col!r} at row {row}")
    y = frame[response]
    covs = frame.drop(columns=[response])
    one_hot = [c for c in one_hot if c]
    missing = set(one_hot) - set(covs.columns)
    if missing:
        raise DataValidationError(f"one-hot columns not found: {sorted(missing)}")
    if one_hot:
        covs = pd.get_dummies(covs, columns=one_hot, drop_first=True, dtype=float)
    non_numeric = [c for c in covs.columns if not np.issubdtype(covs[c].dtype, np.number)]
    if non_numeric:
        raise DataValidationError(
            f"non-numeric columns {non_numeric}; encode them or pass --one-hot"
        )
    try:
        y_arr = y.to_numpy(dtype=float)
    except (TypeError, ValueError):
        raise DataValidationError(f"response column {response!r} is not numeric") from None
    validate_response(family, y_arr)
    data = Dataset(covs.to_numpy(dtype=float), y_arr)
    return data, list(covs.columns)


def _read_config_file(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _floats(text: str):
    return tuple(float(x) for x in text.replace(",", " ").split())


def _ints(text: str):
    return tuple(int(x) for x in text.replace(",", " ").split())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ppglm",
        description="Post-selection inference for GLM coefficients after "
                    "Lasso selection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_data_args(p):
        p.add_argument("data", help="CSV file with header row")
        p.add_argument("--response", required=True, help="response column name")
        p.add_argument("--family", required=True,
                       help="logistic | poisson | beta")
        p.add_argument("--one-hot", default="",
                       help="comma-separated categorical columns to expand")

    p_fit = sub.add_parser("fit", help="maximum-likelihood fit, no selection")
    add_data_args(p_fit)
    p_fit.add_argument("--out", help="output prefix (writes <out>.json)")

    p_inf = sub.add_parser("infer", help="post-selection inference")
    add_data_args(p_inf)
    p_inf.add_argument("--config", help="flat key = value settings file")
    p_inf.add_argument("--lambda", dest="lam", type=float,
                       help="penalty for fixed mode")
    p_inf.add_argument("--lambda-grid", default=None,
                       help="lo,hi,k candidate grid (log-spaced)")
    p_inf.add_argument("--lambda-mode", choices=("fixed", "datadriven"),
                       default=None)
    p_inf.add_argument("--alpha", type=float, default=None)
    p_inf.add_argument("--seed", type=int, default=None)
    p_inf.add_argument("--split-frac", type=float, default=None)
    p_inf.add_argument("--method", choices=sorted(METHOD_SETS), default=None)
    p_inf.add_argument("--out", help="output prefix (writes <out>.json and <out>.csv)")

    p_sim = sub.add_parser("simulate", help="Monte Carlo study from a scenario file")
    p_sim.add_argument("scenario", help="flat key = value scenario file")
    p_sim.add_argument("--out", required=True,
                       help="output directory for summary.csv and coefficients.csv")
    p_sim.add_argument("--workers", type=int, default=None,
                       help="worker processes (default: PPGLM_WORKERS or 1)")

    p_cmp = sub.add_parser("compare", help="side-by-side methods on one dataset")
    add_data_args(p_cmp)
    p_cmp.add_argument("--config", help="flat key = value settings file")
    p_cmp.add_argument("--lambda", dest="lam", type=float)
    p_cmp.add_argument("--lambda-grid", default=None)
    p_cmp.add_argument("--lambda-mode", choices=("fixed", "datadriven"), default=None)
    p_cmp.add_argument("--alpha", type=float, default=None)
    p_cmp.add_argument("--seed", type=int, default=None)
    p_cmp.add_argument("--split-frac", type=float, default=None)
    p_cmp.add_argument("--out", help="output prefix")
    return parser


_DEFAULTS = dict(
    lambda_mode="datadriven",
    alpha=0.05,
    seed=0,
    split_frac=0.7,
    method="ppl",
    lambda_grid=None,
    lam=None,
)


def _settings(args) -> dict:
    """Merge defaults, config file, and command-line overrides."""
    cfg = dict(_DEFAULTS)
    file_cfg = {}
    if getattr(args, "config", None):
        file_cfg = _read_config_file(args.config)
    casts = dict(
        lambda_mode=str, alpha=float, seed=int, split_frac=float,
        method=str, lam=float,
    )
    for key, cast in casts.items():
        file_key = {"lam": "lambda"}.get(key, key)
        if file_key in file_cfg:
            try:
                cfg[key] = cast(file_cfg[file_key])
            except ValueError:
                raise ConfigError(f"bad value for {file_key!r} in config file") from None
        if getattr(args, key, None) is not None:
            cfg[key] = getattr(args, key)
    grid_text = file_cfg.get("lambda_grid")
    if getattr(args, "lambda_grid", None):
        grid_text = args.lambda_grid
    if grid_text:
        try:
            lo, hi, k = _floats(grid_text)
        except ValueError:
            raise ConfigError("--lambda-grid expects lo,hi,k") from None
        from .sim_harness import lambda_grid as make_grid

        cfg["lambda_grid"] = tuple(make_grid(lo, hi, int(k)))
    if cfg["lambda_mode"] == "fixed" and cfg["lam"] is None:
        raise ConfigError("fixed lambda mode needs --lambda")
    if cfg["lambda_mode"] == "datadriven" and cfg["lambda_grid"] is None:
        raise ConfigError("data-driven lambda mode needs --lambda-grid lo,hi,k")
    if cfg["method"] not in METHOD_SETS:
        raise ConfigError(f"unknown method {cfg['method']!r}")
    if not 0.0 < cfg["alpha"] <= 0.5:
        raise ConfigError("alpha must lie in (0, 1/2]")
    return cfg


def _write_report(report, out_prefix):
    text = report.to_json()
    if out_prefix:
        Path(f"{out_prefix}.json").write_text(text + "\n")
        Path(f"{out_prefix}.csv").write_text(report.to_csv())
    else:
        print(text)


def cmd_fit(args) -> int:
    family = _parse_family(args.family)
    data, names = ingest_csv(args.data, args.response, family,
                             args.one_hot.split(","))
    fit = fit_mle(data, family)
    out = {
        "family": family.value,
        "n": data.n,
        "p": data.p,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "ridge_used": fit.ridge_used,
        "phi": fit.phi,
        "intercept": fit.beta0,
        "coefficients": {name: float(b) for name, b in zip(names, fit.beta)},
    }
    text = json.dumps(out, indent=2, sort_keys=True)
    if args.out:
        Path(f"{args.out}.json").write_text(text + "\n")
    else:
        print(text)
    return 0


def _run_infer(args, methods=None) -> int:
    family = _parse_family(args.family)
    cfg = _settings(args)
    if methods is None:
        methods = METHOD_SETS[cfg["method"]]
    data, names = ingest_csv(args.data, args.response, family,
                             args.one_hot.split(","))
    report = run_inference(
        data,
        family,
        lam=cfg["lam"],
        lambda_mode=cfg["lambda_mode"],
        lambda_grid=cfg["lambda_grid"],
        alpha=cfg["alpha"],
        methods=methods,
        seed=cfg["seed"],
        split_frac=cfg["split_frac"],
        names=names,
    )
    report.config = {
        k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.items()
    }
    report.config["methods"] = list(methods)
    _write_report(report, args.out)
    return 0


def cmd_infer(args) -> int:
    return _run_infer(args)


def cmd_compare(args) -> int:
    return _run_infer(args, METHOD_SETS["all"])


_SCENARIO_KEYS = dict(
    family=str, n=int, p=int, beta0=float, support=_ints, beta=_floats,
    lambda_mode=str, lambda_grid=_floats, lambdas=_floats, split_frac=float,
    replicates=int, seed=int, phi=float, alpha=float, track=_ints,
    methods=str, workers=int,
)


def load_scenario(path):
    """Build a Scenario (plus methods/workers) from a flat settings file."""
    raw = _read_config_file(path)
    unknown = set(raw) - set(_SCENARIO_KEYS)
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    if "family" not in raw:
        raise ConfigError("scenario file must set family")
    parsed = {}
    for key, cast in _SCENARIO_KEYS.items():
        if key in raw:
            try:
                parsed[key] = cast(raw[key])
            except ValueError:
                raise ConfigError(f"bad value for {key!r} in scenario file") from None
    family = _parse_family(parsed.pop("family"))
    methods = tuple(
        m.strip() for m in parsed.pop("methods", "ppl,naive").split(",") if m.strip()
    )
    workers = parsed.pop("workers", None)
    kwargs = dict(family=family)
    for key, value in parsed.items():
        if key == "beta":
            kwargs["beta_values"] = value
        elif key == "lambda_grid":
            if len(value) != 3:
                raise ConfigError("lambda_grid expects lo,hi,k")
            kwargs["lambda_lo"], kwargs["lambda_hi"] = value[0], value[1]
            kwargs["lambda_count"] = int(value[2])
        else:
            kwargs[key] = value
    try:
        scenario = Scenario(**kwargs)
    except TypeError as err:
        raise ConfigError(str(err)) from None
    return scenario, methods, workers


def cmd_simulate(args) -> int:
    scenario, methods, workers = load_scenario(args.scenario)
    if args.workers is not None:
        workers = args.workers
    for m in methods:
        if m not in ("ppl", "polyhedral", "naive"):
            raise ConfigError(f"unknown method {m!r} in scenario")
    if scenario.family is Family.BETA:
        print(f"note: beta responses generated with precision phi = {scenario.phi}",
              file=sys.stderr)
    table = run_replications(scenario, methods=methods, track=scenario.track,
                             workers=workers)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary.csv").write_text(table.to_csv())
    (out_dir / "coefficients.csv").write_text(table.coef_csv())
    echo = {
        "scenario": {k: (list(v) if isinstance(v, tuple) else
                         v.value if isinstance(v, Family) else v)
                     for k, v in vars(scenario).items()},
        "methods": list(methods),
        "errors": table.error_count,
    }
    (out_dir / "run.json").write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out_dir / 'summary.csv'} and {out_dir / 'coefficients.csv'}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = dict(fit=cmd_fit, infer=cmd_infer, simulate=cmd_simulate,
                    compare=cmd_compare)
    try:
        return handlers[args.command](args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DataValidationError as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except EmptyModelError:
        print("no covariates selected", file=sys.stderr)
        return EXIT_EMPTY
    except (NumericError, PpglmError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
