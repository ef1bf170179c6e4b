"""Scenario generation and the Monte Carlo replication driver.

A scenario pins the family, dimensions, true coefficients, penalty
schedule, and seed; every replicate draws its own covariates and responses
from counter-based streams keyed by ``(seed, replicate, stream)``, so runs
are reproducible replicate by replicate and safe to farm out to worker
processes. The driver aggregates the error metric (among selected
coefficients with zero true value, the fraction whose interval excludes
zero), model sizes, and per-coefficient interval statistics against the
projection targets of the linearized model.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .exceptions import ConfigError, EmptyModelError, PpglmError
from .glm_core import Dataset, Family, center, fit_mle, linearize, weighted_design
from .pipeline import analyze_linearized, make_split
from .parametric_path import select_lambda

__all__ = [
    "Scenario",
    "reference_scenario",
    "generate_dataset",
    "lambda_grid",
    "type_i_error",
    "run_replications",
    "SummaryTable",
]

WORKERS_ENV = "PPGLM_WORKERS"

# Standard scenario constants: n=500, p=20, intercept -2, support {1,2,3}
# (1-based), with family-specific signal vectors and penalty ranges chosen
# to sweep a wide spread of selected-model sizes.
_REFERENCE = {
    Family.LOGISTIC: dict(beta_values=(2.0, 2.0, 1.0), lambda_lo=2.0, lambda_hi=12.0),
    Family.POISSON: dict(beta_values=(1.0, 1.0, -1.0), lambda_lo=8.0, lambda_hi=56.0),
    Family.BETA: dict(beta_values=(1.0, -0.5, 0.5), lambda_lo=2.0, lambda_hi=10.0),
}


@dataclass(frozen=True)
class Scenario:
    """Simulation design. ``support`` uses 1-based coefficient indices."""

    family: Family
    n: int = 500
    p: int = 20
    beta0: float = -2.0
    support: tuple = (1, 2, 3)
    beta_values: tuple = (2.0, 2.0, 1.0)
    lambda_mode: str = "fixed"          # "fixed" | "datadriven"
    lambda_lo: float = 2.0
    lambda_hi: float = 12.0
    lambda_count: int = 20
    lambdas: tuple | None = None        # explicit grid overrides lo/hi/count
    split_frac: float = 0.7
    replicates: int = 100
    seed: int = 0
    phi: float = 10.0                   # beta-regression precision for data generation
    alpha: float = 0.05
    track: tuple | None = None          # 1-based indices to collect CI stats for

    def __post_init__(self):
        if len(self.support) != len(self.beta_values):
            raise ConfigError("support and beta_values must have equal length")
        if any(not 1 <= j <= self.p for j in self.support):
            raise ConfigError("support indices must lie in 1..p")
        if self.lambda_mode not in ("fixed", "datadriven"):
            raise ConfigError(f"unknown lambda mode {self.lambda_mode!r}")

    @property
    def beta(self) -> np.ndarray:
        b = np.zeros(self.p)
        for j, v in zip(self.support, self.beta_values):
            b[j - 1] = v
        return b

    def grid(self) -> np.ndarray:
        if self.lambdas is not None:
            return np.asarray(self.lambdas, dtype=float)
        if self.lambda_lo == self.lambda_hi:
            return np.array([float(self.lambda_lo)])
        return lambda_grid(self.lambda_lo, self.lambda_hi, self.lambda_count)


def reference_scenario(family: Family, **overrides) -> Scenario:
    """The standard design for one family, with keyword overrides."""
    base = dict(_REFERENCE[family])
    base.update(overrides)
    return Scenario(family=family, **base)


def lambda_grid(lo: float, hi: float, k: int) -> np.ndarray:
    """``k`` penalty values equally spaced on the log scale, ends included."""
    if not 0 < lo < hi:
        raise ConfigError("need 0 < lo < hi for the penalty grid")
    if k < 2:
        raise ConfigError("need at least two grid points")
    g = np.exp(np.linspace(np.log(lo), np.log(hi), int(k)))
    g[0], g[-1] = lo, hi
    return g


def _stream(seed: int, rep_index: int, which: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence([seed, rep_index, which]))
    )


def generate_dataset(s: Scenario, rep_index: int) -> Dataset:
    """Deterministic draw of one replicate: standard normal covariates and
    family responses at ``eta = beta0 + X beta``."""
    rng_x = _stream(s.seed, rep_index, 0)
    rng_y = _stream(s.seed, rep_index, 1)
    X = rng_x.standard_normal((s.n, s.p))
    eta = s.beta0 + X @ s.beta
    if s.family is Family.LOGISTIC:
        y = (rng_y.random(s.n) < expit(eta)).astype(float)
    elif s.family is Family.POISSON:
        y = rng_y.poisson(np.exp(eta)).astype(float)
    else:
        mu = expit(eta)
        y = rng_y.beta(mu * s.phi, (1.0 - mu) * s.phi)
        y = np.clip(y, 1e-12, 1.0 - 1e-12)
    return Dataset(X, y)


def type_i_error(report, M, beta_true) -> float:
    """Among selected coefficients whose true value is zero, the fraction
    whose interval excludes zero; zero when the model has no nulls."""
    beta_true = np.asarray(beta_true, dtype=float)
    nulls = [j for j in M if beta_true[j] == 0.0]
    if not nulls:
        return 0.0
    null_idx = {j + 1 for j in nulls}
    rejected = sum(
        1
        for r in report.coefficients
        if r.index in null_idx and not (r.ci_lo <= 0.0 <= r.ci_hi)
    )
    return rejected / len(nulls)


# ---------------------------------------------------------------------------
# replication driver
# ---------------------------------------------------------------------------

@dataclass
class _RepResult:
    rep: int
    rows: list = field(default_factory=list)       # (lam_label, method) -> stats
    errors: list = field(default_factory=list)


def _replicate(s: Scenario, rep_index: int, methods, track) -> _RepResult:
    out = _RepResult(rep=rep_index)
    beta_true = s.beta
    data = generate_dataset(s, rep_index)
    try:
        fit = fit_mle(data, s.family)
        lin = linearize(data, s.family, fit)
    except PpglmError as err:
        out.errors.append(("*", f"fit: {err}"))
        return out
    u0i, Ui = weighted_design(data.X, s.family, s.beta0, beta_true,
                              s.phi if s.family is Family.BETA else 1.0)
    ideal = (center(u0i, Ui), beta_true)
    if s.lambda_mode == "datadriven":
        split = make_split(s.n, s.split_frac, s.seed, rep_index)
        grid = s.grid()
        lam_star, _, _ = select_lambda(lin, split, grid)
        jobs = [("datadriven", lam_star, (split, list(grid)))]
    else:
        jobs = [(f"{lam:.6g}", float(lam), None) for lam in s.grid()]
    for label, lam, lam_ctx in jobs:
        try:
            rep = analyze_linearized(
                lin, lam, s.alpha, methods, data=data, family=s.family,
                lambda_mode=s.lambda_mode, lambda_ctx=lam_ctx, ideal=ideal,
                collect_pivots=True, ci_for=track,
            )
        except EmptyModelError:
            for m in methods:
                out.rows.append(
                    dict(label=label, method=m, type1=0.0, size=0, empty=True,
                         coef={}, errors=0)
                )
            continue
        except PpglmError as err:
            out.errors.append((label, str(err)))
            continue
        M = [j - 1 for j in rep.model]
        nulls = {j + 1 for j in M if beta_true[j] == 0.0}
        for m in methods:
            rows_m = [r for r in rep.coefficients if r.method == m]
            # p < alpha is exactly "interval excludes zero" for these pivots
            if nulls:
                t1 = sum(
                    1 for r in rows_m if r.index in nulls and r.p_value < s.alpha
                ) / len(nulls)
            else:
                t1 = 0.0
            coef_stats = {}
            for r in rows_m:
                if track is not None and r.index not in track:
                    continue
                coef_stats[r.index] = dict(
                    lo=r.ci_lo, hi=r.ci_hi, width=r.width,
                    covered=bool(r.covers_target), pivot=r.pivot,
                    target=r.target, p_value=r.p_value,
                )
            out.rows.append(
                dict(label=label, method=m, type1=t1, size=len(M), empty=False,
                     coef=coef_stats, errors=len(rep.diagnostics))
            )
    return out


@dataclass
class SummaryTable:
    """Aggregated simulation output.

    ``rows`` has one entry per (penalty label, method) with averages across
    replicates; ``coef_rows`` one entry per (label, method, coefficient as a
    1-based index) for tracked coefficients. ``records`` holds raw
    per-replicate rows when collection was requested.
    """

    scenario: Scenario
    methods: tuple
    rows: list
    coef_rows: list
    error_count: int
    records: list | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda", "method", "avg_type1", "avg_model_size",
                    "n_replicates", "n_empty", "n_errors"])
        for r in self.rows:
            w.writerow([
                r["label"], r["method"], f"{r['avg_type1']:.10g}",
                f"{r['avg_size']:.10g}", r["n"], r["n_empty"], r["n_errors"],
            ])
        return buf.getvalue()

    def coef_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda", "method", "coefficient", "avg_lo", "avg_hi",
                    "avg_width", "coverage", "n_selected", "n_unselected",
                    "n_infinite"])
        for r in self.coef_rows:
            w.writerow([
                r["label"], r["method"], r["coefficient"],
                f"{r['avg_lo']:.10g}", f"{r['avg_hi']:.10g}",
                f"{r['avg_width']:.10g}", f"{r['coverage']:.10g}",
                r["n_selected"], r["n_unselected"], r["n_infinite"],
            ])
        return buf.getvalue()

    def row(self, label, method):
        for r in self.rows:
            if r["label"] == label and r["method"] == method:
                return r
        raise KeyError((label, method))

    def coef_row(self, label, method, coefficient):
        for r in self.coef_rows:
            if (r["label"], r["method"], r["coefficient"]) == (label, method, coefficient):
                return r
        raise KeyError((label, method, coefficient))


def _worker(args):
    s, rep_index, methods, track = args
    return _replicate(s, rep_index, methods, track)


def run_replications(s: Scenario, methods=("ppl", "naive"), track=None,
                     workers: int | None = None, collect: bool = False) -> SummaryTable:
    """Run the scenario end to end and aggregate.

    ``track`` narrows per-coefficient interval statistics to those 1-based
    indices (None tracks all). Replicate-level failures are counted, never
    fatal. Worker count comes from the argument, else the ``PPGLM_WORKERS``
    environment variable, else 1; aggregation order is fixed by replicate
    index either way.
    """
    methods = tuple(methods)
    track_set = set(track) if track is not None else None
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    args = [(s, i, methods, track_set) for i in range(s.replicates)]
    if workers > 1 and s.replicates > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_worker, args, chunksize=4))
    else:
        results = [_worker(a) for a in args]

    labels = []
    for res in results:
        for row in res.rows:
            key = (row["label"], row["method"])
            if key not in labels:
                labels.append(key)
    # deterministic label order: grid order for fixed mode
    if s.lambda_mode == "fixed":
        order = {f"{lam:.6g}": i for i, lam in enumerate(s.grid())}
        labels.sort(key=lambda k: (order.get(k[0], 1e9), methods.index(k[1])))
    rows = []
    coef_rows = []
    error_count = sum(len(res.errors) for res in results)
    for label, method in labels:
        sel = [
            row
            for res in results
            for row in res.rows
            if row["label"] == label and row["method"] == method
        ]
        n = len(sel)
        rows.append(
            dict(
                label=label,
                method=method,
                avg_type1=float(np.mean([r["type1"] for r in sel])) if n else 0.0,
                avg_size=float(np.mean([r["size"] for r in sel])) if n else 0.0,
                n=n,
                n_empty=sum(r["empty"] for r in sel),
                n_errors=sum(r["errors"] for r in sel),
            )
        )
        tracked = track_set if track_set is not None else {
            idx for r in sel for idx in r["coef"]
        }
        for idx in sorted(tracked):
            entries = [r["coef"][idx] for r in sel if idx in r["coef"]]
            finite = [e for e in entries if np.isfinite(e["width"])]
            coef_rows.append(
                dict(
                    label=label,
                    method=method,
                    coefficient=idx,
                    avg_lo=float(np.mean([e["lo"] for e in finite])) if finite else np.nan,
                    avg_hi=float(np.mean([e["hi"] for e in finite])) if finite else np.nan,
                    avg_width=float(np.mean([e["width"] for e in finite])) if finite else np.nan,
                    coverage=float(np.mean([e["covered"] for e in entries])) if entries else np.nan,
                    n_selected=len(entries),
                    n_unselected=n - len(entries),
                    n_infinite=len(entries) - len(finite),
                )
            )
    return SummaryTable(
        scenario=s,
        methods=methods,
        rows=rows,
        coef_rows=coef_rows,
        error_count=error_count,
        records=results if collect else None,
    )
