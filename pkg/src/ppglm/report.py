"""Machine-readable inference reports: JSON and flat CSV serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

__all__ = ["CoefficientResult", "InferenceReport"]

METHOD_ORDER = {"ppl": 0, "polyhedral": 1, "naive": 2}


def _enc_float(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(x)


def _enc_interval(pair):
    return [_enc_float(pair[0]), _enc_float(pair[1])]


@dataclass
class CoefficientResult:
    """Inference for one selected coefficient under one method."""

    index: int            # 1-based position in the original design
    name: str
    method: str           # "ppl" | "polyhedral" | "naive"
    estimate: float
    ci_lo: float
    ci_hi: float
    p_value: float
    support: tuple = ()         # truncation intervals, empty for naive
    diagnostics: tuple = ()
    target: float | None = None  # simulation only: projected true value
    pivot: float | None = None   # simulation only: conditional CDF at target

    @property
    def width(self) -> float:
        return self.ci_hi - self.ci_lo

    @property
    def covers_target(self) -> bool:
        return self.target is not None and self.ci_lo <= self.target <= self.ci_hi

    def to_dict(self) -> dict:
        out = {
            "index": self.index,
            "name": self.name,
            "method": self.method,
            "estimate": float(self.estimate),
            "ci": _enc_interval((self.ci_lo, self.ci_hi)),
            "p_value": float(self.p_value),
            "support": [_enc_interval(iv) for iv in self.support],
            "diagnostics": list(self.diagnostics),
        }
        if self.target is not None:
            out["target"] = float(self.target)
        if self.pivot is not None:
            out["pivot"] = float(self.pivot)
        return out


@dataclass
class InferenceReport:
    """Full report for one dataset: selected model plus per-coefficient
    estimates, intervals, p-values, and diagnostics."""

    family: str
    n: int
    p: int
    alpha: float
    lambda_value: float
    lambda_mode: str            # "fixed" | "datadriven"
    model: tuple = ()           # 1-based selected indices
    model_names: tuple = ()
    coefficients: list = field(default_factory=list)
    noise_scale: float = 1.0
    seed: int | None = None
    split_frac: float | None = None
    lambda_grid: tuple | None = None
    diagnostics: tuple = ()
    config: dict = field(default_factory=dict)

    def rows(self):
        return sorted(
            self.coefficients,
            key=lambda r: (r.index, METHOD_ORDER.get(r.method, 9)),
        )

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "n": self.n,
            "p": self.p,
            "alpha": self.alpha,
            "lambda": float(self.lambda_value),
            "lambda_mode": self.lambda_mode,
            "lambda_grid": list(self.lambda_grid) if self.lambda_grid else None,
            "split_frac": self.split_frac,
            "seed": self.seed,
            "noise_scale": float(self.noise_scale),
            "model": {"indices": list(self.model), "names": list(self.model_names)},
            "coefficients": [r.to_dict() for r in self.rows()],
            "diagnostics": list(self.diagnostics),
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["index", "name", "method", "estimate", "ci_lo", "ci_hi",
             "width", "p_value", "diagnostics"]
        )
        for r in self.rows():
            writer.writerow(
                [
                    r.index,
                    r.name,
                    r.method,
                    f"{r.estimate:.10g}",
                    f"{r.ci_lo:.10g}",
                    f"{r.ci_hi:.10g}",
                    f"{r.width:.10g}",
                    f"{r.p_value:.10g}",
                    "; ".join(r.diagnostics),
                ]
            )
        return buf.getvalue()
