"""Comparison methods: naive Wald inference and the sign-conditioned
(polyhedral) correction.

The naive method refits the GLM on the selected submodel and reads standard
errors off the inverse observed information, ignoring that the model was
chosen by looking at the data. The polyhedral method conditions on both the
selected model and the signs of its coefficients, which restricts the
truncation set to the single interval around the observed statistic; it is
computed by reusing the same path enumeration as the main method, since both
events live on the same contrast line.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr, ndtri

from .exceptions import RankDeficiencyError
from .glm_core import (
    Dataset,
    Family,
    FitOptions,
    LinearizedData,
    fit_mle,
    observed_information,
)
from .intervals import IntervalUnion
from .parametric_path import TauPath, enumerate_path, sign_event_interval
from .report import CoefficientResult, InferenceReport
from .truncnorm import confidence_interval, nudge_into_support, p_value

__all__ = ["naive_wald", "polyhedral_infer"]


def naive_wald(data: Dataset, family: Family, M, alpha: float,
               names=None, opts: FitOptions | None = None) -> InferenceReport:
    """Wald intervals from the refitted submodel, ignoring selection.

    ``M`` holds 0-based column indices. Standard errors come from the
    coefficient block of the inverse observed information of the submodel
    fit (for beta regression the information includes the precision).
    """
    M = [int(j) for j in M]
    sub = data.subset_columns(M)
    fit = fit_mle(sub, family, opts)
    info = observed_information(sub, family, fit)
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError("singular observed information") from None
    se = np.sqrt(np.diag(cov)[1:1 + len(M)])
    if not np.all(np.isfinite(se)):
        raise RankDeficiencyError("observed information is not positive definite")
    z = -ndtri(alpha / 2.0)
    diagnostics = ("ridge fallback in submodel fit",) if fit.ridge_used else ()
    results = []
    for pos, j in enumerate(M):
        est = float(fit.beta[pos])
        results.append(
            CoefficientResult(
                index=j + 1,
                name=names[j] if names else f"x{j + 1}",
                method="naive",
                estimate=est,
                ci_lo=est - z * se[pos],
                ci_hi=est + z * se[pos],
                p_value=2.0 * float(ndtr(-abs(est / se[pos]))),
                diagnostics=diagnostics,
            )
        )
    return InferenceReport(
        family=family.value,
        n=data.n,
        p=data.p,
        alpha=alpha,
        lambda_value=math.nan,
        lambda_mode="fixed",
        model=tuple(j + 1 for j in M),
        model_names=tuple(r.name for r in results),
        coefficients=results,
        noise_scale=1.0 if family is not Family.BETA else 1.0 / fit.phi,
    )


def polyhedral_infer(lin: LinearizedData, lam: float, M, signs, j: int,
                     alpha: float, path: TauPath | None = None,
                     name: str | None = None, target: float | None = None,
                     collect_pivot: bool = False,
                     compute_ci: bool = True) -> CoefficientResult:
    """Sign-conditioned inference for coefficient position ``j`` of ``M``.

    Identical to the main pipeline except that the truncation support is the
    single sign-event interval containing the observed statistic, which is
    always a subset of the model event.
    """
    from .glm_core import contrast
    from .truncnorm import TruncatedGaussian, cdf

    M = [int(k) for k in M]
    if path is None:
        c = contrast(lin.U0, M, j)
        path = enumerate_path(lin, c, lam, target_model=M)
    iv, diagnostics = sign_event_interval(path, M, signs)
    support = IntervalUnion((iv,))
    var = lin.noise_scale * float(path.par.c @ path.par.c)
    stat, moved = nudge_into_support(path.par.tau_obs, support, var)
    if moved:
        diagnostics = list(diagnostics) + ["statistic nudged off a truncation boundary"]
    if compute_ci:
        (lo, hi), finite = confidence_interval(stat, var, support, alpha)
        if not finite:
            diagnostics = list(diagnostics) + ["confidence endpoint reported infinite"]
    else:
        lo, hi = math.nan, math.nan
    pivot = None
    if collect_pivot and target is not None:
        pivot = cdf(stat, TruncatedGaussian(float(target), var, support))
    col = M[j]
    return CoefficientResult(
        index=col + 1,
        name=name or f"x{col + 1}",
        method="polyhedral",
        estimate=float(path.par.tau_obs),
        ci_lo=lo,
        ci_hi=hi,
        p_value=p_value(stat, var, support),
        support=(iv,),
        diagnostics=tuple(diagnostics),
        target=target,
        pivot=pivot,
    )
