"""Numerically stable Gaussian distributions truncated to interval unions.

Interval masses are assembled in log space from one-sided tail log-CDFs, with
the representation chosen on the side of smaller magnitude (upper tail when
the whole interval sits above the mean, lower tail below it, and an
erf-difference with no cancellation when the interval straddles the mean).
This keeps the conditional CDF accurate even when the support lies many
standard deviations from the mean, which is routine during confidence-bound
inversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import erf, log_ndtr

from .exceptions import SelectionInconsistencyError, SupportTooRemoteError
from .intervals import IntervalUnion

__all__ = [
    "TruncatedGaussian",
    "cdf",
    "p_value",
    "confidence_interval",
    "nudge_into_support",
]

_SQRT2 = math.sqrt(2.0)
_LOG_HALF = math.log(0.5)

BISECT_TOL = 1e-8        # in units of sigma, on mu
BRACKET_LIMIT = 1e4      # widest bracket, in units of sigma, before an endpoint is infinite
STAT_TOL = 1e-6          # stat may sit this many sigmas outside the support
NUDGE = 1e-8             # interior nudge, in units of sigma, off a truncation boundary


@dataclass(frozen=True)
class TruncatedGaussian:
    """Normal(mu, var) restricted to a nonempty union of intervals."""

    mu: float
    var: float
    support: IntervalUnion

    def __post_init__(self):
        if not self.var > 0:
            raise ValueError("variance must be positive")
        if self.support.is_empty:
            raise ValueError("support must be nonempty")


def _log1mexp(delta: float) -> float:
    """log(1 - exp(delta)) for delta <= 0."""
    if delta >= 0.0:
        return -math.inf
    if delta > -math.log(2.0):
        return math.log(-math.expm1(delta))
    return math.log1p(-math.exp(delta))


def _log_mass_std(a: float, b: float) -> float:
    """log P(a < Z < b) for standard normal Z, stable in both tails."""
    if b <= a:
        return -math.inf
    if a >= 0.0:  # upper tail: work with survival functions
        la = log_ndtr(-a)
        if math.isinf(b):
            return la
        return la + _log1mexp(log_ndtr(-b) - la)
    if b <= 0.0:  # lower tail, by symmetry
        lb = log_ndtr(b)
        if math.isinf(a):
            return lb
        return lb + _log1mexp(log_ndtr(a) - lb)
    # straddles the mean: two nonnegative erf terms, no cancellation
    mass = 0.5 * (erf(b / _SQRT2) + erf(-a / _SQRT2))
    return math.log(mass) if mass > 0.0 else -math.inf


def _logsumexp(values) -> float:
    m = max(values, default=-math.inf)
    if math.isinf(m):
        return -math.inf
    return m + math.log(sum(math.exp(v - m) for v in values))


def _log_masses(d: TruncatedGaussian):
    sigma = math.sqrt(d.var)
    logs = []
    for lo, hi in d.support:
        a = (lo - d.mu) / sigma if not math.isinf(lo) else -math.inf
        b = (hi - d.mu) / sigma if not math.isinf(hi) else math.inf
        logs.append(_log_mass_std(a, b))
    return logs, sigma


def cdf(x: float, d: TruncatedGaussian) -> float:
    """Conditional CDF: mass of ``support`` below ``x`` over total mass."""
    logs, sigma = _log_masses(d)
    total = _logsumexp(logs)
    if math.isinf(total) or math.isnan(total):
        raise SupportTooRemoteError(
            "support carries no representable mass under this mean"
        )
    below = []
    for (lo, hi), full in zip(d.support, logs):
        if x >= hi:
            below.append(full)
        elif x > lo:
            a = (lo - d.mu) / sigma if not math.isinf(lo) else -math.inf
            below.append(_log_mass_std(a, (x - d.mu) / sigma))
    if not below:
        return 0.0
    num = _logsumexp(below)
    return min(math.exp(num - total), 1.0)


def p_value(stat: float, var: float, support: IntervalUnion) -> float:
    """Two-sided conditional p-value for a zero mean: ``2 min(F, 1 - F)``
    with ``F`` the CDF of Normal(0, var) truncated to ``support``."""
    sigma = math.sqrt(var)
    if support.distance(stat) > STAT_TOL * sigma:
        raise SelectionInconsistencyError(
            f"statistic {stat} lies outside the selection support"
        )
    f = cdf(stat, TruncatedGaussian(0.0, var, support))
    return 2.0 * min(f, 1.0 - f)


def nudge_into_support(stat: float, support: IntervalUnion, var: float):
    """Move a boundary-sitting statistic a hair inside its interval.

    Returns ``(stat, moved)``; raises if the statistic is farther outside
    than the tolerance allows.
    """
    sigma = math.sqrt(var)
    eps = NUDGE * sigma
    iv = support.enclosing(stat)
    if iv is None:
        if support.distance(stat) > STAT_TOL * sigma:
            raise SelectionInconsistencyError(
                f"statistic {stat} lies outside the selection support"
            )
        iv = min(support, key=lambda p: min(abs(stat - p[0]), abs(stat - p[1])))
    lo, hi = iv
    if not math.isinf(lo) and stat - lo < eps:
        return min(lo + eps, 0.5 * (lo + hi)), True
    if not math.isinf(hi) and hi - stat < eps:
        return max(hi - eps, 0.5 * (lo + hi)), True
    return stat, False


def _solve_mu(stat: float, var: float, support: IntervalUnion, target: float,
              sigma: float):
    """Find mu with cdf(stat; mu) == target by bisection; F is strictly
    decreasing in mu for stat interior to the support hull."""

    def f(mu):
        return cdf(stat, TruncatedGaussian(mu, var, support))

    # expand a bracket [left, right] with f(left) >= target >= f(right)
    off = sigma
    left = right = stat
    fl = fr = f(stat)
    while fl < target:
        left = stat - off
        fl = f(left)
        off *= 2.0
        if off > BRACKET_LIMIT * sigma:
            return -math.inf, False
    off = sigma
    while fr > target:
        right = stat + off
        fr = f(right)
        off *= 2.0
        if off > BRACKET_LIMIT * sigma:
            return math.inf, False
    while right - left > BISECT_TOL * sigma:
        mid = 0.5 * (left + right)
        if f(mid) >= target:
            left = mid
        else:
            right = mid
    return 0.5 * (left + right), True


def confidence_interval(stat: float, var: float, support: IntervalUnion,
                        alpha: float):
    """Equal-tailed interval ``{mu : alpha/2 <= F(stat; mu) <= 1 - alpha/2}``.

    The pivot is monotone in ``mu``, so each endpoint comes from a bisection;
    an endpoint is reported infinite (with the flag in the second return
    value) if no bracket is found within the expansion limit.
    """
    if not 0.0 < alpha <= 0.5:
        raise ValueError("alpha must lie in (0, 1/2]")
    sigma = math.sqrt(var)
    if support.distance(stat) > STAT_TOL * sigma:
        raise SelectionInconsistencyError(
            f"statistic {stat} lies outside the selection support"
        )
    hi, hi_ok = _solve_mu(stat, var, support, alpha / 2.0, sigma)
    lo, lo_ok = _solve_mu(stat, var, support, 1.0 - alpha / 2.0, sigma)
    return (lo, hi), lo_ok and hi_ok
