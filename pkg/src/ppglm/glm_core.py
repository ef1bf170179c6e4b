"""GLM and beta-regression fitting, plus the centered weighted pseudo-data.

Logistic and Poisson models are fit by iteratively reweighted least squares;
beta regression (mean on the logit scale, precision ``phi`` estimated jointly)
uses Fisher scoring alternated with a one-dimensional Newton update of
``log(phi)``. At convergence the fit is re-expressed as pseudo-data
``(z0, U0)``: a working response and a weighted design, both projected off the
weighted intercept direction ``u0``. On that least-squares problem the GLM
coefficient MLE is exactly the ordinary least-squares solution, which is the
representation all downstream selection and inference code operates on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import digamma, expit, gammaln, polygamma

from .exceptions import (
    DataValidationError,
    DegenerateDataError,
    FitNonConvergenceError,
    RankDeficiencyError,
    SaturatedFitError,
)

__all__ = [
    "Family",
    "Dataset",
    "FitOptions",
    "GlmFit",
    "LinearizedData",
    "family_eval",
    "dispersion_scale",
    "fit_mle",
    "score",
    "log_likelihood",
    "observed_information",
    "linearize",
    "weighted_design",
    "contrast",
    "refit_coefficients",
    "pivot_statistic",
]


class Family(str, Enum):
    """Response family. Beta regression estimates its precision ``phi``
    jointly; the other two have unit dispersion."""

    LOGISTIC = "logistic"
    POISSON = "poisson"
    BETA = "beta"

    @property
    def estimates_dispersion(self) -> bool:
        return self is Family.BETA


def dispersion_scale(family: Family, phi: float = 1.0) -> float:
    """Variance scale of the working residuals: 1 for logistic/Poisson,
    1/phi for beta regression."""
    if family is Family.BETA:
        if not phi > 0:
            raise DataValidationError(f"beta precision must be positive, got {phi}")
        return 1.0 / phi
    return 1.0


@dataclass(frozen=True)
class Dataset:
    """Fixed design ``X`` (observations in rows) and response ``y``."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise DataValidationError(
                f"X has {X.shape[0]} rows but y has {y.shape[0]} entries"
            )
        if not np.all(np.isfinite(X)):
            i, j = np.argwhere(~np.isfinite(X))[0]
            raise DataValidationError(f"non-finite covariate at row {i}, column {j}")
        if not np.all(np.isfinite(y)):
            i = int(np.flatnonzero(~np.isfinite(y))[0])
            raise DataValidationError(f"non-finite response at row {i}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset_columns(self, cols) -> "Dataset":
        return Dataset(self.X[:, list(cols)], self.y)


def validate_response(family: Family, y: np.ndarray) -> None:
    """Raise DataValidationError naming the first offending row if ``y`` is
    outside the family's domain."""
    y = np.asarray(y, dtype=float)
    if family is Family.LOGISTIC:
        bad = (y != 0.0) & (y != 1.0)
        label = "binary response must be 0 or 1"
    elif family is Family.POISSON:
        bad = (y < 0) | (y != np.floor(y))
        label = "count response must be a nonnegative integer"
    else:
        bad = (y <= 0.0) | (y >= 1.0)
        label = "beta response must lie strictly in (0, 1)"
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise DataValidationError(f"{label}; offending value {y[i]} at row {i}")


def family_eval(family: Family, eta, phi: float = 1.0):
    """Evaluate the cumulant function and its first two derivatives.

    Returns ``(b, b1, b2)`` where ``b1`` is the response mean and ``b2`` the
    variance function, both evaluated at the linear predictor ``eta``. For
    beta regression the returned ``b1`` and ``b2`` are the mean-scale
    analogues ``mu`` and ``mu * (1 - mu)``; the Fisher-scoring weights live in
    :func:`weighted_design`. ``b2 > 0`` for every finite ``eta``.

    Overflow-safe for large ``|eta|``: the logistic cumulant is computed as
    ``logaddexp(0, eta)`` and its curvature as ``sigma(eta) * sigma(-eta)``.
    """
    eta_arr = np.asarray(eta, dtype=float)
    if not np.all(np.isfinite(eta_arr)):
        raise ValueError("linear predictor must be finite")
    if family is Family.POISSON:
        b2 = np.exp(eta_arr)
        out = (b2, b2, b2)
    else:
        if family is Family.BETA and not phi > 0:
            raise DataValidationError(f"beta precision must be positive, got {phi}")
        mu = expit(eta_arr)
        out = (np.logaddexp(0.0, eta_arr), mu, mu * expit(-eta_arr))
    if np.isscalar(eta) or np.ndim(eta) == 0:
        return tuple(float(v) for v in out)
    return out


@dataclass
class FitOptions:
    """Solver settings for :func:`fit_mle`."""

    tol: float = 1e-8              # max absolute coefficient change
    max_iter: int = 100
    ridge: float = 1e-4            # weak penalty used by the degenerate-MLE fallback
    phi_tol: float = 1e-8          # Newton step tolerance on log(phi)
    boundary_tol: float = 1e-10    # fitted probability this close to 0/1 flags separation
    diverging_coef: float = 30.0   # with a boundary probability, |coef| above this flags separation


@dataclass(frozen=True)
class GlmFit:
    """Converged fit: intercept ``beta0``, coefficients ``beta``, dispersion
    ``phi`` (1 except for beta regression), fitted linear predictors ``eta``."""

    beta0: float
    beta: np.ndarray
    phi: float
    eta: np.ndarray
    converged: bool
    iterations: int
    ridge_used: bool


@dataclass(frozen=True)
class LinearizedData:
    """Centered pseudo-data from a converged fit.

    ``z0`` and the columns of ``U0`` are orthogonal to the weight vector
    ``u0`` by construction; ``noise_scale`` is the pre-truncation variance
    unit of the working residuals (1, or 1/phi for beta regression).
    """

    z0: np.ndarray
    U0: np.ndarray
    u0: np.ndarray
    noise_scale: float

    @property
    def n(self) -> int:
        return self.U0.shape[0]

    @property
    def p(self) -> int:
        return self.U0.shape[1]


# ---------------------------------------------------------------------------
# likelihood, score, information
# ---------------------------------------------------------------------------

def log_likelihood(family: Family, y: np.ndarray, eta: np.ndarray, phi: float = 1.0) -> float:
    """Full log-likelihood, constants included."""
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if family is Family.LOGISTIC:
        return float(y @ eta - np.logaddexp(0.0, eta).sum())
    if family is Family.POISSON:
        return float(y @ eta - np.exp(eta).sum() - gammaln(y + 1).sum())
    mu = expit(eta)
    nu = expit(-eta)
    return float(
        np.sum(
            gammaln(phi)
            - gammaln(mu * phi)
            - gammaln(nu * phi)
            + (mu * phi - 1.0) * np.log(y)
            + (nu * phi - 1.0) * np.log1p(-y)
        )
    )


def score(data: Dataset, family: Family, beta0: float, beta: np.ndarray,
          phi: float = 1.0, ridge: float = 0.0) -> np.ndarray:
    """Gradient of the (optionally ridge-penalized) log-likelihood with
    respect to ``(beta0, beta)``. The ridge term penalizes only ``beta``."""
    eta = beta0 + data.X @ beta
    if family is Family.BETA:
        mu = expit(eta)
        nu = expit(-eta)
        ytilde = np.log(data.y) - np.log1p(-data.y)
        mutilde = digamma(mu * phi) - digamma(nu * phi)
        resid = phi * mu * nu * (ytilde - mutilde)
    else:
        _, b1, _ = family_eval(family, eta)
        resid = data.y - b1
    g = np.concatenate(([resid.sum()], data.X.T @ resid))
    if ridge > 0.0:
        g[1:] -= (2.0 * ridge / data.n) * beta
    return g


def observed_information(data: Dataset, family: Family, fit: GlmFit) -> np.ndarray:
    """Observed information (negative Hessian of the log-likelihood) at the
    fit. For beta regression the matrix is over ``(beta0, beta, phi)``; for
    the canonical families it is over ``(beta0, beta)`` only."""
    Xt = np.column_stack([np.ones(data.n), data.X])
    eta = fit.eta
    if family is not Family.BETA:
        _, _, b2 = family_eval(family, eta)
        return (Xt * b2[:, None]).T @ Xt
    phi = fit.phi
    mu = expit(eta)
    nu = expit(-eta)
    ytilde = np.log(data.y) - np.log1p(-data.y)
    mutilde = digamma(mu * phi) - digamma(nu * phi)
    tg_mu = polygamma(1, mu * phi)
    tg_nu = polygamma(1, nu * phi)
    mn = mu * nu
    d2_eta = phi * mn * ((1.0 - 2.0 * mu) * (ytilde - mutilde) - phi * mn * (tg_mu + tg_nu))
    d2_eta_phi = mn * ((ytilde - mutilde) - phi * (mu * tg_mu - nu * tg_nu))
    d2_phi = float(np.sum(polygamma(1, phi) - mu**2 * tg_mu - nu**2 * tg_nu))
    k = data.p + 2
    H = np.empty((k, k))
    H[:-1, :-1] = (Xt * d2_eta[:, None]).T @ Xt
    cross = Xt.T @ d2_eta_phi
    H[:-1, -1] = cross
    H[-1, :-1] = cross
    H[-1, -1] = d2_phi
    return -H


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

class _SeparationDetected(Exception):
    pass


def _check_degenerate(family: Family, y: np.ndarray) -> None:
    if family is Family.POISSON:
        return  # a constant count response has a finite intercept-only MLE
    if np.all(y == y[0]):
        raise DegenerateDataError(
            f"all-constant {family.value} response pins the MLE at infinity"
        )


def _working_response(family: Family, y, eta, phi, ytilde):
    """Weights w and working response z of the reweighted LS update."""
    if family is Family.BETA:
        mu = expit(eta)
        nu = expit(-eta)
        w2 = phi * (mu * nu) ** 2 * (polygamma(1, mu * phi) + polygamma(1, nu * phi))
        w = np.sqrt(w2)
        _guard_weights(w)
        mutilde = digamma(mu * phi) - digamma(nu * phi)
        z = w * eta + mu * nu * (ytilde - mutilde) / w
    else:
        _, b1, b2 = family_eval(family, eta)
        w = np.sqrt(b2)
        _guard_weights(w)
        z = w * eta + (y - b1) / w
    return w, z


def _guard_weights(w: np.ndarray) -> None:
    if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
        bad = np.flatnonzero(~np.isfinite(w) | (w <= 0.0))
        raise SaturatedFitError(
            f"degenerate working weight at observation {int(bad[0])}"
        )


def _update_phi(y_logs, mu, nu, phi, n, tol):
    """Newton steps on log(phi) for the beta-regression profile likelihood."""
    log_y, log_1my = y_logs
    sly = float(mu @ log_y + nu @ log_1my)

    def ll(p):
        return float(
            n * gammaln(p)
            - gammaln(mu * p).sum()
            - gammaln(nu * p).sum()
            + p * sly
        )

    u = math.log(phi)
    cur = ll(phi)
    step = 0.0
    for _ in range(60):
        s_phi = float(n * digamma(phi) - mu @ digamma(mu * phi) - nu @ digamma(nu * phi)) + sly
        h_phi = float(n * polygamma(1, phi) - (mu**2) @ polygamma(1, mu * phi)
                      - (nu**2) @ polygamma(1, nu * phi))
        su = phi * s_phi
        hu = phi * phi * h_phi + su
        if hu < 0.0:
            step = -su / hu
        else:
            step = math.copysign(0.5, su)  # non-concave region: bounded uphill move
        step = max(-2.0, min(2.0, step))
        for _ in range(30):
            cand = math.exp(min(max(u + step, -14.0), 19.0))
            new = ll(cand)
            if new >= cur - 1e-12:
                break
            step *= 0.5
        u = math.log(cand)
        phi = cand
        cur = new
        if abs(step) < tol:
            break
    return phi, abs(step)


def fit_mle(data: Dataset, family: Family, opts: FitOptions | None = None) -> GlmFit:
    """Maximum likelihood fit of intercept plus coefficients (plus ``phi``
    for beta regression).

    If the MLE is degenerate (separation, or p >= n) the fit falls back to a
    weak ridge penalty on the coefficients and sets ``ridge_used``. Raises
    :class:`FitNonConvergenceError` (carrying the last iterate) if the
    iteration budget is exhausted.
    """
    opts = opts or FitOptions()
    if data.n < 2:
        raise DataValidationError("need at least two observations")
    validate_response(family, data.y)
    _check_degenerate(family, data.y)
    ridge = opts.ridge if data.p >= data.n else 0.0
    try:
        return _irls(data, family, opts, ridge)
    except _SeparationDetected:
        return _irls(data, family, opts, opts.ridge)


def _penalized_ll(data, family, theta, phi, ridge):
    eta = theta[0] + data.X @ theta[1:]
    ll = log_likelihood(family, data.y, eta, phi)
    if ridge > 0.0:
        ll -= (ridge / data.n) * float(theta[1:] @ theta[1:])
    return ll


def _irls(data: Dataset, family: Family, opts: FitOptions, ridge: float) -> GlmFit:
    n, p = data.n, data.p
    Xt = np.column_stack([np.ones(n), data.X])
    theta = np.zeros(p + 1)
    phi = 1.0
    if family is Family.BETA:
        ytilde = np.log(data.y) - np.log1p(-data.y)
        y_logs = (np.log(data.y), np.log1p(-data.y))
    else:
        ytilde = None
    ll_cur = _penalized_ll(data, family, theta, phi, ridge)
    converged = False
    iterations = 0
    dphi = 0.0
    for it in range(1, opts.max_iter + 1):
        iterations = it
        eta = theta[0] + data.X @ theta[1:]
        if family is Family.BETA:
            mu = expit(eta)
            nu = expit(-eta)
            phi, dphi = _update_phi(y_logs, mu, nu, phi, n, opts.phi_tol)
            ll_cur = _penalized_ll(data, family, theta, phi, ridge)
        try:
            w, z = _working_response(family, data.y, eta, phi, ytilde)
        except SaturatedFitError:
            if ridge == 0.0:
                raise _SeparationDetected from None
            raise
        Xw = Xt * w[:, None]
        A = Xw.T @ Xw
        if ridge > 0.0:
            scale = 2.0 * ridge * dispersion_scale(family, phi) / n
            A[np.arange(1, p + 1), np.arange(1, p + 1)] += scale
        try:
            theta_new = np.linalg.solve(A, Xw.T @ z)
        except np.linalg.LinAlgError:
            if ridge == 0.0:
                raise _SeparationDetected from None
            raise RankDeficiencyError("weighted design is rank deficient") from None
        # step halving keeps the penalized likelihood monotone
        ll_new = _penalized_ll(data, family, theta_new, phi, ridge)
        halvings = 0
        while (not np.isfinite(ll_new) or ll_new < ll_cur - 1e-10) and halvings < 30:
            theta_new = 0.5 * (theta_new + theta)
            ll_new = _penalized_ll(data, family, theta_new, phi, ridge)
            halvings += 1
        delta = float(np.max(np.abs(theta_new - theta)))
        theta = theta_new
        ll_cur = ll_new
        if ridge == 0.0 and family is Family.LOGISTIC:
            pfit = expit(theta[0] + data.X @ theta[1:])
            at_boundary = (pfit.min() < opts.boundary_tol) or (pfit.max() > 1.0 - opts.boundary_tol)
            if at_boundary and np.max(np.abs(theta)) > opts.diverging_coef:
                raise _SeparationDetected
        if ridge == 0.0 and np.max(np.abs(theta)) > 1e6:
            raise _SeparationDetected
        if delta < opts.tol and (family is not Family.BETA or dphi < opts.phi_tol):
            # Fisher scoring is not exact Newton for beta regression, so the
            # step-size criterion alone can leave the score above tolerance
            g = score(data, family, theta[0], theta[1:], phi, ridge)
            if np.max(np.abs(g)) < opts.tol:
                converged = True
                break
    eta = theta[0] + data.X @ theta[1:]
    fit = GlmFit(
        beta0=float(theta[0]),
        beta=theta[1:].copy(),
        phi=float(phi),
        eta=eta,
        converged=converged,
        iterations=iterations,
        ridge_used=ridge > 0.0,
    )
    if not converged:
        raise FitNonConvergenceError(
            f"no convergence in {opts.max_iter} iterations (last step {delta:.3e})",
            last_fit=fit,
        )
    return fit


# ---------------------------------------------------------------------------
# linearization
# ---------------------------------------------------------------------------

def weighted_design(X: np.ndarray, family: Family, beta0: float,
                    beta: np.ndarray, phi: float = 1.0):
    """Weight vector ``u0`` and weighted design ``U`` at given parameters.

    Used both at the fitted parameters (observable pseudo-data) and, in
    simulations, at the true parameters (idealized pseudo-data for
    projection targets).
    """
    eta = beta0 + X @ beta
    if family is Family.BETA:
        mu = expit(eta)
        nu = expit(-eta)
        w2 = phi * (mu * nu) ** 2 * (polygamma(1, mu * phi) + polygamma(1, nu * phi))
        w = np.sqrt(w2)
    else:
        _, _, b2 = family_eval(family, eta)
        w = np.sqrt(b2)
    _guard_weights(w)
    return w, X * w[:, None]


def center(u0: np.ndarray, U: np.ndarray, z: np.ndarray | None = None):
    """Project the intercept direction ``u0`` out of ``U`` (and ``z``)."""
    nrm2 = float(u0 @ u0)
    U0 = U - np.outer(u0, (u0 @ U) / nrm2)
    if z is None:
        return U0
    z0 = z - u0 * (float(u0 @ z) / nrm2)
    return z0, U0


def linearize(data: Dataset, family: Family, fit: GlmFit) -> LinearizedData:
    """Build the centered pseudo-data ``(z0, U0, u0)`` from a converged fit.

    The least-squares coefficients of ``z0`` on ``U0`` reproduce ``fit.beta``;
    both ``z0`` and every column of ``U0`` are orthogonal to ``u0``. Raises
    :class:`SaturatedFitError` if any working weight degenerates to zero.
    """
    eta = fit.eta
    ytilde = None
    if family is Family.BETA:
        ytilde = np.log(data.y) - np.log1p(-data.y)
    w, z = _working_response(family, data.y, eta, fit.phi, ytilde)
    U = data.X * w[:, None]
    z0, U0 = center(w, U, z)
    return LinearizedData(
        z0=z0, U0=U0, u0=w, noise_scale=dispersion_scale(family, fit.phi)
    )


# ---------------------------------------------------------------------------
# contrasts
# ---------------------------------------------------------------------------

def _gram_solve(U0M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    G = U0M.T @ U0M
    try:
        sol = np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError("selected columns are rank deficient") from None
    if not np.all(np.isfinite(sol)) or np.max(np.abs(G @ sol - rhs)) > 1e-6 * max(
        1.0, float(np.max(np.abs(rhs)))
    ):
        raise RankDeficiencyError("selected columns are numerically rank deficient")
    return sol


def contrast(U0: np.ndarray, M, j: int) -> np.ndarray:
    """Contrast vector ``c`` with ``c @ z0`` equal to coefficient ``j`` of the
    least-squares refit on columns ``M``.

    ``M`` is a sequence of 0-based column indices and ``j`` a 0-based
    position within ``M``. Satisfies ``c @ U0[:, M] == e_j``.
    """
    M = list(M)
    if not 0 <= j < len(M):
        raise ValueError(f"position {j} outside model of size {len(M)}")
    U0M = U0[:, M]
    e = np.zeros(len(M))
    e[j] = 1.0
    return U0M @ _gram_solve(U0M, e)


def refit_coefficients(U0: np.ndarray, z0: np.ndarray, M) -> np.ndarray:
    """Least-squares coefficients of ``z0`` on the columns of ``U0`` in ``M``."""
    M = list(M)
    U0M = U0[:, M]
    return _gram_solve(U0M, U0M.T @ z0)


def pivot_statistic(lin: LinearizedData, M, j: int, beta_true: np.ndarray) -> float:
    """Standardized residual contrast ``c @ (z0 - U0 beta) / ||c||``.

    Test-harness helper: over replicates this is approximately
    ``N(0, noise_scale)`` when the model contains the true support.
    """
    c = contrast(lin.U0, M, j)
    return float(c @ (lin.z0 - lin.U0 @ np.asarray(beta_true, dtype=float))) / float(
        np.linalg.norm(c)
    )
