"""Debiased estimators, noise estimation, confidence intervals, and exact
leave-one-out tests.

All formulas below assume the covariance model is scaled so the design
rows are N(0, sigma/n); under the BY_P sampling convention pass the
effective covariance from :func:`lassodist.model.effective_covariance`.
The population covariance is taken as known throughout.

Per-coordinate validity of the debiased intervals is established only on
average across coordinates; the leave-one-out construction is the one with
a per-coordinate guarantee, and its test of theta_j = omega is exact in
finite samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import DegenerateDofError, InvalidParameterError
from .model import CovarianceModel, residualized_feature
from .solvers import LassoFit, SolverConfig, solve_lasso

__all__ = [
    "ConfidenceReport",
    "DebiasedEstimate",
    "ExactTestInversion",
    "LooResult",
    "debias",
    "debiased_cis",
    "exact_test",
    "invert_exact_test",
    "loo_statistic",
    "no_dof_ci",
    "tau_hat",
]


@dataclass(frozen=True)
class DebiasedEstimate:
    """Debiased vector with or without the degrees-of-freedom adjustment.

    ``dof_factor`` is 1/(1 - active/n) when adjusted, else 1.
    """

    theta_d: np.ndarray
    adjusted: bool
    dof_factor: float


@dataclass(frozen=True)
class ConfidenceReport:
    """Per-coordinate symmetric intervals and, when the truth is supplied,
    coverage indicators and the false-coverage proportion."""

    lo: np.ndarray
    hi: np.ndarray
    level: float
    tau: float
    covered: np.ndarray | None = None
    fcp: float | None = None

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo


@dataclass(frozen=True)
class LooResult:
    """Leave-one-out statistic for one coordinate.

    ``xi`` estimates theta_j - omega; ``ci`` is centered at xi;
    ``p_value`` is the exact two-sided level of the null theta_j = omega.
    """

    j: int
    xi: float
    tau_hat_loo: float
    ci: tuple
    p_value: float
    omega: float
    active_count: int


@dataclass(frozen=True)
class ExactTestInversion:
    """Acceptance region of the exact test over a grid of null values,
    reported as its convex hull; empty grids of accepted points give
    ``lo = hi = None``."""

    grid: np.ndarray
    p_values: np.ndarray
    lo: float | None
    hi: float | None

    @property
    def empty(self) -> bool:
        return self.lo is None


def _dof_factor(active: int, n: int) -> float:
    if active >= n:
        raise DegenerateDofError(
            f"active set has {active} >= n = {n} coordinates; the "
            "degrees-of-freedom correction is undefined (solver or regime failure)"
        )
    return 1.0 / (1.0 - active / n)


def tau_hat(y, X, fit: LassoFit) -> float:
    """Degrees-of-freedom adjusted residual estimate of the effective
    noise level: ||y - X theta_hat||^2 / (n (1 - active/n)^2), square
    rooted."""
    y = np.asarray(y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    factor = _dof_factor(fit.active_count, n)
    r = y - X @ fit.theta_hat
    return float(np.linalg.norm(r) / np.sqrt(n) * factor)


def debias(X, y, fit: LassoFit, model: CovarianceModel, adjusted: bool = True) -> DebiasedEstimate:
    """Debiased estimate theta_hat + c * sigma^{-1} X'(y - X theta_hat),
    with c = 1/(1 - active/n) when ``adjusted`` and c = 1 otherwise.

    Without the adjustment the correction is too small by exactly that
    factor once the active fraction is non-negligible, which biases the
    active coordinates and fattens the null tails.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    factor = _dof_factor(fit.active_count, n) if adjusted else 1.0
    corr = model.inv @ (X.T @ (y - X @ fit.theta_hat))
    return DebiasedEstimate(theta_d=fit.theta_hat + factor * corr,
                            adjusted=adjusted, dof_factor=factor)


def _interval_report(center, halfwidth, level, tau, theta_star):
    lo = center - halfwidth
    hi = center + halfwidth
    covered = None
    fcp = None
    if theta_star is not None:
        theta_star = np.asarray(theta_star, dtype=np.float64)
        covered = (lo <= theta_star) & (theta_star <= hi)
        fcp = float(1.0 - covered.mean())
    return ConfidenceReport(lo=lo, hi=hi, level=level, tau=float(tau),
                            covered=covered, fcp=fcp)


def _check_level(q):
    if not 0 < q < 1:
        raise InvalidParameterError(f"level must be in (0, 1), got {q}")


def debiased_cis(est: DebiasedEstimate, tau: float, model: CovarianceModel,
                 q: float, theta_star=None) -> ConfidenceReport:
    """Intervals theta_d_j +- cond_var(j)^{-1/2} tau z_{1-q/2}.

    ``tau`` is normally the data-driven estimate from :func:`tau_hat`; the
    fixed-point value can be injected instead for diagnostics.  Coverage
    indicators and the false-coverage proportion are filled in when the
    true vector is supplied.
    """
    _check_level(q)
    if tau <= 0:
        raise InvalidParameterError(f"tau must be > 0, got {tau}")
    z = norm.ppf(1 - q / 2)
    cond = np.array([model.cond_var(j) for j in range(model.p)])
    halfwidth = tau * z / np.sqrt(cond)
    return _interval_report(est.theta_d, halfwidth, q, tau, theta_star)


def no_dof_ci(est: DebiasedEstimate, residual_norm: float, n: int,
              model: CovarianceModel, q: float, theta_star=None) -> ConfidenceReport:
    """Intervals around the unadjusted estimate with half width
    cond_var(j)^{-1/2} (||y - X theta_hat|| / sqrt(n)) z_{1-q/2}.

    Narrower than the adjusted interval by the factor (1 - active/n);
    included as the comparison construction, not as a recommended one.
    """
    _check_level(q)
    if est.adjusted:
        raise InvalidParameterError("no_dof_ci expects the unadjusted estimate")
    scale = residual_norm / np.sqrt(n)
    z = norm.ppf(1 - q / 2)
    cond = np.array([model.cond_var(j) for j in range(model.p)])
    halfwidth = scale * z / np.sqrt(cond)
    return _interval_report(est.theta_d, halfwidth, q, scale, theta_star)


def _loo_core(X, y_work, model, j, lam, cfg, level, omega, theta_init=None):
    """Shared leave-one-out machinery: residualize feature j, fit the
    reduced Lasso on ``y_work``, and standardize the resulting correlation
    statistic.  Exactness under theta_j = omega relies only on the
    residualized feature being independent of (y_work, X_{-j}) and on the
    reduced fit depending on nothing else."""
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    if p < 2:
        raise InvalidParameterError("leave-one-out needs at least two features")
    if not 0 <= j < p:
        raise InvalidParameterError(f"coordinate {j} out of range for p={p}")
    _check_level(level)
    x_perp = residualized_feature(X, model, j)
    X_minus = np.delete(X, j, axis=1)
    fit = solve_lasso(X_minus, y_work, lam, cfg, theta_init=theta_init)
    cond = model.cond_var(j)
    factor = _dof_factor(fit.active_count, n)
    resid = y_work - X_minus @ fit.theta_hat
    xi = float(x_perp @ resid / cond * factor)
    tau_loo = float(np.linalg.norm(resid) / np.sqrt(n) * factor)
    z = norm.ppf(1 - level / 2)
    half = tau_loo * z / np.sqrt(cond)
    pivot = xi * np.sqrt(cond) / tau_loo
    p_value = float(2 * norm.sf(abs(pivot)))
    return LooResult(j=j, xi=xi, tau_hat_loo=tau_loo, ci=(xi - half, xi + half),
                     p_value=p_value, omega=float(omega),
                     active_count=fit.active_count), fit


def loo_statistic(X, y, model: CovarianceModel, j: int, lam: float,
                  cfg: SolverConfig | None = None, level: float = 0.05) -> LooResult:
    """Variable-importance statistic and interval for coordinate j from the
    leave-one-out regression of y on the remaining features.

    ``xi`` is the empirical correlation of the residualized feature with
    the reduced-fit residual, renormalized by cond_var(j) (1 - active/n);
    under theta_j = 0 the pivot xi * cond_var(j)^{1/2} / tau_hat_loo is
    exactly standard normal, for any n and p.
    """
    result, _ = _loo_core(X, np.asarray(y, dtype=np.float64), model, j, lam,
                          cfg, level, omega=0.0)
    return result


def exact_test(X, y, model: CovarianceModel, j: int, omega: float, lam: float,
               cfg: SolverConfig | None = None, level: float = 0.05) -> LooResult:
    """Exact test of theta_j = omega via the pseudo-outcome
    y - omega * x_perp_j.

    Subtracting omega times the residualized feature removes the tested
    coordinate's contribution exactly under the null, after which the
    leave-one-out pivot is standard normal; the returned two-sided
    ``p_value`` is exact at every n, p.  ``xi`` estimates theta_j - omega
    and the interval is centered at it.
    """
    y = np.asarray(y, dtype=np.float64)
    x_perp = residualized_feature(np.asarray(X, dtype=np.float64), model, j)
    result, _ = _loo_core(X, y - omega * x_perp, model, j, lam, cfg, level,
                          omega=omega)
    return result


def invert_exact_test(X, y, model: CovarianceModel, j: int, lam: float,
                      level: float, omega_grid,
                      cfg: SolverConfig | None = None) -> ExactTestInversion:
    """Invert the family of exact tests over a finite grid of null values.

    Each grid point costs one reduced Lasso solve (warm started along the
    grid).  The acceptance set {omega : p_value >= level} is reported as
    its convex hull; an empty set is a legitimate outcome, not an error.
    The grid is user supplied because the p-value need not be monotone in
    omega.
    """
    grid = np.sort(np.asarray(omega_grid, dtype=np.float64))
    if grid.size == 0:
        raise InvalidParameterError("omega_grid must be nonempty")
    _check_level(level)
    y = np.asarray(y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    x_perp = residualized_feature(X, model, j)
    p_values = np.empty(grid.size)
    warm = None
    for k, omega in enumerate(grid):
        result, fit = _loo_core(X, y - omega * x_perp, model, j, lam, cfg,
                                level, omega=omega, theta_init=warm)
        warm = fit.theta_hat
        p_values[k] = result.p_value
    accepted = grid[p_values >= level]
    if accepted.size == 0:
        return ExactTestInversion(grid=grid, p_values=p_values, lo=None, hi=None)
    return ExactTestInversion(grid=grid, p_values=p_values,
                              lo=float(accepted.min()), hi=float(accepted.max()))
