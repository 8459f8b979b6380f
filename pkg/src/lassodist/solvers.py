"""Optimization kernels: random-design Lasso, fixed-design (non-separable)
prox, their Huber-smoothed variants, and subgradient extraction.

Both objectives are minimized by cyclic coordinate descent with exact
coordinate minimization; the fixed-design objective is strongly convex, so
its minimizer is unique.  Solver routines are pure and reentrant: a fit
touches only its own workspace, and many fits may run concurrently on
shared immutable inputs.  Ties at the soft-threshold kink resolve to an
exact 0, which keeps the reported subgradient well defined in [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidParameterError, StaleFitError
from .model import CovarianceModel

__all__ = [
    "LassoFit",
    "ProxFit",
    "SolverConfig",
    "extract_subgradient",
    "fixed_design_prox",
    "lasso_objective",
    "moreau_l1",
    "prox_objective",
    "smoothed_prox",
    "solve_lasso",
    "solve_smoothed_lasso",
]


@dataclass(frozen=True)
class SolverConfig:
    """Convergence controls shared by all solvers.

    ``tol`` bounds the largest coordinate change per sweep (relative to
    max(1, ||theta||_inf)), ``kkt_tol`` the certified optimality violation,
    ``active_threshold`` the zero-detection cutoff used when counting the
    active set, ``max_iter`` the total sweep budget.
    """

    tol: float = 1e-8
    max_iter: int = 5000
    active_threshold: float = 1e-8
    kkt_tol: float = 1e-6

    def __post_init__(self):
        for name in ("tol", "max_iter", "active_threshold", "kkt_tol"):
            if getattr(self, name) <= 0:
                raise InvalidParameterError(f"SolverConfig.{name} must be > 0")


DEFAULT_SOLVER_CONFIG = SolverConfig()


@dataclass(frozen=True)
class LassoFit:
    """Result of a random-design solve."""

    theta_hat: np.ndarray
    subgrad: np.ndarray
    active_count: int
    iterations: int
    kkt_residual: float
    objective: float
    converged: bool


@dataclass(frozen=True)
class ProxFit:
    """Result of a fixed-design solve."""

    theta_hat: np.ndarray
    subgrad: np.ndarray
    active_count: int
    iterations: int
    kkt_residual: float
    objective: float
    converged: bool


def moreau_l1(theta: np.ndarray, alpha: float) -> float:
    """Smoothed l1 penalty: sum of the quadratic-linear (Huber) function
    with knee ``alpha`` per coordinate.  alpha = 0 gives ||theta||_1, and
    for all theta, ||theta||_1 - p*alpha/2 <= value <= ||theta||_1."""
    if alpha < 0:
        raise InvalidParameterError(f"alpha must be >= 0, got {alpha}")
    theta = np.asarray(theta, dtype=np.float64)
    a = np.abs(theta)
    if alpha == 0.0:
        return float(a.sum())
    return float(np.where(a <= alpha, theta * theta / (2 * alpha), a - alpha / 2).sum())


def _huber_deriv(theta: np.ndarray, alpha: float) -> np.ndarray:
    return np.clip(theta / alpha, -1.0, 1.0)


def lasso_objective(X, y, lam, theta, alpha=0.0) -> float:
    """(1/2n)||y - X theta||^2 + (lam/n) M_alpha(theta)."""
    n = X.shape[0]
    r = y - X @ theta
    return float(0.5 * (r @ r) / n + lam * moreau_l1(theta, alpha) / n)


def prox_objective(y_f, model: CovarianceModel, lam, zeta, theta, alpha=0.0) -> float:
    """(zeta/2)||y_f - sigma^{1/2} theta||^2 + lam M_alpha(theta)."""
    r = y_f - model.sqrt @ theta
    return float(0.5 * zeta * (r @ r) + lam * moreau_l1(theta, alpha))


def _lasso_kkt(X, y, theta, lam, alpha) -> tuple[np.ndarray, float]:
    """Subgradient t = X'(y - X theta)/lam and its max-norm violation of the
    optimality inclusion.  For lam = 0 the violation is ||X'r||_inf / n."""
    n = X.shape[0]
    grad = X.T @ (y - X @ theta)
    if lam == 0.0:
        return grad, float(np.max(np.abs(grad)) / n) if grad.size else 0.0
    t = grad / lam
    if alpha == 0.0:
        active = theta != 0.0
        viol = np.where(active, np.abs(t - np.sign(theta)), np.maximum(np.abs(t) - 1.0, 0.0))
    else:
        viol = np.abs(t - _huber_deriv(theta, alpha))
    return t, float(viol.max()) if viol.size else 0.0


def _run_lasso(X, y, lam, alpha, cfg, theta_init):
    X = np.asfortranarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, p = X.shape
    if y.shape != (n,):
        raise InvalidParameterError(f"y has shape {y.shape}, expected ({n},)")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y)) and np.isfinite(lam)):
        raise InvalidParameterError("inputs must be finite")
    theta = np.zeros(p) if theta_init is None else np.array(theta_init, dtype=np.float64)
    if theta.shape != (p,):
        raise InvalidParameterError("theta_init has wrong shape")
    total = 0
    tol = cfg.tol
    while True:
        total += _kernels.cd_lasso(X, y, lam, alpha, theta, cfg.max_iter - total, tol)
        subgrad, viol = _lasso_kkt(X, y, theta, lam, alpha)
        if viol <= cfg.kkt_tol or total >= cfg.max_iter:
            break
        tol *= 0.1
    active = int(np.sum(np.abs(theta) > cfg.active_threshold))
    return LassoFit(
        theta_hat=theta,
        subgrad=subgrad,
        active_count=active,
        iterations=total,
        kkt_residual=viol,
        objective=lasso_objective(X, y, lam, theta, alpha),
        converged=viol <= cfg.kkt_tol,
    )


def solve_lasso(X, y, lam, cfg: SolverConfig | None = None, theta_init=None) -> LassoFit:
    """Minimize (1/2n)||y - X theta||^2 + (lam/n)||theta||_1.

    Non-convergence within the sweep budget is reported through
    ``converged=False`` on the returned fit, never as an exception.
    ``theta_init`` enables warm starts across regularization values or
    Monte Carlo replicas; results are warm-start invariant up to solver
    tolerance.
    """
    if lam <= 0:
        raise InvalidParameterError(f"lam must be > 0, got {lam}")
    return _run_lasso(X, y, lam, 0.0, cfg or DEFAULT_SOLVER_CONFIG, theta_init)


def solve_smoothed_lasso(X, y, lam, alpha, cfg: SolverConfig | None = None,
                         theta_init=None) -> LassoFit:
    """Minimize (1/2n)||y - X theta||^2 + (lam/n) M_alpha(theta), alpha > 0.

    The objective is differentiable; convergence is certified through the
    gradient stationarity residual.  lam = 0 reduces to least squares.
    """
    if alpha <= 0:
        raise InvalidParameterError(f"alpha must be > 0, got {alpha}")
    if lam < 0:
        raise InvalidParameterError(f"lam must be >= 0, got {lam}")
    return _run_lasso(X, y, lam, alpha, cfg or DEFAULT_SOLVER_CONFIG, theta_init)


def _prox_kkt(b, q, theta, lam, zeta, alpha):
    t = zeta * (b - q) / lam
    if alpha == 0.0:
        active = theta != 0.0
        viol = np.where(active, np.abs(t - np.sign(theta)), np.maximum(np.abs(t) - 1.0, 0.0))
    else:
        viol = np.abs(t - _huber_deriv(theta, alpha))
    return t, float(viol.max()) if viol.size else 0.0


def _run_prox(y_f, model, lam, zeta, alpha, cfg, theta_init):
    y_f = np.ascontiguousarray(y_f, dtype=np.float64)
    p = model.p
    if y_f.shape != (p,):
        raise InvalidParameterError(f"y_f has shape {y_f.shape}, expected ({p},)")
    theta = np.zeros(p) if theta_init is None else np.array(theta_init, dtype=np.float64)
    b = model.sqrt @ y_f
    q = model.sigma @ theta
    total = 0
    tol = cfg.tol
    while True:
        total += _kernels.cd_prox(model.sigma, b, lam, zeta, alpha, theta,
                                  q, cfg.max_iter - total, tol)
        q = model.sigma @ theta
        subgrad, viol = _prox_kkt(b, q, theta, lam, zeta, alpha)
        if viol <= cfg.kkt_tol or total >= cfg.max_iter:
            break
        tol *= 0.1
    active = int(np.sum(np.abs(theta) > cfg.active_threshold))
    return ProxFit(
        theta_hat=theta,
        subgrad=subgrad,
        active_count=active,
        iterations=total,
        kkt_residual=viol,
        objective=prox_objective(y_f, model, lam, zeta, theta, alpha),
        converged=viol <= cfg.kkt_tol,
    )


def fixed_design_prox(y_f, model: CovarianceModel, lam, zeta,
                      cfg: SolverConfig | None = None, theta_init=None) -> ProxFit:
    """Minimize (zeta/2)||y_f - sigma^{1/2} theta||^2 + lam ||theta||_1.

    Strong convexity (sigma positive definite) makes the minimizer unique.
    For sigma = I this is entrywise soft thresholding at level lam/zeta.
    """
    if zeta <= 0:
        raise InvalidParameterError(f"zeta must be > 0, got {zeta}")
    if lam <= 0:
        raise InvalidParameterError(f"lam must be > 0, got {lam}")
    return _run_prox(y_f, model, lam, zeta, 0.0, cfg or DEFAULT_SOLVER_CONFIG, theta_init)


def smoothed_prox(y_f, model: CovarianceModel, lam, zeta, alpha,
                  cfg: SolverConfig | None = None, theta_init=None) -> ProxFit:
    """Smoothed fixed-design objective with penalty M_alpha; alpha = 0
    delegates to :func:`fixed_design_prox`."""
    if alpha < 0:
        raise InvalidParameterError(f"alpha must be >= 0, got {alpha}")
    if alpha == 0.0:
        return fixed_design_prox(y_f, model, lam, zeta, cfg, theta_init)
    if zeta <= 0:
        raise InvalidParameterError(f"zeta must be > 0, got {zeta}")
    if lam <= 0:
        raise InvalidParameterError(f"lam must be > 0, got {lam}")
    return _run_prox(y_f, model, lam, zeta, alpha, cfg or DEFAULT_SOLVER_CONFIG, theta_init)


def extract_subgradient(X, y, theta_hat, lam, kkt_tol: float = 1e-6) -> np.ndarray:
    """Subgradient of the l1 norm at theta_hat implied by the residual,
    t = X'(y - X theta_hat)/lam.

    Raises
    ------
    StaleFitError
        If theta_hat is not (near-)optimal at this lam: the max norm of t
        exceeds 1 + kkt_tol, or an active coordinate disagrees with its
        sign by more than kkt_tol.
    """
    if lam <= 0:
        raise InvalidParameterError(f"lam must be > 0, got {lam}")
    theta_hat = np.asarray(theta_hat, dtype=np.float64)
    t, viol = _lasso_kkt(np.asarray(X, dtype=np.float64),
                         np.asarray(y, dtype=np.float64), theta_hat, lam, 0.0)
    if viol > kkt_tol:
        raise StaleFitError(
            f"theta_hat is not optimal at lam={lam}: KKT violation {viol:.3e} > {kkt_tol:.0e}"
        )
    return t
