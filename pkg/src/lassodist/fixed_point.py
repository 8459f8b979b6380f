"""Effective noise and regularization of the fixed-design surrogate.

The pair (tau_star, zeta_star) solves

    tau^2 = sigma^2 + R(tau^2, zeta),      zeta = 1 - df(tau^2, zeta),

where R and df are the in-sample prediction risk and degrees of freedom of
the fixed-design estimate at observation sigma^{1/2} theta_star + tau g.
The system has a unique solution whenever sigma > 0 and the covariance is
invertible, but no algorithm comes with it; we use a damped fixed-point
iteration over Monte Carlo estimates of (R, df) with common random numbers,
which behaves as a contraction in the regimes where the solution is
bounded.  Non-convergence is reported, never silently accepted.

For identity covariance the prox is entrywise soft thresholding and
(R, df) reduce to per-coordinate Gaussian integrals, which gives an exact
scalar oracle used for validation.

Also here: the closed parametric curve omega_star(eps) for the identity
width of a signed support of fraction eps, and its inverse eps_star.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from . import _kernels
from .errors import InvalidParameterError, WidthRegimeWarning
from .model import CovarianceModel, SeedSpec
from .solvers import SolverConfig

__all__ = [
    "FixedPointConfig",
    "FixedPointSolution",
    "OmegaCurve",
    "RiskDfEstimate",
    "TraceRow",
    "eps_star",
    "estimate_risk_df",
    "omega_star",
    "risk_df_identity_closed_form",
    "solve_fixed_point",
]


@dataclass(frozen=True)
class RiskDfEstimate:
    """Monte Carlo (or exact) estimate of the fixed-design risk and
    degrees of freedom at given (tau, zeta)."""

    risk: float
    df: float
    se_risk: float
    se_df: float
    n_mc: int
    flagged: int = 0


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    tau: float
    zeta: float
    risk: float
    df: float
    se_risk: float
    se_df: float


@dataclass(frozen=True)
class FixedPointConfig:
    """Iteration controls.

    Damped updates tau2 <- (1-damping) tau2 + damping (sigma^2 + R) and
    zeta <- clip((1-damping) zeta + damping (1 - df), zeta_floor, 1).
    Common random numbers across iterations make the empirical map
    deterministic, so both residuals can be driven below ``fp_tol``; once
    they are, the sample size grows by ``growth`` and the iteration
    re-converges on the larger sample.
    """

    n_mc: int = 400
    growth: int = 4
    fp_tol: float = 1e-4
    damping: float = 0.5
    max_outer: int = 200
    zeta_floor: float = 1e-3
    solver: SolverConfig = field(
        default=SolverConfig(tol=1e-9, max_iter=1000, active_threshold=1e-8, kkt_tol=1e-7)
    )

    def __post_init__(self):
        if self.n_mc < 1 or self.growth < 1 or self.max_outer < 1:
            raise InvalidParameterError("n_mc, growth, max_outer must be >= 1")
        if not (0 < self.damping <= 1):
            raise InvalidParameterError("damping must be in (0, 1]")
        if self.fp_tol <= 0 or not (0 < self.zeta_floor < 1):
            raise InvalidParameterError("fp_tol > 0 and 0 < zeta_floor < 1 required")


@dataclass(frozen=True)
class FixedPointSolution:
    """Accepted (or best-effort) solution with its iteration trace."""

    tau_star: float
    zeta_star: float
    iterations: int
    residual_tau: float
    residual_zeta: float
    risk: float
    df: float
    se_risk: float
    se_df: float
    n_mc: int
    flagged: int
    converged: bool
    width_warning: bool
    method: str
    trace: tuple


class _BatchState:
    """Warm-start state reused across fixed-point iterations (same draws)."""

    def __init__(self, n_mc: int, p: int):
        self.thetas = np.zeros((n_mc, p))
        self.qs = np.zeros((n_mc, p))

    def grow(self, n_mc: int):
        extra = n_mc - self.thetas.shape[0]
        if extra > 0:
            p = self.thetas.shape[1]
            self.thetas = np.vstack([self.thetas, np.zeros((extra, p))])
            self.qs = np.vstack([self.qs, np.zeros((extra, p))])


def _risk_df_batch(theta_star, model, lam, tau, zeta, n, bmat, st, alpha,
                   solver_cfg, state):
    n_mc = bmat.shape[0]
    risk_num = np.empty(n_mc)
    l0 = np.empty(n_mc, dtype=np.int64)
    inner = np.empty(n_mc)
    iters = np.empty(n_mc, dtype=np.int64)
    ok = np.empty(n_mc, dtype=np.bool_)
    _kernels.prox_batch(
        model.sigma, bmat, st, theta_star, lam, zeta, tau, alpha,
        state.thetas[:n_mc], state.qs[:n_mc],
        solver_cfg.max_iter, solver_cfg.tol, solver_cfg.kkt_tol,
        risk_num, l0, inner, iters, ok,
    )
    risk_i = risk_num / n
    df_i = (l0 / n) if alpha == 0.0 else (inner / (n * tau))
    ddof = 1 if n_mc > 1 else 0
    return RiskDfEstimate(
        risk=float(risk_i.mean()),
        df=float(df_i.mean()),
        se_risk=float(risk_i.std(ddof=ddof) / np.sqrt(n_mc)),
        se_df=float(df_i.std(ddof=ddof) / np.sqrt(n_mc)),
        n_mc=n_mc,
        flagged=int(np.sum(~ok)),
    )


def estimate_risk_df(theta_star, model: CovarianceModel, lam, tau, zeta, n,
                     n_mc: int, seed: SeedSpec, alpha: float = 0.0,
                     solver_cfg: SolverConfig | None = None) -> RiskDfEstimate:
    """Monte Carlo estimate of (R, df) at the given (tau, zeta).

    For each draw g ~ N(0, I_p) the fixed-design prox is solved at
    observation sigma^{1/2} theta_star + tau g; the risk sample is
    ||sigma^{1/2}(theta_hat - theta_star)||^2 / n.  The df sample is the
    active-set fraction ||theta_hat||_0 / n when alpha = 0 (exact per
    sample) and the centered inner product
    <yhat - sigma^{1/2} theta_star, g> / (n tau) when alpha > 0, where the
    active count is no longer the divergence of the prediction map.

    Calls sharing a seed reuse the same draws (common random numbers), so
    differences across (tau, zeta, alpha) are free of resampling noise.
    Samples whose inner solve could not be certified are counted in
    ``flagged`` (they still enter the averages).
    """
    if tau <= 0 or zeta <= 0:
        raise InvalidParameterError("tau and zeta must be > 0")
    if n_mc < 1:
        raise InvalidParameterError("n_mc must be >= 1")
    if alpha < 0:
        raise InvalidParameterError("alpha must be >= 0")
    theta_star = np.ascontiguousarray(theta_star, dtype=np.float64)
    if theta_star.shape != (model.p,):
        raise InvalidParameterError("theta_star does not match model dimension")
    g = seed.rng("mc").standard_normal((n_mc, model.p))
    st = model.sigma @ theta_star
    bmat = st[None, :] + tau * (g @ model.sqrt)
    state = _BatchState(n_mc, model.p)
    cfg = solver_cfg or FixedPointConfig().solver
    return _risk_df_batch(theta_star, model, lam, tau, zeta, n, bmat, st,
                          alpha, cfg, state)


def risk_df_identity_closed_form(theta_star, lam, tau, zeta, delta) -> RiskDfEstimate:
    """Exact (R, df) for identity covariance via per-coordinate Gaussian
    integrals of the soft-threshold map at threshold lam/zeta.

    The caller asserts sigma = I; ``delta`` is the aspect ratio n/p.
    Standard errors are zero (no sampling).
    """
    if tau <= 0 or zeta <= 0 or delta <= 0:
        raise InvalidParameterError("tau, zeta, delta must be > 0")
    m = np.atleast_1d(np.asarray(theta_star, dtype=np.float64))
    thr = lam / zeta
    a1 = (thr - m) / tau
    a2 = (thr + m) / tau
    # E[(soft(m + tau G, thr) - m)^2] split over the three threshold regions
    t1 = tau**2 * (norm.sf(a1) + a1 * norm.pdf(a1)) - 2 * thr * tau * norm.pdf(a1) \
        + thr**2 * norm.sf(a1)
    t2 = tau**2 * (norm.sf(a2) + a2 * norm.pdf(a2)) - 2 * thr * tau * norm.pdf(a2) \
        + thr**2 * norm.sf(a2)
    t3 = m * m * (norm.cdf(a1) - norm.cdf(-a2))
    risk = float(np.mean(t1 + t2 + t3) / delta)
    df = float(np.mean(norm.sf(a1) + norm.sf(a2)) / delta)
    return RiskDfEstimate(risk=risk, df=df, se_risk=0.0, se_df=0.0, n_mc=0)


def solve_fixed_point(theta_star, model: CovarianceModel | None, lam, sigma_noise, n,
                      cfg: FixedPointConfig | None = None,
                      seed: SeedSpec | None = None, alpha: float = 0.0,
                      method: str = "mc") -> FixedPointSolution:
    """Solve the two fixed-point equations for (tau_star, zeta_star).

    Parameters
    ----------
    theta_star : array
        Signal vector (length p).
    model : CovarianceModel or None
        Covariance of the design rows scaled so rows ~ N(0, sigma/n); pass
        the effective covariance under the BY_P convention.  May be None
        only for ``method="closed_form"``.
    lam, sigma_noise, n : float, float, int
        Regularization, noise level (> 0), and sample count.
    alpha : float
        Smoothing knee for the penalty; 0 is the plain l1 case.
    method : str
        "mc" (Monte Carlo, any covariance) or "closed_form" (identity
        covariance scalar oracle, alpha = 0 only).

    Returns a solution flagged ``converged=False`` with the full trace if
    the damped iteration does not settle; a persistently floored zeta
    additionally raises :class:`WidthRegimeWarning`, which indicates n/p is
    likely below the squared cone width so no solution need exist.
    """
    cfg = cfg or FixedPointConfig()
    theta_star = np.ascontiguousarray(theta_star, dtype=np.float64)
    p = theta_star.size
    if sigma_noise <= 0:
        raise InvalidParameterError("sigma_noise must be > 0 for the fixed point")
    if lam <= 0 or n < 1:
        raise InvalidParameterError("lam must be > 0 and n >= 1")
    if alpha < 0:
        raise InvalidParameterError("alpha must be >= 0")
    if method not in ("mc", "closed_form"):
        raise InvalidParameterError(f"unknown method {method!r}")
    if method == "closed_form":
        if alpha != 0.0:
            raise InvalidParameterError("closed_form supports alpha = 0 only")
        tau2 = sigma_noise**2 + float(theta_star @ theta_star) / n
        evaluate = lambda tau, zeta, n_mc: risk_df_identity_closed_form(
            theta_star, lam, tau, zeta, n / p)
        phases = [(0, cfg.max_outer)]
    else:
        if model is None or model.p != p:
            raise InvalidParameterError("mc method needs a covariance model matching theta_star")
        if seed is None:
            seed = SeedSpec(0)
        n_big = cfg.n_mc * cfg.growth
        g_all = seed.rng("mc").standard_normal((n_big, p))
        st = model.sigma @ theta_star
        sg_all = g_all @ model.sqrt
        tau2 = sigma_noise**2 + float(theta_star @ st) / n
        state = _BatchState(n_big, p)

        def evaluate(tau, zeta, n_mc):
            bmat = st[None, :] + tau * sg_all[:n_mc]
            return _risk_df_batch(theta_star, model, lam, tau, zeta, n,
                                  bmat, st, alpha, cfg.solver, state)

        phases = [(cfg.n_mc, cfg.max_outer)]
        if cfg.growth > 1:
            phases.append((n_big, cfg.max_outer))

    zeta = 1.0
    trace = []
    it_total = 0
    floor_run = 0
    warned = False
    converged = False
    est = None
    res_tau = res_zeta = np.inf
    for n_mc, budget in phases:
        converged = False
        for _ in range(budget):
            if it_total >= cfg.max_outer:
                break
            tau = float(np.sqrt(tau2))
            est = evaluate(tau, zeta, n_mc)
            it_total += 1
            trace.append(TraceRow(it_total, tau, zeta, est.risk, est.df,
                                  est.se_risk, est.se_df))
            res_tau = abs(tau2 - sigma_noise**2 - est.risk)
            res_zeta = abs(zeta - 1.0 + est.df)
            if res_tau < cfg.fp_tol and res_zeta < cfg.fp_tol:
                converged = True
                break
            tau2 = (1 - cfg.damping) * tau2 + cfg.damping * (sigma_noise**2 + est.risk)
            znew = (1 - cfg.damping) * zeta + cfg.damping * (1.0 - est.df)
            if znew < cfg.zeta_floor:
                znew = cfg.zeta_floor
                floor_run += 1
                if floor_run >= 3 and not warned:
                    warnings.warn(
                        "effective regularization pinned at its floor; the "
                        "aspect ratio n/p appears to be below the squared "
                        "width of the signal's descent cone and the reported "
                        "values are unreliable",
                        WidthRegimeWarning,
                    )
                    warned = True
            else:
                floor_run = 0
            zeta = min(znew, 1.0)
        if not converged:
            break
    return FixedPointSolution(
        tau_star=float(np.sqrt(tau2)),
        zeta_star=float(zeta),
        iterations=it_total,
        residual_tau=float(res_tau),
        residual_zeta=float(res_zeta),
        risk=est.risk,
        df=est.df,
        se_risk=est.se_risk,
        se_df=est.se_df,
        n_mc=est.n_mc,
        flagged=est.flagged,
        converged=converged,
        width_warning=warned,
        method=method,
        trace=tuple(trace),
    )


def _excess(a: float) -> float:
    """phi(a) - a * Phi(-a), the positive decreasing tail functional."""
    return float(norm.pdf(a) - a * norm.sf(a))


def _support_fraction(a: float) -> float:
    t = _excess(a)
    return 2 * t / (a + 2 * t) if (a + 2 * t) > 0 else 0.0


class OmegaCurve:
    """Identity-covariance width of the signed-support descent cone as a
    function of the support fraction eps, in closed parametric form.

    The internal parameter a >= 0 satisfies
    eps = 2[phi(a) - a Phi(-a)] / (a + 2[phi(a) - a Phi(-a)]), and then
    omega^2 = eps + 2 (1 - eps) Phi(-a).  The curve increases strictly from
    0 to 1 as eps runs over (0, 1).
    """

    _A_MAX = 60.0

    def alpha(self, eps: float) -> float:
        """Parametric variable solving the support-fraction equation."""
        if not 0 < eps < 1:
            raise InvalidParameterError(f"eps must be in (0, 1), got {eps}")
        return brentq(lambda a: _support_fraction(a) - eps, 1e-13, self._A_MAX,
                      xtol=1e-13, rtol=1e-15)

    def value(self, eps: float) -> float:
        """omega_star(eps), to absolute accuracy 1e-10 or better."""
        a = self.alpha(eps)
        w2 = eps + 2 * (1 - eps) * norm.sf(a)
        return float(np.sqrt(w2))

    def inverse(self, omega: float) -> float:
        """Largest eps with value(eps) <= omega; 0 or 1 at the extremes."""
        lo, hi = 1e-14, 1 - 1e-14
        if omega >= 1.0:
            return 1.0
        if omega <= 0.0:
            return 0.0
        if omega <= self.value(lo):
            return 0.0
        if omega >= self.value(hi):
            return 1.0
        return brentq(lambda e: self.value(e) - omega, lo, hi, xtol=1e-14, rtol=1e-15)


_CURVE = OmegaCurve()


def omega_star(eps: float) -> float:
    """Identity-covariance cone width for support fraction eps in (0, 1)."""
    return _CURVE.value(eps)


def eps_star(kappa_cond: float, delta: float) -> float:
    """Largest support fraction whose identity width stays below
    sqrt(delta / kappa_cond); clipped to [0, 1]."""
    if kappa_cond < 1:
        raise InvalidParameterError(f"kappa_cond must be >= 1, got {kappa_cond}")
    if delta <= 0:
        raise InvalidParameterError(f"delta must be > 0, got {delta}")
    target = np.sqrt(delta / kappa_cond)
    return _CURVE.inverse(float(target))
