"""Monte Carlo estimation of the standard Gaussian width of the
signed-support descent cone under a covariance model.

For a sign pattern x with support S, the cone is
K = {v : <x_S, w_S> + ||w_{S^c}||_1 <= 0, w = sigma^{-1/2} v} and one width
sample at a standard normal draw g is

    max { <v, g> / p : v in K, ||v||^2 / p <= 1 }.

Because K is a cone, the inner maximum equals ||P_K(g)||_2 / sqrt(p) where
P_K is Euclidean projection onto K, attained at v = sqrt(p) P_K(g) /
||P_K(g)||.  We compute the projection in whitened coordinates, where the
cone constraint has an exact closed-form projection (a one-dimensional
piecewise-linear root), by accelerated projected gradient on the strongly
convex quadratic (1/2)||sigma^{1/2} w - g||^2.  Every iterate is feasible,
so the reported value is a certified lower bound on the true maximum.

The comparison n/p versus the squared median width locates the phase
transition beyond which Lasso risk and sparsity are uncontrolled.  Only
this standard width is computed; it is conjectured, not proven, to match
the functional width entering the theory, and outputs are labeled
accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySupportError, InvalidParameterError
from .model import CovarianceModel, SeedSpec

__all__ = [
    "ConeSpec",
    "WidthEstimate",
    "WidthSample",
    "WidthSolverConfig",
    "estimate_width",
    "project_signed_cone",
    "sample_width",
    "signed_support",
]

_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


def signed_support(theta_star) -> np.ndarray:
    """Entrywise sign pattern of a signal, with sign(0) = 0.

    Raises :class:`EmptySupportError` for an identically zero vector,
    since the associated cone would be degenerate.
    """
    theta_star = np.asarray(theta_star, dtype=np.float64)
    x = np.sign(theta_star)
    if not np.any(x != 0):
        raise EmptySupportError("cannot take the signed support of the zero vector")
    return x


@dataclass(frozen=True)
class ConeSpec:
    """A signed support together with the covariance defining the cone."""

    x: np.ndarray
    model: CovarianceModel

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        object.__setattr__(self, "x", x)
        if x.ndim != 1 or x.size != self.model.p:
            raise InvalidParameterError("sign vector does not match model dimension")
        if not np.all(np.isin(x, (-1.0, 0.0, 1.0))):
            raise InvalidParameterError("sign vector entries must be in {-1, 0, +1}")
        if not np.any(x != 0):
            raise EmptySupportError("sign vector has empty support")

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.x)

    @property
    def support_fraction(self) -> float:
        return self.support.size / self.x.size


@dataclass(frozen=True)
class WidthSolverConfig:
    feas_tol: float = 1e-6
    max_iter: int = 5000
    tol: float = 1e-10

    def __post_init__(self):
        if self.feas_tol <= 0 or self.tol <= 0 or self.max_iter < 1:
            raise InvalidParameterError("feas_tol, tol > 0 and max_iter >= 1 required")


@dataclass(frozen=True)
class WidthSample:
    """One realization of the inner maximization.

    ``value`` = <v, g>/p at the feasible maximizer ``v`` (||v||^2 = p when
    nonzero); ``feas_gap`` is the relative cone-constraint violation at v
    (zero up to roundoff by construction); ``opt_residual`` is the scaled
    projected-gradient fixed-point residual certifying optimality.
    """

    value: float
    v: np.ndarray
    iterations: int
    converged: bool
    feas_gap: float
    opt_residual: float


@dataclass(frozen=True)
class WidthEstimate:
    """Aggregated width samples.  Aggregates (mean, median, quantiles,
    p_median_sq) are over converged samples only; flagged samples are
    counted and, above a 10% fraction, mark the estimate unreliable."""

    values: np.ndarray
    ok: np.ndarray
    iterations: np.ndarray
    mean: float
    median: float
    quantiles: dict
    p_median_sq: float
    n_samples: int
    flagged: int
    reliable: bool


def project_signed_cone(u: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Euclidean projection of u onto {w : <x_S, w_S> + ||w_{S^c}||_1 <= 0}.

    The multiplier theta >= 0 solves a piecewise-linear equation whose
    breakpoints are the magnitudes |u_j|, j outside S; the projection is
    then w_S = u_S - theta x_S and soft thresholding at theta off S.
    """
    u = np.asarray(u, dtype=np.float64)
    S = x != 0
    lin = float(x[S] @ u[S])
    off = u[~S]
    h0 = lin + np.abs(off).sum()
    if h0 <= 0:
        return u.copy()
    s = float(S.sum())
    a_sorted = np.sort(np.abs(off))
    m = a_sorted.size
    csum = np.concatenate([[0.0], np.cumsum(a_sorted)])
    tot = csum[-1]
    k = np.arange(m + 1)
    cand = (lin + tot - csum) / (s + m - k)
    lo = np.concatenate([[0.0], a_sorted])
    hi = np.concatenate([a_sorted, [np.inf]])
    valid = (cand >= lo - 1e-12) & (cand <= hi + 1e-12) & (cand >= 0)
    idx = np.flatnonzero(valid)
    if idx.size == 0:  # fall back to the last segment (slope -s)
        theta = cand[-1]
    else:
        theta = cand[idx[0]]
    w = u.copy()
    w[S] = u[S] - theta * x[S]
    w[~S] = np.sign(off) * np.maximum(np.abs(off) - theta, 0.0)
    return w


def _cone_gap(cone: ConeSpec, v: np.ndarray) -> float:
    """Relative violation of the cone constraint at v."""
    w = cone.model.inv_sqrt @ v
    S = cone.x != 0
    h = float(cone.x[S] @ w[S] + np.abs(w[~S]).sum())
    norm_v = float(np.linalg.norm(v))
    return max(h, 0.0) / max(norm_v, 1e-300)


def sample_width(cone: ConeSpec, g: np.ndarray,
                 cfg: WidthSolverConfig | None = None) -> WidthSample:
    """Solve one realization of the constrained maximization at draw g.

    Deterministic given (cone, g, cfg).  The origin is always feasible, so
    the value is nonnegative; a non-converged solve is flagged for
    exclusion by the caller.
    """
    cfg = cfg or WidthSolverConfig()
    model = cone.model
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (model.p,):
        raise InvalidParameterError("g does not match the cone dimension")
    sigma = model.sigma
    b = model.sqrt @ g
    L = model.kappa_max
    x = cone.x
    w = project_signed_cone(model.inv_sqrt @ g, x)
    z = w.copy()
    t_acc = 1.0
    f_prev = np.inf
    converged = False
    it = 0
    resid = np.inf
    while it < cfg.max_iter:
        it += 1
        grad = sigma @ z - b
        w_new = project_signed_cone(z - grad / L, x)
        f = 0.5 * w_new @ sigma @ w_new - b @ w_new
        if f > f_prev:  # adaptive restart of the momentum
            z = w.copy()
            t_acc = 1.0
            grad = sigma @ z - b
            w_new = project_signed_cone(z - grad / L, x)
            f = 0.5 * w_new @ sigma @ w_new - b @ w_new
        step = np.linalg.norm(w_new - w)
        scale = max(1.0, np.linalg.norm(w_new))
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t_acc * t_acc))
        z = w_new + ((t_acc - 1) / t_next) * (w_new - w)
        w, t_acc, f_prev = w_new, t_next, f
        if step < cfg.tol * scale:
            # certify with the plain projected-gradient residual at w
            grad = sigma @ w - b
            w_chk = project_signed_cone(w - grad / L, x)
            resid = float(np.linalg.norm(w_chk - w) / scale)
            if resid <= 10 * cfg.tol:
                converged = True
                break
            z = w_chk.copy()
            w = w_chk
            t_acc = 1.0
    v_hat = model.sqrt @ w
    norm_v = float(np.linalg.norm(v_hat))
    p = model.p
    if norm_v <= 1e-14 * np.linalg.norm(g):
        v = np.zeros(p)
        value = 0.0
    else:
        v = v_hat * (np.sqrt(p) / norm_v)
        value = max(float(v @ g) / p, 0.0)
    return WidthSample(value=value, v=v, iterations=it, converged=converged,
                       feas_gap=_cone_gap(cone, v) if norm_v > 0 else 0.0,
                       opt_residual=resid)


def estimate_width(cone: ConeSpec, n_samples: int, seed: SeedSpec,
                   cfg: WidthSolverConfig | None = None) -> WidthEstimate:
    """Average the per-realization maxima over independent Gaussian draws.

    Reports mean, median, quantiles, and p * median^2; the last is the
    quantity to compare against the aspect ratio n/p when locating the
    phase transition.
    """
    if n_samples < 1:
        raise InvalidParameterError("n_samples must be >= 1")
    cfg = cfg or WidthSolverConfig()
    rng = seed.rng("mc")
    p = cone.model.p
    values = np.empty(n_samples)
    ok = np.empty(n_samples, dtype=bool)
    iters = np.empty(n_samples, dtype=np.int64)
    for i in range(n_samples):
        g = rng.standard_normal(p)
        s = sample_width(cone, g, cfg)
        values[i] = s.value
        ok[i] = s.converged and s.feas_gap <= cfg.feas_tol
        iters[i] = s.iterations
    flagged = int(np.sum(~ok))
    accepted = values[ok] if flagged < n_samples else values[:0]
    if accepted.size:
        mean = float(accepted.mean())
        median = float(np.median(accepted))
        quantiles = {q: float(np.quantile(accepted, q)) for q in _QUANTILES}
    else:
        mean = median = float("nan")
        quantiles = {q: float("nan") for q in _QUANTILES}
    return WidthEstimate(
        values=values,
        ok=ok,
        iterations=iters,
        mean=mean,
        median=median,
        quantiles=quantiles,
        p_median_sq=float(p * median**2) if accepted.size else float("nan"),
        n_samples=n_samples,
        flagged=flagged,
        reliable=flagged <= 0.10 * n_samples,
    )
