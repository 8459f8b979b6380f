"""Covariance models, random-design data generation, and seeding.

Everything downstream (solvers, fixed-point engine, inference, width
estimation) consumes the immutable containers defined here.  Generation
functions are pure given a :class:`SeedSpec`, so datasets and Monte Carlo
draws are bitwise reproducible and safe to share across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidParameterError, SingularCovarianceError

__all__ = [
    "CovarianceModel",
    "Dataset",
    "Normalization",
    "ProblemInstance",
    "SeedSpec",
    "build_ar_covariance",
    "derive_replica_seed",
    "effective_covariance",
    "factor_covariance",
    "generate_data",
    "residualized_feature",
    "sample_design",
]

_SYMMETRY_RTOL = 1e-10
_EIG_RTOL = 1e-12
_RECONSTRUCT_RTOL = 1e-8


class Normalization(str, enum.Enum):
    """Row covariance convention for the random design.

    ``BY_N`` draws rows from N(0, Sigma/n) (the convention under which the
    fixed-design characterization is stated); ``BY_P`` draws rows from
    N(0, Sigma/p), which keeps the per-row scale fixed as n grows.  The two
    are related by rescaling Sigma; see :func:`effective_covariance`.
    """

    BY_N = "by_n"
    BY_P = "by_p"


@dataclass(frozen=True)
class CovarianceModel:
    """A positive-definite covariance matrix with its cached factorizations.

    Attributes
    ----------
    sigma : (p, p) ndarray
        The covariance matrix.
    sqrt, inv, inv_sqrt : (p, p) ndarray
        Symmetric square root, inverse, and inverse square root, all from
        one symmetric eigendecomposition.
    eigvals : (p,) ndarray
        Eigenvalues in ascending order.
    kappa_min, kappa_max : float
        Extreme eigenvalues.
    """

    sigma: np.ndarray
    sqrt: np.ndarray
    inv: np.ndarray
    inv_sqrt: np.ndarray
    eigvals: np.ndarray
    kappa_min: float
    kappa_max: float

    @property
    def p(self) -> int:
        return self.sigma.shape[0]

    @property
    def kappa_cond(self) -> float:
        return self.kappa_max / self.kappa_min

    def cond_var(self, j: int) -> float:
        """Conditional variance of coordinate ``j`` given all others,
        Sigma_{j,j} - Sigma_{j,-j} (Sigma_{-j,-j})^{-1} Sigma_{-j,j},
        computed as 1 / (Sigma^{-1})_{jj}."""
        return 1.0 / self.inv[j, j]

    def regression_coefs(self, j: int) -> np.ndarray:
        """Population coefficients of feature ``j`` regressed on the others,
        (Sigma_{-j,-j})^{-1} Sigma_{-j,j}, length p-1.  Invariant under
        rescaling of sigma."""
        col = self.inv[:, j]
        return -np.delete(col, j) / col[j]

    def scale(self, c: float) -> "CovarianceModel":
        """Model for ``c * sigma`` without refactorizing (c > 0)."""
        if c <= 0:
            raise InvalidParameterError(f"scale factor must be positive, got {c}")
        rc = np.sqrt(c)
        return CovarianceModel(
            sigma=self.sigma * c,
            sqrt=self.sqrt * rc,
            inv=self.inv / c,
            inv_sqrt=self.inv_sqrt / rc,
            eigvals=self.eigvals * c,
            kappa_min=self.kappa_min * c,
            kappa_max=self.kappa_max * c,
        )


def factor_covariance(sigma: np.ndarray) -> CovarianceModel:
    """Validate and factorize a symmetric positive-definite matrix.

    Uses a symmetric eigendecomposition so that the square root is the
    symmetric one.  Rejects matrices whose smallest eigenvalue is below
    1e-12 times the largest.

    Raises
    ------
    InvalidParameterError
        If ``sigma`` is not square or not symmetric within 1e-10
        (relative, max-entry norm).
    SingularCovarianceError
        If ``sigma`` is numerically singular or indefinite.
    """
    sigma = np.ascontiguousarray(np.asarray(sigma, dtype=np.float64))
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise InvalidParameterError(f"covariance must be square, got shape {sigma.shape}")
    scale_ = np.max(np.abs(sigma))
    if scale_ == 0:
        raise SingularCovarianceError("covariance is identically zero")
    asym = np.max(np.abs(sigma - sigma.T))
    if asym > _SYMMETRY_RTOL * scale_:
        raise InvalidParameterError(
            f"covariance is not symmetric: max asymmetry {asym:.3e} exceeds "
            f"{_SYMMETRY_RTOL:.0e} * max entry {scale_:.3e}"
        )
    sigma = 0.5 * (sigma + sigma.T)
    eigvals, U = np.linalg.eigh(sigma)
    if eigvals[0] <= _EIG_RTOL * eigvals[-1]:
        raise SingularCovarianceError(
            f"covariance is numerically singular: min eigenvalue {eigvals[0]:.3e} "
            f"vs max {eigvals[-1]:.3e}"
        )
    rt = np.sqrt(eigvals)
    sqrt = (U * rt) @ U.T
    inv = (U / eigvals) @ U.T
    inv_sqrt = (U / rt) @ U.T
    sqrt = 0.5 * (sqrt + sqrt.T)
    inv = 0.5 * (inv + inv.T)
    inv_sqrt = 0.5 * (inv_sqrt + inv_sqrt.T)
    model = CovarianceModel(
        sigma=sigma,
        sqrt=sqrt,
        inv=inv,
        inv_sqrt=inv_sqrt,
        eigvals=eigvals,
        kappa_min=float(eigvals[0]),
        kappa_max=float(eigvals[-1]),
    )
    recon = np.max(np.abs(sqrt @ sqrt - sigma))
    if recon > _RECONSTRUCT_RTOL * scale_:
        raise SingularCovarianceError(
            f"square-root reconstruction error {recon:.3e} exceeds tolerance"
        )
    return model


def build_ar_covariance(rho: float, p: int) -> CovarianceModel:
    """Autoregressive covariance Sigma_ij = rho^|i-j|.

    Parameters
    ----------
    rho : float
        Correlation, |rho| < 1.
    p : int
        Dimension, p >= 1.
    """
    if not abs(rho) < 1:
        raise InvalidParameterError(f"AR correlation must satisfy |rho| < 1, got {rho}")
    if p < 1:
        raise InvalidParameterError(f"dimension must be >= 1, got {p}")
    idx = np.arange(p)
    sigma = np.asarray(rho, dtype=np.float64) ** np.abs(idx[:, None] - idx[None, :])
    return factor_covariance(sigma)


@dataclass(frozen=True)
class ProblemInstance:
    """Parameters of one regression problem.

    ``y = X theta_star + sigma_noise * z`` with n rows of X drawn
    independently from N(0, Sigma/n) or N(0, Sigma/p) per ``normalization``.
    """

    theta_star: np.ndarray
    sigma_noise: float
    lam: float
    n: int
    normalization: Normalization = Normalization.BY_N

    def __post_init__(self):
        theta = np.ascontiguousarray(np.asarray(self.theta_star, dtype=np.float64))
        object.__setattr__(self, "theta_star", theta)
        object.__setattr__(self, "normalization", Normalization(self.normalization))
        if theta.ndim != 1 or theta.size < 1:
            raise InvalidParameterError("theta_star must be a nonempty vector")
        if self.n < 1:
            raise InvalidParameterError(f"n must be >= 1, got {self.n}")
        # sigma_noise = 0 is allowed for noiseless data generation; the
        # fixed-point equations additionally require sigma_noise > 0.
        if self.sigma_noise < 0:
            raise InvalidParameterError(f"sigma_noise must be >= 0, got {self.sigma_noise}")
        if self.lam <= 0:
            raise InvalidParameterError(f"lam must be > 0, got {self.lam}")

    @property
    def p(self) -> int:
        return self.theta_star.size

    @property
    def delta(self) -> float:
        """Aspect ratio n/p."""
        return self.n / self.p


@dataclass(frozen=True)
class Dataset:
    """One sampled design/response pair; ``z`` is retained for diagnostics
    so that y - X theta_star - sigma z == 0 exactly as generated."""

    X: np.ndarray
    y: np.ndarray
    z: np.ndarray


# Fixed stream codes; part of the on-disk reproducibility contract.
_STREAM_CODES = {"design": 1, "noise": 2, "mc": 3, "replica": 4}


@dataclass(frozen=True)
class SeedSpec:
    """Root of a deterministic, splittable tree of random streams.

    Streams are derived with ``numpy.random.SeedSequence(master_seed,
    spawn_key=path + (stream_code, index))`` and drive PCG64 generators.
    Identical SeedSpecs yield bitwise-identical draws; distinct stream
    labels, indices, or replica paths yield statistically independent
    streams.
    """

    master_seed: int
    path: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not (0 <= int(self.master_seed) < 2**64):
            raise InvalidParameterError("master_seed must fit in 64 bits")

    def sequence(self, stream: str, index: int = 0) -> np.random.SeedSequence:
        if stream not in _STREAM_CODES:
            raise InvalidParameterError(
                f"unknown stream {stream!r}; expected one of {sorted(_STREAM_CODES)}"
            )
        if index < 0:
            raise InvalidParameterError(f"stream index must be >= 0, got {index}")
        key = self.path + (_STREAM_CODES[stream], int(index))
        return np.random.SeedSequence(int(self.master_seed), spawn_key=key)

    def rng(self, stream: str, index: int = 0) -> np.random.Generator:
        """Fresh generator for the named stream."""
        return np.random.default_rng(self.sequence(stream, index))


def derive_replica_seed(seed: SeedSpec, replica_idx: int) -> SeedSpec:
    """Deterministic, injective seed for replica ``replica_idx``.

    The replica index is appended to the spawn path, so nested derivation
    (replicas of replicas) stays collision free.
    """
    if replica_idx < 0:
        raise InvalidParameterError(f"replica_idx must be >= 0, got {replica_idx}")
    return replace(seed, path=seed.path + (_STREAM_CODES["replica"], int(replica_idx)))


def sample_design(model: CovarianceModel, instance: ProblemInstance, seed: SeedSpec) -> np.ndarray:
    """Draw the n x p design with rows N(0, Sigma/n) or N(0, Sigma/p)."""
    if model.p != instance.p:
        raise InvalidParameterError(
            f"covariance dimension {model.p} != instance dimension {instance.p}"
        )
    denom = instance.n if instance.normalization is Normalization.BY_N else instance.p
    g = seed.rng("design").standard_normal((instance.n, instance.p))
    return (g @ model.sqrt) / np.sqrt(denom)


def generate_data(instance: ProblemInstance, X: np.ndarray, seed: SeedSpec) -> Dataset:
    """Draw the noise and assemble ``y = X theta_star + sigma_noise * z``."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape != (instance.n, instance.p):
        raise InvalidParameterError(
            f"design shape {X.shape} does not match instance ({instance.n}, {instance.p})"
        )
    z = seed.rng("noise").standard_normal(instance.n)
    y = X @ instance.theta_star + instance.sigma_noise * z
    return Dataset(X=X, y=y, z=z)


def residualized_feature(X: np.ndarray, model: CovarianceModel, j: int) -> np.ndarray:
    """Residual of column ``j`` after removing its population projection
    onto the remaining columns.

    Returns x_j - X_{-j} (Sigma_{-j,-j})^{-1} Sigma_{-j,j}.  For a design
    with rows N(0, Sigma/n) the result has i.i.d. N(0, Sigma_{j|-j}/n)
    entries independent of X_{-j}.  The projection coefficients only
    involve ratios of Sigma entries, so any positive rescaling of the
    model gives the same residual.
    """
    X = np.asarray(X, dtype=np.float64)
    p = X.shape[1]
    if p != model.p:
        raise InvalidParameterError(f"design has {p} columns but model has dimension {model.p}")
    if p < 2:
        raise InvalidParameterError("residualization needs at least two features")
    if not 0 <= j < p:
        raise InvalidParameterError(f"feature index {j} out of range for p={p}")
    beta = model.regression_coefs(j)
    return X[:, j] - np.delete(X, j, axis=1) @ beta


def effective_covariance(model: CovarianceModel, instance: ProblemInstance) -> CovarianceModel:
    """Covariance to feed the fixed-design and inference formulas.

    Those formulas are stated for rows ~ N(0, Sigma/n).  Under the BY_P
    convention the rows are N(0, Sigma/p) = N(0, (n/p) Sigma / n), so the
    effective matrix is (n/p) Sigma.  No regularization rescaling is
    performed here or anywhere else; lambda always means the value in the
    objective as written.
    """
    if instance.normalization is Normalization.BY_N:
        return model
    return model.scale(instance.n / instance.p)
