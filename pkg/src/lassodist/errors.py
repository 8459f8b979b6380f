"""Exception types shared across the package."""


class LassodistError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(LassodistError, ValueError):
    """A parameter is outside its admissible range."""


class SingularCovarianceError(LassodistError, ValueError):
    """Covariance matrix is (numerically) singular or not positive definite."""


class DegenerateDofError(LassodistError, ValueError):
    """The fitted active set has size >= n, so the degrees-of-freedom
    correction 1/(1 - ||theta_hat||_0 / n) is undefined.  This signals a
    solver failure or an undersampled regime, not a recoverable condition."""


class StaleFitError(LassodistError, ValueError):
    """A supplied estimate is not an optimum of the stated problem
    (its implied subgradient violates the optimality conditions)."""


class EmptySupportError(LassodistError, ValueError):
    """A signed support was requested for an identically zero vector."""


class NonConvergenceError(LassodistError, RuntimeError):
    """An iterative procedure failed to converge and the caller required
    convergence (batch experiments abort with the trace attached)."""


class ConfigError(LassodistError, ValueError):
    """An experiment configuration file is malformed or inconsistent."""


class WidthRegimeWarning(UserWarning):
    """The effective regularization hit its floor during the fixed-point
    iteration: the aspect ratio n/p is likely below the squared Gaussian
    width of the signal's descent cone, where the fixed point need not
    exist and Lasso risk/sparsity are uncontrolled."""
