"""Distributional characterization of the Lasso under correlated Gaussian
designs: solvers, the effective noise/regularization fixed point,
degrees-of-freedom adjusted debiasing with confidence intervals, exact
leave-one-out tests, Gaussian cone widths, and a simulation harness.
"""

from .errors import (
    ConfigError,
    DegenerateDofError,
    EmptySupportError,
    InvalidParameterError,
    LassodistError,
    NonConvergenceError,
    SingularCovarianceError,
    StaleFitError,
    WidthRegimeWarning,
)
from .fixed_point import (
    FixedPointConfig,
    FixedPointSolution,
    OmegaCurve,
    RiskDfEstimate,
    eps_star,
    estimate_risk_df,
    omega_star,
    risk_df_identity_closed_form,
    solve_fixed_point,
)
from .gaussian_width import (
    ConeSpec,
    WidthEstimate,
    WidthSample,
    WidthSolverConfig,
    estimate_width,
    project_signed_cone,
    sample_width,
    signed_support,
)
from .inference import (
    ConfidenceReport,
    DebiasedEstimate,
    ExactTestInversion,
    LooResult,
    debias,
    debiased_cis,
    exact_test,
    invert_exact_test,
    loo_statistic,
    no_dof_ci,
    tau_hat,
)
from .model import (
    CovarianceModel,
    Dataset,
    Normalization,
    ProblemInstance,
    SeedSpec,
    build_ar_covariance,
    derive_replica_seed,
    effective_covariance,
    factor_covariance,
    generate_data,
    residualized_feature,
    sample_design,
)
from .solvers import (
    LassoFit,
    ProxFit,
    SolverConfig,
    extract_subgradient,
    fixed_design_prox,
    lasso_objective,
    moreau_l1,
    prox_objective,
    smoothed_prox,
    solve_lasso,
    solve_smoothed_lasso,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
