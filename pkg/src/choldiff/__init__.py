"""Bayesian inference for discretely observed correlated diffusions.

Data-augmentation MCMC with a Cholesky-parameterised diffusion matrix
and a unit-volatility path reparametrisation: latent diffusion bridges
between observations are sampled jointly with the drift parameters and
the Cholesky entries, avoiding the degeneracy between imputed paths and
volatility parameters as the augmentation level grows.
"""
from .cholesky import (
    CholeskyFactor,
    CorrScaleSpec,
    DiagonalRejection,
    PositiveDefiniteError,
    SparsityMask,
    build_V,
    chol_decompose,
    chol_to_corr,
    corr_to_chol,
    perturb_entry,
)
from .config import ConfigError, RunConfig, load_config, parse_config
from .diagnostics import (
    Diagnostics,
    autocorrelation,
    compute_diagnostics,
    integrated_autocorr_time,
    summary_stats,
)
from .kernels import available_backends, backend_name
from .likelihood import (
    AugmentedPath,
    LogLikBreakdown,
    SVAugmentedPath,
    euler_loglik,
    girsanov_log,
    loglik_reparam,
    loglik_sv,
)
from .models import (
    MODEL_REGISTRY,
    DiffusionSpec,
    DomainError,
    NumericalError,
    ObservationSet,
    PathLattice,
    build_bivariate_heston,
    build_bm_drift,
    build_mv_cir,
    diffusion_matrix,
    quadratic_variation,
)
from .sampling import (
    InitializationError,
    PriorSpec,
    ProposalConfig,
    ReducibleSampler,
    SVSampler,
    default_priors,
    heston_build_C,
    heston_sparsity_mask,
    run_sampler,
)
from .simulate import SimulationDomainError, simulate_euler
from .transform import (
    TransformContext,
    TransformRangeError,
    drift_U,
    inverse_H,
    jacobian_logdet,
    transform_H,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
