"""Binary factor models with nonstationary covariates and factors."""

__version__ = "0.1.0"

# Re-export main components for convenient imports
from nsbfm.dgp import DgpCase, DgpSpec, SimulatedPanel, simulate
from nsbfm.empirics import (
    IntradayDay,
    JumpPanel,
    PricingReport,
    adf_pvalue,
    build_jump_panel,
    canonical_correlations,
    detect_jumps,
    explained_variation,
    price,
)
from nsbfm.inference import (
    InferenceReport,
    covariances,
    hessian_period,
    hessian_unit,
    infer,
    local_time,
    mse,
    prob_interval,
)
from nsbfm.linkfn import LinkKind, evaluate, k_kernel, m_kernel, psi, psidot
from nsbfm.logging_config import get_logger, setup_logging
from nsbfm.mle import EstimationConfig, fit, loglik, normalize, update_factor, update_unit
from nsbfm.models import FitResult, ModelParams, Panel
from nsbfm.montecarlo import McConfig, McReport, run_mc
from nsbfm.panel_io import load_fit, load_panel, save_fit
from nsbfm.rankselect import RankRegime, RankReport, select_rank
from nsbfm.shutdown import get_shutdown_handler, shutdown_requested
from nsbfm.validation import (
    ConfigError,
    DataValidationError,
    LinkDomainError,
    NormalizationError,
    NsbfmError,
    NumericalError,
    PanelParseError,
)

__all__ = [
    # Version
    "__version__",
    # Link functions
    "LinkKind",
    "evaluate",
    "psi",
    "psidot",
    "m_kernel",
    "k_kernel",
    # Data
    "Panel",
    "ModelParams",
    "FitResult",
    "load_panel",
    "save_fit",
    "load_fit",
    # Simulation
    "DgpCase",
    "DgpSpec",
    "SimulatedPanel",
    "simulate",
    # Estimation
    "EstimationConfig",
    "fit",
    "loglik",
    "normalize",
    "update_factor",
    "update_unit",
    # Factor-number selection
    "RankRegime",
    "RankReport",
    "select_rank",
    # Inference
    "InferenceReport",
    "covariances",
    "hessian_unit",
    "hessian_period",
    "prob_interval",
    "local_time",
    "mse",
    "infer",
    # Monte Carlo
    "McConfig",
    "McReport",
    "run_mc",
    # Empirical pipeline
    "IntradayDay",
    "JumpPanel",
    "PricingReport",
    "detect_jumps",
    "build_jump_panel",
    "adf_pvalue",
    "price",
    "canonical_correlations",
    "explained_variation",
    # Logging
    "setup_logging",
    "get_logger",
    # Shutdown
    "get_shutdown_handler",
    "shutdown_requested",
    # Errors
    "NsbfmError",
    "DataValidationError",
    "PanelParseError",
    "LinkDomainError",
    "ConfigError",
    "NumericalError",
    "NormalizationError",
]
