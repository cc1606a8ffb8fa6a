"""Quadratic hedging of European options under asymmetric GARCH dynamics
with Gaussian or normal-inverse-Gaussian innovations.

The package covers the full workflow: innovation distributions with exact
cumulant-generating-function arithmetic (:mod:`~garchhedge.distributions`),
the NGARCH(1,1) recursion and variance filter (:mod:`~garchhedge.model`),
change-of-measure kernels (:mod:`~garchhedge.measures`), a path-ensemble
Monte Carlo engine with an empirical martingale correction
(:mod:`~garchhedge.engine`), locally risk-minimizing and sensitivity-based
hedge ratios (:mod:`~garchhedge.hedging`), the continuous-time small-step
limit of the variance hedge multiplier (:mod:`~garchhedge.limits`),
maximum-likelihood estimation (:mod:`~garchhedge.estimation`), and a
weekly-rebalanced hedging backtest over option-quote panels
(:mod:`~garchhedge.backtest`).
"""

from .backtest import (
    BacktestReport,
    ContractTrack,
    ReplicationResult,
    TrackView,
    bin_report,
    build_surfaces,
    build_tracks,
    filter_contracts,
    garch_states,
    load_index_csv,
    load_quotes_csv,
    run_backtest,
    run_replication,
    synthetic_market,
)
from .black_scholes import (
    IvSurface,
    adhoc_bs_delta,
    bs_delta,
    bs_price,
    bs_vega,
    fit_iv_surface,
    implied_vol,
)
from .distributions import CgfValue, Gaussian, Nig, standardize_nig
from .engine import (
    PathEnsemble,
    SimSpec,
    apply_ems,
    conditional_expectation,
    ensemble_under_kernel,
    load_ensemble,
    save_ensemble,
    simulate,
)
from .errors import (
    DegenerateBlockError,
    DegenerateVarianceError,
    DomainError,
    FrequencyError,
    GarchHedgeError,
    InadmissibleHError,
    InsufficientDataError,
    InvalidMeasureError,
    InversionError,
    MissingQuoteError,
    NoRootError,
    NonConvergenceError,
    NonFiniteError,
    NonStationaryError,
    ParamError,
    SignedMeasureWarning,
)
from .estimation import FitResult, fit, load_model, save_model, simulate_returns
from .hedging import (
    HedgeRequest,
    HedgeResult,
    call_payoff,
    compute_hedges,
    delta_s,
    delta_sv,
    lrm_p_hedge,
    lrm_q_hedge,
    put_payoff,
    total_derivative_vm,
    vega_multiplier_p,
    vega_multiplier_q,
    vega_multiplier_q_mc,
    vega_sigma2,
)
from .limits import (
    HFamily,
    LimitParams,
    limit_diffusion_coefficients,
    limit_drift_coefficients,
    limit_market_price_of_risk,
    limit_params_from_ngarch,
    limit_vega_multiplier,
    make_h_family,
    market_price_of_risk,
    vm_convergence_study,
    vm_of_h,
)
from .measures import (
    PricingKernel,
    egp_rn_derivative,
    esscher_rn_derivative,
    esscher_theta,
    esscher_theta_bisection,
    mmm_factors,
)
from .model import (
    FilterResult,
    NgarchParams,
    VarianceState,
    filter_variance,
    step_p,
    step_q_egp,
    unconditional_variance,
    variance_update,
)

__version__ = "0.1.0"

__all__ = [
    "BacktestReport",
    "CgfValue",
    "ContractTrack",
    "DegenerateBlockError",
    "DegenerateVarianceError",
    "DomainError",
    "FilterResult",
    "FitResult",
    "FrequencyError",
    "GarchHedgeError",
    "Gaussian",
    "HFamily",
    "HedgeRequest",
    "HedgeResult",
    "InadmissibleHError",
    "InsufficientDataError",
    "InvalidMeasureError",
    "InversionError",
    "IvSurface",
    "LimitParams",
    "MissingQuoteError",
    "NgarchParams",
    "Nig",
    "NoRootError",
    "NonConvergenceError",
    "NonFiniteError",
    "NonStationaryError",
    "ParamError",
    "PathEnsemble",
    "PricingKernel",
    "ReplicationResult",
    "SignedMeasureWarning",
    "SimSpec",
    "TrackView",
    "VarianceState",
    "adhoc_bs_delta",
    "apply_ems",
    "bin_report",
    "bs_delta",
    "bs_price",
    "bs_vega",
    "build_surfaces",
    "build_tracks",
    "call_payoff",
    "compute_hedges",
    "conditional_expectation",
    "delta_s",
    "delta_sv",
    "egp_rn_derivative",
    "ensemble_under_kernel",
    "esscher_rn_derivative",
    "esscher_theta",
    "esscher_theta_bisection",
    "filter_contracts",
    "filter_variance",
    "fit",
    "fit_iv_surface",
    "garch_states",
    "implied_vol",
    "limit_diffusion_coefficients",
    "limit_drift_coefficients",
    "limit_market_price_of_risk",
    "limit_params_from_ngarch",
    "limit_vega_multiplier",
    "load_ensemble",
    "load_index_csv",
    "load_model",
    "load_quotes_csv",
    "lrm_p_hedge",
    "lrm_q_hedge",
    "make_h_family",
    "market_price_of_risk",
    "mmm_factors",
    "put_payoff",
    "run_backtest",
    "run_replication",
    "save_ensemble",
    "save_model",
    "simulate",
    "simulate_returns",
    "standardize_nig",
    "step_p",
    "step_q_egp",
    "synthetic_market",
    "total_derivative_vm",
    "unconditional_variance",
    "variance_update",
    "vega_multiplier_p",
    "vega_multiplier_q",
    "vega_multiplier_q_mc",
    "vega_sigma2",
    "vm_convergence_study",
    "vm_of_h",
]
