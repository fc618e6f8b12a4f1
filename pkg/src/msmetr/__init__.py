"""Bayesian Markov-switching multiple-equation tensor regression."""
from .baselines import FitReport, compare_methods, fit_lasso, fit_ols, msmetr_forecast
from .diagnostics import acf, chain_summary, hpd_region, state_accuracy
from .io import load_dataset, read_draws, write_dataset, write_draws
from .model import Dataset, StateParams, init_params, loglik_path
from .prior import (
    Hyperparameters,
    benchmark_hyperparameters,
    default_hyperparameters,
    elicit,
    prior_entry_variance,
)
from .sampler import ChainConfig, PosteriorDraws, run_chain, run_chains
from .simulation import SimSetting, gen_dataset, named_setting
from .tensor import (
    DimensionError,
    FactorSet,
    Tensor,
    backfit_terms,
    hadamard_compose,
    inner_product,
    mode_slice_vec,
    set_mode_slice_vec,
)

__version__ = "0.1.0"
