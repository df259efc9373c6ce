"""Gamma data-augmented posterior sampling for multinomial logistic regression."""

from .augmentation import (
    LatentPhi,
    augmented_joint_log_density,
    augmented_log_conditional,
    draw_phi,
)
from .diagnostics import coverage, credible_interval, ess, esr, summarize
from .errors import (
    DataLoadError,
    DegenerateChainWarning,
    InvalidArgumentError,
    NumericalRangeError,
    SamplerError,
    UnsupportedConfigurationError,
)
from .model import (
    CoefMatrix,
    Dataset,
    Prior,
    load_dataset,
    log_likelihood,
    log_posterior_unaugmented,
    log_prior,
    softmax_probs,
)
from .rng import CounterRNG
from .samplers import (
    AugmentedState,
    ChainOutput,
    SamplerConfig,
    SamplerKind,
    autotune,
    daess_scan,
    damh_scan,
    naive_mh_scan,
    run_chain,
)
from .simharness import DgpConfig, generate_data, run_benchmark, run_coverage_experiment

__version__ = "0.1.0"
