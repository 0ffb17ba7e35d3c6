"""Finite Wilson-Cowan networks with electrical coupling and their Gaussian mean-field limit."""

from .config import ConfigError, RunConfig, config_from_dict, load_config
from .meanfield import IntegrationError, MeanFieldSolution, MeanFieldState, solve
from .metrics import (
    ConvergenceReport,
    GaussianRef,
    convergence_study,
    coupled_distance,
    tail_decay_fit,
    w1_marginal,
)
from .model import (
    ConstantInput,
    DomainError,
    LogisticSigmoid,
    ModelParams,
    TableInput,
    TabulatedSigmoid,
    ValidationError,
    reference_params,
)
from .moments import GaussianParams, QuadratureRule, s_moment, xs_moment
from .network import BlowUpError, NetworkState, PathEnsemble, simulate
from .noise import NoiseStream
from .sampler import marginal_law, sample_paths

__version__ = "0.1.0"
