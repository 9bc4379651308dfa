"""Negative-binomial randomized gamma dynamical systems for count time series."""
from .chains import ChainConfig, ChainState, conditional_moments, simulate_realizations, step
from .errors import (AllocationError, ConfigError, DataFormatError, NbrgdsError,
                     ParameterError, StructuralError)
from .inference import GibbsSampler, MaskSpec, PosteriorTrace, Schedule, run_gibbs
from .model import (CountMatrix, LatentState, ModelConfig, generate_counts, poisson_rate,
                    poisson_rates, sample_prior)
from .rng import RngStream, generator, stream

__all__ = [
    "ChainConfig", "ChainState", "conditional_moments", "simulate_realizations", "step",
    "AllocationError", "ConfigError", "DataFormatError", "NbrgdsError", "ParameterError",
    "StructuralError", "GibbsSampler", "MaskSpec", "PosteriorTrace", "Schedule", "run_gibbs",
    "CountMatrix", "LatentState", "ModelConfig", "generate_counts", "poisson_rate",
    "poisson_rates", "sample_prior", "RngStream", "generator", "stream",
]
__version__ = "0.1.0"
