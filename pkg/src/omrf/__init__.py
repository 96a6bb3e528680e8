"""Bayesian inference for ordinal Markov random fields.

Exact, pseudo-likelihood, empirical and double Metropolis-Hastings samplers,
coordinate-rescaled (CoRe) pseudo-posterior sampling with sandwich or Monte
Carlo curvature corrections, post-hoc calibration, simulation utilities and
posterior comparison metrics.
"""

__version__ = "0.1.0"

from .exceptions import CapacityError, ConfigError, NumericalError, OMRFError, ValidationError
from .model import Dataset, ModelSpec, PriorSpec, SuffStats, sufficient_statistics
from .estimate import GraphStructure, EstimateResult, map_pseudo, mple, monte_carlo_hessian, robbins_monro
from .rescale import RescalingMatrix, build_rescaling, post_hoc_calibrate, update_rescaling
from .samplers import (
    Chain,
    SamplerConfig,
    sample_adacore,
    sample_adadmh,
    sample_core,
    sample_dmh,
    sample_empirical,
    sample_exact,
    sample_method,
    sample_pseudo,
)
from .simulate import SimulationPlan, SimulatedDataset, gen_structure, gibbs_synthesize, run_simulation_plan
from .metrics import build_report, ess, overlap_index, posterior_correlations, savage_dickey, sd_ratio
from .datasets import load_scs_standin

__all__ = [
    "CapacityError",
    "ConfigError",
    "NumericalError",
    "OMRFError",
    "ValidationError",
    "Dataset",
    "ModelSpec",
    "PriorSpec",
    "SuffStats",
    "sufficient_statistics",
    "GraphStructure",
    "EstimateResult",
    "map_pseudo",
    "mple",
    "monte_carlo_hessian",
    "robbins_monro",
    "RescalingMatrix",
    "build_rescaling",
    "post_hoc_calibrate",
    "update_rescaling",
    "Chain",
    "SamplerConfig",
    "sample_adacore",
    "sample_adadmh",
    "sample_core",
    "sample_dmh",
    "sample_empirical",
    "sample_exact",
    "sample_method",
    "sample_pseudo",
    "SimulationPlan",
    "SimulatedDataset",
    "gen_structure",
    "gibbs_synthesize",
    "run_simulation_plan",
    "build_report",
    "ess",
    "overlap_index",
    "posterior_correlations",
    "savage_dickey",
    "sd_ratio",
    "load_scs_standin",
]
