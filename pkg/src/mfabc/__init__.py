"""Likelihood-free Bayesian inference with multifidelity ABC-SMC.

The package combines two orthogonal accelerations of approximate Bayesian
computation: sequential Monte Carlo proposal refinement and multifidelity
weighting, where a cheap low-fidelity simulation decides (with an optimised
continuation probability) whether the expensive high-fidelity model runs.
"""

from .continuation import (AdaptiveEpsilonResult, EfficiencyCoefficients,
                           EtaBounds, adaptive_epsilon, boundary_eta,
                           estimate_coefficients, optimal_continuation, phi,
                           theoretical_efficiency, unconstrained_optimum)
from .errors import (ConfigError, DegenerateGenerationError,
                     DegenerateSampleError, EstimationError,
                     ImportanceSupportError, MfabcError, ProposalLimitError)
from .estimators import (ABCSampler, ABCSMCSampler, MFABCSampler,
                         MFABCSMCSampler)
from .models import (CoupledModel, GaussianKernel, ImportanceDistribution,
                     UniformBoxPrior, fit_kernel)
from .samplers import (ContinuationPolicy, EssTarget, MaxProposals,
                       Neighborhood, ParticleCache, TimeBudget, abc_is,
                       importance_weight, mf_abc_is, multifidelity_weight,
                       recompute_weight)
from .samples import (EfficiencyReport, WeightedParticle, WeightedSample,
                      efficiency_report, ess, posterior_estimate,
                      posterior_mean)
from .smc import (GenerationResult, SmcSchedule, abc_smc, mf_abc_smc,
                  mf_abc_smc_alpha)

__version__ = "0.1.0"

__all__ = [
    "ABCSampler", "ABCSMCSampler", "MFABCSampler", "MFABCSMCSampler",
    "AdaptiveEpsilonResult", "EfficiencyCoefficients", "EtaBounds",
    "adaptive_epsilon", "boundary_eta", "estimate_coefficients",
    "optimal_continuation", "phi", "theoretical_efficiency",
    "unconstrained_optimum",
    "ConfigError", "DegenerateGenerationError", "DegenerateSampleError",
    "EstimationError", "ImportanceSupportError", "MfabcError",
    "ProposalLimitError",
    "CoupledModel", "GaussianKernel", "ImportanceDistribution",
    "UniformBoxPrior", "fit_kernel",
    "ContinuationPolicy", "EssTarget", "MaxProposals", "Neighborhood",
    "ParticleCache", "TimeBudget", "abc_is", "importance_weight", "mf_abc_is",
    "multifidelity_weight", "recompute_weight",
    "EfficiencyReport", "WeightedParticle", "WeightedSample",
    "efficiency_report", "ess", "posterior_estimate", "posterior_mean",
    "GenerationResult", "SmcSchedule", "abc_smc", "mf_abc_smc",
    "mf_abc_smc_alpha",
]
