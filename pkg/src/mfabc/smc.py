"""Sequential Monte Carlo loops over the single-generation samplers.

Three drivers share one engine: plain ABC-SMC (high-fidelity only),
multifidelity ABC-SMC with fixed per-generation continuation probabilities,
and the adaptive variant that re-optimises the continuation probabilities
from each generation's cache.  Thresholds follow either an explicit
decreasing schedule or the predicted-efficiency rule, in which case each
generation lowers the threshold until the efficiency forecast drops to a
target (by default the observed efficiency of the first generation).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .continuation import (AdaptiveEpsilonResult, EfficiencyCoefficients,
                           EtaBounds, adaptive_epsilon, estimate_coefficients,
                           optimal_continuation)
from .errors import DegenerateGenerationError, EstimationError, ImportanceSupportError
from .models import (CoupledModel, GaussianKernel, ImportanceDistribution,
                     UniformBoxPrior, fit_kernel)
from .samplers import (ALWAYS_CONTINUE, ContinuationPolicy, Neighborhood,
                       ParticleCache, StoppingRule, abc_is, degenerate,
                       mf_abc_is, DEFAULT_BATCH_SIZE, DEFAULT_PROPOSAL_CEILING)
from .samples import WeightedSample, ess

logger = logging.getLogger(__name__)

FIRST_GENERATION_TARGET = "first-generation"


@dataclass(frozen=True)
class SmcSchedule:
    """Thresholds, stopping rules and continuation bounds for an SMC run.

    Use :meth:`fixed` for an explicit strictly decreasing threshold sequence,
    or :meth:`adaptive` to choose each threshold from the previous
    generation's cache against a predicted-efficiency target.
    """

    stops: tuple[StoppingRule, ...]
    thresholds: tuple[float, ...] | None = None
    initial_epsilon: float | None = None
    psi_target: float | str = FIRST_GENERATION_TARGET
    bounds: EtaBounds = field(default_factory=EtaBounds)
    initial_policy: ContinuationPolicy = ALWAYS_CONTINUE

    def __post_init__(self):
        if (self.thresholds is None) == (self.initial_epsilon is None):
            raise ValueError("provide either thresholds or initial_epsilon, not both")
        if self.thresholds is not None:
            eps = tuple(float(e) for e in self.thresholds)
            if len(eps) == 0 or any(e <= 0 for e in eps):
                raise ValueError("thresholds must be positive")
            if any(b >= a for a, b in zip(eps, eps[1:])):
                raise ValueError("thresholds must be strictly decreasing")
            object.__setattr__(self, "thresholds", eps)
        else:
            if self.initial_epsilon <= 0:
                raise ValueError("initial_epsilon must be positive")
            if not isinstance(self.psi_target, str) and self.psi_target <= 0:
                raise ValueError("psi_target must be positive")
            if isinstance(self.psi_target, str) and self.psi_target != FIRST_GENERATION_TARGET:
                raise ValueError(f"unknown psi_target rule {self.psi_target!r}")
        stops = tuple(self.stops)
        if len(stops) != self.n_generations:
            raise ValueError(
                f"{len(stops)} stopping rules for {self.n_generations} generations"
            )
        object.__setattr__(self, "stops", stops)

    @classmethod
    def fixed(cls, thresholds: Sequence[float], stops: StoppingRule | Sequence[StoppingRule],
              bounds: EtaBounds | None = None,
              initial_policy: ContinuationPolicy = ALWAYS_CONTINUE) -> "SmcSchedule":
        thresholds = tuple(thresholds)
        stops = cls._broadcast_stops(stops, len(thresholds))
        return cls(stops=stops, thresholds=thresholds,
                   bounds=bounds or EtaBounds(), initial_policy=initial_policy)

    @classmethod
    def adaptive(cls, initial_epsilon: float, num_generations: int,
                 stops: StoppingRule | Sequence[StoppingRule],
                 psi_target: float | str = FIRST_GENERATION_TARGET,
                 bounds: EtaBounds | None = None,
                 initial_policy: ContinuationPolicy = ALWAYS_CONTINUE) -> "SmcSchedule":
        stops = cls._broadcast_stops(stops, num_generations)
        return cls(stops=stops, initial_epsilon=float(initial_epsilon),
                   psi_target=psi_target, bounds=bounds or EtaBounds(),
                   initial_policy=initial_policy)

    @staticmethod
    def _broadcast_stops(stops, n: int) -> tuple[StoppingRule, ...]:
        if not isinstance(stops, (list, tuple)):
            return (stops,) * n
        return tuple(stops)

    @property
    def is_adaptive(self) -> bool:
        return self.thresholds is None

    @property
    def n_generations(self) -> int:
        if self.thresholds is not None:
            return len(self.thresholds)
        return len(tuple(self.stops))


@dataclass(frozen=True)
class GenerationResult:
    """One SMC generation: its sample, cache and the settings that made it.

    ``kernel`` is the perturbation kernel used to build this generation's
    importance distribution (None in the first generation, which proposes
    from the prior).  ``coefficients`` are the efficiency-coefficient
    estimates computed from this generation's cache for the next generation
    (None for the final generation and for high-fidelity-only runs).
    ``psi_target`` is the predicted-efficiency target in force when the next
    threshold was selected, in adaptive runs.
    """

    index: int
    epsilon: float
    policy: ContinuationPolicy
    sample: WeightedSample
    cache: ParticleCache
    kernel: GaussianKernel | None = None
    coefficients: EfficiencyCoefficients | None = None
    psi_target: float | None = None
    needs_review: bool = False

    @property
    def ess(self) -> float:
        return ess(self.sample.weights)


def _resolve_psi_target(schedule: SmcSchedule, first: GenerationResult) -> float:
    if schedule.psi_target == FIRST_GENERATION_TARGET:
        if not first.sample.total_sim_time > 0:
            raise EstimationError(
                "first generation recorded no simulation time; cannot set an "
                "efficiency target from it"
            )
        return first.ess / first.sample.total_sim_time
    return float(schedule.psi_target)


def _run_generations(model: CoupledModel, prior: UniformBoxPrior, observed,
                     schedule: SmcSchedule, seed: int, *, multifidelity: bool,
                     policies: Sequence[ContinuationPolicy] | None,
                     batch_size: int, n_jobs: int | None, max_rejects: int,
                     proposal_ceiling: int) -> list[GenerationResult]:
    n_gen = schedule.n_generations
    importance = ImportanceDistribution.from_prior(prior)
    kernel: GaussianKernel | None = None
    if policies is not None:
        policy = policies[0]
    else:
        policy = schedule.initial_policy if multifidelity else ALWAYS_CONTINUE
    epsilon = (schedule.thresholds[0] if not schedule.is_adaptive
               else schedule.initial_epsilon)
    psi_target: float | None = None
    results: list[GenerationResult] = []

    for t in range(1, n_gen + 1):
        neighborhood = Neighborhood(epsilon, observed, model.distance)
        common = dict(generation=t, batch_size=batch_size, n_jobs=n_jobs,
                      max_rejects=max_rejects, proposal_ceiling=proposal_ceiling)
        if multifidelity:
            sample, cache = mf_abc_is(model, prior, importance, neighborhood,
                                      policy, schedule.stops[t - 1], seed, **common)
        else:
            sample, cache = abc_is(model, prior, importance, neighborhood,
                                   schedule.stops[t - 1], seed, **common)
        if degenerate(sample):
            raise DegenerateGenerationError(
                t, f"weights sum to {float(sample.weights.sum())}; no importance "
                   "distribution can be built"
            )
        result = GenerationResult(t, epsilon, policy, sample, cache, kernel)
        if t == n_gen:
            results.append(result)
            break

        kernel = fit_kernel(sample, prior)
        importance = ImportanceDistribution.from_sample(sample, kernel, prior)

        coefficients = None
        needs_review = False
        if schedule.is_adaptive:
            if psi_target is None:
                psi_target = _resolve_psi_target(schedule, result)
            outcome = adaptive_epsilon(cache, prior, importance, epsilon,
                                       psi_target, schedule.bounds,
                                       multifidelity=multifidelity)
            epsilon, needs_review = outcome.epsilon, outcome.needs_review
            policy = outcome.policy if multifidelity else ALWAYS_CONTINUE
            if needs_review:
                logger.warning(
                    "generation %d: efficiency target %.4g not achievable below "
                    "epsilon=%.4g; threshold unchanged", t, psi_target, epsilon)
            if multifidelity:
                try:
                    # Diagnostic record at the threshold actually chosen.
                    coefficients = estimate_coefficients(cache, prior,
                                                         importance, epsilon)
                except (EstimationError, ImportanceSupportError):
                    coefficients = None
        else:
            epsilon = schedule.thresholds[t]
            if policies is not None:
                policy = policies[t]
            elif multifidelity:
                try:
                    coefficients = estimate_coefficients(cache, prior, importance, epsilon)
                    policy, _ = optimal_continuation(coefficients, schedule.bounds)
                except (EstimationError, ImportanceSupportError) as exc:
                    logger.warning(
                        "generation %d: coefficient estimation failed (%s); "
                        "continuing with probabilities (1, 1)", t, exc)
                    policy = ALWAYS_CONTINUE
        results.append(GenerationResult(t, result.epsilon, result.policy, sample,
                                        cache, result.kernel, coefficients,
                                        psi_target, needs_review))
    return results


def abc_smc(model: CoupledModel, prior: UniformBoxPrior, observed,
            schedule: SmcSchedule, seed: int, *,
            batch_size: int = DEFAULT_BATCH_SIZE, n_jobs: int | None = None,
            max_rejects: int = 10**6,
            proposal_ceiling: int = DEFAULT_PROPOSAL_CEILING) -> list[GenerationResult]:
    """Sequential ABC with high-fidelity simulation only.

    Each generation proposes from a kernel mixture over the previous
    generation's weighted particles and weights by prior-to-importance ratio
    times the acceptance indicator; all weights are non-negative.
    """
    return _run_generations(model, prior, observed, schedule, seed,
                            multifidelity=False, policies=None,
                            batch_size=batch_size, n_jobs=n_jobs,
                            max_rejects=max_rejects, proposal_ceiling=proposal_ceiling)


def mf_abc_smc_alpha(model: CoupledModel, prior: UniformBoxPrior, observed,
                     schedule: SmcSchedule, policies: Sequence[ContinuationPolicy],
                     seed: int, *, batch_size: int = DEFAULT_BATCH_SIZE,
                     n_jobs: int | None = None, max_rejects: int = 10**6,
                     proposal_ceiling: int = DEFAULT_PROPOSAL_CEILING) -> list[GenerationResult]:
    """Multifidelity SMC with a pre-determined continuation policy per generation.

    Importance distributions are built from absolute weights, so particles
    with negative weight still contribute proposal mass.
    """
    policies = [p if isinstance(p, ContinuationPolicy) else ContinuationPolicy(*p)
                for p in policies]
    if len(policies) != schedule.n_generations:
        raise ValueError(
            f"{len(policies)} continuation policies for "
            f"{schedule.n_generations} generations"
        )
    return _run_generations(model, prior, observed, schedule, seed,
                            multifidelity=True, policies=policies,
                            batch_size=batch_size, n_jobs=n_jobs,
                            max_rejects=max_rejects, proposal_ceiling=proposal_ceiling)


def mf_abc_smc(model: CoupledModel, prior: UniformBoxPrior, observed,
               schedule: SmcSchedule, seed: int, *,
               batch_size: int = DEFAULT_BATCH_SIZE, n_jobs: int | None = None,
               max_rejects: int = 10**6,
               proposal_ceiling: int = DEFAULT_PROPOSAL_CEILING) -> list[GenerationResult]:
    """Adaptive multifidelity SMC.

    The first generation simulates the high-fidelity model for every proposal;
    each later generation re-optimises the continuation probabilities from the
    previous generation's cache (and, with an adaptive schedule, lowers the
    threshold against the predicted-efficiency target).
    """
    return _run_generations(model, prior, observed, schedule, seed,
                            multifidelity=True, policies=None,
                            batch_size=batch_size, n_jobs=n_jobs,
                            max_rejects=max_rejects, proposal_ceiling=proposal_ceiling)
