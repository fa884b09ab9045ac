"""Estimator-style front end to the samplers.

Each sampler is an estimator in the scikit-learn sense: hyperparameters are
set at construction and stored verbatim (so ``get_params`` / ``set_params`` /
``clone`` work), ``fit(observed_summary)`` runs the inference and stores its
outputs on trailing-underscore attributes, and the fitted object exposes the
posterior sample and its diagnostics.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .continuation import EtaBounds
from .errors import MfabcError
from .models import CoupledModel, ImportanceDistribution, UniformBoxPrior
from .samplers import (ALWAYS_CONTINUE, ContinuationPolicy, MaxProposals,
                       Neighborhood, StoppingRule, abc_is, mf_abc_is,
                       DEFAULT_BATCH_SIZE, DEFAULT_PROPOSAL_CEILING)
from .samples import (WeightedSample, efficiency_report, ess,
                      posterior_estimate, posterior_mean)
from .smc import (GenerationResult, SmcSchedule, abc_smc, mf_abc_smc,
                  mf_abc_smc_alpha, FIRST_GENERATION_TARGET)
from .validation import check_vector


def _coerce_stop(stop) -> StoppingRule:
    if isinstance(stop, int):
        return MaxProposals(stop)
    return stop


class _FittedMixin:
    """Posterior accessors shared by all fitted samplers."""

    posterior_: WeightedSample

    def _check_fitted(self):
        if not hasattr(self, "posterior_"):
            raise MfabcError("this sampler has not been fitted yet")

    def posterior_mean(self) -> np.ndarray:
        self._check_fitted()
        return posterior_mean(self.posterior_)

    def estimate(self, f: Callable[[np.ndarray], float]) -> float:
        self._check_fitted()
        return posterior_estimate(self.posterior_, f)


class MFABCSampler(BaseEstimator, _FittedMixin):
    """Single-generation multifidelity ABC sampler.

    With the default prior proposals this is multifidelity rejection
    sampling; pass an ``importance`` distribution for general importance
    sampling.  ``eta1``/``eta2`` are the continuation probabilities after a
    positive/negative low-fidelity simulation; both equal to one makes every
    proposal run the high-fidelity model.

    After ``fit(observed_summary)``: ``sample_`` and ``cache_`` hold the run,
    ``posterior_`` aliases ``sample_``, and ``ess_``, ``sim_time_``,
    ``efficiency_`` its diagnostics.
    """

    _lo_enabled = True

    def __init__(self, model: CoupledModel, prior: UniformBoxPrior, epsilon: float,
                 stop: StoppingRule | int = 1000, eta1: float = 1.0, eta2: float = 1.0,
                 importance: ImportanceDistribution | None = None,
                 batch_size: int = DEFAULT_BATCH_SIZE, n_jobs: int | None = None,
                 random_state: int = 0):
        self.model = model
        self.prior = prior
        self.epsilon = epsilon
        self.stop = stop
        self.eta1 = eta1
        self.eta2 = eta2
        self.importance = importance
        self.batch_size = batch_size
        self.n_jobs = n_jobs
        self.random_state = random_state

    def fit(self, observed_summary, y=None):
        observed = check_vector(observed_summary, "observed_summary")
        importance = self.importance or ImportanceDistribution.from_prior(self.prior)
        neighborhood = Neighborhood(self.epsilon, observed, self.model.distance)
        policy = ContinuationPolicy(self.eta1, self.eta2)
        common = dict(stop=_coerce_stop(self.stop), seed=self.random_state,
                      batch_size=self.batch_size, n_jobs=self.n_jobs)
        if self._lo_enabled:
            sample, cache = mf_abc_is(self.model, self.prior, importance,
                                      neighborhood, policy, **common)
        else:
            sample, cache = abc_is(self.model, self.prior, importance,
                                   neighborhood, **common)
        self.sample_ = sample
        self.cache_ = cache
        self.posterior_ = sample
        report = efficiency_report(sample)
        self.ess_ = report.ess
        self.sim_time_ = report.sim_time
        self.efficiency_ = report.observed_efficiency
        return self


class ABCSampler(MFABCSampler):
    """Single-generation ABC sampler: one high-fidelity simulation per proposal.

    The low-fidelity model is never run, so runs pay no low-fidelity cost and
    pair stream-for-stream with :class:`MFABCSampler` at unit continuation
    probabilities.
    """

    _lo_enabled = False

    def __init__(self, model, prior, epsilon, stop: StoppingRule | int = 1000,
                 importance: ImportanceDistribution | None = None,
                 batch_size: int = DEFAULT_BATCH_SIZE, n_jobs: int | None = None,
                 random_state: int = 0):
        super().__init__(model, prior, epsilon, stop=stop, eta1=1.0, eta2=1.0,
                         importance=importance, batch_size=batch_size,
                         n_jobs=n_jobs, random_state=random_state)


class _BaseSMC(BaseEstimator, _FittedMixin):
    """Shared fit machinery for the sequential samplers."""

    def __init__(self, model, prior, thresholds=None, stop: StoppingRule | int = 1000,
                 n_generations: int | None = None, initial_epsilon: float | None = None,
                 psi_target: float | str = FIRST_GENERATION_TARGET,
                 rho1: float = 0.01, rho2: float = 0.01,
                 batch_size: int = DEFAULT_BATCH_SIZE,
                 proposal_ceiling: int = DEFAULT_PROPOSAL_CEILING,
                 n_jobs: int | None = None, random_state: int = 0):
        self.model = model
        self.prior = prior
        self.thresholds = thresholds
        self.stop = stop
        self.n_generations = n_generations
        self.initial_epsilon = initial_epsilon
        self.psi_target = psi_target
        self.rho1 = rho1
        self.rho2 = rho2
        self.batch_size = batch_size
        self.proposal_ceiling = proposal_ceiling
        self.n_jobs = n_jobs
        self.random_state = random_state

    def _schedule(self) -> SmcSchedule:
        bounds = EtaBounds(self.rho1, self.rho2)
        if self.thresholds is not None:
            stops = self._stops(len(tuple(self.thresholds)))
            return SmcSchedule.fixed(self.thresholds, stops, bounds=bounds)
        if self.initial_epsilon is None or self.n_generations is None:
            raise ValueError(
                "provide thresholds, or initial_epsilon with n_generations"
            )
        stops = self._stops(self.n_generations)
        return SmcSchedule.adaptive(self.initial_epsilon, self.n_generations,
                                    stops, psi_target=self.psi_target, bounds=bounds)

    def _stops(self, n: int) -> tuple[StoppingRule, ...]:
        if isinstance(self.stop, (list, tuple)):
            return tuple(_coerce_stop(s) for s in self.stop)
        return (_coerce_stop(self.stop),) * n

    def _run(self, observed) -> list[GenerationResult]:
        raise NotImplementedError

    def fit(self, observed_summary, y=None):
        observed = check_vector(observed_summary, "observed_summary")
        generations = self._run(observed)
        self.generations_ = generations
        final = generations[-1]
        self.posterior_ = final.sample
        self.ess_ = ess(final.sample.weights)
        self.sim_time_ = sum(g.sample.total_sim_time for g in generations)
        # Final-generation ESS against the run's entire simulation budget.
        self.efficiency_ = self.ess_ / self.sim_time_ if self.sim_time_ > 0 else np.inf
        self.epsilons_ = [g.epsilon for g in generations]
        self.policies_ = [g.policy for g in generations]
        return self


class ABCSMCSampler(_BaseSMC):
    """Sequential ABC over a decreasing threshold schedule, high fidelity only.

    Pass ``thresholds`` for a fixed schedule, or ``initial_epsilon`` with
    ``n_generations`` (and optionally a numeric ``psi_target``) to select each
    threshold adaptively from a predicted-efficiency target.
    """

    def _run(self, observed):
        return abc_smc(self.model, self.prior, observed, self._schedule(),
                       self.random_state, batch_size=self.batch_size,
                       n_jobs=self.n_jobs, proposal_ceiling=self.proposal_ceiling)


class MFABCSMCSampler(_BaseSMC):
    """Multifidelity sequential ABC.

    By default each generation's continuation probabilities are optimised
    from the previous generation's cache, bounded below by ``rho1``/``rho2``;
    pass ``alphas`` (one (eta1, eta2) pair per generation) to fix them
    instead.  Threshold scheduling works as in :class:`ABCSMCSampler`.
    """

    def __init__(self, model, prior, thresholds=None, stop: StoppingRule | int = 1000,
                 alphas: Sequence | None = None, n_generations: int | None = None,
                 initial_epsilon: float | None = None,
                 psi_target: float | str = FIRST_GENERATION_TARGET,
                 rho1: float = 0.01, rho2: float = 0.01,
                 batch_size: int = DEFAULT_BATCH_SIZE,
                 proposal_ceiling: int = DEFAULT_PROPOSAL_CEILING,
                 n_jobs: int | None = None, random_state: int = 0):
        super().__init__(model, prior, thresholds=thresholds, stop=stop,
                         n_generations=n_generations, initial_epsilon=initial_epsilon,
                         psi_target=psi_target, rho1=rho1, rho2=rho2,
                         batch_size=batch_size, proposal_ceiling=proposal_ceiling,
                         n_jobs=n_jobs, random_state=random_state)
        self.alphas = alphas

    def _run(self, observed):
        schedule = self._schedule()
        common = dict(batch_size=self.batch_size, n_jobs=self.n_jobs,
                      proposal_ceiling=self.proposal_ceiling)
        if self.alphas is not None:
            policies = [p if isinstance(p, ContinuationPolicy) else ContinuationPolicy(*p)
                        for p in self.alphas]
            return mf_abc_smc_alpha(self.model, self.prior, observed, schedule,
                                    policies, self.random_state, **common)
        return mf_abc_smc(self.model, self.prior, observed, schedule,
                          self.random_state, **common)
