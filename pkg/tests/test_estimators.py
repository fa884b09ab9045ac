import numpy as np
import pytest
from sklearn.base import clone

from mfabc.errors import MfabcError
from mfabc.estimators import (ABCSampler, ABCSMCSampler, MFABCSampler,
                              MFABCSMCSampler)
from mfabc.models import ImportanceDistribution, UniformBoxPrior
from mfabc.samplers import EssTarget, MaxProposals, Neighborhood, abc_is

from .test_smc import CONTINUOUS_OBSERVED, ContinuousToy
from .toy import EPSILON, OBSERVED, TwoRegionToyModel

UNIT_PRIOR = UniformBoxPrior([0.0], [1.0])


class TestEstimatorProtocol:
    def test_get_params_round_trip(self):
        toy = TwoRegionToyModel()
        sampler = MFABCSampler(toy, UNIT_PRIOR, epsilon=EPSILON, stop=100,
                               eta1=0.5, eta2=0.25, random_state=3)
        params = sampler.get_params()
        assert params["eta1"] == 0.5
        assert params["epsilon"] == EPSILON
        sampler.set_params(eta2=0.75)
        assert sampler.eta2 == 0.75

    def test_clone_is_unfitted_copy(self):
        toy = TwoRegionToyModel()
        sampler = MFABCSampler(toy, UNIT_PRIOR, epsilon=EPSILON, stop=200,
                               random_state=4).fit(OBSERVED)
        fresh = clone(sampler)
        assert fresh.get_params() == sampler.get_params()
        assert not hasattr(fresh, "posterior_")

    def test_unfitted_access_raises(self):
        sampler = ABCSampler(TwoRegionToyModel(), UNIT_PRIOR, epsilon=EPSILON)
        with pytest.raises(MfabcError):
            sampler.posterior_mean()

    def test_abc_sampler_has_no_continuation_params(self):
        sampler = ABCSampler(TwoRegionToyModel(), UNIT_PRIOR, epsilon=EPSILON)
        assert "eta1" not in sampler.get_params()


class TestSingleGeneration:
    def test_abcsampler_matches_functional_form(self):
        toy = TwoRegionToyModel()
        est = ABCSampler(toy, UNIT_PRIOR, epsilon=EPSILON, stop=300,
                         random_state=5).fit(OBSERVED)
        nb = Neighborhood(EPSILON, OBSERVED, toy.distance)
        sample, _ = abc_is(toy, UNIT_PRIOR,
                           ImportanceDistribution.from_prior(UNIT_PRIOR),
                           nb, MaxProposals(300), seed=5)
        assert np.array_equal(est.posterior_.weights, sample.weights)

    def test_fit_populates_diagnostics(self):
        toy = TwoRegionToyModel()
        est = MFABCSampler(toy, UNIT_PRIOR, epsilon=EPSILON, stop=500,
                           eta1=0.5, eta2=0.5, random_state=6).fit(OBSERVED)
        assert len(est.cache_) == 500
        assert est.ess_ > 0
        assert est.sim_time_ > 0
        assert est.efficiency_ == pytest.approx(est.ess_ / est.sim_time_)

    def test_estimate_and_posterior_mean(self):
        toy = TwoRegionToyModel()
        est = MFABCSampler(toy, UNIT_PRIOR, epsilon=EPSILON, stop=20_000,
                           eta1=0.6, eta2=0.3, random_state=7).fit(OBSERVED)
        mean = est.posterior_mean()[0]
        assert mean == pytest.approx(toy.exact_posterior_mean(), abs=0.05)
        assert est.estimate(lambda t: t[0]) == pytest.approx(mean)

    def test_stop_accepts_rule_objects(self):
        toy = TwoRegionToyModel()
        est = MFABCSampler(toy, UNIT_PRIOR, epsilon=EPSILON,
                           stop=EssTarget(30.0), random_state=8).fit(OBSERVED)
        assert est.ess_ >= 30.0


class TestSequential:
    def test_fixed_thresholds(self):
        est = ABCSMCSampler(ContinuousToy(), UNIT_PRIOR,
                            thresholds=[0.4, 0.2], stop=200,
                            random_state=9).fit(CONTINUOUS_OBSERVED)
        assert est.epsilons_ == [0.4, 0.2]
        assert len(est.generations_) == 2
        assert est.posterior_mean()[0] == pytest.approx(0.5, abs=0.1)

    def test_adaptive_thresholds(self):
        est = MFABCSMCSampler(ContinuousToy(), UNIT_PRIOR,
                              initial_epsilon=0.5, n_generations=3,
                              stop=EssTarget(40.0),
                              random_state=10).fit(CONTINUOUS_OBSERVED)
        eps = est.epsilons_
        assert len(eps) == 3 and all(b <= a for a, b in zip(eps, eps[1:]))

    def test_fixed_alphas_dispatch(self):
        est = MFABCSMCSampler(ContinuousToy(), UNIT_PRIOR,
                              thresholds=[0.4, 0.2], stop=400,
                              alphas=[(1.0, 1.0), (0.5, 0.5)],
                              random_state=11).fit(CONTINUOUS_OBSERVED)
        assert est.policies_[1].eta1 == 0.5
        assert est.generations_[0].cache.hi_present.all()

    def test_missing_schedule_raises(self):
        est = MFABCSMCSampler(ContinuousToy(), UNIT_PRIOR)
        with pytest.raises(ValueError):
            est.fit(CONTINUOUS_OBSERVED)

    def test_efficiency_uses_total_time(self):
        est = MFABCSMCSampler(ContinuousToy(), UNIT_PRIOR,
                              thresholds=[0.4, 0.2], stop=EssTarget(40.0),
                              random_state=12).fit(CONTINUOUS_OBSERVED)
        total = sum(g.sample.total_sim_time for g in est.generations_)
        assert est.sim_time_ == pytest.approx(total)
        assert est.efficiency_ == pytest.approx(est.ess_ / total)
