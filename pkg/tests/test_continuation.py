import math

import numpy as np
import pytest

from mfabc.continuation import (AdaptiveEpsilonResult, EfficiencyCoefficients,
                                EtaBounds, adaptive_epsilon, boundary_eta,
                                estimate_coefficients, optimal_continuation,
                                phi, theoretical_efficiency,
                                unconstrained_optimum)
from mfabc.errors import EstimationError, ImportanceSupportError
from mfabc.models import GaussianKernel, ImportanceDistribution, UniformBoxPrior
from mfabc.samplers import (CacheEntry, ContinuationPolicy, MaxProposals,
                            Neighborhood, ParticleCache, mf_abc_is)
from mfabc.samples import WeightedSample

from .toy import EPSILON, OBSERVED, TwoRegionToyModel, per_proposal_terms

UNIT_PRIOR = UniformBoxPrior([0.0], [1.0])
PRIOR_Q = ImportanceDistribution.from_prior(UNIT_PRIOR)

WORKED = EfficiencyCoefficients(z=1.0, w=2.0, w_fp=0.5, w_fn=0.5,
                                t_lo=1.0, t_hi_p=1.0, t_hi_n=1.0)


def grid_min_phi(coeffs, bounds, n=400):
    """Brute-force minimiser of phi over the bounded rectangle."""
    e1 = np.linspace(bounds.rho1, 1.0, n)[:, None]
    e2 = np.linspace(bounds.rho2, 1.0, n)[None, :]
    variance = (coeffs.w + (1.0 / e1 - 1.0) * coeffs.w_fp
                + (1.0 / e2 - 1.0) * coeffs.w_fn)
    duration = coeffs.t_lo + e1 * coeffs.t_hi_p + e2 * coeffs.t_hi_n
    values = variance * duration
    i, j = np.unravel_index(np.argmin(values), values.shape)
    return float(values[i, j]), (float(e1[i, 0]), float(e2[0, j]))


def random_coefficients(rng):
    """Random coefficient sets covering both optimiser regimes."""
    w_fp = rng.uniform(0.0, 2.0) * (rng.random() > 0.1)
    w_fn = rng.uniform(0.0, 2.0) * (rng.random() > 0.1)
    if rng.random() < 0.5:
        w = w_fp + w_fn + rng.uniform(0.01, 3.0)
    else:
        w = max(1e-3, (w_fp + w_fn) * rng.uniform(0.2, 1.0))
    return EfficiencyCoefficients(
        z=rng.uniform(0.1, 2.0), w=w, w_fp=w_fp, w_fn=w_fn,
        t_lo=rng.uniform(0.01, 2.0),
        t_hi_p=rng.uniform(0.0, 3.0) * (rng.random() > 0.1),
        t_hi_n=rng.uniform(0.0, 3.0) * (rng.random() > 0.1),
    )


class TestPhi:
    def test_unit_continuation_drops_penalty_terms(self):
        assert phi(WORKED, 1.0, 1.0) == pytest.approx(2.0 * 3.0)

    def test_direct_substitution(self):
        # (2 + 0.5 + 0.5) * (1 + 0.5 + 0.5)
        assert phi(WORKED, 0.5, 0.5) == pytest.approx(6.0)

    def test_increasing_without_false_rates(self):
        coeffs = EfficiencyCoefficients(1.0, 2.0, 0.0, 0.0, 1.0, 1.0, 1.0)
        values = [phi(coeffs, e, e) for e in (0.1, 0.3, 0.7, 1.0)]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_nonpositive_eta_rejected(self):
        with pytest.raises(ValueError):
            phi(WORKED, 0.0, 0.5)

    def test_efficiency_is_z_squared_over_phi(self):
        coeffs = EfficiencyCoefficients(1.0, 2.0, 0.5, 0.5, 1.0, 1.0, 1.0)
        assert theoretical_efficiency(coeffs, 1.0, 1.0) == pytest.approx(1.0 / 6.0)
        doubled = EfficiencyCoefficients(2.0, 2.0, 0.5, 0.5, 1.0, 1.0, 1.0)
        assert theoretical_efficiency(doubled, 1.0, 1.0) == pytest.approx(4.0 / 6.0)


class TestUnconstrainedOptimum:
    def test_worked_interior_case(self):
        (eta1, eta2), phi_bar = unconstrained_optimum(WORKED)
        assert (eta1, eta2) == pytest.approx((math.sqrt(0.5), math.sqrt(0.5)))
        assert phi_bar == pytest.approx((1.0 + 2.0 * math.sqrt(0.5)) ** 2)
        assert phi_bar == pytest.approx(5.82842712474619)

    def test_no_minimum_when_false_rates_dominate(self):
        coeffs = EfficiencyCoefficients(1.0, 1.0, 0.6, 0.6, 1.0, 1.0, 1.0)
        assert unconstrained_optimum(coeffs) is None

    def test_zero_false_positive_rate_gives_zero_eta(self):
        coeffs = EfficiencyCoefficients(1.0, 2.0, 0.0, 0.5, 1.0, 1.0, 1.0)
        (eta1, eta2), _ = unconstrained_optimum(coeffs)
        assert eta1 == 0.0
        assert eta2 > 0.0

    def test_grid_oracle_confirms_minimiser(self):
        wide = EtaBounds(1e-3, 1e-3)
        oracle_phi, oracle_eta = grid_min_phi(WORKED, wide, n=200)
        (eta1, eta2), phi_bar = unconstrained_optimum(WORKED)
        assert phi_bar <= oracle_phi + 1e-12
        assert abs(eta1 - oracle_eta[0]) < 2.0 / 200
        assert abs(eta2 - oracle_eta[1]) < 2.0 / 200


class TestBoundaryEta:
    def test_hand_substitution(self):
        # eta1(1) = sqrt((1 + 1) / (2 - 0.5) * 0.5) = sqrt(2/3)
        value = boundary_eta(WORKED, EtaBounds(0.01, 0.01), 1, 1.0)
        assert value == pytest.approx(math.sqrt(2.0 / 3.0))

    def test_edge_minimum_matches_line_search(self):
        bounds = EtaBounds(0.01, 0.01)
        eta1 = boundary_eta(WORKED, bounds, 1, 1.0)
        grid = np.linspace(0.01, 1.0, 20_001)
        values = [phi(WORKED, e, 1.0) for e in grid]
        assert phi(WORKED, eta1, 1.0) <= min(values) + 1e-10

    def test_upper_clamp(self):
        coeffs = EfficiencyCoefficients(1.0, 1.0, 0.9, 0.0, 5.0, 0.01, 0.0)
        assert boundary_eta(coeffs, EtaBounds(0.01, 0.01), 1, 1.0) == 1.0

    def test_lower_clamp(self):
        coeffs = EfficiencyCoefficients(1.0, 5.0, 1e-6, 0.0, 1e-4, 10.0, 0.0)
        assert boundary_eta(coeffs, EtaBounds(0.2, 0.2), 1, 1.0) == 0.2

    def test_zero_false_rate_clamps_to_floor(self):
        coeffs = EfficiencyCoefficients(1.0, 2.0, 0.0, 0.5, 1.0, 1.0, 1.0)
        assert boundary_eta(coeffs, EtaBounds(0.05, 0.05), 1, 1.0) == 0.05

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            boundary_eta(WORKED, EtaBounds(0.01, 0.01), 3, 1.0)
        with pytest.raises(ValueError):
            boundary_eta(WORKED, EtaBounds(0.01, 0.01), 1, 0.0)


class TestOptimalContinuation:
    def test_interior_case(self):
        policy, phi_star = optimal_continuation(WORKED, EtaBounds(0.01, 0.01))
        assert (policy.eta1, policy.eta2) == pytest.approx((0.70711, 0.70711),
                                                           abs=1e-5)
        oracle_phi, _ = grid_min_phi(WORKED, EtaBounds(0.01, 0.01))
        assert phi_star <= oracle_phi * (1 + 1e-9)

    def test_zero_false_rates_floor_both(self):
        coeffs = EfficiencyCoefficients(1.0, 2.0, 0.0, 0.0, 1.0, 1.0, 1.0)
        policy, _ = optimal_continuation(coeffs, EtaBounds(0.01, 0.01))
        assert (policy.eta1, policy.eta2) == (0.01, 0.01)

    def test_boundary_case_agrees_with_grid(self):
        coeffs = EfficiencyCoefficients(1.0, 1.0, 0.6, 0.6, 1.0, 1.0, 1.0)
        bounds = EtaBounds(0.01, 0.01)
        policy, phi_star = optimal_continuation(coeffs, bounds)
        oracle_phi, _ = grid_min_phi(coeffs, bounds)
        assert phi_star <= oracle_phi * (1 + 1e-9)
        assert bounds.contains(policy.eta1, policy.eta2)

    def test_randomised_grid_oracle(self):
        rng = np.random.default_rng(42)
        bounds = EtaBounds(0.01, 0.01)
        for _ in range(30):
            coeffs = random_coefficients(rng)
            policy, phi_star = optimal_continuation(coeffs, bounds)
            assert bounds.contains(policy.eta1, policy.eta2)
            oracle_phi, _ = grid_min_phi(coeffs, bounds, n=150)
            assert phi_star <= oracle_phi * (1 + 1e-9)
            assert phi_star == pytest.approx(
                phi(coeffs, policy.eta1, policy.eta2), rel=1e-12)


def single_entry_cache():
    entry = CacheEntry(np.array([0.5]), 1.0, 0.1, 3000, 1.0, 0.2,
                       0.05, 70_000, 1.0)
    return ParticleCache.from_entries([entry], epsilon=1.0)


class TestEstimateCoefficients:
    def test_single_clean_entry_collapses(self):
        coeffs = estimate_coefficients(single_entry_cache(), UNIT_PRIOR,
                                       PRIOR_Q, 1.0)
        assert coeffs.z == 1.0
        assert coeffs.w == 1.0
        assert coeffs.w_fp == 0.0 and coeffs.w_fn == 0.0
        assert coeffs.t_lo == pytest.approx(3e-6)
        assert coeffs.t_hi_p == pytest.approx(7e-5)
        assert coeffs.t_hi_n == 0.0

    def test_no_high_fidelity_entries(self):
        entries = [
            CacheEntry(np.array([0.4]), 1.0, 0.1, 2000, 0.5, 0.9, None, None, 1.0),
            CacheEntry(np.array([0.6]), 1.0, 1.7, 2000, 0.5, 0.7, None, None, 0.0),
        ]
        cache = ParticleCache.from_entries(entries, epsilon=1.0)
        coeffs = estimate_coefficients(cache, UNIT_PRIOR, PRIOR_Q, 1.0)
        assert coeffs.w_fp == 0.0 and coeffs.w_fn == 0.0
        assert coeffs.t_hi_p == 0.0 and coeffs.t_hi_n == 0.0
        assert coeffs.z == pytest.approx(0.5)

    def test_false_positive_sum_by_hand(self):
        entries = [
            CacheEntry(np.array([0.3]), 0.8, 0.1, 1000, 0.5, 0.2, 1.5, 50_000, -2.5),
            CacheEntry(np.array([0.6]), 1.0, 0.2, 1000, 0.5, 0.1, 0.3, 50_000, 1.0),
            CacheEntry(np.array([0.5]), 1.0, 0.2, 1000, 0.5, 0.3, 0.1, 50_000, 1.0),
            CacheEntry(np.array([0.9]), 1.0, 1.8, 1000, 0.5, 0.9, None, None, 0.0),
        ]
        cache = ParticleCache.from_entries(entries, epsilon=1.0)
        coeffs = estimate_coefficients(cache, UNIT_PRIOR, PRIOR_Q, 1.0)
        # W_fp = (1/4) * pi^2 / (q_star * q * alpha) for the one false positive.
        assert coeffs.w_fp == pytest.approx(0.25 * 1.0 / (1.0 * 0.8 * 0.5))
        assert coeffs.w_fn == 0.0

    def test_indicators_reevaluated_at_new_threshold(self):
        # Tightening epsilon turns the d=0.3 entry into a false positive.
        entries = [
            CacheEntry(np.array([0.6]), 1.0, 0.2, 1000, 0.5, 0.1, 0.3, 50_000, 1.0),
            CacheEntry(np.array([0.4]), 1.0, 0.1, 1000, 0.5, 0.2, 0.05, 50_000, 1.0),
            CacheEntry(np.array([0.5]), 1.0, 0.1, 1000, 0.5, 0.3, 0.08, 50_000, 1.0),
            CacheEntry(np.array([0.7]), 1.0, 0.15, 1000, 0.5, 0.4, 0.02, 50_000, 1.0),
        ]
        cache = ParticleCache.from_entries(entries, epsilon=1.0)
        wide = estimate_coefficients(cache, UNIT_PRIOR, PRIOR_Q, 1.0)
        tight = estimate_coefficients(cache, UNIT_PRIOR, PRIOR_Q, 0.25)
        assert wide.w_fp == 0.0
        assert tight.w_fp > 0.0

    def test_phi_hat_assembles_term_by_term(self):
        coeffs = estimate_coefficients(single_entry_cache(), UNIT_PRIOR,
                                       PRIOR_Q, 1.0)
        eta1, eta2 = 0.4, 0.9
        manual = ((coeffs.w + (1 / eta1 - 1) * coeffs.w_fp
                   + (1 / eta2 - 1) * coeffs.w_fn)
                  * (coeffs.t_lo + eta1 * coeffs.t_hi_p + eta2 * coeffs.t_hi_n))
        assert phi(coeffs, eta1, eta2) == manual

    def test_toy_estimators_match_quadrature_oracle(self):
        toy = TwoRegionToyModel()
        nb = Neighborhood(EPSILON, OBSERVED, toy.distance)
        _, cache = mf_abc_is(toy, UNIT_PRIOR, PRIOR_Q, nb,
                             ContinuationPolicy(0.6, 0.3),
                             MaxProposals(30_000), seed=21)
        support = WeightedSample(np.array([[0.2], [0.7]]), np.array([1.0, 2.0]))
        q_star = ImportanceDistribution.from_sample(
            support, GaussianKernel([0.09]), UNIT_PRIOR)
        coeffs = estimate_coefficients(cache, UNIT_PRIOR, q_star, EPSILON)
        exact = toy.exact_coefficients(
            lambda t: q_star.density(np.array([t])))
        terms = per_proposal_terms(cache, q_star.density_many(cache.thetas))
        n = len(cache)
        for name in ("z", "w", "w_fp", "w_fn", "t_lo", "t_hi_p", "t_hi_n"):
            estimate = getattr(coeffs, name)
            se = terms[name].std() / math.sqrt(n)
            assert abs(estimate - exact[name]) < 3 * se, name
            assert estimate == pytest.approx(terms[name].mean(), rel=1e-12)

    def test_empty_cache_raises(self):
        empty = ParticleCache(np.zeros((0, 1)), [], [], [], [], [], [], [], [],
                              [], 1.0)
        with pytest.raises(EstimationError):
            estimate_coefficients(empty, UNIT_PRIOR, PRIOR_Q, 1.0)

    def test_threshold_above_cache_epsilon_rejected(self):
        with pytest.raises(ValueError):
            estimate_coefficients(single_entry_cache(), UNIT_PRIOR, PRIOR_Q, 2.0)

    def test_zero_importance_inside_support_raises(self):
        # Kernel mass underflows to exactly zero far from the support point.
        support = WeightedSample(np.array([[0.99]]), np.array([1.0]))
        q_star = ImportanceDistribution.from_sample(
            support, GaussianKernel([1e-4]), UNIT_PRIOR)
        cache = single_entry_cache()  # theta = 0.5, 49 sigma away
        with pytest.raises(ImportanceSupportError):
            estimate_coefficients(cache, UNIT_PRIOR, q_star, 1.0, q_floor=None)
        floored = estimate_coefficients(cache, UNIT_PRIOR, q_star, 1.0)
        assert floored.w > 0


def synthetic_crossing_cache(n_per_level=40):
    """Distances on a regular ladder, constant times, unit densities: the
    predicted efficiency is the accepted fraction over the mean time, a
    staircase in epsilon with known jumps."""
    entries = []
    levels = np.round(np.arange(0.05, 1.0001, 0.05), 10)
    for level in levels:
        for _ in range(n_per_level):
            entries.append(CacheEntry(np.array([0.5]), 1.0, float(level), 1000,
                                      1.0, 0.5, float(level), 9000, 0.0))
    return ParticleCache.from_entries(entries, epsilon=1.0), levels


class TestAdaptiveEpsilon:
    def test_target_met_at_current_threshold_returns_it(self):
        cache, _ = synthetic_crossing_cache()
        result = adaptive_epsilon(cache, UNIT_PRIOR, PRIOR_Q, 1.0,
                                  psi_target=1e12, bounds=EtaBounds(0.01, 0.01))
        assert result.epsilon == 1.0
        assert result.needs_review

    def test_unreachable_target_returns_current_threshold(self):
        cache, _ = synthetic_crossing_cache()
        result = adaptive_epsilon(cache, UNIT_PRIOR, PRIOR_Q, 1.0,
                                  psi_target=1e-12, bounds=EtaBounds(0.01, 0.01))
        assert result.epsilon == 1.0
        assert result.needs_review

    def test_known_crossing_located(self):
        cache, levels = synthetic_crossing_cache()
        n = len(cache)
        mean_time_s = (cache.tilde_t_ns + cache.t_ns).mean() / 1e9
        below = float((cache.tilde_d < 0.7).sum())
        at = float((cache.tilde_d <= 0.7).sum())
        target = (below + 0.5 * (at - below)) / n / mean_time_s

        def psi_scan(eps):
            accepted = float((cache.tilde_d < eps).sum()) / n
            return accepted / mean_time_s

        scan = np.linspace(0.05, 1.0, 100_001)
        admissible = scan[[psi_scan(e) <= target for e in scan]]
        oracle = admissible.max()
        assert oracle == pytest.approx(0.7, abs=1e-4)

        # Unit continuation probabilities so the scan formula matches.
        result = adaptive_epsilon(cache, UNIT_PRIOR, PRIOR_Q, 1.0,
                                  psi_target=target,
                                  bounds=EtaBounds(0.01, 0.01),
                                  multifidelity=False)
        assert not result.needs_review
        assert result.epsilon == pytest.approx(0.7, abs=1e-3)
        assert result.epsilon == pytest.approx(oracle, abs=1e-3)

    def test_never_exceeds_current_threshold(self):
        cache, _ = synthetic_crossing_cache()
        rng = np.random.default_rng(0)
        for _ in range(20):
            target = 10.0 ** rng.uniform(-8, 8)
            result = adaptive_epsilon(cache, UNIT_PRIOR, PRIOR_Q, 1.0,
                                      psi_target=target,
                                      bounds=EtaBounds(0.01, 0.01))
            assert result.epsilon <= 1.0

    def test_plain_abc_mode_pins_unit_policy(self):
        cache, _ = synthetic_crossing_cache()
        result = adaptive_epsilon(cache, UNIT_PRIOR, PRIOR_Q, 1.0,
                                  psi_target=1.0, bounds=EtaBounds(0.01, 0.01),
                                  multifidelity=False)
        assert result.policy == ContinuationPolicy(1.0, 1.0)
