"""Efficiency algebra for continuation probabilities.

The theoretical efficiency of a multifidelity sampler factors as Z^2 / phi,
where phi is a product of a weight-variance term and an expected-cost term,
both affine in the continuation probabilities (eta1, eta2).  This module
implements phi, its closed-form minimiser over the positive quadrant and over
a rectangle [rho1, 1] x [rho2, 1], the Monte Carlo estimation of its seven
coefficients from a particle cache, and the threshold-selection subroutine
that lowers the ABC threshold until a predicted-efficiency target is met.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import EstimationError, ImportanceSupportError
from .models import ImportanceDistribution, UniformBoxPrior
from .samplers import ContinuationPolicy, ParticleCache

logger = logging.getLogger(__name__)

# Underflow floor for importance densities evaluated on cached particles.
Q_STAR_FLOOR = 1.0e-300

EPSILON_GRID_SIZE = 64
EPSILON_BISECTIONS = 40
EPSILON_FLOOR_QUANTILE = 0.01


@dataclass(frozen=True)
class EfficiencyCoefficients:
    """The seven scalars determining efficiency as a function of (eta1, eta2).

    ``z`` is the acceptance mass, ``w`` the weight second-moment scale,
    ``w_fp`` / ``w_fn`` the weighted false-positive and false-negative rates,
    and the three ``t_*`` the expected simulation times (seconds): low-fidelity
    always paid, high-fidelity after a positive / negative low-fidelity run.
    """

    z: float
    w: float
    w_fp: float
    w_fn: float
    t_lo: float
    t_hi_p: float
    t_hi_n: float

    def __post_init__(self):
        values = (self.z, self.w, self.w_fp, self.w_fn, self.t_lo, self.t_hi_p, self.t_hi_n)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"coefficients must be finite, got {values}")
        if self.z <= 0 or self.w <= 0:
            raise ValueError(f"z and w must be positive, got z={self.z}, w={self.w}")
        if self.w_fp < 0 or self.w_fn < 0:
            raise ValueError("false-positive/negative coefficients must be non-negative")
        if self.t_lo <= 0:
            raise ValueError(f"t_lo must be positive, got {self.t_lo}")
        if self.t_hi_p < 0 or self.t_hi_n < 0:
            raise ValueError("high-fidelity time coefficients must be non-negative")


@dataclass(frozen=True)
class EtaBounds:
    """User floors keeping continuation probabilities away from zero."""

    rho1: float = 0.01
    rho2: float = 0.01

    def __post_init__(self):
        for name, value in (("rho1", self.rho1), ("rho2", self.rho2)):
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")

    def contains(self, eta1: float, eta2: float) -> bool:
        return self.rho1 <= eta1 <= 1.0 and self.rho2 <= eta2 <= 1.0


def phi(coeffs: EfficiencyCoefficients, eta1: float, eta2: float) -> float:
    """Inverse-efficiency objective; smaller is better."""
    if eta1 <= 0 or eta2 <= 0:
        raise ValueError("continuation probabilities must be positive")
    variance_term = (coeffs.w
                     + (1.0 / eta1 - 1.0) * coeffs.w_fp
                     + (1.0 / eta2 - 1.0) * coeffs.w_fn)
    time_term = coeffs.t_lo + eta1 * coeffs.t_hi_p + eta2 * coeffs.t_hi_n
    return variance_term * time_term


def theoretical_efficiency(coeffs: EfficiencyCoefficients, eta1: float, eta2: float) -> float:
    """Predicted effective samples per second: z^2 / phi."""
    return coeffs.z**2 / phi(coeffs, eta1, eta2)


def unconstrained_optimum(
    coeffs: EfficiencyCoefficients,
) -> tuple[tuple[float, float], float] | None:
    """Minimiser of phi over the whole positive quadrant, if one exists.

    Returns ((eta1, eta2), phi value), or None when the weight coefficient
    does not dominate the false rates, in which case phi has no interior
    minimum and the constrained search falls back to the rectangle boundary.
    """
    excess = coeffs.w - coeffs.w_fp - coeffs.w_fn
    if excess <= 0:
        return None

    def eta_bar(w_f: float, t_hi: float) -> float:
        if w_f == 0.0:
            return 0.0
        if t_hi == 0.0:
            return math.inf
        return math.sqrt(coeffs.t_lo / excess * (w_f / t_hi))

    eta1 = eta_bar(coeffs.w_fp, coeffs.t_hi_p)
    eta2 = eta_bar(coeffs.w_fn, coeffs.t_hi_n)
    phi_bar = (math.sqrt(excess * coeffs.t_lo)
               + math.sqrt(coeffs.w_fp * coeffs.t_hi_p)
               + math.sqrt(coeffs.w_fn * coeffs.t_hi_n)) ** 2
    return (eta1, eta2), phi_bar


def boundary_eta(coeffs: EfficiencyCoefficients, bounds: EtaBounds,
                 which: int, x: float) -> float:
    """Edge minimiser of phi, clamped to [rho, 1].

    ``which`` selects the free coordinate: 1 minimises over eta1 with eta2
    fixed at ``x``, 2 the converse.  Where the stationary point does not exist
    (phi monotone along the edge), the clamp returns the appropriate endpoint.
    """
    if x <= 0:
        raise ValueError("the fixed coordinate must be positive")
    if which == 1:
        rho, w_f, t_hi = bounds.rho1, coeffs.w_fp, coeffs.t_hi_p
        numerator = coeffs.t_lo + coeffs.t_hi_n * x
        denominator = coeffs.w - coeffs.w_fp - (1.0 - 1.0 / x) * coeffs.w_fn
    elif which == 2:
        rho, w_f, t_hi = bounds.rho2, coeffs.w_fn, coeffs.t_hi_n
        numerator = coeffs.t_lo + coeffs.t_hi_p * x
        denominator = coeffs.w - (1.0 - 1.0 / x) * coeffs.w_fp - coeffs.w_fn
    else:
        raise ValueError("which must be 1 or 2")

    if w_f == 0.0:
        value = 0.0
    elif denominator <= 0.0 or t_hi == 0.0:
        # phi is decreasing in the free coordinate along this edge.
        value = math.inf
    else:
        value = math.sqrt(numerator / denominator * (w_f / t_hi))
    return max(rho, min(1.0, value))


def optimal_continuation(coeffs: EfficiencyCoefficients,
                         bounds: EtaBounds) -> tuple[ContinuationPolicy, float]:
    """Minimise phi over the rectangle [rho1, 1] x [rho2, 1].

    Uses the interior optimum when it lies inside the rectangle, otherwise the
    best of the four boundary candidates; ties break toward the larger pair.
    """
    interior = unconstrained_optimum(coeffs)
    if interior is not None:
        (eta1, eta2), phi_bar = interior
        if bounds.contains(eta1, eta2):
            return ContinuationPolicy(eta1, eta2), phi_bar

    candidates = [
        (1.0, boundary_eta(coeffs, bounds, 2, 1.0)),
        (boundary_eta(coeffs, bounds, 1, 1.0), 1.0),
        (bounds.rho1, boundary_eta(coeffs, bounds, 2, bounds.rho1)),
        (boundary_eta(coeffs, bounds, 1, bounds.rho2), bounds.rho2),
    ]
    scored = sorted(
        ((phi(coeffs, e1, e2), -e1, -e2, (e1, e2)) for e1, e2 in candidates)
    )
    phi_star, _, _, (eta1, eta2) = scored[0]
    return ContinuationPolicy(eta1, eta2), phi_star


class _CacheSums:
    """Per-entry ingredients of the coefficient estimators, reusable across
    thresholds: only the acceptance indicators depend on epsilon."""

    def __init__(self, cache: ParticleCache, prior: UniformBoxPrior,
                 q_star: ImportanceDistribution, q_floor: float | None):
        if len(cache) == 0:
            raise EstimationError("cannot estimate coefficients from an empty cache")
        self.n = len(cache)
        self.pi = prior.density_many(cache.thetas)
        q_star_values = q_star.density_many(cache.thetas)
        bad = (q_star_values <= 0.0) & (self.pi > 0.0)
        if np.any(bad):
            if q_floor is None:
                raise ImportanceSupportError(
                    f"importance density is zero at {int(bad.sum())} cached "
                    "particles inside the prior support"
                )
            logger.warning(
                "flooring %d underflowed importance densities at %g",
                int(bad.sum()), q_floor,
            )
            q_star_values = np.where(bad, q_floor, q_star_values)
        self.q_star = q_star_values
        self.q = cache.q_values
        self.alpha = cache.alpha
        self.hi = cache.hi_present
        self.tilde_d = cache.tilde_d
        self.d = np.where(cache.hi_present, cache.d, math.inf)
        self.tilde_t = cache.tilde_t_ns / 1.0e9
        self.t = np.where(cache.hi_present, cache.t_ns / 1.0e9, 0.0)

    def coefficients(self, epsilon: float) -> EfficiencyCoefficients:
        tilde_in = (self.tilde_d < epsilon).astype(float)
        hi_in = (self.d < epsilon).astype(float)
        ratio = self.pi / self.q
        correction = np.where(self.hi, (hi_in - tilde_in) / self.alpha, 0.0)
        hi_scale = np.where(self.hi, 1.0 / self.alpha, 0.0)

        z = float(np.sum(ratio * (tilde_in + correction))) / self.n
        w_ratio = self.pi**2 / (self.q_star * self.q)
        w = float(np.sum(w_ratio * (tilde_in + correction))) / self.n
        w_fp = float(np.sum(w_ratio * hi_scale * tilde_in * (1.0 - hi_in))) / self.n
        w_fn = float(np.sum(w_ratio * hi_scale * (1.0 - tilde_in) * hi_in)) / self.n
        t_ratio = self.q_star / self.q
        t_lo = float(np.sum(t_ratio * self.tilde_t)) / self.n
        t_hi_p = float(np.sum(t_ratio * hi_scale * tilde_in * self.t)) / self.n
        t_hi_n = float(np.sum(t_ratio * hi_scale * (1.0 - tilde_in) * self.t)) / self.n
        try:
            return EfficiencyCoefficients(z, w, w_fp, w_fn, t_lo, t_hi_p, t_hi_n)
        except ValueError as exc:
            raise EstimationError(str(exc)) from exc

    def predicted_efficiency(self, epsilon: float, policy: ContinuationPolicy) -> float:
        """z^2 / phi at the given threshold; NaN where the estimate degenerates
        (no certified forecast, so such thresholds are never admissible)."""
        try:
            coeffs = self.coefficients(epsilon)
        except EstimationError:
            return math.nan
        return theoretical_efficiency(coeffs, policy.eta1, policy.eta2)


def estimate_coefficients(cache: ParticleCache, prior: UniformBoxPrior,
                          q_star: ImportanceDistribution, epsilon_new: float,
                          *, q_floor: float | None = Q_STAR_FLOOR) -> EfficiencyCoefficients:
    """Monte Carlo estimates of the seven efficiency coefficients.

    The cache must come from a sampler run at a threshold no smaller than
    ``epsilon_new``; acceptance indicators are re-evaluated at the new
    threshold from the stored distances, while ``q_star`` plays the role of
    the next run's importance distribution.  ``q_floor`` guards against
    underflow of ``q_star`` on remote particles; pass None to make a zero
    density an error instead.
    """
    if not 0 < epsilon_new <= cache.epsilon:
        raise ValueError(
            f"epsilon_new must lie in (0, {cache.epsilon}], got {epsilon_new}"
        )
    return _CacheSums(cache, prior, q_star, q_floor).coefficients(epsilon_new)


@dataclass(frozen=True)
class AdaptiveEpsilonResult:
    """Outcome of the threshold-selection subroutine."""

    epsilon: float
    policy: ContinuationPolicy
    needs_review: bool


def adaptive_epsilon(cache: ParticleCache, prior: UniformBoxPrior,
                     q_star: ImportanceDistribution, epsilon_t: float,
                     psi_target: float, bounds: EtaBounds, *,
                     multifidelity: bool = True,
                     q_floor: float | None = Q_STAR_FLOOR) -> AdaptiveEpsilonResult:
    """Pick the next ABC threshold so predicted efficiency meets a target.

    First optimises the continuation probabilities at the current threshold
    (skipped, pinned at one, when ``multifidelity`` is false), then finds the
    largest epsilon at or below ``epsilon_t`` whose predicted efficiency drops
    to ``psi_target``: a descending 64-point geometric grid locates the first
    admissible candidate and 40 bisection steps refine the crossing.  The
    predicted-efficiency curve is built from a finite cache and need not be
    monotone, so this is the documented approximation of the exact maximum of
    the admissible set.  When no decrease is possible the current threshold is
    returned with ``needs_review`` set.
    """
    if psi_target <= 0:
        raise ValueError("psi_target must be positive")
    sums = _CacheSums(cache, prior, q_star, q_floor)

    if multifidelity:
        try:
            coeffs_t = sums.coefficients(epsilon_t)
            policy, _ = optimal_continuation(coeffs_t, bounds)
        except EstimationError:
            logger.warning("coefficient estimation failed at epsilon=%g; "
                           "falling back to continuation probabilities (1, 1)", epsilon_t)
            policy = ContinuationPolicy(1.0, 1.0)
    else:
        policy = ContinuationPolicy(1.0, 1.0)

    psi = lambda eps: sums.predicted_efficiency(eps, policy)

    finite_d = sums.tilde_d[np.isfinite(sums.tilde_d)]
    floor = float(np.quantile(finite_d, EPSILON_FLOOR_QUANTILE)) if finite_d.size else epsilon_t
    floor = min(max(floor, 1e-12), epsilon_t)

    if psi(epsilon_t) <= psi_target:
        # The current threshold is already at or below target efficiency.
        return AdaptiveEpsilonResult(epsilon_t, policy, needs_review=True)
    if floor >= epsilon_t:
        return AdaptiveEpsilonResult(epsilon_t, policy, needs_review=True)

    grid = np.geomspace(epsilon_t, floor, EPSILON_GRID_SIZE)
    admissible_index = None
    for i in range(1, grid.shape[0]):
        if psi(float(grid[i])) <= psi_target:
            admissible_index = i
            break
    if admissible_index is None:
        return AdaptiveEpsilonResult(epsilon_t, policy, needs_review=True)

    hi, lo = float(grid[admissible_index - 1]), float(grid[admissible_index])
    for _ in range(EPSILON_BISECTIONS):
        mid = 0.5 * (hi + lo)
        if psi(mid) <= psi_target:
            lo = mid
        else:
            hi = mid
    return AdaptiveEpsilonResult(lo, policy, needs_review=False)
