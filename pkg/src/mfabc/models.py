"""Priors, perturbation kernels, importance distributions and the two-fidelity
model contract.

The importance machinery follows the population Monte Carlo convention: an
importance distribution is either the prior itself or a kernel mixture over a
previous generation's particles, weighted by the absolute particle weights and
truncated to the prior support.  Densities are reported unnormalised (the
truncation mass is never computed); all downstream weight formulas are
invariant to that normalisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import ProposalLimitError
from .samples import WeightedSample
from .validation import check_vector

# Relative floor applied to fitted kernel variances, in units of the squared
# prior box width, so a zero-spread generation still yields a proper kernel.
VARIANCE_FLOOR = 1.0e-12

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class UniformBoxPrior:
    """Independent uniform prior on an axis-aligned box."""

    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        low = check_vector(self.low, "low")
        high = check_vector(self.high, "high", dim=low.shape[0])
        if not np.all(high > low):
            raise ValueError("every upper bound must exceed its lower bound")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)
        object.__setattr__(self, "_widths", high - low)
        object.__setattr__(self, "_inv_volume", float(1.0 / np.prod(high - low)))
        object.__setattr__(self, "_bounds_list", list(zip(low.tolist(), high.tolist())))

    @property
    def dim(self) -> int:
        return self.low.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self._widths

    def contains(self, theta: np.ndarray) -> bool:
        for i, (low, high) in enumerate(self._bounds_list):
            value = theta[i]
            if value < low or value > high:
                return False
        return True

    def density(self, theta) -> float:
        if len(theta) != len(self._bounds_list):
            raise ValueError(f"theta has length {len(theta)}, expected {self.dim}")
        return self._inv_volume if self.contains(theta) else 0.0

    def density_many(self, thetas: np.ndarray) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        inside = np.all((thetas >= self.low) & (thetas <= self.high), axis=1)
        return np.where(inside, self._inv_volume, 0.0)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.low + self._widths * rng.random(self.low.shape[0])


@dataclass(frozen=True)
class GaussianKernel:
    """Gaussian perturbation kernel with diagonal covariance."""

    variances: np.ndarray

    def __post_init__(self):
        variances = check_vector(self.variances, "variances")
        if not np.all(variances > 0):
            raise ValueError("kernel variances must be positive")
        object.__setattr__(self, "variances", variances)
        object.__setattr__(self, "_std", np.sqrt(variances))
        log_norm = -0.5 * (variances.shape[0] * _LOG_2PI + np.log(variances).sum())
        object.__setattr__(self, "_log_norm", float(log_norm))

    @property
    def dim(self) -> int:
        return self.variances.shape[0]

    def density(self, theta, center) -> float:
        theta = check_vector(theta, "theta", dim=self.dim)
        center = check_vector(center, "center", dim=self.dim)
        z = (theta - center) ** 2 / self.variances
        return float(np.exp(self._log_norm - 0.5 * z.sum()))

    def density_at_centers(self, theta: np.ndarray, centers: np.ndarray) -> np.ndarray:
        """Kernel density of ``theta`` around each row of ``centers``."""
        z = (theta[None, :] - centers) ** 2 / self.variances[None, :]
        return np.exp(self._log_norm - 0.5 * z.sum(axis=1))

    def sample(self, center: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return center + self._std * rng.standard_normal(self.dim)


def fit_kernel(sample: WeightedSample, prior: UniformBoxPrior) -> GaussianKernel:
    """Fit a perturbation kernel to a generation's sample.

    Each diagonal variance is twice the |w|-weighted empirical variance about
    the |w|-weighted mean, floored at ``VARIANCE_FLOOR`` times the squared
    prior box width so a degenerate generation cannot produce a zero-width
    kernel.
    """
    abs_w = np.abs(sample.weights)
    total = abs_w.sum()
    if total == 0.0:
        raise ValueError("cannot fit a kernel to a sample whose weights are all zero")
    mean = abs_w @ sample.thetas / total
    var = abs_w @ (sample.thetas - mean) ** 2 / total
    floor = VARIANCE_FLOOR * prior.widths**2
    return GaussianKernel(np.maximum(2.0 * var, floor))


class ImportanceDistribution:
    """Parameter proposal distribution: the prior, or a truncated kernel mixture.

    The mixture form places a Gaussian kernel on each support particle with
    mixture weight proportional to the absolute particle weight, and truncates
    to the prior support.  ``density`` returns the untruncated mixture value
    inside the support (zero outside); sampling rejects and redraws until the
    proposal lands inside the support.
    """

    def __init__(self, prior: UniformBoxPrior, sample: WeightedSample | None = None,
                 kernel: GaussianKernel | None = None):
        self.prior = prior
        self.kernel = kernel
        if sample is None:
            if kernel is not None:
                raise ValueError("a kernel without support particles makes no mixture")
            self._support = None
            self._probs = None
        else:
            if kernel is None:
                raise ValueError("mixture importance distributions need a kernel")
            abs_w = np.abs(sample.weights)
            total = abs_w.sum()
            if total == 0.0:
                raise ValueError("support weights are all zero")
            self._support = sample.thetas
            self._probs = abs_w / total
            self._cdf = np.cumsum(self._probs)

    @classmethod
    def from_prior(cls, prior: UniformBoxPrior) -> "ImportanceDistribution":
        return cls(prior)

    @classmethod
    def from_sample(cls, sample: WeightedSample, kernel: GaussianKernel,
                    prior: UniformBoxPrior) -> "ImportanceDistribution":
        return cls(prior, sample, kernel)

    @property
    def is_prior(self) -> bool:
        return self._support is None

    def density(self, theta) -> float:
        if self.is_prior:
            return self.prior.density(theta)
        theta = np.asarray(theta, dtype=float)
        if self.prior.density(theta) == 0.0:
            return 0.0
        return float(self._probs @ self.kernel.density_at_centers(theta, self._support))

    def density_many(self, thetas: np.ndarray) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        if self.is_prior:
            return self.prior.density_many(thetas)
        values = np.empty(thetas.shape[0])
        for i, theta in enumerate(thetas):
            values[i] = self.density(theta)
        return values

    def sample(self, rng: np.random.Generator, max_rejects: int = 10**6) -> np.ndarray:
        if self.is_prior:
            return self.prior.sample(rng)
        for _ in range(max_rejects):
            component = self._support[np.searchsorted(self._cdf, rng.random())]
            theta = self.kernel.sample(component, rng)
            if self.prior.density(theta) > 0.0:
                return theta
        raise ProposalLimitError(
            f"no proposal inside the prior support after {max_rejects} draws; "
            "the kernel is incompatible with the prior"
        )


@runtime_checkable
class CoupledModel(Protocol):
    """Contract a two-fidelity simulator must satisfy.

    ``simulate_lo`` returns a summary vector and the simulation time it cost,
    in seconds.  ``simulate_hi`` may condition on a previously simulated
    low-fidelity summary; when the coupling is independent, its marginal law
    must not depend on whether that summary is supplied.  A simulator signals
    failure by returning a summary with non-finite entries, which any distance
    function must map to +inf.
    """

    def simulate_lo(self, theta: np.ndarray,
                    rng: np.random.Generator) -> tuple[np.ndarray, float]: ...

    def simulate_hi(self, theta: np.ndarray, tilde_y: np.ndarray | None,
                    rng: np.random.Generator) -> tuple[np.ndarray, float]: ...

    def distance(self, summary: np.ndarray, observed: np.ndarray) -> float: ...
