"""Weighted Monte Carlo samples, effective sample size and efficiency metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .errors import DegenerateSampleError
from .validation import check_weights


@dataclass(frozen=True)
class WeightedParticle:
    """A parameter vector with its (possibly signed) Monte Carlo weight."""

    theta: np.ndarray
    weight: float


@dataclass(frozen=True)
class WeightedSample:
    """A weighted parameter sample together with the simulation time it cost.

    ``thetas`` has shape (n, d) and ``weights`` shape (n,).  Weights may be
    negative when produced by a multifidelity sampler.  ``total_sim_time`` is
    in seconds and counts model simulation only, not bookkeeping.
    """

    thetas: np.ndarray
    weights: np.ndarray
    total_sim_time: float = 0.0

    def __post_init__(self):
        thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        weights = check_weights(self.weights)
        if thetas.shape[0] != weights.shape[0]:
            raise ValueError(
                f"{thetas.shape[0]} parameter vectors but {weights.shape[0]} weights"
            )
        if self.total_sim_time < 0:
            raise ValueError("total_sim_time must be non-negative")
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.thetas.shape[1]

    @property
    def particles(self) -> Iterator[WeightedParticle]:
        for theta, weight in zip(self.thetas, self.weights):
            yield WeightedParticle(theta, float(weight))


@dataclass(frozen=True)
class EfficiencyReport:
    """ESS, simulation time and their ratio for one weighted sample."""

    ess: float
    sim_time: float
    observed_efficiency: float

    @property
    def per_minute(self) -> float:
        """Observed efficiency in effective samples per minute."""
        return self.observed_efficiency * 60.0


def ess(weights) -> float:
    """Effective sample size (sum w)^2 / sum w^2 of a weighted sample.

    Signed weights enter the formula unchanged.  Raises
    :class:`DegenerateSampleError` when every weight is zero.
    """
    w = check_weights(weights)
    sum_sq = float(np.dot(w, w))
    if sum_sq == 0.0:
        raise DegenerateSampleError("all weights are zero; ESS is undefined")
    total = float(w.sum())
    return total * total / sum_sq


def posterior_estimate(sample: WeightedSample, f: Callable[[np.ndarray], float]) -> float:
    """Self-normalised estimate of E[f(theta)] under the sample's target."""
    total = float(sample.weights.sum())
    if total == 0.0:
        raise DegenerateSampleError("weights sum to zero; the estimate is undefined")
    values = np.array([f(theta) for theta in sample.thetas], dtype=float)
    return float(np.dot(sample.weights, values) / total)


def posterior_mean(sample: WeightedSample) -> np.ndarray:
    """Self-normalised posterior mean of each parameter component."""
    total = float(sample.weights.sum())
    if total == 0.0:
        raise DegenerateSampleError("weights sum to zero; the estimate is undefined")
    return sample.weights @ sample.thetas / total


def efficiency_report(sample: WeightedSample) -> EfficiencyReport:
    """Observed efficiency (ESS per second of simulation time) of a sample."""
    if not sample.total_sim_time > 0:
        raise ValueError("sample has no recorded simulation time")
    sample_ess = ess(sample.weights)
    return EfficiencyReport(
        ess=sample_ess,
        sim_time=sample.total_sim_time,
        observed_efficiency=sample_ess / sample.total_sim_time,
    )
