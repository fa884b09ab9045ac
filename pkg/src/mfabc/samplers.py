"""Single-generation samplers: importance-sampling ABC and its multifidelity
variant, with pluggable stopping rules and full per-proposal caching.

Every proposal owns RNG substreams derived from (seed, generation, index,
role), so results do not depend on batch size or execution order, and the
plain and multifidelity samplers consume paired streams: with continuation
probabilities fixed at one, both see identical proposals, uniforms and
high-fidelity simulations, hence produce bit-identical weights.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence, Union

import numpy as np

from .errors import DegenerateSampleError, ProposalLimitError
from .models import CoupledModel, ImportanceDistribution, UniformBoxPrior
from .samples import WeightedSample, ess
from .validation import SubstreamFactory, check_probability, check_vector

# Substream roles within one proposal.  The proposal stream supplies the
# parameter draw, then the continuation uniform, then (in multifidelity mode)
# the low-fidelity simulation; the high-fidelity simulation owns a separate
# stream.  Plain and multifidelity runs therefore stay paired draw for draw
# on everything they share: parameter, uniform and high-fidelity randomness.
_ROLE_PROPOSE = 0
_ROLE_HI = 1

DEFAULT_BATCH_SIZE = 100
DEFAULT_PROPOSAL_CEILING = 10**6


@dataclass(frozen=True)
class Neighborhood:
    """Acceptance region: summaries within ``epsilon`` of the observed summary."""

    epsilon: float
    observed: np.ndarray
    distance: Callable[[np.ndarray, np.ndarray], float]

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        object.__setattr__(self, "observed", check_vector(self.observed, "observed"))

    def contains(self, summary: np.ndarray) -> bool:
        return self.distance(summary, self.observed) < self.epsilon

    def with_epsilon(self, epsilon: float) -> "Neighborhood":
        return Neighborhood(epsilon, self.observed, self.distance)


@dataclass(frozen=True)
class ContinuationPolicy:
    """Continuation probabilities after a positive / negative low-fidelity run."""

    eta1: float = 1.0
    eta2: float = 1.0

    def __post_init__(self):
        check_probability(self.eta1, "eta1", open_left=True)
        check_probability(self.eta2, "eta2", open_left=True)

    def alpha(self, tilde_in: bool) -> float:
        return self.eta1 if tilde_in else self.eta2

    @property
    def always(self) -> bool:
        return self.eta1 == 1.0 and self.eta2 == 1.0


ALWAYS_CONTINUE = ContinuationPolicy(1.0, 1.0)


@dataclass(frozen=True)
class MaxProposals:
    """Stop after exactly ``n`` parameter proposals."""

    n: int

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("n must be positive")

    def batch_limit(self, n_done: int, batch_size: int) -> int:
        return min(batch_size, self.n - n_done)

    def done(self, n_done: int, weights: list[float], sim_time: float) -> bool:
        return n_done >= self.n


@dataclass(frozen=True)
class EssTarget:
    """Stop at the first batch boundary where the running ESS reaches ``target``."""

    target: float
    check_every: int = DEFAULT_BATCH_SIZE

    def __post_init__(self):
        if self.target <= 0 or self.check_every <= 0:
            raise ValueError("target and check_every must be positive")

    def batch_limit(self, n_done: int, batch_size: int) -> int:
        return self.check_every

    def done(self, n_done: int, weights: list[float], sim_time: float) -> bool:
        w = np.asarray(weights)
        if not np.any(w != 0.0):
            return False
        return ess(w) >= self.target


@dataclass(frozen=True)
class TimeBudget:
    """Stop at the first batch boundary where accumulated simulation time
    reaches ``seconds``."""

    seconds: float

    def __post_init__(self):
        if self.seconds <= 0:
            raise ValueError("seconds must be positive")

    def batch_limit(self, n_done: int, batch_size: int) -> int:
        return batch_size

    def done(self, n_done: int, weights: list[float], sim_time: float) -> bool:
        return sim_time >= self.seconds


StoppingRule = Union[MaxProposals, EssTarget, TimeBudget]


def importance_weight(prior_density: float, q_value: float, in_neighborhood: bool) -> float:
    """Importance-sampling ABC weight: (prior/q) if accepted, else zero."""
    if not q_value > 0:
        raise ValueError(f"q_value must be positive, got {q_value}")
    if prior_density < 0:
        raise ValueError("prior_density must be non-negative")
    return (prior_density / q_value) * (1.0 if in_neighborhood else 0.0)


def _mf_weight(prior_density: float, q_value: float, tilde_in: bool,
               u: float, alpha: float, hi_in) -> float:
    # Unvalidated core shared by the public op and the sampling loop, so the
    # cache-consistency identity is bit-exact by construction.
    w = 1.0 if tilde_in else 0.0
    if u < alpha:
        w = w + ((1.0 if hi_in else 0.0) - w) / alpha
    return (prior_density / q_value) * w


def multifidelity_weight(prior_density: float, q_value: float, tilde_in: bool,
                         u: float, alpha: float, hi_in: bool | None) -> float:
    """Multifidelity ABC weight.

    The low-fidelity acceptance indicator is corrected by the high-fidelity
    one, inversely weighted by the continuation probability, whenever the
    uniform draw ``u`` fell below ``alpha``; ``hi_in`` must be present exactly
    in that case.  The result can be negative (early acceptance overturned).
    """
    if not q_value > 0:
        raise ValueError(f"q_value must be positive, got {q_value}")
    check_probability(alpha, "alpha", open_left=True)
    if (u < alpha) != (hi_in is not None):
        raise ValueError(
            "hi_in must be supplied when u < alpha and omitted otherwise "
            f"(u={u}, alpha={alpha}, hi_in={hi_in})"
        )
    return _mf_weight(prior_density, q_value, tilde_in, u, alpha, hi_in)


@dataclass(frozen=True)
class CacheEntry:
    """Everything recorded about one parameter proposal.

    ``hi_d`` and ``hi_t_ns`` are present exactly when ``u < alpha``.  Times
    are integer nanoseconds as reported by the model.  A distance of +inf
    marks a failed simulation (kept, with its elapsed time).
    """

    theta: np.ndarray
    q_value: float
    tilde_d: float
    tilde_t_ns: int
    alpha: float
    u: float
    hi_d: float | None
    hi_t_ns: int | None
    weight: float

    @property
    def hi_present(self) -> bool:
        return self.hi_d is not None


class ParticleCache:
    """Column store of every proposal made by one sampler run."""

    def __init__(self, thetas, q_values, tilde_d, tilde_t_ns, alpha, u,
                 hi_present, d, t_ns, weights, epsilon: float):
        self.thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        self.q_values = np.asarray(q_values, dtype=float)
        self.tilde_d = np.asarray(tilde_d, dtype=float)
        self.tilde_t_ns = np.asarray(tilde_t_ns, dtype=np.int64)
        self.alpha = np.asarray(alpha, dtype=float)
        self.u = np.asarray(u, dtype=float)
        self.hi_present = np.asarray(hi_present, dtype=bool)
        self.d = np.asarray(d, dtype=float)
        self.t_ns = np.asarray(t_ns, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=float)
        self.epsilon = float(epsilon)
        n = self.weights.shape[0]
        for name in ("q_values", "tilde_d", "tilde_t_ns", "alpha", "u",
                     "hi_present", "d", "t_ns"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"cache column {name} has inconsistent length")
        if self.thetas.shape[0] != n:
            raise ValueError("cache thetas have inconsistent length")

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.thetas.shape[1]

    @property
    def n_hi(self) -> int:
        return int(self.hi_present.sum())

    @property
    def total_sim_time_ns(self) -> int:
        return int(self.tilde_t_ns.sum()) + int(self.t_ns[self.hi_present].sum())

    @property
    def total_sim_time(self) -> float:
        """Total simulation time in seconds."""
        return self.total_sim_time_ns / 1.0e9

    def entries(self) -> Iterator[CacheEntry]:
        for i in range(len(self)):
            present = bool(self.hi_present[i])
            yield CacheEntry(
                theta=self.thetas[i],
                q_value=float(self.q_values[i]),
                tilde_d=float(self.tilde_d[i]),
                tilde_t_ns=int(self.tilde_t_ns[i]),
                alpha=float(self.alpha[i]),
                u=float(self.u[i]),
                hi_d=float(self.d[i]) if present else None,
                hi_t_ns=int(self.t_ns[i]) if present else None,
                weight=float(self.weights[i]),
            )

    @classmethod
    def from_entries(cls, entries: Sequence[CacheEntry], epsilon: float) -> "ParticleCache":
        return cls(
            thetas=np.array([e.theta for e in entries]),
            q_values=[e.q_value for e in entries],
            tilde_d=[e.tilde_d for e in entries],
            tilde_t_ns=[e.tilde_t_ns for e in entries],
            alpha=[e.alpha for e in entries],
            u=[e.u for e in entries],
            hi_present=[e.hi_present for e in entries],
            d=[e.hi_d if e.hi_present else math.nan for e in entries],
            t_ns=[e.hi_t_ns if e.hi_present else 0 for e in entries],
            weights=[e.weight for e in entries],
            epsilon=epsilon,
        )

    def to_sample(self) -> WeightedSample:
        return WeightedSample(self.thetas, self.weights, self.total_sim_time)


def _seconds_to_ns(seconds: float) -> int:
    return int(round(seconds * 1.0e9))


def _propose_one(index: int, model: CoupledModel, prior: UniformBoxPrior,
                 importance: ImportanceDistribution, neighborhood: Neighborhood,
                 policy: ContinuationPolicy, streams: SubstreamFactory,
                 generation: int, simulate_lo: bool, max_rejects: int) -> tuple:
    epsilon = neighborhood.epsilon
    propose_rng = streams.stream(generation, index, _ROLE_PROPOSE)
    theta = importance.sample(propose_rng, max_rejects=max_rejects)
    u = float(propose_rng.random())
    q_value = importance.density(theta)
    prior_density = q_value if importance.is_prior else prior.density(theta)

    if simulate_lo:
        tilde_y, tilde_t = model.simulate_lo(theta, propose_rng)
        tilde_d = float(model.distance(tilde_y, neighborhood.observed))
        tilde_t_ns = _seconds_to_ns(tilde_t)
    else:
        # High-fidelity-only mode: no low-fidelity run happened, so the entry
        # records an out-of-neighborhood distance and zero low-fidelity cost.
        tilde_y, tilde_d, tilde_t_ns = None, math.inf, 0

    tilde_in = tilde_d < epsilon
    alpha = policy.eta1 if tilde_in else policy.eta2

    if u < alpha:
        y, hi_t = model.simulate_hi(
            theta, tilde_y, streams.stream(generation, index, _ROLE_HI))
        hi_d = float(model.distance(y, neighborhood.observed))
        weight = _mf_weight(prior_density, q_value, tilde_in, u, alpha, hi_d < epsilon)
        return theta, q_value, tilde_d, tilde_t_ns, alpha, u, True, hi_d, _seconds_to_ns(hi_t), weight

    weight = _mf_weight(prior_density, q_value, tilde_in, u, alpha, None)
    return theta, q_value, tilde_d, tilde_t_ns, alpha, u, False, math.nan, 0, weight


def _sampling_loop(model, prior, importance, neighborhood, policy, stop, seed, *,
                   generation, simulate_lo, batch_size, max_rejects,
                   proposal_ceiling, n_jobs) -> tuple[WeightedSample, ParticleCache]:
    columns = tuple([] for _ in range(10))
    weights = columns[9]
    sim_time_ns = 0
    pool = ThreadPoolExecutor(max_workers=n_jobs) if n_jobs and n_jobs > 1 else None
    worker_state = threading.local()

    def run(index: int) -> tuple:
        streams = getattr(worker_state, "streams", None)
        if streams is None:
            streams = worker_state.streams = SubstreamFactory(seed)
        return _propose_one(index, model, prior, importance, neighborhood,
                            policy, streams, generation, simulate_lo, max_rejects)

    n_done = 0
    try:
        while True:
            limit = stop.batch_limit(n_done, batch_size)
            indices = range(n_done + 1, n_done + 1 + limit)
            batch = pool.map(run, indices) if pool else map(run, indices)
            for row in batch:
                for column, value in zip(columns, row):
                    column.append(value)
                sim_time_ns += row[3] + row[8]
            n_done = len(weights)
            if stop.done(n_done, weights, sim_time_ns / 1.0e9):
                break
            if n_done >= proposal_ceiling:
                raise ProposalLimitError(
                    f"stopping condition not met after {n_done} proposals"
                )
    finally:
        if pool:
            pool.shutdown()
    thetas, q_values, tilde_d, tilde_t_ns, alpha, u, hi_present, d, t_ns, w = columns
    cache = ParticleCache(np.array(thetas), q_values, tilde_d, tilde_t_ns, alpha,
                          u, hi_present, d, t_ns, w, neighborhood.epsilon)
    return cache.to_sample(), cache


def abc_is(model: CoupledModel, prior: UniformBoxPrior,
           importance: ImportanceDistribution, neighborhood: Neighborhood,
           stop: StoppingRule, seed: int, *, generation: int = 1,
           batch_size: int = DEFAULT_BATCH_SIZE, max_rejects: int = 10**6,
           proposal_ceiling: int = DEFAULT_PROPOSAL_CEILING,
           n_jobs: int | None = None) -> tuple[WeightedSample, ParticleCache]:
    """Importance-sampling ABC: one high-fidelity simulation per proposal.

    With the importance distribution equal to the prior this is rejection
    sampling.  The low-fidelity model is never run and its cost never paid.
    """
    return _sampling_loop(model, prior, importance, neighborhood, ALWAYS_CONTINUE,
                          stop, seed, generation=generation, simulate_lo=False,
                          batch_size=batch_size, max_rejects=max_rejects,
                          proposal_ceiling=proposal_ceiling, n_jobs=n_jobs)


def mf_abc_is(model: CoupledModel, prior: UniformBoxPrior,
              importance: ImportanceDistribution, neighborhood: Neighborhood,
              policy: ContinuationPolicy, stop: StoppingRule, seed: int, *,
              generation: int = 1, batch_size: int = DEFAULT_BATCH_SIZE,
              max_rejects: int = 10**6,
              proposal_ceiling: int = DEFAULT_PROPOSAL_CEILING,
              n_jobs: int | None = None) -> tuple[WeightedSample, ParticleCache]:
    """Multifidelity importance-sampling ABC.

    Each proposal runs the low-fidelity model, then the high-fidelity model
    with probability ``policy.alpha(tilde_in)``; weights may be negative where
    an early acceptance is overturned.
    """
    return _sampling_loop(model, prior, importance, neighborhood, policy, stop,
                          seed, generation=generation, simulate_lo=True,
                          batch_size=batch_size, max_rejects=max_rejects,
                          proposal_ceiling=proposal_ceiling, n_jobs=n_jobs)


def recompute_weight(entry: CacheEntry, prior_density: float, epsilon: float) -> float:
    """Re-derive an entry's weight from its stored fields at threshold ``epsilon``."""
    tilde_in = entry.tilde_d < epsilon
    hi_in = (entry.hi_d < epsilon) if entry.hi_present else None
    return multifidelity_weight(prior_density, entry.q_value, tilde_in,
                                entry.u, entry.alpha, hi_in)


def degenerate(sample: WeightedSample) -> bool:
    """True when no normalised estimate can be formed from the sample."""
    return float(sample.weights.sum()) <= 0.0
