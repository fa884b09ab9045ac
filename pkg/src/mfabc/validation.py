"""Input validation and RNG helpers used throughout the package."""

from __future__ import annotations

import numbers

import numpy as np


def check_rng(random_state) -> np.random.Generator:
    """Coerce ``random_state`` (None, int seed or Generator) into a Generator."""
    if random_state is None:
        return np.random.default_rng()
    if isinstance(random_state, np.random.Generator):
        return random_state
    if isinstance(random_state, numbers.Integral):
        return np.random.default_rng(int(random_state))
    raise TypeError(
        f"random_state must be None, an integer seed or a numpy Generator, "
        f"got {type(random_state).__name__}"
    )


class SubstreamFactory:
    """Cheap independent RNG streams keyed by (seed, generation, index, role).

    Counter-based keying: each stream is a Philox generator whose key packs
    the master seed and the (generation, index, role) triple, so any triple
    always sees the same randomness for a given seed, independent of batch
    size, execution order or process.  This is what makes runs reproducible
    under batch parallelism and lets two algorithms consume paired streams.

    One Philox object is reused through direct state resets (constructing a
    fresh Generator per proposal costs more than a toy-model simulation), so
    the Generator returned by :meth:`stream` is only valid until the next
    call.  Not thread-safe; use one factory per worker.
    """

    MAX_GENERATION = (1 << 16) - 1
    MAX_INDEX = (1 << 40) - 1
    MAX_ROLE = (1 << 8) - 1

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be a non-negative 64-bit integer")
        self._seed = seed
        self._bitgen = np.random.Philox(key=np.zeros(2, dtype=np.uint64))
        self._gen = np.random.Generator(self._bitgen)
        self._template = self._bitgen.state

    def stream(self, generation: int, index: int, role: int) -> np.random.Generator:
        if not (0 <= generation <= self.MAX_GENERATION
                and 0 <= index <= self.MAX_INDEX and 0 <= role <= self.MAX_ROLE):
            raise ValueError(f"stream key ({generation}, {index}, {role}) out of range")
        state = self._template
        state["state"]["key"][0] = self._seed
        state["state"]["key"][1] = (generation << 48) | (index << 8) | role
        state["state"]["counter"][:] = 0
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        state["uinteger"] = 0
        self._bitgen.state = state
        return self._gen


def substream(seed: int, generation: int, index: int, role: int) -> np.random.Generator:
    """One-off independent stream; see :class:`SubstreamFactory`."""
    return SubstreamFactory(seed).stream(generation, index, role)


def derive_seed(seed: int, index: int) -> int:
    """Derive a replicate seed from a master seed (stable across platforms)."""
    ss = np.random.SeedSequence((int(seed), int(index)))
    return int(ss.generate_state(1, np.uint64)[0])


def check_vector(x, name: str = "x", dim: int | None = None) -> np.ndarray:
    """Coerce to a finite 1-D float array, optionally of fixed dimension."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{name} has dimension {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must have finite entries")
    return arr


def check_weights(weights, name: str = "weights") -> np.ndarray:
    """Coerce to a finite 1-D float array with at least one entry."""
    arr = np.asarray(weights, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty one-dimensional array")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must have finite entries")
    return arr


def check_positive(value, name: str) -> float:
    value = float(value)
    if not value > 0 or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite positive number, got {value}")
    return value


def check_probability(value, name: str, *, open_left: bool = False) -> float:
    """Validate a probability, in [0, 1] or (0, 1] with ``open_left``."""
    value = float(value)
    low_ok = value > 0 if open_left else value >= 0
    if not (low_ok and value <= 1):
        bracket = "(0, 1]" if open_left else "[0, 1]"
        raise ValueError(f"{name} must lie in {bracket}, got {value}")
    return value
