"""File formats for runs: per-generation particle caches (CSV), observed-data
documents (JSON) and generation summaries (CSV).

Floats are serialised with ``repr`` so every value round-trips bit-exactly;
simulation times are integer nanoseconds.  High-fidelity fields are empty
strings on rows where no high-fidelity simulation ran.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .kuramoto import KuramotoParams, ObservedData
from .samplers import ParticleCache
from .smc import GenerationResult

CACHE_FIXED_COLUMNS = ["generation", "index", "q_value", "alpha", "u",
                       "tilde_d", "tilde_t_ns", "hi_present", "d", "t_ns", "weight"]

SUMMARY_COLUMNS = ["generation", "epsilon", "eta1", "eta2", "n_proposals",
                   "n_hi", "ess", "sim_time_ns", "psi_target", "needs_review",
                   "z_hat", "w_hat", "w_fp_hat", "w_fn_hat",
                   "t_lo_hat", "t_hi_p_hat", "t_hi_n_hat"]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_observed(path, observed: ObservedData) -> None:
    document = {
        "s1": float(observed.summary[0]),
        "s2": float(observed.summary[1]),
        "s3": float(observed.summary[2]),
        "t_half": float(observed.t_half),
        "seed": int(observed.seed),
        "true_params": {
            "coupling": observed.true_params.coupling,
            "omega0": observed.true_params.omega0,
            "gamma": observed.true_params.gamma,
        },
    }
    Path(path).write_text(json.dumps(document, indent=2) + "\n")


def read_observed(path) -> ObservedData:
    document = json.loads(Path(path).read_text())
    params = document["true_params"]
    return ObservedData(
        summary=np.array([document["s1"], document["s2"], document["s3"]]),
        t_half=float(document["t_half"]),
        seed=int(document["seed"]),
        true_params=KuramotoParams(params["coupling"], params["omega0"], params["gamma"]),
    )


def cache_columns(dim: int) -> list[str]:
    theta_cols = [f"theta_{i + 1}" for i in range(dim)]
    return CACHE_FIXED_COLUMNS[:2] + theta_cols + CACHE_FIXED_COLUMNS[2:]


def write_cache(path, cache: ParticleCache, generation: int) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(cache_columns(cache.dim))
        for i in range(len(cache)):
            hi = bool(cache.hi_present[i])
            row = [generation, i + 1]
            row += [_fmt(v) for v in cache.thetas[i]]
            row += [_fmt(cache.q_values[i]), _fmt(cache.alpha[i]), _fmt(cache.u[i]),
                    _fmt(cache.tilde_d[i]), int(cache.tilde_t_ns[i]), int(hi),
                    _fmt(cache.d[i]) if hi else "",
                    int(cache.t_ns[i]) if hi else "",
                    _fmt(cache.weights[i])]
            writer.writerow(row)


def read_cache(path, epsilon: float) -> tuple[ParticleCache, int]:
    """Read a cache CSV back; returns (cache, generation).

    The threshold is not a cache column, so the caller supplies it (it lives
    in the generation summary file).
    """
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        dim = sum(1 for name in header if name.startswith("theta_"))
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path} holds no cache rows")
    generation = int(rows[0][0])
    n = len(rows)
    thetas = np.empty((n, dim))
    q_values = np.empty(n)
    alpha = np.empty(n)
    u = np.empty(n)
    tilde_d = np.empty(n)
    tilde_t_ns = np.empty(n, dtype=np.int64)
    hi_present = np.empty(n, dtype=bool)
    d = np.full(n, math.nan)
    t_ns = np.zeros(n, dtype=np.int64)
    weights = np.empty(n)
    for i, row in enumerate(rows):
        offset = 2
        thetas[i] = [float(v) for v in row[offset:offset + dim]]
        offset += dim
        q_values[i] = float(row[offset])
        alpha[i] = float(row[offset + 1])
        u[i] = float(row[offset + 2])
        tilde_d[i] = float(row[offset + 3])
        tilde_t_ns[i] = int(row[offset + 4])
        hi_present[i] = bool(int(row[offset + 5]))
        if hi_present[i]:
            d[i] = float(row[offset + 6])
            t_ns[i] = int(row[offset + 7])
        weights[i] = float(row[offset + 8])
    cache = ParticleCache(thetas, q_values, tilde_d, tilde_t_ns, alpha, u,
                          hi_present, d, t_ns, weights, epsilon)
    return cache, generation


def write_generation_summaries(path, results: list[GenerationResult]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SUMMARY_COLUMNS)
        for res in results:
            coeffs = res.coefficients
            writer.writerow([
                res.index, _fmt(res.epsilon), _fmt(res.policy.eta1),
                _fmt(res.policy.eta2), len(res.cache), res.cache.n_hi,
                _fmt(res.ess), res.cache.total_sim_time_ns,
                _fmt(res.psi_target) if res.psi_target is not None else "",
                int(res.needs_review),
                _fmt(coeffs.z) if coeffs else "", _fmt(coeffs.w) if coeffs else "",
                _fmt(coeffs.w_fp) if coeffs else "", _fmt(coeffs.w_fn) if coeffs else "",
                _fmt(coeffs.t_lo) if coeffs else "", _fmt(coeffs.t_hi_p) if coeffs else "",
                _fmt(coeffs.t_hi_n) if coeffs else "",
            ])


def read_generation_summaries(path) -> list[dict]:
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        rows = []
        for raw in reader:
            rows.append({
                "generation": int(raw["generation"]),
                "epsilon": float(raw["epsilon"]),
                "eta1": float(raw["eta1"]),
                "eta2": float(raw["eta2"]),
                "n_proposals": int(raw["n_proposals"]),
                "n_hi": int(raw["n_hi"]),
                "ess": float(raw["ess"]),
                "sim_time_ns": int(raw["sim_time_ns"]),
                "psi_target": float(raw["psi_target"]) if raw["psi_target"] else None,
                "needs_review": bool(int(raw["needs_review"])),
            })
    return rows
