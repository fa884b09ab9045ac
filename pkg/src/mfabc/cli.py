"""Experiment harness: generate synthetic data, run algorithms, analyze runs.

Subcommands
-----------
generate-data  simulate an observation and write it as JSON
run            run a configured algorithm, writing per-generation caches and
               a generation summary per replicate
analyze        report ESS, simulation time, per-proposal time, efficiency and
               posterior means for one or more runs
compare        side-by-side per-generation ratios for two runs

Configuration is a single JSON document with ``model``, ``algorithm``,
``schedule`` and ``run`` sections; unknown keys are rejected.  Exit codes:
0 success, 2 configuration error, 3 degenerate run.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .continuation import EtaBounds
from .errors import ConfigError, MfabcError
from .io import (read_cache, read_generation_summaries, read_observed,
                 write_cache, write_generation_summaries, write_observed)
from .kuramoto import (KuramotoConfig, KuramotoModel, KuramotoParams,
                       generate_observed)
from .models import ImportanceDistribution, UniformBoxPrior
from .samplers import (ContinuationPolicy, EssTarget, MaxProposals,
                       Neighborhood, TimeBudget, abc_is, mf_abc_is)
from .samples import ess, posterior_mean
from .smc import SmcSchedule, abc_smc, mf_abc_smc, mf_abc_smc_alpha
from .validation import derive_seed

logger = logging.getLogger(__name__)

ALGORITHMS = ("abc-rs", "abc-is", "abc-smc",
              "mf-abc-rs", "mf-abc-is", "mf-abc-smc-alpha", "mf-abc-smc")

_MODEL_KEYS = {"n_oscillators", "t_end", "n_grid", "rtol", "atol", "max_steps",
               "prior_low", "prior_high", "true_params"}
_SCHEDULE_KEYS = {"epsilon", "stop", "stops", "thresholds", "initial_epsilon",
                  "n_generations", "psi_target", "rho", "alpha", "alphas"}
_RUN_KEYS = {"seed", "observed", "out", "replicates", "batch_size", "n_jobs",
             "proposal_ceiling"}
_TOP_KEYS = {"model", "algorithm", "schedule", "run"}


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        config = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(config, _TOP_KEYS, "config")
    for section, keys in (("model", _MODEL_KEYS), ("schedule", _SCHEDULE_KEYS),
                          ("run", _RUN_KEYS)):
        value = config.setdefault(section, {})
        if not isinstance(value, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        _check_keys(value, keys, f"config section {section!r}")
    algorithm = config.get("algorithm")
    if algorithm not in ALGORITHMS:
        raise ConfigError(
            f"algorithm must be one of {', '.join(ALGORITHMS)}, got {algorithm!r}"
        )
    return config


def _build_model_config(section: dict) -> KuramotoConfig:
    kwargs = {k: section[k] for k in
              ("n_oscillators", "t_end", "n_grid", "rtol", "atol", "max_steps")
              if k in section}
    try:
        return KuramotoConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build_prior(section: dict) -> UniformBoxPrior:
    low = section.get("prior_low", [1.0, -2.0 * math.pi, 0.0])
    high = section.get("prior_high", [3.0, 2.0 * math.pi, 1.0])
    try:
        return UniformBoxPrior(low, high)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _true_params(section: dict) -> KuramotoParams:
    values = section.get("true_params")
    if values is None:
        return KuramotoParams(2.0, math.pi / 3, 0.1)
    if len(values) != 3:
        raise ConfigError("true_params must have three entries")
    return KuramotoParams(*map(float, values))


def _build_stop(spec):
    if isinstance(spec, int):
        return MaxProposals(spec)
    if not isinstance(spec, dict):
        raise ConfigError(f"stop must be an integer or an object, got {spec!r}")
    kind = spec.get("kind")
    try:
        if kind == "max_proposals":
            return MaxProposals(int(spec["n"]))
        if kind == "ess_target":
            return EssTarget(float(spec["target"]),
                             int(spec.get("check_every", 100)))
        if kind == "time_budget":
            return TimeBudget(float(spec["seconds"]))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad stop specification {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown stop kind {kind!r}")


def _build_stops(schedule: dict, n_generations: int | None):
    if "stops" in schedule:
        stops = [_build_stop(s) for s in schedule["stops"]]
        if n_generations is not None and len(stops) != n_generations:
            raise ConfigError(
                f"{len(stops)} stops configured for {n_generations} generations"
            )
        return tuple(stops)
    if "stop" in schedule:
        stop = _build_stop(schedule["stop"])
        return (stop,) * (n_generations or 1) if n_generations else stop
    raise ConfigError("schedule needs a 'stop' or 'stops' entry")


def _build_smc_schedule(schedule: dict, algorithm: str) -> SmcSchedule:
    rho = schedule.get("rho", [0.01, 0.01])
    try:
        bounds = EtaBounds(float(rho[0]), float(rho[1]))
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"bad rho bounds {rho!r}: {exc}") from exc
    try:
        if "thresholds" in schedule:
            thresholds = [float(e) for e in schedule["thresholds"]]
            stops = _build_stops(schedule, len(thresholds))
            return SmcSchedule.fixed(thresholds, stops, bounds=bounds)
        if "initial_epsilon" in schedule:
            n_gen = schedule.get("n_generations")
            if n_gen is None:
                raise ConfigError("adaptive schedules need n_generations")
            stops = _build_stops(schedule, int(n_gen))
            return SmcSchedule.adaptive(float(schedule["initial_epsilon"]),
                                        int(n_gen), stops,
                                        psi_target=schedule.get("psi_target",
                                                                "first-generation"),
                                        bounds=bounds)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"{algorithm} needs 'thresholds' or 'initial_epsilon'")


def _policy(schedule: dict, key: str = "alpha") -> ContinuationPolicy:
    pair = schedule.get(key)
    if pair is None:
        return ContinuationPolicy(1.0, 1.0)
    try:
        return ContinuationPolicy(float(pair[0]), float(pair[1]))
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"bad continuation pair {pair!r}: {exc}") from exc


def run_algorithm(config: dict, observed, seed: int):
    """Run the configured algorithm against an observed summary.

    Returns a list of GenerationResult-shaped records (single-generation
    algorithms yield a one-element list).
    """
    from .smc import GenerationResult

    algorithm = config["algorithm"]
    schedule = config["schedule"]
    run = config["run"]
    model_config = _build_model_config(config["model"])
    prior = _build_prior(config["model"])
    model = KuramotoModel(model_config, observed.t_half)
    common = dict(batch_size=int(run.get("batch_size", 100)),
                  n_jobs=run.get("n_jobs"),
                  proposal_ceiling=int(run.get("proposal_ceiling", 10**6)))

    if algorithm in ("abc-rs", "abc-is", "mf-abc-rs", "mf-abc-is"):
        if "epsilon" not in schedule:
            raise ConfigError(f"{algorithm} needs schedule.epsilon")
        epsilon = float(schedule["epsilon"])
        stop = _build_stops(schedule, None)
        importance = ImportanceDistribution.from_prior(prior)
        neighborhood = Neighborhood(epsilon, observed.summary, model.distance)
        if algorithm.startswith("mf"):
            policy = _policy(schedule)
            sample, cache = mf_abc_is(model, prior, importance, neighborhood,
                                      policy, stop, seed, **common)
        else:
            policy = ContinuationPolicy(1.0, 1.0)
            sample, cache = abc_is(model, prior, importance, neighborhood,
                                   stop, seed, **common)
        return [GenerationResult(1, epsilon, policy, sample, cache)]

    smc_schedule = _build_smc_schedule(schedule, algorithm)
    if algorithm == "abc-smc":
        return abc_smc(model, prior, observed.summary, smc_schedule, seed, **common)
    if algorithm == "mf-abc-smc-alpha":
        alphas = schedule.get("alphas")
        if alphas is None:
            raise ConfigError("mf-abc-smc-alpha needs schedule.alphas")
        policies = [ContinuationPolicy(float(a[0]), float(a[1])) for a in alphas]
        return mf_abc_smc_alpha(model, prior, observed.summary, smc_schedule,
                                policies, seed, **common)
    return mf_abc_smc(model, prior, observed.summary, smc_schedule, seed, **common)


def _write_run(out_dir: Path, results) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for res in results:
        write_cache(out_dir / f"gen_{res.index:02d}_cache.csv", res.cache, res.index)
    write_generation_summaries(out_dir / "generations.csv", results)


def cmd_generate_data(args) -> int:
    config = load_config(args.config)
    seed = args.seed if args.seed is not None else int(config["run"].get("seed", 1))
    model_config = _build_model_config(config["model"])
    observed = generate_observed(model_config, seed, _true_params(config["model"]))
    out = Path(args.out or config["run"].get("observed", "observed.json"))
    out.parent.mkdir(parents=True, exist_ok=True)
    write_observed(out, observed)
    print(f"wrote {out}: s1={observed.summary[0]:.4f} s2={observed.summary[1]:.4f} "
          f"s3={observed.summary[2]:.4f} t_half={observed.t_half:.4f}")
    return 0


def cmd_run(args) -> int:
    config = load_config(args.config)
    run = config["run"]
    seed = args.seed if args.seed is not None else int(run.get("seed", 1))
    observed_path = Path(run.get("observed", "observed.json"))
    if not observed_path.exists():
        raise ConfigError(f"observed-data file {observed_path} does not exist "
                          "(generate it with 'mfabc generate-data')")
    observed = read_observed(observed_path)
    out_root = Path(args.out or run.get("out", "results"))
    replicates = int(args.replicates or run.get("replicates", 1))

    for rep in range(replicates):
        rep_seed = seed if replicates == 1 else derive_seed(seed, rep)
        out_dir = out_root if replicates == 1 else out_root / f"rep_{rep:02d}"
        results = run_algorithm(config, observed, rep_seed)
        _write_run(out_dir, results)
        final = results[-1]
        total_ns = sum(r.cache.total_sim_time_ns for r in results)
        efficiency = final.ess / (total_ns / 1e9) if total_ns else math.inf
        print(f"{config['algorithm']} seed={rep_seed} -> {out_dir}: "
              f"{len(results)} generation(s), final ESS {final.ess:.1f}, "
              f"sim time {total_ns / 6e10:.2f} min, "
              f"efficiency {60 * efficiency:.2f} ESS/min")
    return 0


def summarize_run(run_dir) -> dict:
    """Collect per-generation and overall metrics for one run directory."""
    run_dir = Path(run_dir)
    summaries = read_generation_summaries(run_dir / "generations.csv")
    generations = []
    for row in summaries:
        sim_s = row["sim_time_ns"] / 1e9
        generations.append({
            **row,
            "sim_time_min": sim_s / 60.0,
            "time_per_proposal_us": row["sim_time_ns"] / row["n_proposals"] / 1e3,
            "efficiency_per_s": row["ess"] / sim_s if sim_s > 0 else math.inf,
        })
    final = generations[-1]
    cache, _ = read_cache(run_dir / f"gen_{final['generation']:02d}_cache.csv",
                          final["epsilon"])
    total_ns = sum(g["sim_time_ns"] for g in generations)
    total_proposals = sum(g["n_proposals"] for g in generations)
    overall_eff = final["ess"] / (total_ns / 1e9) if total_ns else math.inf
    means = posterior_mean(cache.to_sample())
    return {
        "path": str(run_dir),
        "generations": generations,
        "ess": final["ess"],
        "sim_time_min": total_ns / 6e10,
        "time_per_proposal_us": total_ns / total_proposals / 1e3,
        "efficiency_per_s": overall_eff,
        "efficiency_per_min": overall_eff * 60.0,
        "posterior_mean": means,
    }


def _print_run_summary(summary: dict) -> None:
    print(f"\nrun {summary['path']}")
    header = (f"{'t':>3} {'epsilon':>9} {'eta1':>7} {'eta2':>7} {'N':>7} "
              f"{'n_hi':>7} {'ESS':>8} {'time(min)':>10} {'us/prop':>9} {'ESS/s':>8}")
    print(header)
    for g in summary["generations"]:
        print(f"{g['generation']:>3} {g['epsilon']:>9.4f} {g['eta1']:>7.3f} "
              f"{g['eta2']:>7.3f} {g['n_proposals']:>7} {g['n_hi']:>7} "
              f"{g['ess']:>8.1f} {g['sim_time_min']:>10.3f} "
              f"{g['time_per_proposal_us']:>9.0f} {g['efficiency_per_s']:>8.3f}")
    mean = summary["posterior_mean"]
    print(f"overall: ESS {summary['ess']:.1f}, sim time {summary['sim_time_min']:.2f} min, "
          f"{summary['time_per_proposal_us']:.0f} us/proposal, "
          f"efficiency {summary['efficiency_per_min']:.2f} ESS/min")
    print(f"posterior means: coupling={mean[0]:.4f} omega0={mean[1]:.4f} "
          f"gamma={mean[2]:.4f}")


def cmd_analyze(args) -> int:
    rows = []
    for path in args.paths:
        summary = summarize_run(path)
        _print_run_summary(summary)
        rows.append(summary)
    if args.out:
        import csv as _csv
        with open(args.out, "w", newline="") as handle:
            writer = _csv.writer(handle)
            writer.writerow(["path", "ess", "sim_time_min", "time_per_proposal_us",
                             "efficiency_per_min", "mean_coupling", "mean_omega0",
                             "mean_gamma"])
            for s in rows:
                writer.writerow([s["path"], s["ess"], s["sim_time_min"],
                                 s["time_per_proposal_us"], s["efficiency_per_min"],
                                 *s["posterior_mean"]])
        print(f"\nwrote {args.out}")
    return 0


def cmd_compare(args) -> int:
    a = summarize_run(args.run_a)
    b = summarize_run(args.run_b)
    print(f"comparing {a['path']} (A) against {b['path']} (B)")
    print(f"{'t':>3} {'us/prop A':>10} {'us/prop B':>10} {'ratio':>7} "
          f"{'ESS/s A':>9} {'ESS/s B':>9} {'ratio':>7}")
    for ga, gb in zip(a["generations"], b["generations"]):
        t_ratio = gb["time_per_proposal_us"] / ga["time_per_proposal_us"]
        e_ratio = gb["efficiency_per_s"] / ga["efficiency_per_s"]
        print(f"{ga['generation']:>3} {ga['time_per_proposal_us']:>10.0f} "
              f"{gb['time_per_proposal_us']:>10.0f} {t_ratio:>7.2f} "
              f"{ga['efficiency_per_s']:>9.3f} {gb['efficiency_per_s']:>9.3f} "
              f"{e_ratio:>7.2f}")
    overall = b["efficiency_per_s"] / a["efficiency_per_s"]
    print(f"overall efficiency: A {a['efficiency_per_min']:.2f} ESS/min, "
          f"B {b['efficiency_per_min']:.2f} ESS/min, ratio x{overall:.2f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfabc",
        description="Multifidelity ABC-SMC experiment harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate-data", help="simulate and save observed data")
    gen.add_argument("--config", required=True)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--out")
    gen.set_defaults(func=cmd_generate_data)

    run = sub.add_parser("run", help="run the configured algorithm")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--replicates", type=int)
    run.set_defaults(func=cmd_run)

    analyze = sub.add_parser("analyze", help="report metrics for run directories")
    analyze.add_argument("paths", nargs="+")
    analyze.add_argument("--out")
    analyze.set_defaults(func=cmd_analyze)

    compare = sub.add_parser("compare", help="per-generation ratios of two runs")
    compare.add_argument("run_a")
    compare.add_argument("run_b")
    compare.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except MfabcError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
