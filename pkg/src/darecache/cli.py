"""Command-line entry point: config files plus flag overrides, CSV/JSON out.

Every stochastic subcommand requires a seed (flag or ``workload.seed``); there
is no hidden nondeterminism. Outputs echo the effective configuration as
``#`` comment lines so a result file documents how it was produced.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, KNOWN_KEYS, config_echo_lines, describe_keys, load_config
from .experiments import (
    EXPERIMENTS,
    ExperimentSpec,
    derive_seed,
    run_experiment,
    to_long_format,
    write_rows_csv,
)
from .model import CostMode, CostModel, DamagePolynomial, build_catalog
from .offline import (
    InstanceTooLarge,
    brute_force_min_damage,
    dare_retentions,
    simulate_offline,
    simulate_offline_star,
    write_offline_csv,
)
from .online import (
    UniformizedChain,
    dare_delta_pipeline,
    min_weighted_cost_victims,
    run_online,
    sweep_deterministic_retention,
    value_iteration_oracle,
    write_event_log_csv,
    write_report_csv,
)
from .retention import ConvergenceError, RetentionProblem, solve, write_solution_csv
from .workload import generate_trace, load_trace, save_trace

_STAR = ("dare-star", "fif-star", "lru-star")


def _merge(args, flag_keys: dict) -> dict:
    """Config file values with flag overrides (flags win)."""
    values = load_config(args.config) if args.config else {}
    for attr, key in flag_keys.items():
        flag = getattr(args, attr, None)
        if flag is not None:
            values[key] = KNOWN_KEYS[key](str(flag)) if isinstance(flag, str) else flag
    return values


def _need(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing required key {key!r} (set it in the config or via a flag)")
    return cfg[key]


def _catalog(cfg: dict):
    files = _need(cfg, "catalog.files")
    alpha = cfg.get("catalog.alpha", 0.0)
    delay = cfg.get("catalog.delay", (1.0,))
    delay_arg = delay[0] if len(delay) == 1 else list(delay)
    catalog = build_catalog(files, alpha, delay_arg)
    if cfg.get("catalog.normalize", False):
        catalog = catalog.normalized()
    return catalog


def _damage(cfg: dict) -> DamagePolynomial:
    return DamagePolynomial(cfg.get("damage.coefficients", (0.0, 1.0)))


def _seed(cfg: dict) -> int:
    return _need(cfg, "workload.seed")


def _out(cfg: dict, default: str) -> Path:
    return Path(cfg.get("output.path", default))


def _echo(cfg: dict) -> list[str]:
    # output location is not part of the result's identity
    return config_echo_lines({k: v for k, v in cfg.items() if k != "output.path"})


_COMMON_FLAGS = {"seed": "workload.seed", "out": "output.path", "format": "output.format"}


def cmd_gen_trace(args) -> int:
    cfg = _merge(args, {**_COMMON_FLAGS, "files": "catalog.files", "alpha": "catalog.alpha",
                        "slots": "workload.slots"})
    trace = generate_trace(_catalog(cfg), _need(cfg, "workload.slots"), _seed(cfg))
    path = _out(cfg, "trace.txt")
    save_trace(trace, path)
    print(f"wrote {path}")
    return 0


def _load_or_generate_trace(args, cfg):
    initial = frozenset(cfg.get("workload.initial-cache", ()))
    if getattr(args, "trace", None):
        return load_trace(args.trace, initial_cache=initial)
    return generate_trace(_catalog(cfg), _need(cfg, "workload.slots"), _seed(cfg), initial)


def cmd_offline(args) -> int:
    cfg = _merge(args, {**_COMMON_FLAGS, "files": "catalog.files", "alpha": "catalog.alpha",
                        "slots": "workload.slots", "policy": "policy.name",
                        "capacity": "cache.capacity", "initial": "workload.initial-cache"})
    trace = _load_or_generate_trace(args, cfg)
    policy = _need(cfg, "policy.name")
    capacity = _need(cfg, "cache.capacity")
    if capacity is None:
        raise ConfigError("offline simulation needs a finite cache.capacity")
    damage = _damage(cfg)
    seed = cfg.get("workload.seed")
    if policy == "dare":
        result = dare_retentions(trace, simulate_offline(trace, capacity, "fif", seed, damage), damage)
    elif policy in _STAR:
        result = simulate_offline_star(trace, capacity, policy, seed, damage)
    else:
        result = simulate_offline(trace, capacity, policy, seed, damage)
    path = _out(cfg, "offline.csv")
    write_offline_csv(result, path, damage, _echo(cfg))
    print(f"wrote {path} (policy={policy} misses={result.miss_count} damage={result.damage!r})")
    return 0


def cmd_solve_retention(args) -> int:
    cfg = _merge(args, {**_COMMON_FLAGS, "files": "catalog.files", "alpha": "catalog.alpha",
                        "delta": "policy.delta", "coefficients": "damage.coefficients"})
    problem = RetentionProblem(_catalog(cfg), _damage(cfg), _need(cfg, "policy.delta"))
    solution = solve(problem)
    path = _out(cfg, "retention.csv")
    if cfg.get("output.format", "csv") == "json":
        payload = {
            "delta": problem.delay_budget,
            "theta": solution.theta,
            "objective": solution.objective_damage,
            "achieved_delay": solution.achieved_delay,
            "kkt_residual": solution.kkt_residual,
            "q": solution.q.tolist(),
            "mu": ["inf" if np.isinf(v) else v for v in solution.mu.tolist()],
            "config": _echo(cfg),
        }
        path.write_text(json.dumps(payload, indent=2) + "\n")
    else:
        write_solution_csv(solution, problem, path, _echo(cfg))
    print(f"wrote {path} (objective={solution.objective_damage!r} delay={solution.achieved_delay!r})")
    return 0


def _retention_regime(cfg, catalog, damage):
    """Resolve (mu, tau) from policy.retention / policy.delta / policy.tau."""
    regime = cfg.get("policy.retention")
    if regime is None:
        regime = "fixed" if "policy.tau" in cfg else "solve"
    if regime == "fixed":
        return None, _need(cfg, "policy.tau")
    if regime == "match-rates":
        return catalog.rates.copy(), None
    solution = solve(RetentionProblem(catalog, damage, _need(cfg, "policy.delta")))
    return solution.mu, None


def cmd_online(args) -> int:
    cfg = _merge(args, {**_COMMON_FLAGS, "files": "catalog.files", "alpha": "catalog.alpha",
                        "events": "workload.events", "rule": "policy.rule",
                        "capacity": "cache.capacity", "delta": "policy.delta",
                        "tau": "policy.tau", "retention": "policy.retention",
                        "cost_mode": "policy.cost-mode"})
    catalog = _catalog(cfg)
    damage = _damage(cfg)
    rule = _need(cfg, "policy.rule")
    mu, tau = _retention_regime(cfg, catalog, damage)
    cost_model = CostModel(catalog, damage, cfg.get("policy.cost-mode", CostMode.DELAY_PLUS_DAMAGE))
    report = run_online(
        catalog,
        _need(cfg, "cache.capacity"),
        rule,
        damage=damage,
        mu=mu,
        tau=tau,
        horizon_events=_need(cfg, "workload.events"),
        seed=_seed(cfg),
        cost_model=cost_model,
        keep_event_log=bool(getattr(args, "event_log", None)),
    )
    path = _out(cfg, "online.csv")
    if cfg.get("output.format", "csv") == "json":
        payload = {
            "rule": report.rule,
            "capacity": report.capacity,
            "requests": report.requests,
            "misses": report.misses,
            "writes": report.writes,
            "miss_fraction": report.miss_fraction,
            "total_damage": report.total_damage,
            "seed": report.seed,
            "config": _echo(cfg),
        }
        path.write_text(json.dumps(payload, indent=2) + "\n")
    else:
        write_report_csv(report, path, _echo(cfg))
    if getattr(args, "event_log", None):
        write_event_log_csv(report, args.event_log)
    print(f"wrote {path} (miss_fraction={report.miss_fraction!r} damage={report.total_damage!r})")
    return 0


def cmd_sweep(args) -> int:
    cfg = _merge(args, {**_COMMON_FLAGS, "files": "catalog.files", "alpha": "catalog.alpha",
                        "events": "workload.events", "rule": "policy.rule",
                        "capacity": "cache.capacity", "delta": "policy.delta",
                        "tau_grid": "policy.tau-grid", "replications": "experiment.replications"})
    catalog = _catalog(cfg)
    root = _seed(cfg)
    seeds = [derive_seed(root, rep) for rep in range(cfg.get("experiment.replications", 5))]
    sweep = sweep_deterministic_retention(
        catalog,
        _need(cfg, "cache.capacity"),
        _need(cfg, "policy.rule"),
        _need(cfg, "policy.tau-grid"),
        _need(cfg, "workload.events"),
        seeds,
        _damage(cfg),
        delay_budget=cfg.get("policy.delta"),
    )
    rows = [dict(row) for row in sweep.rows]
    for row in rows:
        row["best"] = row["tau"] == sweep.best_tau
    path = _out(cfg, "sweep.csv")
    write_rows_csv(path, rows, _echo(cfg))
    print(f"wrote {path} (best_tau={sweep.best_tau!r} damage={sweep.best_damage!r})")
    return 0


def _experiment_spec(cfg) -> ExperimentSpec:
    kwargs = {"experiment": _need(cfg, "experiment.id"), "seed": _need(cfg, "workload.seed")}
    if "catalog.files" in cfg:
        kwargs["file_count"] = cfg["catalog.files"]
    if "experiment.alphas" in cfg:
        kwargs["alpha_list"] = cfg["experiment.alphas"]
    if "experiment.capacities" in cfg:
        kwargs["capacity_list"] = cfg["experiment.capacities"]
    if "experiment.degrees" in cfg:
        kwargs["degree_list"] = cfg["experiment.degrees"]
    if "experiment.deltas" in cfg:
        kwargs["delta_list"] = cfg["experiment.deltas"]
    if "experiment.files" in cfg:
        kwargs["file_count_list"] = cfg["experiment.files"]
    if "experiment.replications" in cfg:
        kwargs["replications"] = cfg["experiment.replications"]
    if "experiment.tau-grid" in cfg:
        kwargs["tau_grid"] = cfg["experiment.tau-grid"]
    if "workload.slots" in cfg:
        kwargs["slots"] = cfg["workload.slots"]
    if "workload.events" in cfg:
        kwargs["events"] = cfg["workload.events"]
    if "policy.delta" in cfg:
        kwargs["delta"] = cfg["policy.delta"]
    if "policy.cost-mode" in cfg:
        kwargs["cost_mode"] = cfg["policy.cost-mode"]
    if "damage.coefficients" in cfg:
        kwargs["damage"] = DamagePolynomial(cfg["damage.coefficients"])
    return ExperimentSpec(**kwargs)


_ID_FIELDS = {
    "offline-tradeoff": ("alpha", "capacity"),
    "delta-sweep": ("alpha", "degree", "file_count", "epsilon"),
    "online-compare": ("policy", "alpha", "capacity", "delta"),
    "star-tradeoff": ("alpha", "capacity", "policy"),
    "competitive-ratio": ("alpha", "capacity"),
}


def cmd_experiment(args) -> int:
    cfg = _merge(args, {**_COMMON_FLAGS, "id": "experiment.id", "files": "catalog.files",
                        "replications": "experiment.replications", "delta": "policy.delta"})
    spec = _experiment_spec(cfg)
    rows = run_experiment(spec)
    if getattr(args, "plot_data", False):
        rows = to_long_format(rows, _ID_FIELDS[spec.experiment])
    path = _out(cfg, f"{spec.experiment}.csv")
    write_rows_csv(path, rows, _echo(cfg))
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_cr(args) -> int:
    args.id = "competitive-ratio"
    return cmd_experiment(args)


def cmd_oracle(args) -> int:
    cfg = _merge(args, {**_COMMON_FLAGS, "kind": "oracle.kind", "instances": "oracle.instances"})
    kind = cfg.get("oracle.kind", "offline")
    count = cfg.get("oracle.instances", 20)
    root = _seed(cfg)
    rng = np.random.default_rng(derive_seed(root, 0))
    rows = []
    if kind == "offline":
        produced = 0
        while produced < count:
            m = int(rng.integers(3, 7))
            slots = int(rng.integers(5, 10))
            capacity = int(rng.integers(2, 4))
            catalog = build_catalog(m, float(rng.uniform(0, 1)))
            trace = generate_trace(catalog, slots, int(rng.integers(1 << 30)))
            try:
                oracle = brute_force_min_damage(trace, capacity, max_writes=5)
            except InstanceTooLarge:
                continue
            produced += 1
            fif = simulate_offline(trace, capacity, "fif")
            dare = dare_retentions(trace, fif)
            rows.append(
                {
                    "instance": produced,
                    "files": m,
                    "slots": slots,
                    "capacity": capacity,
                    "fif_misses": fif.miss_count,
                    "oracle_misses": oracle.miss_count,
                    "dare_damage": dare.damage,
                    "oracle_damage": oracle.min_damage,
                    "damage_equal": abs(dare.damage - oracle.min_damage) <= 1e-9,
                }
            )
    else:
        produced = 0
        while produced < count:
            m = int(rng.integers(2, 5))
            capacity = int(rng.integers(1, 3))
            horizon = int(rng.integers(1, 9))
            catalog = build_catalog(m, float(rng.uniform(0, 1)))
            damage = DamagePolynomial.monomial(int(rng.integers(1, 4)))
            solution = solve(RetentionProblem(catalog, damage, float(rng.uniform(0.15, 0.9))))
            if np.any(np.isinf(solution.mu)):
                continue
            produced += 1
            chain = UniformizedChain(catalog, solution.mu, capacity)
            cost_model = CostModel(catalog, damage)
            victims = value_iteration_oracle(chain, cost_model, horizon)
            costs = cost_model.costs(mu=solution.mu)
            agree = all(
                min_weighted_cost_victims(catalog, costs, set(s) | {r}) <= vs
                for (s, r), vs in victims.items()
            )
            rows.append(
                {
                    "instance": produced,
                    "files": m,
                    "capacity": capacity,
                    "horizon": horizon,
                    "full_miss_states": len(victims),
                    "rule_in_optimal_set": agree,
                }
            )
    path = _out(cfg, "oracle.csv")
    write_rows_csv(path, rows, _echo(cfg))
    agreements = sum(1 for r in rows if r.get("damage_equal", r.get("rule_in_optimal_set")))
    print(f"wrote {path} ({agreements}/{len(rows)} instances agree)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="darecache",
        description="Damage-aware flash caching laboratory.",
        epilog="Config keys:\n" + describe_keys(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, help="root seed (required for stochastic commands)")
        p.add_argument("--out", help="output path")
        p.add_argument("--format", choices=("csv", "json"), help="output format")

    p = sub.add_parser("gen-trace", help="generate a slotted request trace file")
    common(p)
    p.add_argument("--files", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--slots", type=int)
    p.set_defaults(handler=cmd_gen_trace)

    p = sub.add_parser("offline", help="run one offline policy over a trace")
    common(p)
    p.add_argument("--trace", help="trace file to replay (otherwise generated)")
    p.add_argument("--policy", choices=("lru", "fifo", "rnd", "fif", "dare") + _STAR)
    p.add_argument("--capacity", type=int)
    p.add_argument("--initial", help="comma-separated initial cache ids")
    p.add_argument("--files", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--slots", type=int)
    p.set_defaults(handler=cmd_offline)

    p = sub.add_parser("solve-retention", help="optimize per-file retention rates")
    common(p)
    p.add_argument("--files", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--coefficients", help="comma-separated damage coefficients a1..an")
    p.set_defaults(handler=cmd_solve_retention)

    p = sub.add_parser("online", help="run the event-driven cache simulation")
    common(p)
    p.add_argument("--rule", choices=("dare-delta", "lru", "fifo", "rnd"))
    p.add_argument("--capacity", help="integer or 'inf'")
    p.add_argument("--delta", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--retention", choices=("solve", "match-rates", "fixed"))
    p.add_argument("--cost-mode", dest="cost_mode",
                   choices=tuple(m.value for m in CostMode))
    p.add_argument("--files", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--events", type=int)
    p.add_argument("--event-log", dest="event_log", help="also dump per-event CSV here")
    p.set_defaults(handler=cmd_online)

    p = sub.add_parser("sweep", help="sweep fixed retentions for a classical rule")
    common(p)
    p.add_argument("--rule", choices=("lru", "fifo", "rnd"))
    p.add_argument("--capacity", help="integer or 'inf'")
    p.add_argument("--delta", type=float)
    p.add_argument("--tau-grid", dest="tau_grid", help="comma-separated retentions")
    p.add_argument("--files", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--events", type=int)
    p.add_argument("--replications", type=int)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("experiment", help="run a full experiment grid")
    common(p)
    p.add_argument("--id", choices=EXPERIMENTS)
    p.add_argument("--files", type=int)
    p.add_argument("--replications", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--plot-data", dest="plot_data", action="store_true",
                   help="emit long-format rows for plotting tools")
    p.set_defaults(handler=cmd_experiment)

    p = sub.add_parser("cr", help="competitive-ratio experiment (offline vs online)")
    common(p)
    p.add_argument("--files", type=int)
    p.add_argument("--replications", type=int)
    p.add_argument("--plot-data", dest="plot_data", action="store_true")
    p.set_defaults(handler=cmd_cr)

    p = sub.add_parser("oracle", help="compare policies against exhaustive oracles")
    common(p)
    p.add_argument("--kind", choices=("offline", "online"))
    p.add_argument("--instances", type=int)
    p.set_defaults(handler=cmd_oracle)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, ConvergenceError, InstanceTooLarge) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
