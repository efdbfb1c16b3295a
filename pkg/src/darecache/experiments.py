"""Desk-scale experiment runners: damage/miss trade-offs, budget sweeps,
online policy comparison, and offline-vs-online competitive ratios.

Grid cells derive independent seeds from the root seed, rows are emitted in
sorted grid order, and CSV cells use repr() floats, so re-running a spec with
the same root seed reproduces output byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import CostMode, DamagePolynomial, build_catalog
from .offline import dare_retentions, simulate_offline, simulate_offline_star
from .online import dare_delta_pipeline, run_online, sweep_deterministic_retention
from .retention import RetentionProblem, solve
from .workload import generate_trace

EXPERIMENTS = (
    "offline-tradeoff",
    "delta-sweep",
    "online-compare",
    "star-tradeoff",
    "competitive-ratio",
)


def derive_seed(root: int, *keys: int) -> int:
    """Stable 64-bit seed for one grid cell / replication."""
    state = np.random.SeedSequence([int(root), *map(int, keys)]).generate_state(2)
    return int(state.view(np.uint64)[0])


@dataclass
class ExperimentSpec:
    """Parameter grids for one experiment run."""

    experiment: str
    file_count: int = 200
    alpha_list: tuple = (0.65, 0.95)
    capacity_list: tuple = (10, 20, 30, 40, 50, 60, 70, 80, 90, 100)
    slots: int = 20_000
    events: int = 20_000
    delta: float = 0.66
    delta_list: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    degree_list: tuple = (1, 2, 3)
    file_count_list: tuple | None = None
    tau_grid: tuple = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0)
    replications: int = 5
    seed: int = 0
    cost_mode: CostMode = CostMode.DELAY_PLUS_DAMAGE
    damage: DamagePolynomial = field(default_factory=DamagePolynomial.quadratic)

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")
        for name in ("alpha_list", "capacity_list", "delta_list", "degree_list", "tau_grid"):
            if not len(getattr(self, name)):
                raise ValueError(f"{name} must be non-empty")
        if self.file_count_list is None:
            self.file_count_list = (self.file_count,)


def run_offline_tradeoff(spec: ExperimentSpec) -> list[dict]:
    """Damage and miss fraction for fif vs its useful-span reassignment."""
    rows = []
    for ai, alpha in enumerate(sorted(spec.alpha_list)):
        catalog = build_catalog(spec.file_count, alpha)
        for bi, capacity in enumerate(sorted(spec.capacity_list)):
            fif_damage, dare_damage, miss = [], [], []
            for rep in range(spec.replications):
                trace = generate_trace(catalog, spec.slots, derive_seed(spec.seed, ai, bi, rep))
                fif = simulate_offline(trace, capacity, "fif", damage=spec.damage)
                dare = dare_retentions(trace, fif, spec.damage)
                fif_damage.append(fif.damage)
                dare_damage.append(dare.damage)
                miss.append(fif.miss_fraction)
            rows.append(
                {
                    "alpha": alpha,
                    "capacity": capacity,
                    "damage_fif": float(np.mean(fif_damage)),
                    "damage_dare": float(np.mean(dare_damage)),
                    "savings_ratio": float(np.mean(fif_damage) / np.mean(dare_damage)),
                    "miss_fraction": float(np.mean(miss)),
                }
            )
    return rows


def run_delta_sweep(spec: ExperimentSpec) -> list[dict]:
    """Optimizer objective across damage degrees, catalog sizes, and budgets."""
    rows = []
    for alpha in sorted(spec.alpha_list):
        for degree in sorted(spec.degree_list):
            damage = DamagePolynomial.monomial(degree)
            for m in sorted(spec.file_count_list):
                catalog = build_catalog(m, alpha)
                for eps in sorted(spec.delta_list):
                    solution = solve(RetentionProblem(catalog, damage, eps))
                    rows.append(
                        {
                            "alpha": alpha,
                            "degree": degree,
                            "file_count": m,
                            "epsilon": eps,
                            "objective": solution.objective_damage,
                            "achieved_delay": solution.achieved_delay,
                            "theta": solution.theta,
                        }
                    )
    return rows


def run_online_compare(spec: ExperimentSpec) -> list[dict]:
    """Damage-aware pipeline vs best fixed-retention classical rules.

    Classical rules are swept over the tau grid under the same delay budget;
    every policy sees the same per-replication request seeds.
    """
    alpha = spec.alpha_list[0]
    capacity = spec.capacity_list[-1]
    catalog = build_catalog(spec.file_count, alpha).normalized()
    seeds = [derive_seed(spec.seed, rep) for rep in range(spec.replications)]
    rows = []

    damages, fractions = [], []
    for seed in seeds:
        result = dare_delta_pipeline(
            catalog, capacity, spec.delta, spec.damage, spec.events, seed,
            cost_mode=spec.cost_mode,
        )
        damages.append(result.report.total_damage)
        fractions.append(result.report.miss_fraction)
    rows.append(
        {
            "policy": "dare-delta",
            "alpha": alpha,
            "capacity": capacity,
            "delta": spec.delta,
            "best_tau": "",
            "mean_damage": float(np.mean(damages)),
            "mean_miss_fraction": float(np.mean(fractions)),
        }
    )
    for rule in ("lru", "fifo", "rnd"):
        sweep = sweep_deterministic_retention(
            catalog, capacity, rule, spec.tau_grid, spec.events, seeds,
            spec.damage, delay_budget=spec.delta,
        )
        chosen = next(r for r in sweep.rows if r["tau"] == sweep.best_tau)
        rows.append(
            {
                "policy": rule,
                "alpha": alpha,
                "capacity": capacity,
                "delta": spec.delta,
                "best_tau": sweep.best_tau,
                "mean_damage": sweep.best_damage,
                "mean_miss_fraction": chosen["mean_miss_fraction"],
            }
        )
    return rows


def run_star_tradeoff(spec: ExperimentSpec) -> list[dict]:
    """Damage/miss/writes for the may-decline-to-cache variants."""
    rows = []
    for ai, alpha in enumerate(sorted(spec.alpha_list)):
        catalog = build_catalog(spec.file_count, alpha)
        for bi, capacity in enumerate(sorted(spec.capacity_list)):
            stats = {p: {"damage": [], "miss": [], "writes": []}
                     for p in ("dare", "dare-star", "fif-star", "lru-star")}
            for rep in range(spec.replications):
                trace = generate_trace(catalog, spec.slots, derive_seed(spec.seed, ai, bi, rep))
                fif = simulate_offline(trace, capacity, "fif", damage=spec.damage)
                results = {
                    "dare": dare_retentions(trace, fif, spec.damage),
                    "dare-star": simulate_offline_star(trace, capacity, "dare-star", damage=spec.damage),
                    "fif-star": simulate_offline_star(trace, capacity, "fif-star", damage=spec.damage),
                    "lru-star": simulate_offline_star(trace, capacity, "lru-star", damage=spec.damage),
                }
                for policy, res in results.items():
                    stats[policy]["damage"].append(res.damage)
                    stats[policy]["miss"].append(res.miss_fraction)
                    stats[policy]["writes"].append(res.write_count)
            for policy in sorted(stats):
                rows.append(
                    {
                        "alpha": alpha,
                        "capacity": capacity,
                        "policy": policy,
                        "mean_damage": float(np.mean(stats[policy]["damage"])),
                        "mean_miss_fraction": float(np.mean(stats[policy]["miss"])),
                        "mean_writes": float(np.mean(stats[policy]["writes"])),
                    }
                )
    return rows


def run_competitive_ratio(spec: ExperimentSpec) -> list[dict]:
    """Offline star-policy damage over the online pipeline damage, per cell.

    The offline miss fraction of each cell is the delay budget handed to the
    online pipeline ("seeding"). Online runs use the rate-normalized catalog
    (one expected request per time unit) so continuous retentions are measured
    in slot-equivalents and damages are comparable. Zero-damage cells are
    reported with empty ratios.
    """
    rows = []
    for ai, alpha in enumerate(sorted(spec.alpha_list)):
        catalog = build_catalog(spec.file_count, alpha)
        online_catalog = catalog.normalized()
        for bi, capacity in enumerate(sorted(spec.capacity_list)):
            off = {"dare-star": {"damage": [], "miss": []}, "lru-star": {"damage": [], "miss": []}}
            for rep in range(spec.replications):
                trace = generate_trace(catalog, spec.slots, derive_seed(spec.seed, ai, bi, rep))
                for policy in off:
                    res = simulate_offline_star(trace, capacity, policy, damage=spec.damage)
                    off[policy]["damage"].append(res.damage)
                    off[policy]["miss"].append(res.miss_fraction)
            row = {"alpha": alpha, "capacity": capacity}
            for policy, label in (("dare-star", "dare_star"), ("lru-star", "lru_star")):
                offline_damage = float(np.mean(off[policy]["damage"]))
                epsilon = float(np.mean(off[policy]["miss"]))
                online_damages = []
                for rep in range(spec.replications):
                    result = dare_delta_pipeline(
                        online_catalog, capacity, epsilon, spec.damage, spec.slots,
                        derive_seed(spec.seed, ai, bi, rep, 1),
                        cost_mode=spec.cost_mode,
                    )
                    online_damages.append(result.report.total_damage)
                online_damage = float(np.mean(online_damages))
                row[f"epsilon_{label}"] = epsilon
                row[f"damage_{label}"] = offline_damage
                row[f"damage_online_{label}"] = online_damage
                row[f"cr_{label}"] = (
                    offline_damage / online_damage if online_damage > 0 else ""
                )
            rows.append(row)
    return rows


_RUNNERS = {
    "offline-tradeoff": run_offline_tradeoff,
    "delta-sweep": run_delta_sweep,
    "online-compare": run_online_compare,
    "star-tradeoff": run_star_tradeoff,
    "competitive-ratio": run_competitive_ratio,
}


def run_experiment(spec: ExperimentSpec) -> list[dict]:
    return _RUNNERS[spec.experiment](spec)


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return "" if value is None else str(value)


def write_rows_csv(path, rows: list[dict], config_lines=()) -> None:
    """Header + one CSV row per dict; config echoed as leading comments."""
    if not rows:
        raise ValueError("no rows to write")
    fieldnames = list(rows[0])
    lines = [f"# {line}" for line in config_lines]
    lines.append(",".join(fieldnames))
    for row in rows:
        lines.append(",".join(_cell(row.get(name)) for name in fieldnames))
    Path(path).write_text("\n".join(lines) + "\n")


def to_long_format(rows: list[dict], id_fields: tuple) -> list[dict]:
    """Melt metric columns into (id..., metric, value) rows for plotting tools."""
    out = []
    for row in rows:
        for key, value in row.items():
            if key in id_fields:
                continue
            ids = {name: row[name] for name in id_fields}
            ids["metric"] = key
            ids["value"] = value
            out.append(ids)
    return out
