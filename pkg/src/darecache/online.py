"""Event-driven finite-capacity cache simulation with retention expiry.

Requests arrive on the catalog's Poisson clock. A hit serves the file with no
state change (retention is not refreshed). A miss may write the file with a
retention sampled from its exponential law (rate mu_m) or a fixed tau; the
write charges one-shot damage f(R) for the sampled R. When the cache is full,
the classical rules evict within the cache and always insert, while the
damage-aware rule picks argmin p_u * c(u) over cache + request and declines to
cache when the request itself attains the minimum. Expiry is handled lazily
from a heap, so departures free space before the next arrival is processed.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .model import Catalog, CostModel, CostMode, DamagePolynomial
from .offline import InstanceTooLarge
from .retention import RetentionProblem, RetentionSolution, solve
from .workload import Substream, generate_request_events, substream

RULES = ("dare-delta", "lru", "fifo", "rnd")


@dataclass
class SimReport:
    rule: str
    capacity: int | None
    requests: int
    misses: int
    writes: int
    miss_fraction: float
    total_damage: float
    per_file_requests: np.ndarray
    per_file_misses: np.ndarray
    per_file_writes: np.ndarray
    seed: int
    config: dict
    events: list[tuple] | None = None


def run_online(
    catalog: Catalog,
    capacity: int | None,
    rule: str,
    *,
    damage: DamagePolynomial,
    mu: np.ndarray | None = None,
    tau: float | None = None,
    horizon_events: int,
    seed: int,
    cost_model: CostModel | None = None,
    keep_event_log: bool = False,
) -> SimReport:
    """Simulate ``horizon_events`` requests and report misses, writes, damage.

    ``capacity=None`` means an uncapacitated cache (no evictions ever).
    Exactly one of ``mu`` (per-file exponential retention rates, inf = never
    write) and ``tau`` (one fixed retention for every file) must be given.
    """
    rule = rule.lower()
    if rule not in RULES:
        raise ValueError(f"unknown eviction rule {rule!r}; expected one of {RULES}")
    if capacity is not None and capacity < 1:
        raise ValueError(f"capacity must be >= 1 or None, got {capacity}")
    if horizon_events < 1:
        raise ValueError(f"horizon_events must be >= 1, got {horizon_events}")
    if (mu is None) == (tau is None):
        raise ValueError("provide exactly one of mu (stochastic) or tau (deterministic)")
    if tau is not None and not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if mu is not None:
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (catalog.file_count,):
            raise ValueError(f"mu must have shape ({catalog.file_count},), got {mu.shape}")
        if np.any(mu <= 0):
            raise ValueError("mu entries must be positive (inf = never write)")
    if rule == "dare-delta" and cost_model is None:
        cost_model = CostModel(catalog, damage)

    stream = generate_request_events(catalog, horizon_events, seed)
    times = stream.times.tolist()
    files = stream.files.tolist()
    retention_rng = substream(seed, Substream.RETENTION)
    eviction_rng = substream(seed, Substream.EVICTION) if rule == "rnd" else None

    if rule == "dare-delta":
        costs = cost_model.costs(mu=mu) if mu is not None else cost_model.costs(tau=tau)
        weighted = (catalog.probs * costs).tolist()

    if mu is not None:
        with np.errstate(divide="ignore"):
            mean_retention = (1.0 / mu).tolist()  # 0.0 for never-write entries
        never = np.isinf(mu).tolist()
    else:
        never = [False] * catalog.file_count

    resident: dict[int, float] = {}
    expiry_heap: list[tuple[float, int]] = []
    recency: dict[int, None] = {}  # insertion-ordered; front = least recent / first in
    rnd_pool: list[int] = []
    rnd_pos: dict[int, int] = {}

    misses = 0
    writes = 0
    damage_total = 0.0
    per_file_requests = np.bincount(stream.files, minlength=catalog.file_count + 1)[1:]
    per_file_misses = np.zeros(catalog.file_count, dtype=np.int64)
    per_file_writes = np.zeros(catalog.file_count, dtype=np.int64)
    log: list[tuple] | None = [] if keep_event_log else None

    def drop(f: int) -> None:
        del resident[f]
        if rule in ("lru", "fifo"):
            recency.pop(f, None)
        elif rule == "rnd":
            i = rnd_pos.pop(f)
            last = rnd_pool.pop()
            if last != f:
                rnd_pool[i] = last
                rnd_pos[last] = i

    def admit(f: int, expiry: float) -> None:
        resident[f] = expiry
        heapq.heappush(expiry_heap, (expiry, f))
        if rule in ("lru", "fifo"):
            recency[f] = None
        elif rule == "rnd":
            rnd_pos[f] = len(rnd_pool)
            rnd_pool.append(f)

    for now, r in zip(times, files):
        while expiry_heap and expiry_heap[0][0] <= now:
            expiry, f = heapq.heappop(expiry_heap)
            if resident.get(f) == expiry:
                drop(f)
                if log is not None:
                    log.append((expiry, "expire", f, "", "", 0.0))

        if r in resident:
            if rule == "lru":
                recency.pop(r)
                recency[r] = None
            if log is not None:
                log.append((now, "request", r, "hit", "", 0.0))
            continue

        misses += 1
        per_file_misses[r - 1] += 1
        victim = ""
        charged = 0.0
        if not never[r - 1]:
            full = capacity is not None and len(resident) >= capacity
            write = True
            if full:
                if rule == "dare-delta":
                    chosen = min(resident, key=lambda u: (weighted[u - 1], u))
                    if weighted[r - 1] < weighted[chosen - 1] or (
                        weighted[r - 1] == weighted[chosen - 1] and r < chosen
                    ):
                        chosen = r
                    if chosen == r:
                        write = False
                    else:
                        victim = chosen
                elif rule in ("lru", "fifo"):
                    victim = next(iter(recency))
                else:
                    victim = rnd_pool[int(eviction_rng.integers(len(rnd_pool)))]
                if victim:
                    drop(victim)
            if write:
                retention = tau if tau is not None else float(
                    retention_rng.exponential(mean_retention[r - 1])
                )
                charged = float(damage(retention))
                damage_total += charged
                writes += 1
                per_file_writes[r - 1] += 1
                admit(r, now + retention)
        if log is not None:
            log.append((now, "request", r, "miss", victim, charged))

    return SimReport(
        rule=rule,
        capacity=capacity,
        requests=horizon_events,
        misses=misses,
        writes=writes,
        miss_fraction=misses / horizon_events,
        total_damage=damage_total,
        per_file_requests=per_file_requests,
        per_file_misses=per_file_misses,
        per_file_writes=per_file_writes,
        seed=seed,
        config={
            "rule": rule,
            "capacity": capacity,
            "horizon_events": horizon_events,
            "retention": "deterministic" if tau is not None else "stochastic",
            "tau": tau,
            "cost_mode": cost_model.mode.value if cost_model is not None else None,
        },
        events=log,
    )


@dataclass
class SweepResult:
    rule: str
    best_tau: float
    best_damage: float
    rows: list[dict]


def sweep_deterministic_retention(
    catalog: Catalog,
    capacity: int | None,
    rule: str,
    tau_grid,
    horizon_events: int,
    seeds,
    damage: DamagePolynomial,
    delay_budget: float | None = None,
) -> SweepResult:
    """Find the fixed retention minimizing mean damage for a classical rule.

    With a ``delay_budget`` the search is restricted to grid points whose mean
    miss fraction stays within the budget (matching the budget given to the
    damage-aware policy); if no point qualifies, the one closest to the budget
    is returned. Ties prefer the smaller tau.
    """
    tau_grid = [float(t) for t in tau_grid]
    seeds = [int(s) for s in seeds]
    if not tau_grid:
        raise ValueError("tau grid must be non-empty")
    if not seeds:
        raise ValueError("seeds must be non-empty")
    if rule not in ("lru", "fifo", "rnd"):
        raise ValueError(f"sweep applies to the classical rules, got {rule!r}")

    rows = []
    for tau in tau_grid:
        damages, miss_fractions = [], []
        for seed in seeds:
            report = run_online(
                catalog,
                capacity,
                rule,
                damage=damage,
                tau=tau,
                horizon_events=horizon_events,
                seed=seed,
            )
            damages.append(report.total_damage)
            miss_fractions.append(report.miss_fraction)
        mean_miss = float(np.mean(miss_fractions))
        rows.append(
            {
                "tau": tau,
                "mean_damage": float(np.mean(damages)),
                "mean_miss_fraction": mean_miss,
                "feasible": delay_budget is None or mean_miss <= delay_budget,
            }
        )

    pool = [row for row in rows if row["feasible"]]
    if pool:
        best = min(pool, key=lambda row: (row["mean_damage"], row["tau"]))
    else:
        best = min(rows, key=lambda row: (row["mean_miss_fraction"], row["tau"]))
    return SweepResult(rule=rule, best_tau=best["tau"], best_damage=best["mean_damage"], rows=rows)


@dataclass(frozen=True, eq=False)
class UniformizedChain:
    """Discrete-time chain driven by arrival and departure probabilities.

    Transition marks are an arrival of file r with probability
    lambda_r / sum(lambda + mu) or a departure of file d with probability
    mu_d / sum(lambda + mu); the probabilities sum to one.
    """

    catalog: Catalog
    mu: np.ndarray
    capacity: int
    arrival_probs: np.ndarray = field(init=False)
    departure_probs: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape != (self.catalog.file_count,):
            raise ValueError(f"mu must have shape ({self.catalog.file_count},), got {mu.shape}")
        if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
            raise ValueError("uniformization needs finite positive retention rates")
        if self.capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {self.capacity}")
        total = self.catalog.rates.sum() + mu.sum()
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "arrival_probs", self.catalog.rates / total)
        object.__setattr__(self, "departure_probs", mu / total)


def value_iteration_oracle(
    chain: UniformizedChain,
    cost_model: CostModel,
    horizon: int,
    max_files: int = 4,
    max_capacity: int = 2,
) -> dict[tuple[frozenset, int], frozenset]:
    """Optimal victim sets from finite-horizon backward recursion.

    Returns, for every full cache S and missed request r, the set of
    candidates u in S + r whose eviction minimizes the cost-to-go at the top
    recursion level. Departures of non-resident files are self-loops.
    """
    catalog = chain.catalog
    m = catalog.file_count
    if m > max_files or chain.capacity > max_capacity:
        raise InstanceTooLarge(
            f"value iteration bounded to {max_files} files and capacity {max_capacity}"
        )
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")

    costs = cost_model.costs(mu=chain.mu)
    files = range(1, m + 1)
    subsets = [
        frozenset(c)
        for size in range(chain.capacity + 1)
        for c in itertools.combinations(files, size)
    ]
    arrival_p = chain.arrival_probs
    departure_p = chain.departure_probs

    # Terminal values: one (doubled) one-shot miss cost, no continuation.
    value_arrival = {(s, r): 2.0 * costs[r - 1] if r not in s else 0.0 for s in subsets for r in files}
    value_departure = {(s, d): 0.0 for s in subsets for d in files}

    victims: dict[tuple[frozenset, int], frozenset] = {}
    for step in range(horizon):
        exp_arrival = {
            s: sum(arrival_p[r - 1] * value_arrival[(s, r)] for r in files) for s in subsets
        }
        exp_departure = {
            s: sum(departure_p[d - 1] * value_departure[(s, d)] for d in files) for s in subsets
        }
        top = step == horizon - 1
        next_arrival = {}
        next_departure = {}
        for s in subsets:
            for r in files:
                if r in s:
                    next_arrival[(s, r)] = exp_arrival[s] + exp_departure[s]
                elif len(s) < chain.capacity:
                    grown = s | {r}
                    next_arrival[(s, r)] = 2.0 * costs[r - 1] + exp_arrival[grown] + exp_departure[grown]
                else:
                    # The arrival and departure continuations are minimized
                    # term by term; the eviction decision is read off the
                    # arrival term, which the departure term recurs to.
                    options = {u: exp_arrival[(s | {r}) - {u}] for u in sorted(s | {r})}
                    best = min(options.values())
                    best_dep = min(exp_departure[(s | {r}) - {u}] for u in s | {r})
                    next_arrival[(s, r)] = 2.0 * costs[r - 1] + best + best_dep
                    if top:
                        cut = best + 1e-9 * (1.0 + abs(best))
                        victims[(s, r)] = frozenset(u for u, v in options.items() if v <= cut)
            for d in files:
                shrunk = s - {d}
                next_departure[(s, d)] = exp_arrival[shrunk] + exp_departure[shrunk]
        value_arrival = next_arrival
        value_departure = next_departure

    return victims


def min_weighted_cost_victims(catalog: Catalog, costs: np.ndarray, candidates, rel_tol: float = 1e-9):
    """All candidates attaining min p_u * c(u); the stationary eviction rule."""
    weighted = {u: catalog.probs[u - 1] * costs[u - 1] for u in candidates}
    lowest = min(weighted.values())
    return frozenset(u for u, w in weighted.items() if w <= lowest + rel_tol * (1.0 + abs(lowest)))


@dataclass
class PipelineResult:
    solution: RetentionSolution
    report: SimReport


def dare_delta_pipeline(
    catalog: Catalog,
    capacity: int | None,
    delay_budget: float,
    damage: DamagePolynomial,
    horizon_events: int,
    seed: int,
    tolerance: float = 1e-8,
    cost_mode: CostMode = CostMode.DELAY_PLUS_DAMAGE,
) -> PipelineResult:
    """Two-stage policy: optimize retention rates, then simulate the eviction rule."""
    problem = RetentionProblem(catalog, damage, delay_budget)
    solution = solve(problem, tolerance)
    cost_model = CostModel(catalog, damage, cost_mode)
    report = run_online(
        catalog,
        capacity,
        "dare-delta",
        damage=damage,
        mu=solution.mu,
        horizon_events=horizon_events,
        seed=seed,
        cost_model=cost_model,
    )
    return PipelineResult(solution=solution, report=report)


def write_report_csv(report: SimReport, path, config_lines=()) -> None:
    """Summary row plus per-file miss/write counts."""
    from pathlib import Path

    lines = [f"# {line}" for line in config_lines]
    lines.append("kind,file,requests,misses,writes,miss_fraction,total_damage,seed")
    lines.append(
        f"summary,,{report.requests},{report.misses},{report.writes},"
        f"{report.miss_fraction!r},{report.total_damage!r},{report.seed}"
    )
    for i in range(len(report.per_file_misses)):
        if report.per_file_requests[i]:
            lines.append(
                f"file,{i + 1},{report.per_file_requests[i]},"
                f"{report.per_file_misses[i]},{report.per_file_writes[i]},,,"
            )
    Path(path).write_text("\n".join(lines) + "\n")


def write_event_log_csv(report: SimReport, path) -> None:
    """Optional event-by-event dump for debugging."""
    from pathlib import Path

    if report.events is None:
        raise ValueError("report was produced without keep_event_log")
    lines = ["time,kind,file,outcome,victim,damage"]
    for time, kind, file, outcome, victim, charged in report.events:
        lines.append(f"{time!r},{kind},{file},{outcome},{victim},{charged!r}")
    Path(path).write_text("\n".join(lines) + "\n")
