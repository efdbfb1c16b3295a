"""Damage-aware flash caching laboratory: offline and online policies,
retention optimization, and reproducible experiments."""

from .model import Catalog, CostMode, CostModel, DamagePolynomial, build_catalog
from .offline import (
    BruteForceResult,
    InstanceTooLarge,
    OfflineResult,
    WriteRecord,
    brute_force_min_damage,
    dare_retentions,
    simulate_offline,
    simulate_offline_star,
)
from .online import (
    PipelineResult,
    SimReport,
    SweepResult,
    UniformizedChain,
    dare_delta_pipeline,
    min_weighted_cost_victims,
    run_online,
    sweep_deterministic_retention,
    value_iteration_oracle,
)
from .retention import (
    ConvergenceError,
    RetentionProblem,
    RetentionSolution,
    delay,
    objective,
    solve,
    verify_by_simulation,
)
from .workload import (
    ArrivalEvent,
    ArrivalStream,
    RequestTrace,
    Substream,
    generate_arrivals,
    generate_request_events,
    generate_trace,
    load_trace,
    save_trace,
    substream,
    trace_from_requests,
)

__version__ = "0.1.0"
