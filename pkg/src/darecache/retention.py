"""Per-file retention-rate optimization under an expected-delay budget.

The decision variable is q_m = lambda_m / (mu_m + lambda_m), the per-request
hit probability of file m under exponential interarrivals and retentions.
Expected damage per request, p_m * p_miss(m) * E[f(R_m)], is separable and
convex in q on [0, 1) (strictly so past the linear term), the delay
constraint is linear, so the solver is a dual bisection on the constraint
multiplier with a safeguarded per-coordinate Newton inner solve. q_m = 0
means the file is never written (mu = inf); q_m -> 1 would retain forever,
where the objective diverges, so q is clamped just below 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Catalog, DamagePolynomial

Q_CAP = 1.0 - 1e-9
NEVER_WRITE_Q = 1e-12


class ConvergenceError(RuntimeError):
    """Solver failed to reach the requested tolerance within its budgets."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message if not diagnostics else f"{message} ({diagnostics})")
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class RetentionProblem:
    """Minimize expected per-request damage s.t. expected delay <= delay_budget."""

    catalog: Catalog
    damage: DamagePolynomial
    delay_budget: float

    def __post_init__(self) -> None:
        if not self.delay_budget > 0:
            raise ValueError(f"delay budget must be positive, got {self.delay_budget}")


@dataclass
class RetentionSolution:
    q: np.ndarray
    mu: np.ndarray
    objective_damage: float
    achieved_delay: float
    theta: float
    kkt_residual: float
    stationarity_residual: float
    primal_residual: float
    slackness_residual: float

    def never_write(self) -> np.ndarray:
        """Boolean mask of files that are never cached."""
        return np.isinf(self.mu)


def _sigma(problem: RetentionProblem) -> np.ndarray:
    """sigma[k-1, m-1] = a_k * k! / (lambda_m**(k-1) * sum(lambda)).

    Weights of the expected-damage objective
        sum_m sum_k sigma_km * q_m**k / (1 - q_m)**(k-1),
    which is p_m * p_miss(m) * E[f(R_m)] rewritten in q. (Substituting
    mu = lambda (1-q)/q into q * mu * sum_k a_k k!/mu**k keeps one factor mu;
    dropping it would overweight every file by 1/mu_m.)
    """
    lam = problem.catalog.rates
    total = lam.sum()
    rows = []
    for k, a in enumerate(problem.damage.coefficients, start=1):
        rows.append(a * math.factorial(k) / (lam ** (k - 1) * total))
    return np.array(rows)


def _check_q(problem: RetentionProblem, q, upper: float) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (problem.catalog.file_count,):
        raise ValueError(f"q must have shape ({problem.catalog.file_count},), got {q.shape}")
    if np.any(q < 0) or np.any(q >= upper):
        raise ValueError(f"q must lie in [0, {upper}), got range [{q.min()}, {q.max()}]")
    return q


def objective(problem: RetentionProblem, q) -> float:
    """Expected damage per request at hit probabilities q."""
    q = _check_q(problem, q, 1.0)
    sigma = _sigma(problem)
    total = 0.0
    for k in range(1, sigma.shape[0] + 1):
        total += float(np.sum(sigma[k - 1] * q**k / (1.0 - q) ** (k - 1)))
    return total


def delay(problem: RetentionProblem, q) -> float:
    """Expected delay per request at hit probabilities q (q = 1 allowed here)."""
    q = np.asarray(q, dtype=float)
    if np.any(q < 0) or np.any(q > 1):
        raise ValueError("q must lie in [0, 1]")
    cat = problem.catalog
    return float(np.sum(cat.rates * cat.delays * (1.0 - q)) / cat.rates.sum())


def _objective_gradient(sigma: np.ndarray, q: np.ndarray) -> np.ndarray:
    grad = np.zeros_like(q)
    for k in range(1, sigma.shape[0] + 1):
        grad += sigma[k - 1] * q ** (k - 1) * (k - q) / (1.0 - q) ** k
    return grad


def _objective_curvature(sigma: np.ndarray, q: np.ndarray) -> np.ndarray:
    # d2/dq2 [q^k (1-q)^(1-k)] = k (k-1) q^(k-2) (1-q)^(-k-1)
    curv = np.zeros_like(q)
    for k in range(2, sigma.shape[0] + 1):
        with np.errstate(divide="ignore", invalid="ignore"):
            term = sigma[k - 1] * k * (k - 1) * q ** (k - 2) / (1.0 - q) ** (k + 1)
        curv += np.nan_to_num(term, nan=0.0, posinf=np.inf)
    return curv


def _coordinate_argmin(sigma: np.ndarray, targets: np.ndarray, newton_steps: int) -> np.ndarray:
    """Solve g_m'(q) = target_m per coordinate on [0, Q_CAP].

    The derivative is strictly increasing from 0, so a bisection bracket is
    always valid; Newton steps are taken whenever they stay inside it.
    """
    lo = np.zeros_like(targets)
    hi = np.full_like(targets, Q_CAP)
    q = np.full_like(targets, 0.5)
    for _ in range(newton_steps):
        resid = _objective_gradient(sigma, q) - targets
        hi = np.where(resid > 0, q, hi)
        lo = np.where(resid <= 0, q, lo)
        curv = _objective_curvature(sigma, q)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = resid / curv
        proposal = q - step
        bad = ~np.isfinite(proposal) | (proposal <= lo) | (proposal >= hi)
        q = np.where(bad, 0.5 * (lo + hi), proposal)
        if float(np.max(hi - lo)) < 1e-16:
            break
    return q


def solve(
    problem: RetentionProblem,
    tolerance: float = 1e-8,
    dual_steps: int = 200,
    newton_steps: int = 100,
) -> RetentionSolution:
    """KKT-optimal hit probabilities and retention rates for the problem.

    The objective is increasing in every coordinate, so either q = 0 is
    feasible (slack constraint, zero damage) or the delay constraint is
    active and the dual multiplier theta is found by bisection.
    """
    if not tolerance > 0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    cat = problem.catalog
    sigma = _sigma(problem)
    m = cat.file_count
    weights = cat.rates * cat.delays / cat.rates.sum()  # d delay / d(1-q)

    zero = np.zeros(m)
    if delay(problem, zero) <= problem.delay_budget + tolerance:
        mu = np.full(m, np.inf)
        return RetentionSolution(
            q=zero,
            mu=mu,
            objective_damage=0.0,
            achieved_delay=delay(problem, zero),
            theta=0.0,
            kkt_residual=0.0,
            stationarity_residual=0.0,
            primal_residual=0.0,
            slackness_residual=0.0,
        )

    def primal_for(theta: float) -> np.ndarray:
        return _coordinate_argmin(sigma, theta * weights, newton_steps)

    theta_hi = 1.0
    for _ in range(200):
        if delay(problem, primal_for(theta_hi)) <= problem.delay_budget:
            break
        theta_hi *= 4.0
    else:
        raise ConvergenceError(
            "could not bracket the dual multiplier",
            {"theta_hi": theta_hi, "delay_budget": problem.delay_budget},
        )

    theta_lo = 0.0
    for _ in range(dual_steps):
        theta_mid = 0.5 * (theta_lo + theta_hi)
        if delay(problem, primal_for(theta_mid)) > problem.delay_budget:
            theta_lo = theta_mid
        else:
            theta_hi = theta_mid
        if theta_hi - theta_lo <= 1e-16 * theta_hi:
            break

    theta = theta_hi  # feasible side of the bracket
    q = primal_for(theta)
    gap = problem.delay_budget - delay(problem, q)
    if gap > 0:
        # With linear damage terms the coordinate problems are piecewise
        # linear and flip between bounds as theta crosses a breakpoint; the
        # marginal coordinates must take fractional values for the constraint
        # to bind. Lower them toward the infeasible-side solution until tight.
        q_low = primal_for(theta_lo)
        for i in np.flatnonzero(q - q_low > 1e-12):
            room = (q[i] - q_low[i]) * weights[i]
            take = min(gap, float(room))
            q[i] -= take / weights[i]
            gap -= take
            if gap <= 1e-16:
                break
    q[q < NEVER_WRITE_Q] = 0.0

    achieved = delay(problem, q)
    targets = theta * weights
    grad = _objective_gradient(sigma, q)
    at_lower = q <= 0.0
    at_upper = q >= Q_CAP - 1e-15
    stationarity = np.abs(grad - targets) / (1.0 + targets)
    stationarity[at_lower] = (
        np.maximum(0.0, targets[at_lower] - grad[at_lower]) / (1.0 + targets[at_lower])
    )
    stationarity[at_upper] = (
        np.maximum(0.0, grad[at_upper] - targets[at_upper]) / (1.0 + targets[at_upper])
    )
    stationarity_residual = float(stationarity.max()) if m else 0.0
    primal_residual = max(0.0, achieved - problem.delay_budget)
    slackness_residual = abs(theta * (problem.delay_budget - achieved)) / (1.0 + theta)
    kkt = max(stationarity_residual, primal_residual, slackness_residual)
    if kkt > tolerance:
        raise ConvergenceError(
            "KKT residual above tolerance after iteration budget",
            {
                "kkt": kkt,
                "stationarity": stationarity_residual,
                "primal": primal_residual,
                "slackness": slackness_residual,
                "theta": theta,
            },
        )

    with np.errstate(divide="ignore"):
        mu = np.where(q > 0, cat.rates * (1.0 - q) / np.where(q > 0, q, 1.0), np.inf)
    return RetentionSolution(
        q=q,
        mu=mu,
        objective_damage=objective(problem, q),
        achieved_delay=achieved,
        theta=theta,
        kkt_residual=kkt,
        stationarity_residual=stationarity_residual,
        primal_residual=primal_residual,
        slackness_residual=slackness_residual,
    )


def verify_by_simulation(
    solution: RetentionSolution,
    problem: RetentionProblem,
    horizon_events: int,
    seed: int,
) -> tuple[float, float]:
    """Empirical (miss fraction, damage per request) from an uncapacitated run."""
    from .online import run_online

    report = run_online(
        problem.catalog,
        None,
        "dare-delta",
        damage=problem.damage,
        mu=solution.mu,
        horizon_events=horizon_events,
        seed=seed,
    )
    return report.miss_fraction, report.total_damage / report.requests


def write_solution_csv(
    solution: RetentionSolution, problem: RetentionProblem, path, config_lines=()
) -> None:
    """Per-file rows (id, lambda, q, mu, damage share) plus a summary row."""
    from pathlib import Path

    cat = problem.catalog
    sigma = _sigma(problem)
    per_file = np.zeros(cat.file_count)
    for k in range(1, sigma.shape[0] + 1):
        per_file += sigma[k - 1] * solution.q**k / (1.0 - solution.q) ** (k - 1)
    lines = [f"# {line}" for line in config_lines]
    lines.append("kind,file,rate,q,mu,expected_damage,delta,theta,objective,achieved_delay")
    for i in range(cat.file_count):
        mu = solution.mu[i]
        mu_text = "inf" if np.isinf(mu) else repr(float(mu))
        lines.append(
            f"file,{i + 1},{float(cat.rates[i])!r},{float(solution.q[i])!r},"
            f"{mu_text},{float(per_file[i])!r},,,,"
        )
    lines.append(
        "summary,,,,,,"
        f"{problem.delay_budget!r},{solution.theta!r},"
        f"{solution.objective_damage!r},{solution.achieved_delay!r}"
    )
    Path(path).write_text("\n".join(lines) + "\n")
