"""Domain model shared by every policy: file catalog, damage polynomial, per-miss cost.

File ids are 1-based throughout so that the Zipf rate of file ``m`` is
``1 / m**alpha``. All objects here are immutable after construction and safe
to share across concurrent simulation replications.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class CostMode(str, Enum):
    """How the per-miss cost c(m) combines delay and write damage."""

    DELAY_PLUS_DAMAGE = "delay-plus-damage"
    DAMAGE_ONLY = "damage-only"
    DELAY_ONLY = "delay-only"


@dataclass(frozen=True, eq=False)
class Catalog:
    """Static file population with per-file request rates and delay costs.

    ``rates[m-1]`` is the Poisson arrival rate of file ``m``; ``probs`` is the
    normalized request distribution used by the slotted trace generator.
    """

    file_count: int
    alpha: float
    rates: np.ndarray
    delays: np.ndarray
    probs: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        if self.file_count < 1:
            raise ValueError(f"file_count must be >= 1, got {self.file_count}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        rates = np.asarray(self.rates, dtype=float)
        delays = np.asarray(self.delays, dtype=float)
        if rates.shape != (self.file_count,):
            raise ValueError(f"rates must have shape ({self.file_count},), got {rates.shape}")
        if delays.shape != (self.file_count,):
            raise ValueError(f"delays must have shape ({self.file_count},), got {delays.shape}")
        if not np.all(rates > 0):
            raise ValueError("all arrival rates must be positive")
        if not np.all(delays > 0):
            raise ValueError("all delay costs must be positive")
        probs = rates / rates.sum()
        for arr in (rates, delays, probs):
            arr.setflags(write=False)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "probs", probs)

    @property
    def total_rate(self) -> float:
        return float(self.rates.sum())

    def rate(self, file_id: int) -> float:
        return float(self.rates[file_id - 1])

    def prob(self, file_id: int) -> float:
        return float(self.probs[file_id - 1])

    def delay(self, file_id: int) -> float:
        return float(self.delays[file_id - 1])

    def normalized(self, total_rate: float = 1.0) -> "Catalog":
        """Same popularity profile, rescaled so rates sum to ``total_rate``.

        Useful when continuous-time damage must be compared against slotted
        results: with total rate 1, one time unit carries one expected request.
        """
        scale = total_rate / self.rates.sum()
        return Catalog(self.file_count, self.alpha, self.rates * scale, self.delays.copy())


def build_catalog(file_count: int, alpha: float = 0.0, delay: float | "np.ndarray | list[float]" = 1.0) -> Catalog:
    """Build a catalog with Zipf rates ``1/m**alpha`` and the given delay cost(s).

    ``delay`` may be a scalar (uniform) or a per-file sequence.
    """
    if file_count < 1:
        raise ValueError(f"file_count must be >= 1, got {file_count}")
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    rates = 1.0 / np.arange(1, file_count + 1, dtype=float) ** alpha
    delays = np.broadcast_to(np.asarray(delay, dtype=float), (file_count,)).copy()
    return Catalog(file_count, alpha, rates, delays)


@dataclass(frozen=True)
class DamagePolynomial:
    """One-shot write damage f(Z) = sum_k a_k Z^k with a_0 = 0.

    Coefficients are (a_1, ..., a_n), all >= 0 with at least one positive,
    which makes f nondecreasing and convex on [0, inf).
    """

    coefficients: tuple[float, ...]

    def __post_init__(self) -> None:
        coeffs = tuple(float(a) for a in self.coefficients)
        if not coeffs:
            raise ValueError("damage polynomial needs at least one coefficient")
        if any(a < 0 for a in coeffs):
            raise ValueError(f"coefficients must be >= 0, got {coeffs}")
        if not any(a > 0 for a in coeffs):
            raise ValueError("at least one coefficient must be positive")
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def monomial(cls, degree: int, coefficient: float = 1.0) -> "DamagePolynomial":
        """f(Z) = coefficient * Z**degree."""
        if degree < 1:
            raise ValueError(f"degree must be >= 1, got {degree}")
        return cls((0.0,) * (degree - 1) + (float(coefficient),))

    @classmethod
    def quadratic(cls) -> "DamagePolynomial":
        """The default damage model: f(Z) = Z**2."""
        return cls.monomial(2)

    @property
    def degree(self) -> int:
        return len(self.coefficients)

    def __call__(self, z):
        """Evaluate f at z (scalar or array); raises for negative retention."""
        z = np.asarray(z, dtype=float)
        if np.any(z < 0):
            raise ValueError("retention must be >= 0")
        # Horner on z * (a_1 + z * (a_2 + ...)) keeps f(0) exactly 0.
        acc = np.zeros_like(z)
        for a in reversed(self.coefficients):
            acc = acc * z + a
        out = acc * z
        return float(out) if out.ndim == 0 else out

    def expected_exponential(self, mu):
        """E[f(R)] for R ~ Exponential(rate=mu): sum_k a_k * k! / mu**k.

        ``mu`` may be a scalar or array; entries of +inf mean "never written"
        and contribute zero expected damage.
        """
        mu = np.asarray(mu, dtype=float)
        if np.any(mu <= 0):
            raise ValueError("retention rate must be positive (inf = never write)")
        out = np.zeros_like(mu)
        for k, a in enumerate(self.coefficients, start=1):
            if a:
                with np.errstate(divide="ignore"):
                    out = out + a * math.factorial(k) / mu**k
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CostModel:
    """Per-miss cost c(m) used by the online eviction rule.

    The damage term is the expected one-shot damage of the file's retention
    distribution (exponential with rate mu_m) or f(tau) for a fixed retention.
    """

    catalog: Catalog
    damage: DamagePolynomial
    mode: CostMode = CostMode.DELAY_PLUS_DAMAGE

    def costs(self, mu: np.ndarray | None = None, tau: float | None = None) -> np.ndarray:
        """c(m) for every file, given the retention regime in force."""
        if (mu is None) == (tau is None):
            raise ValueError("provide exactly one of mu (stochastic) or tau (deterministic)")
        if self.mode is CostMode.DELAY_ONLY:
            damage_term = np.zeros(self.catalog.file_count)
        elif mu is not None:
            damage_term = np.asarray(self.damage.expected_exponential(mu), dtype=float)
        else:
            damage_term = np.full(self.catalog.file_count, self.damage(float(tau)))
        if self.mode is CostMode.DAMAGE_ONLY:
            return damage_term
        if self.mode is CostMode.DELAY_ONLY:
            return self.catalog.delays.copy()
        return self.catalog.delays + damage_term
