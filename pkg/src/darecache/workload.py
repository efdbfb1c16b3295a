"""Seeded request generation under the independent reference model.

All randomness flows from one root seed through named substreams, so a
component (trace, retention sampling, random evictions) can be toggled
without perturbing the draws of the others. Streams use numpy's PCG64
bit generator; substreams are derived with
``SeedSequence(root_seed, spawn_key=(purpose,))``, which is reproducible
across runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .model import Catalog


class Substream(IntEnum):
    """Fixed purpose indices for substream derivation."""

    TRACE = 0
    RETENTION = 1
    EVICTION = 2
    INSTANCE = 3


def substream(seed: int, purpose: Substream) -> np.random.Generator:
    """Independent generator for (seed, purpose)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(int(purpose),))))


@dataclass(frozen=True, eq=False)
class RequestTrace:
    """Slotted request string: one file id per slot, slots numbered 1..horizon."""

    horizon: int
    requests: np.ndarray
    initial_cache: frozenset[int]
    file_count: int
    seed: int

    def __post_init__(self) -> None:
        requests = np.asarray(self.requests, dtype=np.int64)
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if requests.shape != (self.horizon,):
            raise ValueError(f"requests must have shape ({self.horizon},), got {requests.shape}")
        if requests.size and (requests.min() < 1 or requests.max() > self.file_count):
            raise ValueError(f"file ids must lie in [1, {self.file_count}]")
        bad = [f for f in self.initial_cache if not 1 <= f <= self.file_count]
        if bad:
            raise ValueError(f"initial cache ids out of range: {sorted(bad)}")
        requests.setflags(write=False)
        object.__setattr__(self, "requests", requests)
        object.__setattr__(self, "initial_cache", frozenset(int(f) for f in self.initial_cache))

    def request_at(self, slot: int) -> int:
        """File requested in 1-based slot."""
        return int(self.requests[slot - 1])


def generate_trace(catalog: Catalog, slots: int, seed: int, initial_cache=()) -> RequestTrace:
    """Draw ``slots`` i.i.d. requests with the catalog's request probabilities."""
    if slots < 1:
        raise ValueError(f"slots must be >= 1, got {slots}")
    rng = substream(seed, Substream.TRACE)
    cdf = np.cumsum(catalog.probs)
    picks = np.searchsorted(cdf, rng.random(slots), side="right")
    np.minimum(picks, catalog.file_count - 1, out=picks)
    return RequestTrace(slots, picks + 1, frozenset(initial_cache), catalog.file_count, seed)


def trace_from_requests(requests, file_count: int, initial_cache=(), seed: int = 0) -> RequestTrace:
    """Wrap an explicit request string (e.g. a replayed example) as a trace."""
    requests = np.asarray(list(requests), dtype=np.int64)
    return RequestTrace(len(requests), requests, frozenset(initial_cache), file_count, seed)


def save_trace(trace: RequestTrace, path) -> None:
    """Line-oriented trace format: header ``T M seed``, then one id per line."""
    lines = [f"{trace.horizon} {trace.file_count} {trace.seed}"]
    lines.extend(str(int(f)) for f in trace.requests)
    Path(path).write_text("\n".join(lines) + "\n")


def load_trace(path, initial_cache=()) -> RequestTrace:
    lines = [l for l in Path(path).read_text().splitlines() if not l.startswith("#")]
    text = " ".join(lines).split()
    if len(text) < 3:
        raise ValueError(f"trace file {path} is missing its 'T M seed' header")
    horizon, file_count, seed = int(text[0]), int(text[1]), int(text[2])
    body = np.asarray(text[3:], dtype=np.int64)
    if body.shape != (horizon,):
        raise ValueError(f"trace file {path} declares {horizon} slots but has {body.size} ids")
    return RequestTrace(horizon, body, frozenset(initial_cache), file_count, seed)


class ArrivalEvent(NamedTuple):
    time: float
    file: int


@dataclass(frozen=True, eq=False)
class ArrivalStream:
    """Time-ordered request arrivals from the superposed Poisson process."""

    times: np.ndarray
    files: np.ndarray

    def __post_init__(self) -> None:
        for arr in (self.times, self.files):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, i: int) -> ArrivalEvent:
        return ArrivalEvent(float(self.times[i]), int(self.files[i]))

    def __iter__(self) -> Iterator[ArrivalEvent]:
        for t, f in zip(self.times, self.files):
            yield ArrivalEvent(float(t), int(f))


def _mark_files(catalog: Catalog, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(catalog.probs)
    picks = np.searchsorted(cdf, u, side="right")
    np.minimum(picks, catalog.file_count - 1, out=picks)
    return picks + 1


def generate_arrivals(catalog: Catalog, horizon: float, seed: int) -> ArrivalStream:
    """Superposition of per-file Poisson processes over [0, horizon].

    Generated as one Poisson clock at the total rate with i.i.d. file marks,
    which is the same process and keeps the stream sorted by construction.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    rng = substream(seed, Substream.TRACE)
    total = catalog.total_rate
    chunk = max(64, int(total * horizon * 1.1) + 32)
    times = np.array([], dtype=float)
    last = 0.0
    while last <= horizon:
        gaps = rng.exponential(1.0 / total, size=chunk)
        new = last + np.cumsum(gaps)
        times = np.concatenate([times, new])
        last = float(times[-1])
        chunk = 1024
    times = times[times <= horizon]
    files = _mark_files(catalog, rng.random(len(times)))
    return ArrivalStream(times, files)


def generate_request_events(catalog: Catalog, count: int, seed: int) -> ArrivalStream:
    """Exactly ``count`` arrivals of the same marked-Poisson process."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = substream(seed, Substream.TRACE)
    gaps = rng.exponential(1.0 / catalog.total_rate, size=count)
    times = np.cumsum(gaps)
    files = _mark_files(catalog, rng.random(count))
    return ArrivalStream(times, files)
