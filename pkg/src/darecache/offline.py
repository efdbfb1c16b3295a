"""Slotted offline cache simulation and retention assignment.

Conventions used throughout:

- Slots are numbered 1..T; files placed in the cache before the run are
  modeled as written at slot 0 and charged damage like any other write.
- A file written at slot w and evicted at slot t was resident for ``t - w``
  slots; a file never evicted was resident for ``T - w + 1`` slots. This
  time-in-cache duration is the retention charged to the classical policies.
- The backward reassignment instead charges ``max(1, j - w + 1)`` where j is
  the last slot in which the file was requested while resident, i.e. files
  are retained only while useful. It never breaks a hit and never exceeds the
  time-in-cache duration.
- Eviction ties (several candidates never requested again, or equal recency
  for slot-0 contents) break toward the smallest file id.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .model import DamagePolynomial
from .workload import RequestTrace, Substream, substream

BASE_POLICIES = ("lru", "fifo", "rnd", "fif")
STAR_POLICIES = ("fif-star", "lru-star", "dare-star")

_NEVER = 1 << 60  # next-request slot for files never requested again


class InstanceTooLarge(ValueError):
    """Raised when an exhaustive oracle is asked for an infeasible enumeration."""


@dataclass
class WriteRecord:
    """One cache write: resident from write_slot until eviction or horizon end."""

    file: int
    write_slot: int
    retention: int
    evicted_slot: int | None = None


@dataclass
class OfflineResult:
    policy: str
    capacity: int
    horizon: int
    miss_count: int
    evictions: list[tuple[int, int]]
    write_records: list[WriteRecord]
    damage: float
    miss_fraction: float

    @property
    def write_count(self) -> int:
        return len(self.write_records)


def _request_positions(requests: list[int]) -> dict[int, list[int]]:
    pos: dict[int, list[int]] = {}
    for slot, f in enumerate(requests, start=1):
        pos.setdefault(f, []).append(slot)
    return pos


def _total_damage(records: list[WriteRecord], damage: DamagePolynomial) -> float:
    if not records:
        return 0.0
    return float(np.sum(damage(np.array([r.retention for r in records], dtype=float))))


def simulate_offline(
    trace: RequestTrace,
    capacity: int,
    policy: str,
    seed: int | None = None,
    damage: DamagePolynomial | None = None,
) -> OfflineResult:
    """Run one classical eviction policy over a slotted trace.

    Every miss writes the requested file (cache-miss allocation); retention is
    accounted as time in cache. ``seed`` is required for the rnd policy only.
    """
    policy = policy.lower()
    if policy not in BASE_POLICIES:
        raise ValueError(f"unknown offline policy {policy!r}; expected one of {BASE_POLICIES}")
    if capacity < 1:
        raise ValueError(f"capacity must be >= 1, got {capacity}")
    if policy == "rnd" and seed is None:
        raise ValueError("rnd eviction requires a seed")
    if len(trace.initial_cache) > capacity:
        raise ValueError(f"initial cache of {len(trace.initial_cache)} files exceeds capacity {capacity}")
    damage = damage or DamagePolynomial.quadratic()
    rng = substream(seed, Substream.EVICTION) if policy == "rnd" else None

    requests = [int(f) for f in trace.requests]
    horizon = trace.horizon
    records: list[WriteRecord] = []
    active: dict[int, int] = {}  # file -> open record index
    last_use: dict[int, int] = {}
    evictions: list[tuple[int, int]] = []
    misses = 0

    for f in sorted(trace.initial_cache):
        active[f] = len(records)
        last_use[f] = 0
        records.append(WriteRecord(f, 0, 0))

    if policy == "fif":
        positions = _request_positions(requests)
        cursor = dict.fromkeys(positions, 0)

        def next_request(f: int, t: int) -> int:
            slots = positions.get(f)
            if slots is None:
                return _NEVER
            i = cursor[f]
            while i < len(slots) and slots[i] <= t:
                i += 1
            cursor[f] = i
            return slots[i] if i < len(slots) else _NEVER

    for t in range(1, horizon + 1):
        r = requests[t - 1]
        if r in active:
            last_use[r] = t
            continue
        misses += 1
        if len(active) == capacity:
            if policy == "lru":
                victim = min(active, key=lambda u: (last_use[u], u))
            elif policy == "fifo":
                victim = min(active, key=lambda u: (records[active[u]].write_slot, u))
            elif policy == "rnd":
                pool = sorted(active)
                victim = pool[int(rng.integers(len(pool)))]
            else:
                victim = max(active, key=lambda u: (next_request(u, t), -u))
            rec = records[active.pop(victim)]
            rec.evicted_slot = t
            rec.retention = t - rec.write_slot
            evictions.append((t, victim))
        active[r] = len(records)
        last_use[r] = t
        records.append(WriteRecord(r, t, 0))

    for f, idx in active.items():
        rec = records[idx]
        rec.retention = horizon - rec.write_slot + 1

    return OfflineResult(
        policy=policy,
        capacity=capacity,
        horizon=horizon,
        miss_count=misses,
        evictions=evictions,
        write_records=records,
        damage=_total_damage(records, damage),
        miss_fraction=misses / horizon,
    )


def _useful_retention(positions: dict[int, list[int]], record: WriteRecord, horizon: int) -> int:
    """Smallest retention covering every request served by this write."""
    end = record.evicted_slot - 1 if record.evicted_slot is not None else horizon
    slots = positions.get(record.file, ())
    i = bisect_right(slots, end) - 1
    if i >= 0 and slots[i] >= record.write_slot:
        return max(1, slots[i] - record.write_slot + 1)
    return 1


def _reassign_retentions(
    trace: RequestTrace, result: OfflineResult, policy_name: str, damage: DamagePolynomial
) -> OfflineResult:
    requests = [int(f) for f in trace.requests]
    positions = _request_positions(requests)
    records = [
        replace(rec, retention=_useful_retention(positions, rec, trace.horizon))
        for rec in result.write_records
    ]
    return OfflineResult(
        policy=policy_name,
        capacity=result.capacity,
        horizon=result.horizon,
        miss_count=result.miss_count,
        evictions=list(result.evictions),
        write_records=records,
        damage=_total_damage(records, damage),
        miss_fraction=result.miss_fraction,
    )


def dare_retentions(
    trace: RequestTrace, fif: OfflineResult, damage: DamagePolynomial | None = None
) -> OfflineResult:
    """Shrink each write of a farthest-in-future run to its useful span.

    Misses and evictions are untouched; only retentions (and hence damage)
    change. The input must be the fif result for the same trace.
    """
    if fif.policy != "fif":
        raise ValueError(f"expected a fif result, got policy {fif.policy!r}")
    if fif.horizon != trace.horizon:
        raise ValueError(f"trace horizon {trace.horizon} != result horizon {fif.horizon}")
    requests = [int(f) for f in trace.requests]
    for rec in fif.write_records:
        if rec.write_slot == 0:
            if rec.file not in trace.initial_cache:
                raise ValueError(f"slot-0 write of file {rec.file} not in the trace's initial cache")
        elif requests[rec.write_slot - 1] != rec.file:
            raise ValueError(
                f"write of file {rec.file} at slot {rec.write_slot} does not match the trace"
            )
    return _reassign_retentions(trace, fif, "dare", damage or DamagePolynomial.quadratic())


def simulate_offline_star(
    trace: RequestTrace,
    capacity: int,
    policy: str,
    seed: int | None = None,
    damage: DamagePolynomial | None = None,
) -> OfflineResult:
    """Variants that may decline to cache the requested file.

    On a full-cache miss the candidate set is the cache plus the request
    itself; when the policy rule picks the request, the file is served without
    being written. dare-star runs the fif-star eviction sequence and then
    reassigns retentions to useful spans.
    """
    policy = policy.lower()
    if policy not in STAR_POLICIES:
        raise ValueError(f"unknown star policy {policy!r}; expected one of {STAR_POLICIES}")
    if capacity < 1:
        raise ValueError(f"capacity must be >= 1, got {capacity}")
    if len(trace.initial_cache) > capacity:
        raise ValueError(f"initial cache of {len(trace.initial_cache)} files exceeds capacity {capacity}")
    damage = damage or DamagePolynomial.quadratic()

    requests = [int(f) for f in trace.requests]
    horizon = trace.horizon
    records: list[WriteRecord] = []
    active: dict[int, int] = {}
    last_seen: dict[int, int] = {}
    evictions: list[tuple[int, int]] = []
    misses = 0

    for f in sorted(trace.initial_cache):
        active[f] = len(records)
        last_seen[f] = 0
        records.append(WriteRecord(f, 0, 0))

    farthest = policy in ("fif-star", "dare-star")
    if farthest:
        positions = _request_positions(requests)
        cursor = dict.fromkeys(positions, 0)

        def next_request(f: int, t: int) -> int:
            slots = positions.get(f)
            if slots is None:
                return _NEVER
            i = cursor[f]
            while i < len(slots) and slots[i] <= t:
                i += 1
            cursor[f] = i
            return slots[i] if i < len(slots) else _NEVER

    for t in range(1, horizon + 1):
        r = requests[t - 1]
        if r in active:
            last_seen[r] = t
            continue
        misses += 1
        write = True
        if len(active) == capacity:
            candidates = list(active) + [r]
            if farthest:
                victim = max(candidates, key=lambda u: (next_request(u, t), -u))
            else:
                victim = min(candidates, key=lambda u: (last_seen.get(u, -1), u))
            if victim == r:
                write = False
            else:
                rec = records[active.pop(victim)]
                rec.evicted_slot = t
                rec.retention = t - rec.write_slot
                evictions.append((t, victim))
        if write:
            active[r] = len(records)
            records.append(WriteRecord(r, t, 0))
        last_seen[r] = t

    for f, idx in active.items():
        rec = records[idx]
        rec.retention = horizon - rec.write_slot + 1

    result = OfflineResult(
        policy=policy,
        capacity=capacity,
        horizon=horizon,
        miss_count=misses,
        evictions=evictions,
        write_records=records,
        damage=_total_damage(records, damage),
        miss_fraction=misses / horizon,
    )
    if policy == "dare-star":
        result = _reassign_retentions(trace, result, "dare-star", damage)
    return result


@dataclass
class BruteForceResult:
    min_damage: float
    records: list[WriteRecord]
    miss_count: int
    sequence_count: int


def brute_force_min_damage(
    trace: RequestTrace,
    capacity: int,
    damage: DamagePolynomial | None = None,
    max_slots: int = 10,
    max_writes: int = 6,
) -> BruteForceResult:
    """Exhaustive minimum damage over all miss-optimal eviction sequences.

    Enumerates every victim choice achieving the minimal miss count, and for
    each write scans retentions 1..T for the smallest one that keeps every
    request served by that write a hit. Only feasible for tiny instances.
    """
    damage = damage or DamagePolynomial.quadratic()
    if capacity < 1:
        raise ValueError(f"capacity must be >= 1, got {capacity}")
    if trace.horizon > max_slots:
        raise InstanceTooLarge(f"horizon {trace.horizon} exceeds enumeration bound {max_slots}")
    if len(trace.initial_cache) > capacity:
        raise ValueError("initial cache exceeds capacity")

    requests = [int(f) for f in trace.requests]
    horizon = trace.horizon
    initial = frozenset(trace.initial_cache)

    @lru_cache(maxsize=None)
    def min_misses(t: int, cache: frozenset) -> int:
        if t > horizon:
            return 0
        r = requests[t - 1]
        if r in cache:
            return min_misses(t + 1, cache)
        if len(cache) < capacity:
            return 1 + min_misses(t + 1, cache | {r})
        return 1 + min(min_misses(t + 1, (cache - {u}) | {r}) for u in cache)

    optimal = min_misses(1, initial)
    if optimal + len(initial) > max_writes:
        raise InstanceTooLarge(
            f"{optimal + len(initial)} writes exceed enumeration bound {max_writes}"
        )

    positions = _request_positions(requests)

    def min_feasible_retention(file: int, write_slot: int, end: int) -> int:
        # Slot-0 writes may need horizon + 1 to keep slot T resident.
        covered = [s for s in positions.get(file, ()) if write_slot <= s <= end]
        for r in range(1, horizon - write_slot + 2):
            if all(s <= write_slot + r - 1 for s in covered):
                return r
        return horizon - write_slot + 1

    best = {"damage": float("inf"), "records": None, "count": 0}

    def walk(t: int, cache: frozenset, misses: int, open_recs: dict, closed: list) -> None:
        if misses + min_misses(t, cache) > optimal:
            return
        if t > horizon:
            recs = [
                WriteRecord(f, w, min_feasible_retention(f, w, e), e)
                for (f, w, e) in closed
            ] + [
                WriteRecord(f, w, min_feasible_retention(f, w, horizon), None)
                for f, w in sorted(open_recs.items(), key=lambda kv: kv[1])
            ]
            total = _total_damage(recs, damage)
            best["count"] += 1
            if total < best["damage"]:
                best["damage"] = total
                best["records"] = recs
            return
        r = requests[t - 1]
        if r in cache:
            walk(t + 1, cache, misses, open_recs, closed)
            return
        if len(cache) < capacity:
            opened = dict(open_recs)
            opened[r] = t
            walk(t + 1, cache | {r}, misses + 1, opened, closed)
            return
        for u in sorted(cache):
            opened = dict(open_recs)
            w = opened.pop(u)
            opened[r] = t
            walk(t + 1, (cache - {u}) | {r}, misses + 1, opened, closed + [(u, w, t - 1)])

    walk(1, initial, 0, {f: 0 for f in sorted(initial)}, [])
    return BruteForceResult(
        min_damage=best["damage"],
        records=best["records"] or [],
        miss_count=optimal,
        sequence_count=best["count"],
    )


def write_offline_csv(
    result: OfflineResult, path, damage: DamagePolynomial | None = None, config_lines=()
) -> None:
    """One row per write record plus a trailing summary row."""
    from pathlib import Path

    damage = damage or DamagePolynomial.quadratic()
    lines = [f"# {line}" for line in config_lines]
    lines.append("kind,file,write_slot,retention,evicted_slot,damage,miss_count,miss_fraction")
    for rec in result.write_records:
        evicted = "" if rec.evicted_slot is None else str(rec.evicted_slot)
        lines.append(
            f"write,{rec.file},{rec.write_slot},{rec.retention},{evicted},{damage(rec.retention)!r},,"
        )
    lines.append(f"summary,,,,,{result.damage!r},{result.miss_count},{result.miss_fraction!r}")
    Path(path).write_text("\n".join(lines) + "\n")
