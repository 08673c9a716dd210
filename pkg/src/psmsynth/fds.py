"""Latency-constrained force-directed scheduling, a list-scheduling baseline,
and an exhaustive minimum-resource oracle for small graphs.

The force-directed scheduler fixes one operation per round at the
(operation, control step) pair with the lowest total force, where force is
measured against per-type distribution graphs.  Ties break on lowest total
force, then lowest op id, then earliest step, which makes results
byte-for-byte reproducible.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping

from .cost import CostTable, exec_latency, loop_keys
from .dfg import (
    DEFAULT_LATENCIES,
    Dfg,
    InfeasibleLatency,
    Loop,
    LoopNest,
    asap,
    min_latency,
    max_useful_latency,
)

BRUTE_FORCE_OP_LIMIT = 12


class SchedulingError(Exception):
    pass


@dataclass(frozen=True)
class Schedule:
    start: Mapping[int, int]  # op id -> control step
    lam: int

    def makespan(self, dfg: Dfg, latencies=None) -> int:
        latencies = DEFAULT_LATENCIES if latencies is None else latencies
        return max(
            (self.start[op.id] + latencies.get(op.type, 1) for op in dfg.ops),
            default=0,
        )


@dataclass(frozen=True)
class ResourceUsage:
    per_type: Mapping[str, int]

    def cost(self, table: CostTable | None = None) -> float:
        table = table or CostTable()
        return sum(table.area.get(t, 1.0) * r for t, r in self.per_type.items())


def resource_usage(dfg: Dfg, schedule: Schedule, latencies=None) -> ResourceUsage:
    latencies = DEFAULT_LATENCIES if latencies is None else latencies
    occupancy: dict[str, dict[int, int]] = {}
    for op in dfg.ops:
        lat = latencies.get(op.type, 1)
        slots = occupancy.setdefault(op.type, {})
        for t in range(schedule.start[op.id], schedule.start[op.id] + lat):
            slots[t] = slots.get(t, 0) + 1
    return ResourceUsage({t: max(slots.values()) for t, slots in occupancy.items()})


def validate_schedule(dfg: Dfg, schedule: Schedule, latencies=None) -> None:
    """Raise if frame containment, dependences, or the makespan bound fail."""
    latencies = DEFAULT_LATENCIES if latencies is None else latencies
    op_ids = {op.id for op in dfg.ops}
    early = asap(dfg, latencies)
    for op in dfg.ops:
        t = schedule.start[op.id]
        if t < early[op.id]:
            raise SchedulingError(f"op {op.id} scheduled before its earliest start")
        for p in op.operands:
            if p in op_ids:
                if t < schedule.start[p] + latencies.get(dfg.op(p).type, 1):
                    raise SchedulingError(f"dependence {p} -> {op.id} violated")
        if t + latencies.get(op.type, 1) > schedule.lam:
            raise SchedulingError(f"op {op.id} finishes after the latency constraint")


# --- Frames and distribution graphs ------------------------------------------

def _frames(dfg: Dfg, lam: int, latencies, fixed: Mapping[int, int]) -> dict[int, tuple[int, int]]:
    """Start-time intervals [lo, hi] for every op, honoring fixed placements."""
    op_ids = {op.id for op in dfg.ops}
    order = dfg.topo_order()
    lo: dict[int, int] = {}
    for v in order:
        op = dfg.op(v)
        bound = max(
            (lo[p] + latencies.get(dfg.op(p).type, 1) for p in op.operands if p in op_ids),
            default=0,
        )
        lo[v] = fixed.get(v, bound) if v in fixed else bound
        if v in fixed and fixed[v] < bound:
            raise SchedulingError(f"fixed placement of op {v} violates a dependence")
    succ: dict[int, list[int]] = {i: [] for i in op_ids}
    for op in dfg.ops:
        for p in op.operands:
            if p in op_ids:
                succ[p].append(op.id)
    hi: dict[int, int] = {}
    for v in reversed(order):
        op = dfg.op(v)
        lat = latencies.get(op.type, 1)
        bound = min((hi[s] for s in succ[v]), default=lam) - lat
        hi[v] = fixed.get(v, bound) if v in fixed else bound
    for v in order:
        if lo[v] > hi[v]:
            raise InfeasibleLatency(lam, min_latency(dfg, latencies), v)
    return {v: (lo[v], hi[v]) for v in order}


def _mass(frame: tuple[int, int], lat: int) -> dict[int, float]:
    """Expected per-step occupancy of one op over its start-time frame."""
    lo, hi = frame
    width = hi - lo + 1
    mass: dict[int, float] = {}
    for start in range(lo, hi + 1):
        for t in range(start, start + lat):
            mass[t] = mass.get(t, 0.0) + 1.0 / width
    return mass


def distribution_graphs(
    dfg: Dfg, frames: Mapping[int, tuple[int, int]], latencies
) -> dict[str, dict[int, float]]:
    graphs: dict[str, dict[int, float]] = {}
    for op in dfg.ops:
        dg = graphs.setdefault(op.type, {})
        for t, m in _mass(frames[op.id], latencies.get(op.type, 1)).items():
            dg[t] = dg.get(t, 0.0) + m
    return graphs


Observer = Callable[[Mapping[int, tuple[int, int]], Mapping[str, Mapping[int, float]]], None]


def fds_schedule(
    dfg: Dfg,
    lam: int,
    latencies=None,
    observer: Observer | None = None,
) -> Schedule:
    """Minimum-resource schedule under the latency constraint `lam`.

    Each round recomputes frames and distribution graphs, evaluates the self
    force plus depth-1 predecessor/successor forces for every unfixed
    (op, step) candidate, and fixes the minimum-force pair.
    """
    latencies = DEFAULT_LATENCIES if latencies is None else latencies
    if lam < min_latency(dfg, latencies):
        raise InfeasibleLatency(lam, min_latency(dfg, latencies))
    op_ids = {op.id for op in dfg.ops}
    preds: dict[int, list[int]] = {
        op.id: [p for p in op.operands if p in op_ids] for op in dfg.ops
    }
    succs: dict[int, list[int]] = {i: [] for i in op_ids}
    for v, ps in preds.items():
        for p in ps:
            succs[p].append(v)

    fixed: dict[int, int] = {}
    while len(fixed) < len(op_ids):
        frames = _frames(dfg, lam, latencies, fixed)
        graphs = distribution_graphs(dfg, frames, latencies)
        if observer is not None:
            observer(frames, graphs)

        # Per-round caches: each op's expected-occupancy force baseline, and
        # memoized neighbor forces keyed by the implied tightened bound.
        base: dict[int, float] = {}
        for v in op_ids:
            dg = graphs[dfg.op(v).type]
            base[v] = sum(
                dg.get(t, 0.0) * m
                for t, m in _mass(frames[v], latencies.get(dfg.op(v).type, 1)).items()
            )
        tight_memo: dict[tuple[int, int, int], float | None] = {}

        def tightened(n: int, new_lo: int, new_hi: int) -> float | None:
            """Force change when neighbor n's frame shrinks to [new_lo, new_hi];
            None marks an infeasible (empty) frame."""
            key = (n, new_lo, new_hi)
            if key not in tight_memo:
                if new_lo > new_hi:
                    tight_memo[key] = None
                else:
                    n_lat = latencies.get(dfg.op(n).type, 1)
                    dg = graphs[dfg.op(n).type]
                    val = sum(
                        dg.get(t, 0.0) * m
                        for t, m in _mass((new_lo, new_hi), n_lat).items()
                    )
                    tight_memo[key] = val - base[n]
            return tight_memo[key]

        best: tuple[float, int, int] | None = None  # (force, op id, step)
        for v in sorted(op_ids - fixed.keys()):
            op = dfg.op(v)
            lat = latencies.get(op.type, 1)
            lo, hi = frames[v]
            dg = graphs[op.type]
            for t in range(lo, hi + 1):
                force = sum(dg.get(u, 0.0) for u in range(t, t + lat)) - base[v]
                # Depth-1 neighbor forces from the implied frame tightenings.
                for p in preds[v]:
                    p_lat = latencies.get(dfg.op(p).type, 1)
                    plo, phi = frames[p]
                    new_hi = min(phi, t - p_lat)
                    if new_hi == phi:
                        continue
                    delta = tightened(p, plo, new_hi)
                    if delta is None:
                        force = None
                        break
                    force += delta
                if force is None:
                    continue
                for s in succs[v]:
                    slo, shi = frames[s]
                    new_lo = max(slo, t + lat)
                    if new_lo == slo:
                        continue
                    delta = tightened(s, new_lo, shi)
                    if delta is None:
                        force = None
                        break
                    force += delta
                if force is None:
                    continue
                key = (round(force, 9), v, t)
                if best is None or key < best:
                    best = key
        if best is None:
            raise SchedulingError("no feasible placement found")  # pragma: no cover
        _, v, t = best
        fixed[v] = t

    schedule = Schedule(dict(fixed), lam)
    validate_schedule(dfg, schedule, latencies)
    return schedule


def _force_delta(dg: Mapping[int, float], old: Mapping[int, float], new: Mapping[int, float]) -> float:
    force = 0.0
    for t in old.keys() | new.keys():
        force += dg.get(t, 0.0) * (new.get(t, 0.0) - old.get(t, 0.0))
    return force


# --- Baseline and oracle -----------------------------------------------------

def list_schedule(dfg: Dfg, resources: Mapping[str, int], latencies=None) -> Schedule:
    """Resource-constrained list schedule, priority = longest path to a sink,
    ties by lowest op id."""
    latencies = DEFAULT_LATENCIES if latencies is None else latencies
    op_ids = {op.id for op in dfg.ops}
    for op in dfg.ops:
        if resources.get(op.type, 0) < 1:
            raise SchedulingError(f"need at least one '{op.type}' resource")

    succ: dict[int, list[int]] = {i: [] for i in op_ids}
    for op in dfg.ops:
        for p in op.operands:
            if p in op_ids:
                succ[p].append(op.id)
    height: dict[int, int] = {}
    for v in reversed(dfg.topo_order()):
        lat = latencies.get(dfg.op(v).type, 1)
        height[v] = lat + max((height[s] for s in succ[v]), default=0)

    start: dict[int, int] = {}
    unscheduled = set(op_ids)
    busy: dict[str, dict[int, int]] = {}
    t = 0
    while unscheduled:
        ready = sorted(
            (
                v
                for v in unscheduled
                if all(
                    p in start and start[p] + latencies.get(dfg.op(p).type, 1) <= t
                    for p in dfg.op(v).operands
                    if p in op_ids
                )
            ),
            key=lambda v: (-height[v], v),
        )
        for v in ready:
            op = dfg.op(v)
            lat = latencies.get(op.type, 1)
            slots = busy.setdefault(op.type, {})
            if all(slots.get(u, 0) < resources[op.type] for u in range(t, t + lat)):
                for u in range(t, t + lat):
                    slots[u] = slots.get(u, 0) + 1
                start[v] = t
                unscheduled.remove(v)
        t += 1
    makespan = max(
        (start[op.id] + latencies.get(op.type, 1) for op in dfg.ops), default=0
    )
    return Schedule(start, makespan)


def brute_force_min_resources(
    dfg: Dfg, lam: int, latencies=None, table: CostTable | None = None
) -> tuple[ResourceUsage, Schedule]:
    """Exact minimum weighted resource usage over all feasible schedules.

    Exhaustive over the ops' time frames; guarded to small graphs.
    """
    latencies = DEFAULT_LATENCIES if latencies is None else latencies
    table = table or CostTable()
    if len(dfg.ops) > BRUTE_FORCE_OP_LIMIT:
        raise SchedulingError(
            f"brute force limited to {BRUTE_FORCE_OP_LIMIT} ops, got {len(dfg.ops)}"
        )
    frames = _frames(dfg, lam, latencies, {})
    order = dfg.topo_order()
    op_ids = set(order)

    best_cost = float("inf")
    best: tuple[ResourceUsage, Schedule] | None = None
    start: dict[int, int] = {}

    def partial_usage() -> dict[str, int]:
        occupancy: dict[str, dict[int, int]] = {}
        for v, t in start.items():
            op = dfg.op(v)
            lat = latencies.get(op.type, 1)
            slots = occupancy.setdefault(op.type, {})
            for u in range(t, t + lat):
                slots[u] = slots.get(u, 0) + 1
        return {ty: max(s.values()) for ty, s in occupancy.items()}

    def walk(idx: int):
        nonlocal best_cost, best
        if idx == len(order):
            usage = ResourceUsage(partial_usage())
            cost = usage.cost(table)
            if cost < best_cost:
                best_cost = cost
                best = (usage, Schedule(dict(start), lam))
            return
        v = order[idx]
        op = dfg.op(v)
        lo, hi = frames[v]
        earliest = max(
            (start[p] + latencies.get(dfg.op(p).type, 1) for p in op.operands if p in op_ids),
            default=lo,
        )
        for t in range(max(lo, earliest), hi + 1):
            start[v] = t
            usage = partial_usage()
            if ResourceUsage(usage).cost(table) < best_cost:
                walk(idx + 1)
            del start[v]

    walk(0)
    assert best is not None
    return best


def schedule_nest(
    nest: LoopNest, lam: int, latencies=None
) -> tuple[int, ResourceUsage, dict]:
    """Schedule a whole loop nest: each loop body under the per-iteration
    latency constraint `lam`, the pre/post segments at their minimum latency.

    Returns total execution cycles for one activation, the combined resource
    usage (per-type maximum across parts — parts never run concurrently), and
    the individual schedules keyed 'pre'/'post'/loop position.
    """
    latencies = DEFAULT_LATENCIES if latencies is None else latencies
    keys = loop_keys(nest)
    by_key: dict[tuple[int, ...], Loop] = {}

    def walk(loop: Loop, key: tuple[int, ...]):
        by_key[key] = loop
        for i, c in enumerate(loop.children):
            walk(c, key + (i,))

    for i, loop in enumerate(nest.loops):
        walk(loop, (i,))

    schedules: dict = {}
    combined: dict[str, int] = {}
    body_makespans: dict[int, int] = {}

    def merge(usage: ResourceUsage) -> None:
        for t, r in usage.per_type.items():
            combined[t] = max(combined.get(t, 0), r)

    def do_part(part_key, dfg: Dfg | None, constraint: int | None) -> int:
        if dfg is None or not dfg.ops:
            return 0
        lo = min_latency(dfg, latencies)
        sched = fds_schedule(dfg, constraint if constraint is not None else lo, latencies)
        schedules[part_key] = sched
        merge(resource_usage(dfg, sched, latencies))
        return sched.makespan(dfg, latencies)

    pre_span = do_part("pre", nest.pre, None)
    post_span = do_part("post", nest.post, None)
    for key, loop in by_key.items():
        body_makespans[keys[key]] = do_part(key, loop.body, lam)
    cycles = exec_latency(nest, body_makespans, pre_span, post_span)
    return max(1, cycles), ResourceUsage(combined), schedules


def format_schedule(dfg: Dfg, schedule: Schedule, latencies=None) -> str:
    """Textual `.sched` form: one `op <id> @ <cstep>` line per operation plus
    a resource summary block."""
    latencies = DEFAULT_LATENCIES if latencies is None else latencies
    lines = [f"latency {schedule.lam}"]
    for op in dfg.ops:
        lines.append(f"op {op.id} @ {schedule.start[op.id]}")
    usage = resource_usage(dfg, schedule, latencies)
    lines.append("resources {")
    for t in sorted(usage.per_type):
        lines.append(f"  {t} {usage.per_type[t]}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def explore_latencies(
    dfg: Dfg, points: int = 4, latencies=None, table: CostTable | None = None
) -> list[tuple[int, Schedule, ResourceUsage]]:
    """Evenly spaced latency constraints between the minimum achievable
    latency and the longest useful one, each scheduled with FDS."""
    if points < 2 and points != 1:
        raise SchedulingError(f"need at least one exploration point, got {points}")
    latencies = DEFAULT_LATENCIES if latencies is None else latencies
    lo = min_latency(dfg, latencies)
    hi = max_useful_latency(dfg, latencies)
    if points == 1 or hi == lo:
        lams = [lo]
    else:
        lams = sorted({round(lo + (hi - lo) * k / (points - 1)) for k in range(points)})
    results = []
    for lam in lams:
        schedule = fds_schedule(dfg, lam, latencies)
        results.append((lam, schedule, resource_usage(dfg, schedule, latencies)))
    return results
