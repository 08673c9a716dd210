"""Force-directed scheduling: validity, conservation, oracle comparisons."""

import random

import pytest

from conftest import random_dfg
from psmsynth.dfg import (
    DEFAULT_LATENCIES,
    Dfg,
    InfeasibleLatency,
    Op,
    min_latency,
    parse_nest,
    unroll,
)
from psmsynth.fds import (
    SchedulingError,
    brute_force_min_resources,
    explore_latencies,
    fds_schedule,
    format_schedule,
    list_schedule,
    resource_usage,
    schedule_nest,
    validate_schedule,
)


def adds4() -> Dfg:
    return Dfg(tuple(Op(i, "add", ()) for i in range(4)), (), (3,))


def chain3() -> Dfg:
    return Dfg((Op(0, "add", ()), Op(1, "add", (0,)), Op(2, "add", (1,))), (), (2,))


# --- Validity over many random instances --------------------------------------

def test_random_dags_yield_valid_schedules():
    rng = random.Random(7)
    for _ in range(1000):
        d = random_dfg(rng, 30)
        lo = min_latency(d)
        lam = lo + rng.randint(0, max(1, lo // 2))
        s = fds_schedule(d, lam)
        validate_schedule(d, s)
        assert s.makespan(d) <= lam


def test_distribution_mass_is_conserved_every_round():
    # At every scheduling round, each type's distribution graph integrates to
    # (number of ops of that type) x (latency of that type).
    rng = random.Random(19)
    for _ in range(100):
        d = random_dfg(rng, 20)
        expected: dict[str, float] = {}
        for op in d.ops:
            lat = DEFAULT_LATENCIES.get(op.type, 1)
            expected[op.type] = expected.get(op.type, 0.0) + lat
        rounds = 0

        def check(frames, graphs):
            nonlocal rounds
            rounds += 1
            for op_type, total in expected.items():
                assert sum(graphs[op_type].values()) == pytest.approx(total)

        lam = min_latency(d) + rng.randint(0, 3)
        fds_schedule(d, lam, observer=check)
        assert rounds == len(d.ops)


def test_infeasible_latency_raises():
    with pytest.raises(InfeasibleLatency):
        fds_schedule(chain3(), 2)


def test_deterministic_output():
    rng = random.Random(23)
    d = random_dfg(rng, 25)
    lam = min_latency(d) + 3
    assert fds_schedule(d, lam) == fds_schedule(d, lam)


# --- Against the exhaustive oracle --------------------------------------------

def test_never_beats_the_brute_force_optimum():
    rng = random.Random(11)
    for _ in range(150):
        d = random_dfg(rng, 8)
        lam = min_latency(d) + rng.randint(0, 3)
        fds_cost = resource_usage(d, fds_schedule(d, lam)).cost()
        optimum, sched = brute_force_min_resources(d, lam)
        validate_schedule(d, sched)
        assert fds_cost >= optimum.cost() - 1e-9


def test_matches_optimum_on_symmetric_graphs():
    for d, lam in [(adds4(), 4), (adds4(), 2), (chain3(), 3)]:
        fds_cost = resource_usage(d, fds_schedule(d, lam)).cost()
        assert fds_cost == pytest.approx(brute_force_min_resources(d, lam)[0].cost())
    # Four independent adds relaxed over four steps share a single adder.
    usage = resource_usage(adds4(), fds_schedule(adds4(), 4))
    assert usage.per_type == {"add": 1}


def test_oracle_cost_monotone_in_latency():
    rng = random.Random(13)
    for _ in range(30):
        d = random_dfg(rng, 7)
        lo = min_latency(d)
        costs = [
            brute_force_min_resources(d, lam)[0].cost()
            for lam in range(lo, lo + 4)
        ]
        assert all(a >= b - 1e-9 for a, b in zip(costs, costs[1:]))


def test_brute_force_guards_instance_size():
    rng = random.Random(29)
    d = random_dfg(rng, 30)
    while len(d.ops) <= 12:
        d = random_dfg(rng, 30)
    with pytest.raises(SchedulingError):
        brute_force_min_resources(d, min_latency(d))


# --- List-scheduling baseline -------------------------------------------------

def test_list_schedule_respects_resource_limits():
    rng = random.Random(31)
    for _ in range(100):
        d = random_dfg(rng, 20)
        resources = {t: rng.randint(1, 2) for t in {op.type for op in d.ops}}
        s = list_schedule(d, resources)
        usage = resource_usage(d, s)
        for op_type, count in usage.per_type.items():
            assert count <= resources[op_type]
        validate_schedule(d, s)  # lam is the achieved makespan


def test_list_schedule_needs_one_of_each_resource():
    with pytest.raises(SchedulingError):
        list_schedule(chain3(), {"add": 0})


# --- Whole-nest scheduling ----------------------------------------------------

def test_mhr_nest_execution_latency(fixtures):
    nest = parse_nest((fixtures / "mhr.dfg").read_text())
    cycles, usage, schedules = schedule_nest(nest, 63)
    assert cycles == 24 + 64 * 63 == 4056
    assert set(schedules) == {"pre", (0,)}
    assert all(v >= 1 for v in usage.per_type.values())


def test_spo2_nest_minimum(fixtures):
    nest = parse_nest((fixtures / "spo2.dfg").read_text())
    lam = min_latency(nest.loops[0].body)
    cycles, _, schedules = schedule_nest(nest, lam)
    pre = schedules["pre"].makespan(nest.pre)
    post = schedules["post"].makespan(nest.post)
    assert cycles == pre + 25 * lam + post


def test_unrolled_nest_keeps_work_constant(fixtures):
    nest = parse_nest((fixtures / "spo2.dfg").read_text())
    un = unroll(nest, 5)
    lam = min_latency(un.loops[0].body)
    cycles, _, _ = schedule_nest(un, lam)
    assert cycles == schedule_nest(un, lam)[0]  # deterministic
    # Five iterations per unrolled trip, five trips.
    assert un.loops[0].trip == 5


def test_schedule_nest_handles_straight_line_graphs():
    nest = parse_nest("op 0 add\nop 1 add 0\nout 1\n")
    cycles, usage, schedules = schedule_nest(nest, 1)
    assert cycles == 2
    assert usage.per_type == {"add": 1}
    assert set(schedules) == {"pre"}


# --- Reporting ----------------------------------------------------------------

def test_format_schedule_shape():
    d = chain3()
    s = fds_schedule(d, 3)
    text = format_schedule(d, s)
    lines = text.splitlines()
    assert lines[0] == "latency 3"
    assert lines[1:4] == ["op 0 @ 0", "op 1 @ 1", "op 2 @ 2"]
    assert "resources {" in lines
    assert "  add 1" in lines


def test_explore_latencies_spacing():
    d = adds4()
    points = explore_latencies(d, points=4)
    lams = [lam for lam, _, _ in points]
    assert lams == [1, 2, 3, 4]
    costs = [usage.cost() for _, _, usage in points]
    assert costs[0] >= costs[-1]
    for lam, sched, _ in points:
        validate_schedule(d, sched)
