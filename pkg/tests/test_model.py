"""Model validation rules and the reference discrete-event simulator."""

from fractions import Fraction

import pytest

from psmsynth.dsl import parse_component, parse_system
from psmsynth.model import (
    DeltaCycleError,
    SimulationError,
    TraceEvent,
    simulate,
    simulate_component,
    single_component_system,
    validate_component,
    validate_system,
)

MS = Fraction(1, 1000)


def comp(text: str):
    return parse_component(text)


PING_PONG = """
component PingPong {
  period 1 s;
  output event Tick;
  initial A;
  state A {
    ts(delta) -> B;
  }
  state B {
    entry { notify Tick; }
    ts(1 s) -> A;
  }
}
"""


# --- Validation ---------------------------------------------------------------

def test_valid_component_passes():
    report = validate_component(comp(PING_PONG))
    assert report.ok
    assert not report.findings


def test_undeclared_transition_target():
    c = comp(
        """
        component C { period 1 s; input event Go;
          initial A; state A { import Go -> Nowhere; } }
        """
    )
    report = validate_component(c)
    assert not report.ok
    assert any("Nowhere" in str(f) for f in report.errors)


def test_bad_initial_state():
    c = comp("component C { period 1 s; initial Missing; state A { ts(inf); } }")
    report = validate_component(c)
    assert any("initial state" in f.message for f in report.errors)


def test_notify_must_be_pure_output():
    c = comp(
        """
        component C { period 1 s; output event D(int32);
          initial A; state A { entry { notify D; } ts(inf); } }
        """
    )
    assert any("non-data" in f.message for f in validate_component(c).errors)


def test_export_must_carry_data():
    c = comp(
        """
        component C { period 1 s; output event P;
          initial A; state A { entry { export P(1); } ts(inf); } }
        """
    )
    assert any("data event" in f.message for f in validate_component(c).errors)


def test_two_imports_on_same_event_rejected():
    c = comp(
        """
        component C { period 1 s; input event Go;
          initial A; state A { import Go -> A; import Go -> A; } }
        """
    )
    assert any("two transitions" in f.message for f in validate_component(c).errors)


def test_guard_referencing_undeclared_variable():
    c = comp(
        """
        component C { period 1 s; initial A;
          state A { when (mystery > 0) -> A; ts(inf); } }
        """
    )
    assert any("undeclared variable" in f.message for f in validate_component(c).errors)


def test_mcc_arity_checked():
    c = comp(
        """
        component C { period 1 s; var x: int32 = 0;
          mcc F(2 -> 1) dfg "f.dfg";
          initial A; state A { entry { invoke F(x -> x); } ts(inf); } }
        """
    )
    assert any("expects 2 arguments" in f.message for f in validate_component(c).errors)


def test_unreachable_state_is_a_warning_only():
    c = comp(
        "component C { period 1 s; initial A; state A { ts(inf); } state B { ts(inf); } }"
    )
    report = validate_component(c)
    assert report.ok
    assert any("unreachable" in f.message for f in report.findings)


def test_system_payload_width_mismatch():
    a = comp("component A { period 1 s; output event Out(int32); initial S; state S { ts(inf); } }")
    b = comp("component B { period 1 s; input event In(int16); initial S; state S { ts(inf); } }")
    system = parse_system(
        """
        system Sys { instance a: A; instance b: B; connect a.Out -> b.In; }
        """
    )
    report = validate_system(system, {"A": a, "B": b})
    assert any("width mismatch" in f.message for f in report.errors)


def test_system_double_driven_input_rejected():
    a = comp("component A { period 1 s; output event Out; initial S; state S { ts(inf); } }")
    b = comp("component B { period 1 s; input event In; initial S; state S { ts(inf); } }")
    system = parse_system(
        """
        system Sys { instance a1: A; instance a2: A; instance b: B;
          connect a1.Out -> b.In; connect a2.Out -> b.In; }
        """
    )
    report = validate_system(system, {"A": a, "B": b})
    assert any("two sources" in f.message for f in report.errors)


# --- Simulation ---------------------------------------------------------------

def test_delta_then_timer_alternation():
    # A is entered, immediately (zero time) falls through to B, B dwells 1 s.
    trace = simulate_component(comp(PING_PONG), [], Fraction(7, 2))
    entries = [(e.time, e.state) for e in trace.state_entries]
    expected = []
    for k in range(4):
        expected += [(Fraction(k), "A"), (Fraction(k), "B")]
    assert entries == expected
    assert [e.time for e in trace.events] == [Fraction(k) for k in range(4)]


def test_timer_preempted_by_import():
    c = comp(
        """
        component C { period 1 s; input event Go; output event Late;
          initial Wait;
          state Wait { import Go -> Fast; ts(100 ms) -> Slow; }
          state Fast { ts(inf); }
          state Slow { entry { notify Late; } ts(inf); }
        }
        """
    )
    trace = simulate_component(c, [TraceEvent(30 * MS, "dut", "Go", None)], Fraction(1))
    assert [e.state for e in trace.state_entries] == ["Wait", "Fast"]
    assert not trace.events  # the timer never fired


def test_external_event_beats_timer_at_same_instant():
    c = comp(
        """
        component C { period 1 s; input event Go;
          initial Wait;
          state Wait { import Go -> ViaEvent; ts(100 ms) -> ViaTimer; }
          state ViaEvent { ts(inf); }
          state ViaTimer { ts(inf); }
        }
        """
    )
    trace = simulate_component(c, [TraceEvent(100 * MS, "dut", "Go", None)], Fraction(1))
    assert [e.state for e in trace.state_entries] == ["Wait", "ViaEvent"]


def test_unmatched_event_is_dropped_not_buffered():
    c = comp(
        """
        component C { period 1 s; input event Go;
          initial Deaf;
          state Deaf { ts(100 ms) -> Open; }
          state Open { import Go -> Done; ts(inf); }
          state Done { ts(inf); }
        }
        """
    )
    trace = simulate_component(c, [TraceEvent(10 * MS, "dut", "Go", None)], Fraction(1))
    assert [d.event for d in trace.dropped] == ["Go"]
    assert [e.state for e in trace.state_entries] == ["Deaf", "Open"]


def test_divergent_delta_loop_diagnosed():
    c = comp(
        """
        component C { period 1 s; initial A;
          state A { ts(delta) -> B; } state B { ts(delta) -> A; } }
        """
    )
    with pytest.raises(DeltaCycleError):
        simulate_component(c, [], Fraction(1))


def test_guard_fires_after_entry_assignments():
    c = comp(
        """
        component C { period 1 s; input event Go(int32);
          var x: int32 = 0;
          initial Wait;
          state Wait { import Go -> Check; }
          state Check { entry { x = Go * 2; } when (x > 10) -> High; ts(delta) -> Wait; }
          state High { ts(inf); }
        }
        """
    )
    trace = simulate_component(c, [TraceEvent(MS, "dut", "Go", 3)], Fraction(1))
    assert [e.state for e in trace.state_entries] == ["Wait", "Check", "Wait"]
    trace = simulate_component(c, [TraceEvent(MS, "dut", "Go", 6)], Fraction(1))
    assert [e.state for e in trace.state_entries] == ["Wait", "Check", "High"]


def test_data_payload_readable_under_event_name():
    c = comp(
        """
        component C { period 1 s; input event In(int32); output event Out(int32);
          initial Wait;
          state Wait { import In -> Emit; }
          state Emit { entry { export Out(In + 1); } ts(delta) -> Wait; }
        }
        """
    )
    trace = simulate_component(c, [TraceEvent(MS, "dut", "In", 41)], Fraction(1))
    assert [(e.event, e.payload) for e in trace.events] == [("Out", 42)]


def test_mcc_results_applied_in_reference_semantics():
    c = comp(
        """
        component C { period 1 s; input event In(int32); output event Out(int32);
          var a: int32 = 0; var r: int32 = 0;
          mcc Double(1 -> 1) dfg "d.dfg";
          initial Wait;
          state Wait { import In -> Work; }
          state Work { entry { a = In; invoke Double(a -> r); export Out(r); } ts(delta) -> Wait; }
        }
        """
    )
    trace = simulate_component(
        c,
        [TraceEvent(MS, "dut", "In", 21)],
        Fraction(1),
        {"Double": lambda args: (args[0] * 2,)},
    )
    assert [(e.event, e.payload) for e in trace.events] == [("Out", 42)]


def test_instances_processed_in_declaration_order():
    producer = comp(
        """
        component P { period 1 s; output event Out(int32);
          initial Go; state Go { entry { export Out(5); } ts(inf); } }
        """
    )
    consumer = comp(
        """
        component Q { period 1 s; input event In(int32); output event Echo(int32);
          initial Wait;
          state Wait { import In -> Say; }
          state Say { entry { export Echo(In); } ts(inf); } }
        """
    )
    system = parse_system(
        "system S { instance p: P; instance q: Q; connect p.Out -> q.In; }"
    )
    trace = simulate(system, {"P": producer, "Q": consumer}, [], Fraction(1))
    assert [(e.instance, e.event, e.payload) for e in trace.events] == [
        ("p", "Out", 5),
        ("q", "Echo", 5),
    ]
    # Delivery at the same timestamp: q leaves Wait in the t=0 instant.
    assert trace.state_entries[-1].time == 0


def test_stimulus_may_name_external_ports():
    c = comp(
        """
        component C { period 1 s; input event Go; initial A;
          state A { import Go -> B; } state B { ts(inf); } }
        """
    )
    system = parse_system(
        "system S { instance c: C; port input Kick -> c.Go; }"
    )
    trace = simulate(
        system, {"C": c}, [TraceEvent(MS, "Kick", "Go", None)], Fraction(1)
    )
    assert [e.state for e in trace.state_entries] == ["A", "B"]


def test_stimulus_after_horizon_rejected():
    c = comp(PING_PONG)
    system = single_component_system(c)
    with pytest.raises(SimulationError):
        simulate(system, {c.name: c}, [TraceEvent(Fraction(2), "dut", "Tick", None)], Fraction(1))


def test_simulation_is_deterministic():
    c = comp(PING_PONG)
    t1 = simulate_component(c, [], Fraction(5, 2))
    t2 = simulate_component(c, [], Fraction(5, 2))
    assert t1.state_entries == t2.state_entries
    assert t1.events == t2.events
