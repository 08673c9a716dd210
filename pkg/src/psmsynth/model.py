"""In-memory periodic state machine (PSM) models, validation, and the
reference discrete-event simulator.

A component is a finite state machine with a fixed execution period, explicit
per-state timing specifications, and event-based communication.  Systems wire
component instances together through typed event connections.  The simulator
here is the semantic reference the cycle-level FSM interpreter is checked
against.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterable, Mapping

from . import expr as ex

DEFAULT_WIDTH = 32

# Consecutive zero-time transitions tolerated before a model is declared
# divergent.
DELTA_CYCLE_LIMIT = 10_000


class SimulationError(Exception):
    pass


class DeltaCycleError(SimulationError):
    """A chain of zero-time transitions never let time advance."""


class TimingKind(enum.Enum):
    FINITE = "finite"
    INFINITE = "infinite"
    DELTA = "delta"


@dataclass(frozen=True)
class TimingSpec:
    kind: TimingKind
    duration: Fraction | None = None

    @staticmethod
    def finite(duration: Fraction) -> "TimingSpec":
        return TimingSpec(TimingKind.FINITE, duration)

    @staticmethod
    def infinite() -> "TimingSpec":
        return TimingSpec(TimingKind.INFINITE)

    @staticmethod
    def delta() -> "TimingSpec":
        return TimingSpec(TimingKind.DELTA)


class Direction(enum.Enum):
    INPUT = "input"
    OUTPUT = "output"


@dataclass(frozen=True)
class EventDecl:
    name: str
    direction: Direction
    payload_width: int | None = None  # None for pure (non-data) events

    @property
    def is_data(self) -> bool:
        return self.payload_width is not None


@dataclass(frozen=True)
class VarDecl:
    name: str
    width: int = DEFAULT_WIDTH
    init: int = 0


# --- Entry actions -----------------------------------------------------------

@dataclass(frozen=True)
class Notify:
    event: str


@dataclass(frozen=True)
class Export:
    event: str
    value: ex.Expr


@dataclass(frozen=True)
class Assign:
    var: str
    value: ex.Expr


@dataclass(frozen=True)
class InvokeMcc:
    mcc: str
    args: tuple[str, ...]
    results: tuple[str, ...]


Action = Notify | Export | Assign | InvokeMcc


@dataclass(frozen=True)
class Import:
    event: str
    target: str


@dataclass(frozen=True)
class TimedTransition:
    spec: TimingSpec
    target: str | None  # None only for infinite specs


@dataclass(frozen=True)
class GuardTransition:
    guard: ex.Expr
    target: str


@dataclass(frozen=True)
class State:
    name: str
    entry: tuple[Action, ...] = ()
    imports: tuple[Import, ...] = ()
    timed: TimedTransition | None = None
    guards: tuple[GuardTransition, ...] = ()


@dataclass(frozen=True)
class MccSignature:
    name: str
    dfg_ref: str
    n_args: int
    n_results: int


@dataclass(frozen=True)
class PsmComponent:
    name: str
    period: Fraction
    events: tuple[EventDecl, ...] = ()
    variables: tuple[VarDecl, ...] = ()
    mccs: tuple[MccSignature, ...] = ()
    initial: str = ""
    states: tuple[State, ...] = ()

    def state(self, name: str) -> State:
        for s in self.states:
            if s.name == name:
                return s
        raise KeyError(name)

    def event(self, name: str) -> EventDecl:
        for e in self.events:
            if e.name == name:
                return e
        raise KeyError(name)


@dataclass(frozen=True)
class Instance:
    name: str
    component: str
    period_override: Fraction | None = None


@dataclass(frozen=True)
class Connection:
    src_instance: str
    src_event: str
    dst_instance: str
    dst_event: str


@dataclass(frozen=True)
class ExternalPort:
    name: str
    direction: Direction
    instance: str
    event: str


@dataclass(frozen=True)
class PsmSystem:
    name: str
    instances: tuple[Instance, ...] = ()
    connections: tuple[Connection, ...] = ()
    ports: tuple[ExternalPort, ...] = ()


# --- Validation --------------------------------------------------------------

class Severity(enum.Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Finding:
    severity: Severity
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.severity.value}: {self.message}"


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    def error(self, location: str, message: str) -> None:
        self.findings.append(Finding(Severity.ERROR, location, message))

    def warning(self, location: str, message: str) -> None:
        self.findings.append(Finding(Severity.WARNING, location, message))

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity is Severity.ERROR]

    @property
    def ok(self) -> bool:
        return not self.errors

    def extend(self, other: "ValidationReport") -> None:
        self.findings.extend(other.findings)


def _check_expr(report, comp, loc, e, what):
    for name in sorted(ex.free_vars(e)):
        if not any(v.name == name for v in comp.variables) and not any(
            ev.name == name and ev.direction is Direction.INPUT and ev.is_data
            for ev in comp.events
        ):
            report.error(loc, f"{what} references undeclared variable '{name}'")


def validate_component(comp: PsmComponent) -> ValidationReport:
    report = ValidationReport()
    where = f"component {comp.name}"
    if comp.period <= 0:
        report.error(where, f"period must be positive, got {comp.period}")

    seen_events: set[str] = set()
    for e in comp.events:
        if e.name in seen_events:
            report.error(where, f"duplicate event '{e.name}'")
        seen_events.add(e.name)
        if e.payload_width is not None and e.payload_width <= 0:
            report.error(where, f"event '{e.name}' has non-positive payload width")

    seen_vars: set[str] = set()
    for v in comp.variables:
        if v.name in seen_vars:
            report.error(where, f"duplicate variable '{v.name}'")
        seen_vars.add(v.name)

    seen_mccs: set[str] = set()
    for m in comp.mccs:
        if m.name in seen_mccs:
            report.error(where, f"duplicate mcc '{m.name}'")
        seen_mccs.add(m.name)

    state_names = [s.name for s in comp.states]
    for name in state_names:
        if state_names.count(name) > 1:
            report.error(where, f"duplicate state '{name}'")
            break
    if not comp.states:
        report.error(where, "component has no states")
    elif comp.initial not in state_names:
        report.error(where, f"initial state '{comp.initial}' is not declared")

    for s in comp.states:
        loc = f"{where}, state {s.name}"
        seen_imports: set[str] = set()
        for imp in s.imports:
            if imp.event in seen_imports:
                report.error(loc, f"state has two transitions on input '{imp.event}'")
            seen_imports.add(imp.event)
            decl = next((e for e in comp.events if e.name == imp.event), None)
            if decl is None:
                report.error(loc, f"import of undeclared event '{imp.event}'")
            elif decl.direction is not Direction.INPUT:
                report.error(loc, f"import of output event '{imp.event}'")
            if imp.target not in state_names:
                report.error(loc, f"transition target '{imp.target}' is not declared")
        if s.timed is not None:
            spec = s.timed.spec
            if spec.kind is TimingKind.FINITE:
                if spec.duration is None or spec.duration <= 0:
                    report.error(loc, f"finite timing spec must have a positive duration, got {spec.duration}")
                if s.timed.target is None:
                    report.error(loc, "finite timing spec needs a transition target")
            elif spec.kind is TimingKind.DELTA and s.timed.target is None:
                report.error(loc, "delta timing spec needs a transition target")
            elif spec.kind is TimingKind.INFINITE and s.timed.target is not None:
                report.error(loc, "infinite timing spec cannot have a transition target")
            if spec.kind is not TimingKind.FINITE and spec.duration is not None:
                report.error(loc, f"{spec.kind.value} timing spec cannot carry a duration")
            if s.timed.target is not None and s.timed.target not in state_names:
                report.error(loc, f"transition target '{s.timed.target}' is not declared")
        for g in s.guards:
            if g.target not in state_names:
                report.error(loc, f"transition target '{g.target}' is not declared")
            _check_expr(report, comp, loc, g.guard, "guard")
        for a in s.entry:
            if isinstance(a, Notify):
                decl = next((e for e in comp.events if e.name == a.event), None)
                if decl is None:
                    report.error(loc, f"notify of undeclared event '{a.event}'")
                elif decl.direction is not Direction.OUTPUT:
                    report.error(loc, f"notify must target an output event, '{a.event}' is an input")
                elif decl.is_data:
                    report.error(loc, f"notify must target a non-data event, '{a.event}' carries data")
            elif isinstance(a, Export):
                decl = next((e for e in comp.events if e.name == a.event), None)
                if decl is None:
                    report.error(loc, f"export of undeclared event '{a.event}'")
                elif decl.direction is not Direction.OUTPUT:
                    report.error(loc, f"export must target an output event, '{a.event}' is an input")
                elif not decl.is_data:
                    report.error(loc, f"export must target a data event, '{a.event}' carries none")
                _check_expr(report, comp, loc, a.value, "export")
            elif isinstance(a, Assign):
                if a.var not in seen_vars:
                    report.error(loc, f"assignment to undeclared variable '{a.var}'")
                _check_expr(report, comp, loc, a.value, "assignment")
            elif isinstance(a, InvokeMcc):
                sig = next((m for m in comp.mccs if m.name == a.mcc), None)
                if sig is None:
                    report.error(loc, f"invoke of undeclared mcc '{a.mcc}'")
                else:
                    if len(a.args) != sig.n_args:
                        report.error(loc, f"mcc '{a.mcc}' expects {sig.n_args} arguments, got {len(a.args)}")
                    if len(a.results) != sig.n_results:
                        report.error(loc, f"mcc '{a.mcc}' produces {sig.n_results} results, got {len(a.results)}")
                for name in (*a.args, *a.results):
                    if name not in seen_vars:
                        report.error(loc, f"mcc argument/result '{name}' is not a declared variable")

    # Reachability is a warning, not an error.
    if comp.states and comp.initial in state_names:
        reachable = {comp.initial}
        frontier = [comp.initial]
        by_name = {s.name: s for s in comp.states}
        while frontier:
            s = by_name[frontier.pop()]
            targets = [i.target for i in s.imports]
            targets += [g.target for g in s.guards]
            if s.timed is not None and s.timed.target is not None:
                targets.append(s.timed.target)
            for t in targets:
                if t in by_name and t not in reachable:
                    reachable.add(t)
                    frontier.append(t)
        for name in state_names:
            if name not in reachable:
                report.warning(where, f"state '{name}' is unreachable from '{comp.initial}'")

    return report


def validate_system(system: PsmSystem, components: Mapping[str, PsmComponent]) -> ValidationReport:
    report = ValidationReport()
    where = f"system {system.name}"

    seen: set[str] = set()
    for inst in system.instances:
        if inst.name in seen:
            report.error(where, f"duplicate instance '{inst.name}'")
        seen.add(inst.name)
        if inst.component not in components:
            report.error(where, f"instance '{inst.name}' uses unknown component '{inst.component}'")
        elif inst.period_override is not None and inst.period_override <= 0:
            report.error(where, f"instance '{inst.name}' has non-positive period override")

    def resolve(inst_name: str, event_name: str, direction: Direction, loc: str):
        inst = next((i for i in system.instances if i.name == inst_name), None)
        if inst is None:
            report.error(loc, f"connection endpoint names undeclared instance '{inst_name}'")
            return None
        comp = components.get(inst.component)
        if comp is None:
            return None
        decl = next((e for e in comp.events if e.name == event_name), None)
        if decl is None:
            report.error(loc, f"instance '{inst_name}' has no event '{event_name}'")
            return None
        if decl.direction is not direction:
            report.error(loc, f"event '{inst_name}.{event_name}' is not an {direction.value}")
            return None
        return decl

    driven: set[tuple[str, str]] = set()
    for c in system.connections:
        loc = f"{where}, {c.src_instance}.{c.src_event} -> {c.dst_instance}.{c.dst_event}"
        src = resolve(c.src_instance, c.src_event, Direction.OUTPUT, loc)
        dst = resolve(c.dst_instance, c.dst_event, Direction.INPUT, loc)
        if src is not None and dst is not None:
            if src.is_data != dst.is_data:
                report.error(loc, "connected events disagree on payload presence")
            elif src.is_data and src.payload_width != dst.payload_width:
                report.error(loc, f"payload width mismatch ({src.payload_width} vs {dst.payload_width})")
        key = (c.dst_instance, c.dst_event)
        if key in driven:
            report.error(loc, f"input '{c.dst_instance}.{c.dst_event}' is driven by two sources")
        driven.add(key)

    for p in system.ports:
        loc = f"{where}, port {p.name}"
        want = Direction.INPUT if p.direction is Direction.INPUT else Direction.OUTPUT
        resolve(p.instance, p.event, want, loc)
        if p.direction is Direction.INPUT:
            key = (p.instance, p.event)
            if key in driven:
                report.error(loc, f"input '{p.instance}.{p.event}' is driven by two sources")
            driven.add(key)

    for inst in system.instances:
        comp = components.get(inst.component)
        if comp is not None:
            sub = validate_component(comp)
            for f in sub.errors:
                report.error(f"{where}, instance {inst.name}", f.message)

    return report


# --- Traces ------------------------------------------------------------------

@dataclass(frozen=True)
class TraceEvent:
    time: Fraction
    instance: str
    event: str
    payload: int | None = None


@dataclass(frozen=True)
class StateEntry:
    time: Fraction
    instance: str
    state: str


@dataclass
class EventTrace:
    events: list[TraceEvent] = field(default_factory=list)
    state_entries: list[StateEntry] = field(default_factory=list)
    dropped: list[TraceEvent] = field(default_factory=list)

    def entries_for(self, instance: str) -> list[StateEntry]:
        return [s for s in self.state_entries if s.instance == instance]

    def events_for(self, instance: str) -> list[TraceEvent]:
        return [e for e in self.events if e.instance == instance]


def single_component_system(comp: PsmComponent, instance_name: str = "dut") -> PsmSystem:
    """Wrap one component for direct simulation; every input/output becomes a port."""
    ports = tuple(
        ExternalPort(e.name, e.direction, instance_name, e.name) for e in comp.events
    )
    return PsmSystem(
        name=f"{comp.name}_bench",
        instances=(Instance(instance_name, comp.name),),
        connections=(),
        ports=ports,
    )


# --- Simulation --------------------------------------------------------------

McImpl = Callable[[tuple[int, ...]], tuple[int, ...]]


class _InstanceState:
    __slots__ = ("index", "name", "comp", "state", "vars", "timer_deadline", "inbox")

    def __init__(self, index: int, name: str, comp: PsmComponent):
        self.index = index
        self.name = name
        self.comp = comp
        self.state = comp.initial
        self.vars: dict[str, int] = {v.name: ex.wrap_signed(v.init, v.width) for v in comp.variables}
        self.timer_deadline: Fraction | None = None
        self.inbox: list[tuple[int, str, int | None]] = []  # (seq, event, payload)


def simulate(
    system: PsmSystem,
    components: Mapping[str, PsmComponent],
    stimulus: Iterable[TraceEvent],
    horizon: Fraction,
    mcc_impls: Mapping[str, McImpl] | None = None,
) -> EventTrace:
    """Run the reference semantics up to (but excluding) `horizon` seconds.

    Stimulus events name instance inputs directly or external input ports.
    Simultaneous work is processed in instance declaration order, external
    events before timer expirations, and zero-time transitions run to
    quiescence before time advances.
    """
    report = validate_system(system, components)
    if not report.ok:
        msgs = "; ".join(str(f) for f in report.errors)
        raise SimulationError(f"system does not validate: {msgs}")

    mcc_impls = dict(mcc_impls or {})
    insts = [
        _InstanceState(i, inst.name, components[inst.component])
        for i, inst in enumerate(system.instances)
    ]
    by_name = {st.name: st for st in insts}
    fanout: dict[tuple[str, str], list[tuple[str, str]]] = {}
    for c in system.connections:
        fanout.setdefault((c.src_instance, c.src_event), []).append((c.dst_instance, c.dst_event))
    in_ports = {p.name: (p.instance, p.event) for p in system.ports if p.direction is Direction.INPUT}

    trace = EventTrace()
    seq = 0
    # Pending deliveries across time: time -> handled through a sorted agenda.
    agenda: list[tuple[Fraction, int, str, str, int | None]] = []

    for evt in sorted(stimulus, key=lambda e: (e.time,)):
        if evt.time >= horizon:
            raise SimulationError(f"stimulus at t={evt.time} is not before the horizon {horizon}")
        inst_name, event_name = evt.instance, evt.event
        if inst_name in in_ports and inst_name not in by_name:
            inst_name, event_name = in_ports[inst_name]
        if inst_name not in by_name:
            raise SimulationError(f"stimulus targets unknown instance or port '{evt.instance}'")
        target = by_name[inst_name]
        decl = next((e for e in target.comp.events if e.name == event_name), None)
        if decl is None or decl.direction is not Direction.INPUT:
            raise SimulationError(f"stimulus targets unconnected input '{inst_name}.{event_name}'")
        if decl.is_data != (evt.payload is not None):
            raise SimulationError(
                f"payload mismatch for '{inst_name}.{event_name}': "
                f"{'expected' if decl.is_data else 'unexpected'} data value"
            )
        agenda.append((evt.time, seq, inst_name, event_name, evt.payload))
        seq += 1

    delta_budget = DELTA_CYCLE_LIMIT

    def emit(now: Fraction, src: _InstanceState, event: str, payload: int | None) -> None:
        nonlocal seq
        trace.events.append(TraceEvent(now, src.name, event, payload))
        for dst_inst, dst_event in fanout.get((src.name, event), []):
            agenda.append((now, seq, dst_inst, dst_event, payload))
            seq += 1

    def enter(now: Fraction, st: _InstanceState, state_name: str) -> None:
        nonlocal delta_budget
        while True:
            st.state = state_name
            st.timer_deadline = None
            trace.state_entries.append(StateEntry(now, st.name, state_name))
            state = st.comp.state(state_name)
            for action in state.entry:
                if isinstance(action, Notify):
                    emit(now, st, action.event, None)
                elif isinstance(action, Export):
                    emit(now, st, action.event, ex.evaluate(action.value, st.vars))
                elif isinstance(action, Assign):
                    st.vars[action.var] = ex.evaluate(action.value, st.vars)
                elif isinstance(action, InvokeMcc):
                    impl = mcc_impls.get(action.mcc)
                    args = tuple(st.vars[a] for a in action.args)
                    results = impl(args) if impl else tuple(0 for _ in action.results)
                    if len(results) != len(action.results):
                        raise SimulationError(
                            f"mcc '{action.mcc}' returned {len(results)} values, expected {len(action.results)}"
                        )
                    for name, value in zip(action.results, results):
                        st.vars[name] = ex.wrap_signed(value)
            # Zero-time follow-ups: a delta spec or an already-true guard.
            follow = _zero_time_target(st)
            if follow is None:
                if state.timed is not None and state.timed.spec.kind is TimingKind.FINITE:
                    st.timer_deadline = now + state.timed.spec.duration
                return
            delta_budget -= 1
            if delta_budget <= 0:
                raise DeltaCycleError(
                    f"instance '{st.name}' made {DELTA_CYCLE_LIMIT} consecutive "
                    f"zero-time transitions at t={now} (last state '{state_name}')"
                )
            state_name = follow

    def _zero_time_target(st: _InstanceState) -> str | None:
        state = st.comp.state(st.state)
        for g in state.guards:
            if ex.evaluate(g.guard, st.vars):
                return g.target
        if state.timed is not None and state.timed.spec.kind is TimingKind.DELTA:
            return state.timed.target
        return None

    now = Fraction(0)
    for st in insts:
        enter(now, st, st.comp.initial)
    delta_budget = DELTA_CYCLE_LIMIT

    while True:
        times = [t for (t, *_rest) in agenda]
        times += [st.timer_deadline for st in insts if st.timer_deadline is not None]
        times = [t for t in times if t < horizon]
        if not times:
            break
        now = min(times)

        # Move due deliveries into per-instance inboxes, then drain in
        # declaration order until the instant is quiescent.
        rounds = 0
        while True:
            rounds += 1
            if rounds > DELTA_CYCLE_LIMIT:
                raise DeltaCycleError(
                    f"system never became quiescent at t={now}: "
                    f"{DELTA_CYCLE_LIMIT} zero-time delivery rounds"
                )
            progressed = False
            remaining = []
            for item in agenda:
                if item[0] == now:
                    t, s, inst_name, event_name, payload = item
                    by_name[inst_name].inbox.append((s, event_name, payload))
                else:
                    remaining.append(item)
            agenda[:] = remaining
            for st in insts:
                if st.inbox:
                    st.inbox.sort()
                    inbox, st.inbox = st.inbox, []
                    for _s, event_name, payload in inbox:
                        state = st.comp.state(st.state)
                        imp = next((i for i in state.imports if i.event == event_name), None)
                        if imp is None:
                            trace.dropped.append(TraceEvent(now, st.name, event_name, payload))
                            continue
                        decl = st.comp.event(event_name)
                        if decl.is_data:
                            st.vars[event_name] = ex.wrap_signed(payload if payload is not None else 0)
                        enter(now, st, imp.target)
                    progressed = True
                if st.timer_deadline is not None and st.timer_deadline == now:
                    state = st.comp.state(st.state)
                    assert state.timed is not None and state.timed.target is not None
                    st.timer_deadline = None
                    enter(now, st, state.timed.target)
                    progressed = True
            delta_budget = DELTA_CYCLE_LIMIT
            if not progressed and not any(item[0] == now for item in agenda):
                break

    return trace


def simulate_component(
    comp: PsmComponent,
    stimulus: Iterable[TraceEvent],
    horizon: Fraction,
    mcc_impls: Mapping[str, McImpl] | None = None,
) -> EventTrace:
    system = single_component_system(comp)
    named = [replace(e, instance="dut") for e in stimulus]
    return simulate(system, {comp.name: comp}, named, horizon, mcc_impls)
