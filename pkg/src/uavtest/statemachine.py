"""Flight-behavior state machine: parsing, flattening, and queries.

The machine defines the agent's state space, its action space (the event
vocabulary), which actions are legal in which state, and the deterministic
transition function.  Machines are parsed from a line-oriented text format::

    # comment
    state <Name> [stereotype=<Phase>] [initial] [goal]
    composite <Parent> [stereotype=<Phase>] {
        state <Sub> [stereotype=<Phase>] [initial]
        trans <Src> --<event>--> <Dst>
    }
    trans <Source> --<event>--> <Target>

Identifiers match ``[A-Za-z_][A-Za-z0-9_.]*``.  Events are declared by use:
the event vocabulary is collected from transitions in order of first
appearance, across all nesting levels.  Composite states are removed by
:func:`flatten`, which renames substates ``Parent.Sub``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

__all__ = [
    "FLIGHT_PHASES",
    "StateMachineError",
    "Transition",
    "StateDef",
    "FlightStateMachine",
    "parse_state_machine",
    "flatten",
    "legal_actions",
    "next_state",
    "is_goal",
]

# Phase vocabulary of the behavioral profile.  Every state carries one of
# these labels; the simulator keys its dynamics on them.
FLIGHT_PHASES = frozenset(
    {
        "Disarmed",
        "Armed",
        "Taxiing",
        "Takeoff",
        "Climb",
        "Ascend",
        "Cruise",
        "Descent",
        "Descend",
        "AltitudeHold",
        "PositionHold",
        "Loiter",
        "Circle",
        "Flipping",
        "Drifting",
        "FlyingStraight",
        "TurningLeft",
        "TurningRight",
        "Approach",
        "Landing",
    }
)

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*$")
_TRANS = re.compile(
    r"trans\s+([A-Za-z_][A-Za-z0-9_.]*)\s+"
    r"--([A-Za-z_][A-Za-z0-9_.]*)-->\s*([A-Za-z_][A-Za-z0-9_.]*)$"
)


class StateMachineError(ValueError):
    """Malformed machine file or invalid query against a machine."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class Transition:
    source: str
    event: str
    target: str


@dataclass(frozen=True)
class StateDef:
    name: str
    stereotype: str
    substates: "FlightStateMachine | None" = None

    @property
    def composite(self) -> bool:
        return self.substates is not None


@dataclass(frozen=True)
class FlightStateMachine:
    """A parsed flight state machine.

    ``states``/``transitions`` hold the top level only; nested machines live
    inside composite ``StateDef``s.  ``events`` is the full action vocabulary
    including events used only inside composites.  ``composite_stereotypes``
    is populated by :func:`flatten` so the phase of a dotted state's parent
    remains recoverable.
    """

    states: tuple[StateDef, ...]
    events: tuple[str, ...]
    transitions: tuple[Transition, ...]
    initial: str
    goal: str
    composite_stereotypes: dict[str, str] = field(default_factory=dict)

    def state(self, name: str) -> StateDef:
        for s in self.states:
            if s.name == name:
                return s
        raise StateMachineError(f"unknown state {name!r}")

    def state_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.states)

    def has_state(self, name: str) -> bool:
        return any(s.name == name for s in self.states)

    def stereotype_of(self, name: str) -> str:
        return self.state(name).stereotype

    @property
    def flat(self) -> bool:
        return not any(s.composite for s in self.states)

    def scope_names(self) -> frozenset[str]:
        """All names a constraint scope may refer to: every state plus every
        dotted prefix (composite parents keep their identity after
        flattening via the ``Parent.Sub`` naming rule)."""
        names = set()
        for s in self.states:
            names.add(s.name)
            parts = s.name.split(".")
            for i in range(1, len(parts)):
                names.add(".".join(parts[:i]))
            if s.substates is not None:
                for sub in s.substates.states:
                    names.add(f"{s.name}.{sub.name}")
        return frozenset(names)


def _parse_state_line(tokens, lineno, allow_markers=True):
    """``state Name [stereotype=X] [initial] [goal]`` after the keyword."""
    if not tokens:
        raise StateMachineError("state declaration missing a name", lineno)
    name = tokens[0]
    if not _IDENT.match(name):
        raise StateMachineError(f"invalid state identifier {name!r}", lineno)
    stereotype = None
    initial = goal = False
    for tok in tokens[1:]:
        if tok.startswith("stereotype="):
            stereotype = tok.split("=", 1)[1]
            if stereotype not in FLIGHT_PHASES:
                raise StateMachineError(
                    f"unknown flight phase {stereotype!r}", lineno
                )
        elif tok == "initial":
            initial = True
        elif tok == "goal" and allow_markers:
            goal = True
        else:
            raise StateMachineError(f"unexpected token {tok!r}", lineno)
    return name, stereotype, initial, goal


def _parse_trans_line(line, lineno):
    m = _TRANS.match(line)
    if not m:
        raise StateMachineError(
            "malformed transition, expected 'trans Src --event--> Dst'", lineno
        )
    source, event, target = m.groups()
    for ident in (source, event, target):
        if not _IDENT.match(ident):
            raise StateMachineError(f"invalid identifier {ident!r}", lineno)
    return Transition(source, event, target)


def parse_state_machine(text: str) -> FlightStateMachine:
    """Parse a machine file into an (un-flattened) ``FlightStateMachine``.

    The result mirrors the file: composites stay composite.  Raises
    ``StateMachineError`` with the offending line number on syntax errors,
    undeclared state references, duplicate ``(source, event)`` pairs, or a
    missing/duplicated initial or goal marker.
    """
    states: list[StateDef] = []
    transitions: list[Transition] = []
    initial = goal = None
    events: list[str] = []

    composite_ctx = None  # (name, stereotype, substates, subinitial, subtrans, lineno)

    def note_event(ev):
        if ev not in events:
            events.append(ev)

    lines = text.splitlines()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kw = tokens[0]

        if composite_ctx is not None:
            name, stereo, substates, subinitial, subtrans, open_line = composite_ctx
            if line == "}":
                if subinitial is None:
                    raise StateMachineError(
                        f"composite {name!r} declares no initial substate", open_line
                    )
                sub_names = [s.name for s in substates]
                for t in subtrans:
                    for endpoint in (t.source, t.target):
                        if endpoint not in sub_names:
                            raise StateMachineError(
                                f"transition references undeclared substate {endpoint!r}",
                                open_line,
                            )
                inner = FlightStateMachine(
                    states=tuple(substates),
                    events=tuple(dict.fromkeys(t.event for t in subtrans)),
                    transitions=tuple(subtrans),
                    initial=subinitial,
                    goal=subinitial,  # substate machines have no goal of their own
                )
                states.append(StateDef(name, stereo, substates=inner))
                composite_ctx = None
                continue
            if kw == "state":
                sname, sstereo, sinitial, _ = _parse_state_line(
                    tokens[1:], lineno, allow_markers=False
                )
                if any(s.name == sname for s in substates):
                    raise StateMachineError(f"duplicate substate {sname!r}", lineno)
                if sinitial:
                    if subinitial is not None:
                        raise StateMachineError(
                            f"composite {name!r} declares two initial substates", lineno
                        )
                    subinitial = sname
                substates.append(StateDef(sname, sstereo or sname))
                composite_ctx = (name, stereo, substates, subinitial, subtrans, open_line)
            elif kw == "trans":
                t = _parse_trans_line(line, lineno)
                if any(x.source == t.source and x.event == t.event for x in subtrans):
                    raise StateMachineError(
                        f"duplicate transition on ({t.source!r}, {t.event!r})", lineno
                    )
                subtrans.append(t)
                note_event(t.event)
                composite_ctx = (name, stereo, substates, subinitial, subtrans, open_line)
            else:
                raise StateMachineError(
                    f"unexpected {kw!r} inside composite block", lineno
                )
            continue

        if kw == "state":
            name, stereo, is_init, is_goal_marker = _parse_state_line(tokens[1:], lineno)
            if any(s.name == name for s in states):
                raise StateMachineError(f"duplicate state {name!r}", lineno)
            if is_init:
                if initial is not None:
                    raise StateMachineError("second initial state declared", lineno)
                initial = name
            if is_goal_marker:
                if goal is not None:
                    raise StateMachineError("second goal state declared", lineno)
                goal = name
            states.append(StateDef(name, stereo or name))
        elif kw == "composite":
            rest = tokens[1:]
            if rest and rest[-1] == "{":
                rest = rest[:-1]
            elif rest and rest[-1].endswith("{"):
                rest = rest[:-1] + [rest[-1][:-1]]
            else:
                raise StateMachineError("composite block must open with '{'", lineno)
            name, stereo, is_init, is_goal_marker = _parse_state_line(rest, lineno)
            if any(s.name == name for s in states):
                raise StateMachineError(f"duplicate state {name!r}", lineno)
            if is_init:
                if initial is not None:
                    raise StateMachineError("second initial state declared", lineno)
                initial = name
            if is_goal_marker:
                raise StateMachineError("a composite state cannot be the goal", lineno)
            composite_ctx = (name, stereo or name, [], None, [], lineno)
        elif kw == "trans":
            t = _parse_trans_line(line, lineno)
            transitions.append((t, lineno))
            note_event(t.event)
        else:
            raise StateMachineError(f"unknown declaration {kw!r}", lineno)

    if composite_ctx is not None:
        raise StateMachineError(
            f"composite {composite_ctx[0]!r} is never closed", composite_ctx[5]
        )

    declared = {s.name for s in states}
    checked: list[Transition] = []
    for t, lineno in transitions:
        for endpoint in (t.source, t.target):
            if endpoint not in declared:
                raise StateMachineError(
                    f"transition references undeclared state {endpoint!r}", lineno
                )
        if any(x.source == t.source and x.event == t.event for x in checked):
            raise StateMachineError(
                f"duplicate transition on ({t.source!r}, {t.event!r})", lineno
            )
        checked.append(t)

    if not states:
        raise StateMachineError("no states declared")
    if initial is None:
        raise StateMachineError("no state marked initial")
    if goal is None:
        raise StateMachineError("no state marked goal")

    def check_phases(defs):
        for s in defs:
            if s.stereotype not in FLIGHT_PHASES:
                raise StateMachineError(
                    f"state {s.name!r} needs an explicit stereotype "
                    f"(its name is not a flight phase)"
                )
            if s.substates is not None:
                check_phases(s.substates.states)

    check_phases(states)

    return FlightStateMachine(
        states=tuple(states),
        events=tuple(events),
        transitions=tuple(checked),
        initial=initial,
        goal=goal,
    )


def flatten(sm: FlightStateMachine) -> FlightStateMachine:
    """Remove composite states.

    Each substate becomes a top-level state named ``Parent.Sub``; transitions
    entering the parent are redirected to its initial substate; transitions
    leaving the parent are replicated from every substate; internal
    transitions are kept under the dotted names.  Idempotent: a machine with
    no composites is returned unchanged.
    """
    if sm.flat:
        return sm

    expanded: list[StateDef] = []
    entry: dict[str, str] = {}  # composite name -> flattened entry state
    sub_names: dict[str, list[str]] = {}
    composite_stereotypes = dict(sm.composite_stereotypes)

    for s in sm.states:
        if not s.composite:
            expanded.append(s)
            continue
        inner = s.substates
        if inner.initial is None:  # pragma: no cover - parse already rejects
            raise StateMachineError(f"composite {s.name!r} has no initial substate")
        composite_stereotypes[s.name] = s.stereotype
        entry[s.name] = f"{s.name}.{inner.initial}"
        sub_names[s.name] = []
        for sub in inner.states:
            expanded.append(StateDef(f"{s.name}.{sub.name}", sub.stereotype))
            sub_names[s.name].append(f"{s.name}.{sub.name}")

    transitions: list[Transition] = []
    for s in sm.states:
        if s.composite:
            for t in s.substates.transitions:
                transitions.append(
                    Transition(f"{s.name}.{t.source}", t.event, f"{s.name}.{t.target}")
                )
    for t in sm.transitions:
        target = entry.get(t.target, t.target)
        if t.source in sub_names:
            for src in sub_names[t.source]:
                transitions.append(Transition(src, t.event, target))
        else:
            transitions.append(Transition(t.source, t.event, target))

    flat = FlightStateMachine(
        states=tuple(expanded),
        events=sm.events,
        transitions=tuple(transitions),
        initial=entry.get(sm.initial, sm.initial),
        goal=entry.get(sm.goal, sm.goal),
        composite_stereotypes=composite_stereotypes,
    )

    seen: set[tuple[str, str]] = set()
    for t in flat.transitions:
        key = (t.source, t.event)
        if key in seen:
            raise StateMachineError(
                f"flattening produced duplicate transition on {key!r}"
            )
        seen.add(key)

    unreachable = set(flat.state_names()) - _reachable(flat)
    if unreachable:
        raise StateMachineError(
            f"states unreachable from initial: {sorted(unreachable)}"
        )
    return flatten(flat)  # recurse in case of deeper nesting; no-op when flat


def _reachable(sm: FlightStateMachine) -> set[str]:
    adj: dict[str, list[str]] = {}
    for t in sm.transitions:
        adj.setdefault(t.source, []).append(t.target)
    seen = {sm.initial}
    stack = [sm.initial]
    while stack:
        for nxt in adj.get(stack.pop(), []):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def legal_actions(sm: FlightStateMachine, state: str) -> frozenset[str]:
    """Events with an outgoing transition from ``state`` (flattened machine)."""
    if not sm.has_state(state):
        raise StateMachineError(f"unknown state {state!r}")
    return frozenset(t.event for t in sm.transitions if t.source == state)


def next_state(sm: FlightStateMachine, state: str, event: str) -> str | None:
    """Target of the unique ``(state, event)`` transition, or ``None`` when
    the event is not legal in that state (an incorrect action)."""
    if not sm.has_state(state):
        raise StateMachineError(f"unknown state {state!r}")
    if event not in sm.events:
        raise StateMachineError(f"unknown event {event!r}")
    for t in sm.transitions:
        if t.source == state and t.event == event:
            return t.target
    return None


def is_goal(sm: FlightStateMachine, state: str) -> bool:
    if not sm.has_state(state):
        raise StateMachineError(f"unknown state {state!r}")
    return state == sm.goal


def in_state(current: str, scope: str) -> bool:
    """True when ``current`` is ``scope`` or a dotted descendant of it.

    Flattened substates keep their parent's identity through the
    ``Parent.Sub`` naming rule, so a scope naming the parent still matches.
    """
    return current == scope or current.startswith(scope + ".")
