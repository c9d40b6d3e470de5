"""RL-driven flight-behavior test harness for simulated UAVs.

The package couples a flight state machine (action legality + transitions),
a domain schema with telemetry snapshots, a constraint DSL evaluated per
snapshot, a desk-scale quadcopter simulator, and a DQN agent built on a
hand-rolled LSTM.  Training learns action sequences that maximize
constraint violations; analysis tooling compares the result against a
uniform-random baseline.
"""

from importlib import resources

from .statemachine import (
    FlightStateMachine,
    StateDef,
    StateMachineError,
    Transition,
    flatten,
    is_goal,
    legal_actions,
    next_state,
    parse_state_machine,
)
from .domain import (
    DomainSchema,
    DomainError,
    Snapshot,
    StateTuple,
    make_snapshot,
    parse_domain_schema,
    populate,
    to_state_tuple,
)
from .constraints import (
    Constraint,
    ConstraintError,
    EvalResult,
    ViolationLedger,
    evaluate,
    parse_constraints,
    record,
)

__version__ = "0.1.0"


def data_path(name: str):
    """Path to one of the bundled model files (machine, schema, constraints,
    script template, run configs)."""
    return resources.files(__name__) / "data" / name


def data_text(name: str) -> str:
    return data_path(name).read_text(encoding="utf-8")
