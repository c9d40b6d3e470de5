"""Run configuration: one ``key = value`` file holding the model file paths,
the simulator settings (including fault lines), and the training
hyperparameters.  Paths resolve relative to the config file's directory."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .agent import TrainConfig
from .constraints import Constraint, parse_constraints
from .domain import DomainSchema, parse_domain_schema
from .kvformat import ConfigError, parse_kv_text
from .report import parse_template
from .sim import SimConfig, _SIM_KEYS
from .statemachine import FlightStateMachine, flatten, parse_state_machine

__all__ = ["RunConfig", "load_run_config"]

_PATH_KEYS = ("machine", "schema", "constraints", "template")
_TRAIN_FIELDS = {f.name: f.type for f in fields(TrainConfig)}


@dataclass
class RunConfig:
    sim: SimConfig
    train: TrainConfig
    machine: FlightStateMachine  # flattened
    schema: DomainSchema
    constraints: list[Constraint]
    templates: dict[str, str]
    source_dir: Path

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(
            self,
            sim=replace(self.sim, seed=seed),
            train=replace(self.train, seed=seed),
        )

    def with_episodes(self, episodes: int) -> "RunConfig":
        return replace(self, train=replace(self.train, training_episodes=episodes))


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    values, faults = parse_kv_text(text)

    file_paths = {}
    for key in _PATH_KEYS:
        if key not in values:
            raise ConfigError(f"config is missing the {key}= path")
        file_paths[key] = (path.parent / values.pop(key)).resolve()

    sim_kwargs = {}
    train_kwargs = {}
    for key, raw in values.items():
        if key == "seed":
            sim_kwargs[key] = train_kwargs[key] = int(raw)
        elif key in _SIM_KEYS:
            sim_kwargs[key] = _SIM_KEYS[key](raw)
        elif key in _TRAIN_FIELDS:
            train_kwargs[key] = _coerce_train(key, raw)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    sim = SimConfig(faults=tuple(faults), **sim_kwargs)
    train = TrainConfig(**train_kwargs)

    def read(key):
        try:
            return file_paths[key].read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read {key} file: {exc}") from None

    machine = flatten(parse_state_machine(read("machine")))
    schema = parse_domain_schema(read("schema"))
    constraints = parse_constraints(
        read("constraints"), schema, states=machine.scope_names()
    )
    templates = parse_template(read("template"))

    for fault in sim.faults:
        if not schema.has_path(fault.path):
            raise ConfigError(f"fault {fault.name!r} targets unknown path {fault.path!r}")
        if not any(
            s == fault.state or s.startswith(fault.state + ".")
            for s in machine.state_names()
        ):
            raise ConfigError(f"fault {fault.name!r} triggers on unknown state {fault.state!r}")
    missing = [ev for ev in machine.events if ev not in templates]
    if missing:
        raise ConfigError(f"template file lacks entries for events {missing}")

    return RunConfig(sim, train, machine, schema, constraints, templates, path.parent)


_TRAIN_INTS = {
    "batch_size",
    "replay_capacity",
    "target_update",
    "training_episodes",
    "evaluation_episodes",
    "history_len",
    "hidden_dim",
    "lstm_layers",
    "checkpoint_interval",
    "seed",
}


def _coerce_train(key: str, raw: str):
    try:
        return int(raw) if key in _TRAIN_INTS else float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
