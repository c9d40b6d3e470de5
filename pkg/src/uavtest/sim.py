"""Goal-based UAV environment.

A simplified quadcopter behind the backend contract ``reset`` / ``step`` /
``observe`` / ``is_terminal``.  Actions drive the flight state machine;
physics advances one tick per step; telemetry flows through an optional
fault profile (bias/gain perturbations scoped to a flight state) before it
is emitted.  A file-replay backend with the same contract supports
deterministic tests against recorded telemetry.

Dynamics (per tick of ``tick_ms`` milliseconds):

* Takeoff climbs at ``climb_rate`` up to a 20 m takeoff target.
* Ascend climbs and Descend sinks at the configured rates; re-commanding
  ``increaseAlt``/``decreaseAlt`` inside the phase stacks another rate step
  (capped), so sustained commands accelerate the vertical motion.
* AltitudeHold flies level at ``cruise_airspeed``; PositionHold zeroes
  groundspeed; Loiter and Circle bank 25 deg with a 20 deg/s turn rate;
  turn substates bank +/-25 deg.
* Battery drains ``battery_drain_per_tick`` percent every tick.

Vertical speed ``vz`` is emitted positive-down, so a descent shows a
positive sink rate.  Ground contact sinking faster than 5 m/s is a crash,
as is disarming while airborne or rolling past 90 deg near the ground.
Incorrect actions never move the machine or the physics; only the tick and
the battery advance.  With ``wind_noise_std = 0`` and no faults the emitted
telemetry equals the true state exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import DomainSchema, Snapshot, make_snapshot, populate
from .kvformat import ConfigError, FaultSpec, parse_kv_text
from .statemachine import FlightStateMachine, in_state, legal_actions, next_state

__all__ = [
    "SimConfig",
    "SimError",
    "StepOutcome",
    "SimulatorEnv",
    "ReplayEnv",
    "parse_sim_config",
    "parse_replay_records",
    "RUNNING",
    "CRASHED",
    "GOAL",
    "STEP_LIMIT",
]

RUNNING = "running"
CRASHED = "crashed"
GOAL = "goal"
STEP_LIMIT = "step-limit"

KNOTS_TO_MS = 0.514444
HOME_MSL = 488.0
TAKEOFF_TARGET = 20.0
VERTICAL_CAP = 8.0
CRASH_SINK = 5.0  # m/s; matches the safe-landing vz range upper bound
NEAR_GROUND = 5.0  # m; attitude crashes only matter this low


class SimError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    tick_ms: int = 500
    climb_rate: float = 2.0  # m/s
    descent_rate: float = 2.0  # m/s
    cruise_airspeed: float = 15.0  # kn
    battery_drain_per_tick: float = 0.05  # percent
    wind_noise_std: float = 0.0  # measurement jitter, per-quantity std-dev
    max_steps: int = 200
    seed: int = 0
    faults: tuple[FaultSpec, ...] = ()

    def __post_init__(self):
        if self.tick_ms <= 0:
            raise ConfigError("tick_ms must be positive")
        if self.climb_rate <= 0 or self.descent_rate <= 0:
            raise ConfigError("climb/descent rates must be positive")
        if self.cruise_airspeed <= 0:
            raise ConfigError("cruise_airspeed must be positive")
        if self.battery_drain_per_tick < 0:
            raise ConfigError("battery_drain_per_tick must be non-negative")
        if self.wind_noise_std < 0:
            raise ConfigError("wind_noise_std must be non-negative")
        if self.max_steps <= 0:
            raise ConfigError("max_steps must be positive")

    @property
    def dt(self) -> float:
        return self.tick_ms / 1000.0


_SIM_KEYS = {
    "tick_ms": int,
    "climb_rate": float,
    "descent_rate": float,
    "cruise_airspeed": float,
    "battery_drain_per_tick": float,
    "wind_noise_std": float,
    "max_steps": int,
    "seed": int,
}


def parse_sim_config(text: str, extra_ok: bool = False) -> SimConfig:
    """Parse a ``key = value`` config file.  ``extra_ok`` ignores keys that
    belong to other layers (used when the simulator shares a run config)."""
    values, faults = parse_kv_text(text)
    kwargs = {}
    for key, raw in values.items():
        if key in _SIM_KEYS:
            try:
                kwargs[key] = _SIM_KEYS[key](raw)
            except ValueError:
                raise ConfigError(f"bad value for {key}: {raw!r}") from None
        elif not extra_ok:
            raise ConfigError(f"unknown config key {key!r}")
    return SimConfig(faults=tuple(faults), **kwargs)


@dataclass(frozen=True)
class StepOutcome:
    snapshot: Snapshot
    flight_state: str
    action_correct: bool
    crashed: bool
    goal_reached: bool

    def __post_init__(self):
        if self.crashed and self.goal_reached:
            raise SimError("an outcome cannot be both crashed and goal")


@dataclass
class _Vehicle:
    """True physical state, untouched by faults and measurement noise."""

    altitude: float = 0.0
    airspeed: float = 0.0
    groundspeed: float = 0.0
    thrust: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    heading: float = 0.0
    heading0: float = 0.0
    turn_rate: float = 0.0
    vz: float = 0.0  # positive down
    climb_cmd: float = 0.0
    sink_cmd: float = 0.0
    x: float = 0.0
    y: float = 0.0
    battery: float = 100.0

    @property
    def yaw(self) -> float:
        return ((self.heading - self.heading0 + 180.0) % 360.0) - 180.0

    @property
    def distance(self) -> float:
        return math.hypot(self.x, self.y)


def _phase_of(sm: FlightStateMachine, state: str) -> str:
    root = state.split(".", 1)[0]
    if root in sm.composite_stereotypes:
        return sm.composite_stereotypes[root]
    return sm.stereotype_of(state if sm.has_state(state) else root)


def _leaf_stereotype(sm: FlightStateMachine, state: str) -> str:
    return sm.stereotype_of(state) if sm.has_state(state) else state


class SimulatorEnv:
    """Internal quadcopter backend.  One instance is one episode; create a
    fresh env (or call ``reset``) per episode.  Not thread-shared."""

    def __init__(self, config: SimConfig, sm: FlightStateMachine, schema: DomainSchema):
        if not sm.flat:
            raise SimError("environment needs a flattened machine")
        self.config = config
        self.sm = sm
        self.schema = schema
        self.reset()

    # -- backend contract ---------------------------------------------------

    def reset(self, seed: int | None = None) -> StepOutcome:
        """Vehicle at rest in the initial state.  Deterministic per seed:
        the heading is drawn from the seeded stream, everything else is
        zero except the full battery."""
        self.rng = np.random.default_rng(self.config.seed if seed is None else seed)
        self.tick = 0
        self.state = self.sm.initial
        self.vehicle = _Vehicle(battery=100.0)
        self.vehicle.heading0 = self.vehicle.heading = float(
            np.floor(self.rng.uniform(0.0, 360.0) * 1000.0) / 1000.0
        )
        self._status = RUNNING
        self._snapshot = self._emit()
        return StepOutcome(self._snapshot, self.state, True, False, False)

    def step(self, action: str) -> StepOutcome:
        if self._status != RUNNING:
            raise SimError(f"episode already terminated ({self._status})")
        correct = action in legal_actions(self.sm, self.state)
        self.tick += 1
        self.vehicle.battery = max(
            0.0, 100.0 - self.config.battery_drain_per_tick * self.tick
        )
        crashed = False
        if correct:
            prev = self.state
            self.state = next_state(self.sm, self.state, action)
            self._command(prev, self.state, action)
            crashed = self._integrate()
            if not crashed and self.state == self.sm.goal and self.vehicle.altitude > 0:
                crashed = True  # disarmed while airborne
        goal = (
            not crashed
            and self.state == self.sm.goal
            and self.vehicle.altitude == 0.0
        )
        if crashed:
            self._status = CRASHED
        elif goal:
            self._status = GOAL
        elif self.tick >= self.config.max_steps:
            self._status = STEP_LIMIT
        self._snapshot = self._emit()
        return StepOutcome(self._snapshot, self.state, correct, crashed, goal)

    def observe(self) -> Snapshot:
        return self._snapshot

    def is_terminal(self) -> str:
        return self._status

    # -- physics ------------------------------------------------------------

    def _command(self, prev: str, new: str, action: str) -> None:
        """Vertical-speed bookkeeping: repeated climb/descend commands stack."""
        v = self.vehicle
        root_prev = prev.split(".", 1)[0]
        root_new = new.split(".", 1)[0]
        phase = _phase_of(self.sm, new)
        if phase in ("Ascend", "Climb"):
            if action == "increaseAlt" and root_prev == root_new:
                v.climb_cmd = min(v.climb_cmd + self.config.climb_rate, VERTICAL_CAP)
            elif root_prev != root_new:
                v.climb_cmd = self.config.climb_rate
        if phase in ("Descend", "Descent"):
            if action == "decreaseAlt" and root_prev == root_new:
                v.sink_cmd = min(v.sink_cmd + self.config.descent_rate, VERTICAL_CAP)
            elif root_prev != root_new:
                v.sink_cmd = self.config.descent_rate

    def _integrate(self) -> bool:
        """Advance the physics one tick; returns True on a crash."""
        cfg = self.config
        v = self.vehicle
        phase = _phase_of(self.sm, self.state)
        leaf = _leaf_stereotype(self.sm, self.state)
        dt = cfg.dt

        # vertical speed, positive down
        if phase == "Takeoff":
            v.vz = -cfg.climb_rate if v.altitude < TAKEOFF_TARGET else 0.0
        elif phase in ("Ascend", "Climb"):
            v.vz = -v.climb_cmd
        elif phase in ("Descend", "Descent"):
            v.vz = v.sink_cmd
        elif phase == "Approach":
            v.vz = cfg.descent_rate / 2.0
        elif phase == "Landing":
            v.vz = min(cfg.descent_rate, CRASH_SINK - 1.0)
        else:
            v.vz = 0.0

        # speeds and thrust per phase
        table = {
            "Disarmed": (0.0, 0.0, 0.0),
            "Armed": (0.0, 0.0, 0.1),
            "Taxiing": (0.0, 2.0, 0.15),
            "Takeoff": (2.0, 0.5, 0.7),
            "Ascend": (14.0, 5.0, 0.8),
            "Climb": (14.0, 5.0, 0.8),
            "Descend": (14.0, 5.0, 0.35),
            "Descent": (14.0, 5.0, 0.35),
            "AltitudeHold": (cfg.cruise_airspeed, cfg.cruise_airspeed, 0.5),
            "Cruise": (cfg.cruise_airspeed, cfg.cruise_airspeed, 0.5),
            "PositionHold": (1.0, 0.0, 0.5),
            "Loiter": (12.0, 8.0, 0.55),
            "Circle": (12.0, 8.0, 0.55),
            "Approach": (6.0, 8.0, 0.4),
            "Landing": (3.0, 0.5, 0.3),
        }
        v.airspeed, v.groundspeed, v.thrust = table.get(phase, (0.0, 0.0, 0.5))

        # attitude: banked turns; loiter/circle also rotate the heading
        if phase in ("Loiter", "Circle"):
            direction = -1.0 if leaf == "TurningLeft" else 1.0
            v.roll = 25.0 * direction
            v.turn_rate = 20.0 * direction
        elif leaf == "TurningLeft":
            v.roll, v.turn_rate = -25.0, -10.0
        elif leaf == "TurningRight":
            v.roll, v.turn_rate = 25.0, 10.0
        else:
            v.roll, v.turn_rate = 0.0, 0.0
        pitch_table = {
            "Ascend": 8.0,
            "Climb": 8.0,
            "Descend": -8.0,
            "Descent": -8.0,
            "Takeoff": 2.0,
            "AltitudeHold": 3.0,
            "Cruise": 3.0,
            "Approach": -3.0,
            "Landing": -1.0,
        }
        v.pitch = pitch_table.get(phase, 0.0)

        v.heading = (v.heading + v.turn_rate * dt) % 360.0

        gs_ms = v.groundspeed * KNOTS_TO_MS
        rad = math.radians(v.heading)
        v.x += gs_ms * math.sin(rad) * dt
        v.y += gs_ms * math.cos(rad) * dt

        if phase == "Takeoff":
            v.altitude = min(v.altitude + cfg.climb_rate * dt, TAKEOFF_TARGET)
        else:
            v.altitude -= v.vz * dt

        crashed = False
        if v.altitude <= 0.0:
            hit_ground = v.vz > 0.0
            v.altitude = 0.0
            if hit_ground and v.vz > CRASH_SINK:
                crashed = True
            elif hit_ground:
                v.vz = 0.0
                v.sink_cmd = 0.0
        if abs(v.roll) > 90.0 and v.altitude < NEAR_GROUND:
            crashed = True
        return crashed

    # -- telemetry ----------------------------------------------------------

    def _emit(self) -> Snapshot:
        cfg = self.config
        v = self.vehicle
        gs_ms = v.groundspeed * KNOTS_TO_MS
        rad = math.radians(v.heading)
        telemetry = {
            "thrust": v.thrust,
            "heading": v.heading,
            "airspeed": v.airspeed,
            "groundspeed": v.groundspeed,
            "type": 1.0,  # multicopter
            "attitude.roll": v.roll,
            "attitude.pitch": v.pitch,
            "attitude.yaw": v.yaw,
            "attitude.roll_speed": 0.0,
            "attitude.pitch_speed": 0.0,
            "attitude.yaw_speed": v.turn_rate,
            "attitude.yaw_rate": v.turn_rate,
            "location.latitude": v.y / 111320.0,
            "location.longitude": v.x / 111320.0,
            "location.altitude_MSL": v.altitude + HOME_MSL,
            "location.altitude_AGL": v.altitude,
            "rangefinder.distance": v.distance,
            "speed.vx": gs_ms * math.sin(rad),
            "speed.vy": gs_ms * math.cos(rad),
            "speed.vz": v.vz,
            "battery.voltage": 12.6 - 2.0 * (1.0 - v.battery / 100.0),
            "battery.current": 2.0 + 18.0 * v.thrust,
            "battery.level": v.battery,
        }
        if cfg.wind_noise_std > 0.0:
            # measurement jitter; groundspeed stays clean (zero in hovers,
            # where any jitter would manufacture spurious violations)
            for path in (
                "airspeed",
                "attitude.roll",
                "attitude.pitch",
                "attitude.yaw",
                "location.altitude_AGL",
            ):
                telemetry[path] += float(self.rng.normal(0.0, cfg.wind_noise_std))
        for fault in cfg.faults:
            if in_state(self.state, fault.state):
                telemetry[fault.path] = telemetry[fault.path] * fault.gain + fault.bias
        telemetry["location.altitude_AGL"] = max(0.0, telemetry["location.altitude_AGL"])
        telemetry["location.altitude_MSL"] = telemetry["location.altitude_AGL"] + HOME_MSL
        base = make_snapshot(self.schema, flight_state=self.sm.initial)
        return populate(base, telemetry, flight_state=self.state, tick=self.tick)


# ---------------------------------------------------------------------------
# replay backend


def parse_replay_records(text: str) -> list[tuple[int, dict[str, float]]]:
    """Parse telemetry replay lines ``tick path=value path=value ...``."""
    records = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            tick = int(tokens[0])
        except ValueError:
            raise ConfigError("record must start with a tick index", lineno) from None
        values = {}
        for tok in tokens[1:]:
            if "=" not in tok:
                raise ConfigError(f"malformed reading {tok!r}", lineno)
            path, val = tok.split("=", 1)
            try:
                values[path] = float(val)
            except ValueError:
                raise ConfigError(f"non-numeric reading {tok!r}", lineno) from None
        records.append((tick, values))
    return records


class ReplayEnv:
    """Backend that replays recorded telemetry instead of integrating
    physics.  Correct actions consume one record each; the flight state
    still follows the machine.  Exhausting the recording ends the episode
    at the step limit."""

    def __init__(self, sm: FlightStateMachine, schema: DomainSchema, records):
        if not sm.flat:
            raise SimError("environment needs a flattened machine")
        self.sm = sm
        self.schema = schema
        self.records = list(records)
        self.reset()

    def reset(self, seed: int | None = None) -> StepOutcome:
        self.tick = 0
        self.index = 0
        self.state = self.sm.initial
        self._status = RUNNING
        self._snapshot = make_snapshot(self.schema, flight_state=self.state)
        return StepOutcome(self._snapshot, self.state, True, False, False)

    def step(self, action: str) -> StepOutcome:
        if self._status != RUNNING:
            raise SimError(f"episode already terminated ({self._status})")
        correct = action in legal_actions(self.sm, self.state)
        self.tick += 1
        if correct:
            self.state = next_state(self.sm, self.state, action)
            if self.index < len(self.records):
                _tick, values = self.records[self.index]
                self.index += 1
                self._snapshot = populate(
                    self._snapshot, values, flight_state=self.state, tick=self.tick
                )
            else:
                self._status = STEP_LIMIT
        if self._snapshot.tick != self.tick or self._snapshot.flight_state != self.state:
            self._snapshot = populate(
                self._snapshot, {}, flight_state=self.state, tick=self.tick
            )
        goal = self.state == self.sm.goal
        if goal:
            self._status = GOAL
        elif self.index >= len(self.records) and self._status == RUNNING:
            self._status = STEP_LIMIT
        return StepOutcome(self._snapshot, self.state, correct, False, goal)

    def observe(self) -> Snapshot:
        return self._snapshot

    def is_terminal(self) -> str:
        return self._status
