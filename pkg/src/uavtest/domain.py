"""Domain schema and telemetry snapshots.

The schema declares the observation space: stereotyped classes with numeric
or enumerated fields, parsed from a line-oriented text format::

    class <Name> stereotype=<Stereotype>
        field <name> kind=<num|enum> units=<str> [tuple=<s1..s9>] [values=a|b|c]

Fields of the class stereotyped ``UAV`` are addressed by bare name
(``airspeed``); every other class contributes dotted paths prefixed with its
lower-cased class name (``location.altitude_AGL``).  ``tuple=`` annotations
pin which slot feeds each position of the ten-element agent state tuple;
``values=`` lists the names of an enumerated field in code order.

Snapshots are value-like: ``populate`` returns an updated copy and never
mutates its input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

__all__ = [
    "STRUCTURAL_STEREOTYPES",
    "TUPLE_SLOTS",
    "DomainError",
    "FieldDef",
    "ClassDef",
    "DomainSchema",
    "Snapshot",
    "StateTuple",
    "parse_domain_schema",
    "make_snapshot",
    "populate",
    "to_state_tuple",
]

STRUCTURAL_STEREOTYPES = frozenset(
    {
        "UAV",
        "Attitude",
        "LocationLocal",
        "LocationGlobal",
        "LocationGlobalRelative",
        "RangeFinder",
        "Velocity",
        "Battery",
        "Engine",
        "Accelerometer",
        "Gyroscope",
        "Barometer",
        "Magnetometer",
    }
)

TUPLE_SLOTS = ("s1", "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9")


class DomainError(ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class FieldDef:
    name: str
    kind: str  # "num" | "enum"
    units: str
    tuple_slot: str | None = None
    values: tuple[str, ...] = ()


@dataclass(frozen=True)
class ClassDef:
    name: str
    stereotype: str
    fields: tuple[FieldDef, ...]

    @property
    def prefix(self) -> str:
        """Dotted-path prefix; empty for the UAV root class."""
        return "" if self.stereotype == "UAV" else self.name.lower() + "."


@dataclass(frozen=True)
class DomainSchema:
    classes: tuple[ClassDef, ...]

    def paths(self) -> tuple[str, ...]:
        out = []
        for c in self.classes:
            for f in c.fields:
                out.append(c.prefix + f.name)
        return tuple(out)

    def field_at(self, path: str) -> FieldDef:
        for c in self.classes:
            for f in c.fields:
                if c.prefix + f.name == path:
                    return f
        raise DomainError(f"unknown field path {path!r}")

    def has_path(self, path: str) -> bool:
        return path in self.paths()

    def tuple_paths(self) -> dict[str, str]:
        """Map slot name (s1..s9) -> field path."""
        out = {}
        for c in self.classes:
            for f in c.fields:
                if f.tuple_slot is not None:
                    out[f.tuple_slot] = c.prefix + f.name
        return out

    @property
    def property_count(self) -> int:
        return sum(len(c.fields) for c in self.classes)

    def enum_code(self, path: str, name: str) -> int:
        f = self.field_at(path)
        if f.kind != "enum":
            raise DomainError(f"{path!r} is not an enumerated field")
        try:
            return f.values.index(name)
        except ValueError:
            raise DomainError(f"unknown enum literal {name!r} for {path!r}") from None


def parse_domain_schema(text: str) -> DomainSchema:
    """Parse a schema file.  Rejects empty schemas, duplicate class or field
    names, unknown stereotypes, and malformed attributes."""
    classes: list[ClassDef] = []
    current: tuple[str, str, list[FieldDef]] | None = None

    def close_current():
        nonlocal current
        if current is not None:
            cname, stereo, fields = current
            if not fields:
                raise DomainError(f"class {cname!r} declares no fields")
            classes.append(ClassDef(cname, stereo, tuple(fields)))
            current = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "class":
            close_current()
            if len(tokens) != 3 or not tokens[2].startswith("stereotype="):
                raise DomainError(
                    "expected 'class <Name> stereotype=<Stereotype>'", lineno
                )
            cname = tokens[1]
            stereo = tokens[2].split("=", 1)[1]
            if stereo not in STRUCTURAL_STEREOTYPES:
                raise DomainError(f"unknown stereotype {stereo!r}", lineno)
            if any(c.name == cname for c in classes) or (
                current and current[0] == cname
            ):
                raise DomainError(f"duplicate class {cname!r}", lineno)
            current = (cname, stereo, [])
        elif tokens[0] == "field":
            if current is None:
                raise DomainError("field declared outside a class", lineno)
            if len(tokens) < 2:
                raise DomainError("field declaration missing a name", lineno)
            fname = tokens[1]
            if any(f.name == fname for f in current[2]):
                raise DomainError(
                    f"duplicate field {fname!r} in class {current[0]!r}", lineno
                )
            kind = units = None
            tuple_slot = None
            values: tuple[str, ...] = ()
            for tok in tokens[2:]:
                if "=" not in tok:
                    raise DomainError(f"malformed attribute {tok!r}", lineno)
                key, val = tok.split("=", 1)
                if key == "kind":
                    if val not in ("num", "enum"):
                        raise DomainError(f"kind must be num or enum, got {val!r}", lineno)
                    kind = val
                elif key == "units":
                    units = val
                elif key == "tuple":
                    if val not in TUPLE_SLOTS:
                        raise DomainError(f"tuple slot must be s1..s9, got {val!r}", lineno)
                    tuple_slot = val
                elif key == "values":
                    values = tuple(v for v in val.split("|") if v)
                else:
                    raise DomainError(f"unknown attribute {key!r}", lineno)
            if kind is None or units is None:
                raise DomainError("field needs kind= and units=", lineno)
            if values and kind != "enum":
                raise DomainError("values= only applies to enum fields", lineno)
            current[2].append(FieldDef(fname, kind, units, tuple_slot, values))
        else:
            raise DomainError(f"unknown declaration {tokens[0]!r}", lineno)

    close_current()
    if not classes:
        raise DomainError("no classes declared")

    schema = DomainSchema(tuple(classes))
    slots_seen: dict[str, str] = {}
    for slot, path in schema.tuple_paths().items():
        if slot in slots_seen:  # pragma: no cover - dict construction dedups
            raise DomainError(f"tuple slot {slot} annotated twice")
        slots_seen[slot] = path
    counts: dict[str, int] = {}
    for c in classes:
        for f in c.fields:
            if f.tuple_slot:
                counts[f.tuple_slot] = counts.get(f.tuple_slot, 0) + 1
    for slot, n in counts.items():
        if n > 1:
            raise DomainError(f"tuple slot {slot} annotated on {n} fields")
    return schema


@dataclass(frozen=True)
class Snapshot:
    """One observation of the vehicle: a value per schema path, plus the
    flight state and the tick the values were read at."""

    schema: DomainSchema
    slots: dict[str, float]
    tick: int
    flight_state: str

    def value(self, path: str) -> float:
        try:
            return self.slots[path]
        except KeyError:
            raise DomainError(f"unknown field path {path!r}") from None

    def copy(self) -> "Snapshot":
        return Snapshot(self.schema, dict(self.slots), self.tick, self.flight_state)


def make_snapshot(schema: DomainSchema, flight_state: str = "Disarmed") -> Snapshot:
    """Fresh vehicle-at-rest snapshot: every slot zero except the battery
    slot (the field annotated ``tuple=s8``), which starts full at 100."""
    slots = {path: 0.0 for path in schema.paths()}
    battery = schema.tuple_paths().get("s8")
    if battery is not None:
        slots[battery] = 100.0
    return Snapshot(schema, slots, tick=0, flight_state=flight_state)


def populate(
    snapshot: Snapshot,
    telemetry: dict[str, float],
    flight_state: str,
    tick: int,
) -> Snapshot:
    """Return a new snapshot with the supplied readings written in.  Paths
    absent from ``telemetry`` keep their previous values; unknown paths are
    rejected by name."""
    slots = dict(snapshot.slots)
    for path, value in telemetry.items():
        if path not in slots:
            raise DomainError(f"unknown field path {path!r}")
        slots[path] = float(value)
    return Snapshot(snapshot.schema, slots, tick=tick, flight_state=flight_state)


@dataclass(frozen=True)
class StateTuple:
    """The ten-element agent state: flight state plus nine telemetry values."""

    s0: str  # flight state
    s1: float  # altitude, m AGL
    s2: float  # airspeed, kn
    s3: float  # groundspeed, kn
    s4: float  # roll, deg
    s5: float  # pitch, deg
    s6: float  # yaw, deg
    s7: float  # heading, deg in [0, 360)
    s8: float  # battery, % in [0, 100]
    s9: float  # rangefinder distance, m

    def __post_init__(self):
        if not (0.0 <= self.s8 <= 100.0):
            raise DomainError(f"battery {self.s8} outside [0, 100]")
        if not (0.0 <= self.s7 < 360.0):
            raise DomainError(f"heading {self.s7} outside [0, 360)")
        for name in ("s1", "s2", "s3", "s4", "s5", "s6", "s9"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DomainError(f"{name} is not finite: {v}")

    def numbers(self) -> tuple[float, ...]:
        return (
            self.s1,
            self.s2,
            self.s3,
            self.s4,
            self.s5,
            self.s6,
            self.s7,
            self.s8,
            self.s9,
        )


def to_state_tuple(snapshot: Snapshot) -> StateTuple:
    """Project a snapshot onto the agent state tuple via the schema's
    ``tuple=`` annotations.  Values are copied as-is (no unit conversion)."""
    mapping = snapshot.schema.tuple_paths()
    values = []
    for slot in TUPLE_SLOTS:
        if slot not in mapping:
            raise DomainError(f"schema has no field annotated tuple={slot}")
        values.append(snapshot.slots[mapping[slot]])
    return StateTuple(snapshot.flight_state, *values)
