"""Tests for the domain schema and snapshot plumbing."""

import pytest

from uavtest import data_text
from uavtest.domain import (
    DomainError,
    StateTuple,
    make_snapshot,
    parse_domain_schema,
    populate,
    to_state_tuple,
)


@pytest.fixture(scope="module")
def schema():
    return parse_domain_schema(data_text("arducopter.schema"))


def test_arducopter_schema_statistics(schema):
    assert len(schema.classes) == 6
    assert schema.property_count == 23


def test_schema_paths_cover_constraint_vocabulary(schema):
    for path in (
        "thrust",
        "airspeed",
        "groundspeed",
        "heading",
        "location.altitude_AGL",
        "rangefinder.distance",
        "speed.vz",
        "attitude.roll",
        "battery.level",
    ):
        assert schema.has_path(path)


def test_tuple_annotations_complete(schema):
    mapping = schema.tuple_paths()
    assert mapping == {
        "s1": "location.altitude_AGL",
        "s2": "airspeed",
        "s3": "groundspeed",
        "s4": "attitude.roll",
        "s5": "attitude.pitch",
        "s6": "attitude.yaw",
        "s7": "heading",
        "s8": "battery.level",
        "s9": "rangefinder.distance",
    }


def test_empty_schema_rejected():
    with pytest.raises(DomainError, match="no classes"):
        parse_domain_schema("# nothing here\n")


def test_unknown_stereotype_rejected():
    with pytest.raises(DomainError, match="unknown stereotype"):
        parse_domain_schema("class R stereotype=Rocket\n    field x kind=num units=m\n")


def test_duplicate_field_rejected():
    text = (
        "class A stereotype=UAV\n"
        "    field x kind=num units=m\n"
        "    field x kind=num units=m\n"
    )
    with pytest.raises(DomainError, match="duplicate field"):
        parse_domain_schema(text)


def test_duplicate_tuple_slot_rejected():
    text = (
        "class A stereotype=UAV\n"
        "    field x kind=num units=m tuple=s1\n"
        "    field y kind=num units=m tuple=s1\n"
    )
    with pytest.raises(DomainError, match="tuple slot s1"):
        parse_domain_schema(text)


def test_make_snapshot_initial_values(schema):
    snap = make_snapshot(schema)
    assert snap.tick == 0
    assert snap.value("battery.level") == 100.0
    others = [p for p in schema.paths() if p != "battery.level"]
    assert all(snap.value(p) == 0.0 for p in others)


def test_make_snapshot_single_field():
    schema = parse_domain_schema("class A stereotype=UAV\n    field x kind=num units=m\n")
    snap = make_snapshot(schema)
    assert snap.slots == {"x": 0.0}


def test_snapshots_are_independent(schema):
    a = make_snapshot(schema)
    b = make_snapshot(schema)
    b.slots["thrust"] = 0.9
    assert a.value("thrust") == 0.0


def test_populate_updates_and_retains(schema):
    snap = make_snapshot(schema)
    out = populate(
        snap,
        {"location.altitude_AGL": 20.0, "airspeed": 0.22},
        flight_state="Takeoff",
        tick=3,
    )
    assert out.value("location.altitude_AGL") == 20.0
    assert out.value("airspeed") == 0.22
    assert out.value("battery.level") == 100.0  # retained
    assert out.flight_state == "Takeoff"
    assert out.tick == 3
    # input snapshot untouched
    assert snap.value("location.altitude_AGL") == 0.0
    assert snap.tick == 0


def test_populate_empty_telemetry(schema):
    snap = make_snapshot(schema)
    out = populate(snap, {}, flight_state="Armed", tick=1)
    assert out.slots == snap.slots
    assert (out.flight_state, out.tick) == ("Armed", 1)


def test_populate_unknown_path(schema):
    snap = make_snapshot(schema)
    with pytest.raises(DomainError, match="engine.rpm"):
        populate(snap, {"engine.rpm": 4000.0}, flight_state="Armed", tick=1)


def test_populate_last_write_wins(schema):
    snap = make_snapshot(schema)
    for i, v in enumerate([5.0, 7.5, 2.25], start=1):
        snap = populate(snap, {"location.altitude_AGL": v}, "Ascend", i)
        assert snap.value("location.altitude_AGL") == v


def test_to_state_tuple_fresh(schema):
    t = to_state_tuple(make_snapshot(schema))
    assert t == StateTuple("Disarmed", 0, 0, 0, 0, 0, 0, 0, 100, 0)


def test_to_state_tuple_populated(schema):
    snap = make_snapshot(schema)
    snap = populate(
        snap,
        {
            "airspeed": 0.05,
            "groundspeed": 0.2,
            "attitude.roll": 0.0081,
            "attitude.pitch": 0.0084,
            "attitude.yaw": 0.0235,
            "heading": 357.0,
            "battery.level": 99.0,
        },
        flight_state="Armed",
        tick=1,
    )
    t = to_state_tuple(snap)
    assert t == StateTuple("Armed", 0.0, 0.05, 0.2, 0.0081, 0.0084, 0.0235, 357.0, 99.0, 0.0)


def test_tuple_round_trip_no_conversion(schema):
    snap = make_snapshot(schema)
    snap = populate(snap, {"location.altitude_AGL": 123.456}, "Ascend", 1)
    assert to_state_tuple(snap).s1 == 123.456


def test_missing_tuple_annotation_rejected():
    schema = parse_domain_schema(
        "class A stereotype=UAV\n    field alt kind=num units=m tuple=s1\n"
    )
    with pytest.raises(DomainError, match="tuple=s2"):
        to_state_tuple(make_snapshot(schema))


def test_state_tuple_invariants():
    with pytest.raises(DomainError, match="battery"):
        StateTuple("Armed", 0, 0, 0, 0, 0, 0, 0, 101, 0)
    with pytest.raises(DomainError, match="heading"):
        StateTuple("Armed", 0, 0, 0, 0, 0, 0, 360.0, 50, 0)


def test_enum_table(schema):
    assert schema.enum_code("type", "multicopter") == 1
    with pytest.raises(DomainError, match="unknown enum literal"):
        schema.enum_code("type", "zeppelin")


def test_tuple_determinism(schema):
    seq = [
        ({"airspeed": 3.0}, "Takeoff", 1),
        ({"heading": 10.0, "battery.level": 98.0}, "Ascend", 2),
    ]
    outs = []
    for _ in range(2):
        snap = make_snapshot(schema)
        for telemetry, st, tick in seq:
            snap = populate(snap, telemetry, st, tick)
        outs.append(to_state_tuple(snap))
    assert outs[0] == outs[1]
