import pytest

from uavtest import data_text
from uavtest.domain import parse_domain_schema
from uavtest.statemachine import flatten, parse_state_machine


@pytest.fixture(scope="session")
def copter_machine():
    return flatten(parse_state_machine(data_text("arducopter.machine")))


@pytest.fixture(scope="session")
def copter_schema():
    return parse_domain_schema(data_text("arducopter.schema"))
