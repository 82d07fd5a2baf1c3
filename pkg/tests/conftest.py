"""Shared fixtures and builders for the test suite."""

import pytest

from taftwin.core.network import RoadNetwork
from taftwin.core.types import (
    GeoAnchor,
    LaneGeometry,
    ParticipantClass,
    ParticipantState,
)


def make_state(
    pid: int = 1,
    t: float = 0.0,
    cls: ParticipantClass = ParticipantClass.CAR,
    position: tuple = (0.0, 0.0, 0.0),
    yaw: float = 0.0,
    yaw_rate: float = 0.0,
    speed: float = 10.0,
    dimensions: tuple = (4.0, 1.8, 1.5),
) -> ParticipantState:
    return ParticipantState(
        id=pid,
        timestamp=t,
        participant_class=cls,
        position=position,
        yaw=yaw,
        yaw_rate=yaw_rate,
        speed=speed,
        dimensions=dimensions,
    )


@pytest.fixture
def anchor() -> GeoAnchor:
    return GeoAnchor(origin_lat=48.78, origin_lon=9.18)


@pytest.fixture
def straight_lane() -> LaneGeometry:
    return LaneGeometry(1, ((0.0, 0.0, 0.0), (500.0, 0.0, 0.0)), 3.5)


@pytest.fixture
def simple_network(anchor, straight_lane) -> RoadNetwork:
    return RoadNetwork(anchor=anchor, lanes={1: straight_lane})
