"""World model: participant state, road network, geodetic conversions."""

from taftwin.core.geo import mercator_to_wgs84, wgs84_to_mercator, OutOfDomain
from taftwin.core.types import (
    GeoAnchor,
    Junction,
    JunctionConnection,
    LaneGeometry,
    LaneKind,
    ParticipantClass,
    ParticipantState,
    StateSource,
    normalize_yaw,
)
from taftwin.core.network import (
    RoadNetwork,
    ValidationFinding,
    ValidationReport,
    load_network,
    save_network,
    validate_network,
)

__all__ = [
    "GeoAnchor",
    "Junction",
    "JunctionConnection",
    "LaneGeometry",
    "LaneKind",
    "OutOfDomain",
    "ParticipantClass",
    "ParticipantState",
    "RoadNetwork",
    "StateSource",
    "ValidationFinding",
    "ValidationReport",
    "load_network",
    "mercator_to_wgs84",
    "normalize_yaw",
    "save_network",
    "validate_network",
    "wgs84_to_mercator",
]
