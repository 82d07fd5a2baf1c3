"""Shared value types: participants, lanes, junctions, the geo anchor.

Everything here is an immutable record; physics and protocol code build new
values instead of mutating. The local simulation frame is ENU meters on the
Mercator plane, bound to WGS-84 by a GeoAnchor.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any

from taftwin.core.geo import mercator_to_wgs84, wgs84_to_mercator


class ParticipantClass(str, Enum):
    CAR = "car"
    TRUCK = "truck"
    BUS = "bus"
    TRAM = "tram"
    BICYCLE = "bicycle"
    PEDESTRIAN = "pedestrian"
    UNKNOWN = "unknown"


#: Classes counted as vulnerable road users in analytics.
VRU_CLASSES = frozenset({ParticipantClass.PEDESTRIAN, ParticipantClass.BICYCLE})

#: Motorized classes bucketed as "Vehicles" in analytics.
VEHICLE_CLASSES = frozenset(
    {ParticipantClass.CAR, ParticipantClass.TRUCK, ParticipantClass.BUS, ParticipantClass.TRAM}
)


class StateSource(str, Enum):
    SIMULATED = "simulated"
    RECORDED = "recorded"
    EXTERNAL_CLIENT = "external_client"
    V2X = "v2x"
    PERCEPTION = "perception"


class LaneKind(str, Enum):
    ROAD = "road"
    TRAM = "tram"
    PEDESTRIAN = "pedestrian"
    BICYCLE = "bicycle"


def normalize_yaw(yaw: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.fmod(yaw + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class ParticipantState:
    """One traffic participant at one frame; the twin's unit of exchange."""

    id: int
    timestamp: float
    participant_class: ParticipantClass
    position: tuple[float, float, float]
    yaw: float
    yaw_rate: float
    speed: float
    dimensions: tuple[float, float, float]  # length, width, height
    source: StateSource = StateSource.SIMULATED

    def __post_init__(self) -> None:
        if self.id < 0:
            raise ValueError("participant id must be non-negative")
        if self.speed < 0:
            raise ValueError("speed must be non-negative")
        if any(d <= 0 for d in self.dimensions):
            raise ValueError("dimensions must be positive")
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))

    @property
    def length(self) -> float:
        return self.dimensions[0]

    def with_source(self, source: StateSource) -> "ParticipantState":
        return replace(self, source=source)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "timestamp": self.timestamp,
            "class": self.participant_class.value,
            "position": list(self.position),
            "yaw": self.yaw,
            "yaw_rate": self.yaw_rate,
            "speed": self.speed,
            "dimensions": list(self.dimensions),
            "source": self.source.value,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ParticipantState":
        return cls(
            id=int(d["id"]),
            timestamp=float(d["timestamp"]),
            participant_class=ParticipantClass(d["class"]),
            position=tuple(float(v) for v in d["position"]),
            yaw=float(d["yaw"]),
            yaw_rate=float(d["yaw_rate"]),
            speed=float(d["speed"]),
            dimensions=tuple(float(v) for v in d["dimensions"]),
            source=StateSource(d.get("source", "simulated")),
        )


@dataclass(frozen=True)
class LaneGeometry:
    """A lane as a centerline polyline with width and successors."""

    id: int
    centerline: tuple[tuple[float, float, float], ...]
    width: float
    successor_ids: tuple[int, ...] = ()
    lane_kind: LaneKind = LaneKind.ROAD

    def __post_init__(self) -> None:
        if len(self.centerline) < 2:
            raise ValueError(f"lane {self.id}: centerline needs >= 2 points")
        if self.width <= 0:
            raise ValueError(f"lane {self.id}: width must be positive")
        for a, b in zip(self.centerline, self.centerline[1:]):
            if a == b:
                raise ValueError(f"lane {self.id}: consecutive centerline points coincide")
        object.__setattr__(self, "centerline", tuple(tuple(p) for p in self.centerline))

    @property
    def length(self) -> float:
        return sum(
            math.dist(a, b) for a, b in zip(self.centerline, self.centerline[1:])
        )

    def point_at(self, s: float) -> tuple[float, float, float]:
        """Interpolated point at arc position s (clamped to the lane)."""
        return self._interp(s)[0]

    def tangent_at(self, s: float) -> float:
        """Heading (yaw, radians) of the centerline at arc position s."""
        return self._interp(s)[1]

    def _interp(self, s: float) -> tuple[tuple[float, float, float], float]:
        s = max(0.0, min(s, self.length))
        remaining = s
        for a, b in zip(self.centerline, self.centerline[1:]):
            seg = math.dist(a, b)
            if remaining <= seg or (a, b) == (self.centerline[-2], self.centerline[-1]):
                t = remaining / seg if seg > 0 else 0.0
                t = min(t, 1.0)
                point = tuple(pa + (pb - pa) * t for pa, pb in zip(a, b))
                yaw = math.atan2(b[1] - a[1], b[0] - a[0])
                return point, yaw
            remaining -= seg
        raise AssertionError("unreachable")


@dataclass(frozen=True)
class JunctionConnection:
    """Directed link from an incoming lane to an outgoing lane."""

    from_lane: int
    to_lane: int
    curve: tuple[tuple[float, float, float], ...] = ()
    signal_group_id: int | None = None


@dataclass(frozen=True)
class Junction:
    id: int
    connections: tuple[JunctionConnection, ...] = ()


@dataclass(frozen=True)
class GeoAnchor:
    """Binds the local ENU frame to WGS-84 via the Mercator plane.

    ENU (x, y) are offsets on the Mercator plane from the anchor point;
    z is carried through untouched and is not geodetic.
    """

    origin_lat: float
    origin_lon: float
    origin_alt: float = 0.0

    def __post_init__(self) -> None:
        if not abs(self.origin_lat) < 90.0:
            raise ValueError("|origin_lat| must be < 90")
        if not abs(self.origin_lon) <= 180.0:
            raise ValueError("|origin_lon| must be <= 180")

    def _origin_xy(self) -> tuple[float, float]:
        return wgs84_to_mercator(self.origin_lat, self.origin_lon)

    def enu_to_wgs84(self, x: float, y: float) -> tuple[float, float]:
        ox, oy = self._origin_xy()
        return mercator_to_wgs84(ox + x, oy + y)

    def wgs84_to_enu(self, lat: float, lon: float) -> tuple[float, float]:
        ox, oy = self._origin_xy()
        px, py = wgs84_to_mercator(lat, lon)
        return px - ox, py - oy

    def to_dict(self) -> dict[str, float]:
        return {
            "origin_lat": self.origin_lat,
            "origin_lon": self.origin_lon,
            "origin_alt": self.origin_alt,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GeoAnchor":
        return cls(
            origin_lat=float(d["origin_lat"]),
            origin_lon=float(d["origin_lon"]),
            origin_alt=float(d.get("origin_alt", 0.0)),
        )
