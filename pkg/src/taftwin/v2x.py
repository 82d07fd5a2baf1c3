"""V2X layer: CAM/SPaT analogues, misbehavior detection, threat scoring.

Messages are simplified JSON analogues of the ETSI message families; the
security logic, not wire compatibility, is the point. An encoding adapter
can replace the (de)serialization seam without touching the checkers.
"""

import bisect
import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Any, Iterable, Optional, Sequence

from taftwin.core.types import GeoAnchor, ParticipantState

DAMAGE_DOMAINS = ("traffic_efficiency", "safety", "privacy", "authenticity")

DEFAULT_CAM_RATE_HZ = 10.0

# Plausibility rule defaults.
R1_MAX_SPEED = 70.0  # m/s
R2_MAX_ACCEL = 12.0  # m/s^2
R3_SPEED_MARGIN = 5.0  # m/s over the claimed speed
R4_CONFIRM_RADIUS_M = 3.0
R4_MISSING_FRAMES = 10


class RangeError(ValueError):
    pass


@dataclass(frozen=True)
class CamMessage:
    station_id: int
    timestamp: float
    lat: float
    lon: float
    speed: float
    heading: float
    dimensions: tuple[float, float, float] = (4.0, 1.8, 1.5)

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "CAM",
            "station_id": self.station_id,
            "timestamp": self.timestamp,
            "lat": self.lat,
            "lon": self.lon,
            "speed": self.speed,
            "heading": self.heading,
            "dimensions": list(self.dimensions),
        }


@dataclass(frozen=True)
class SpatMessage:
    intersection_id: int
    timestamp: float
    states: dict[int, tuple[str, float]]  # group -> (state, time_to_change s)

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "SPAT",
            "intersection_id": self.intersection_id,
            "timestamp": self.timestamp,
            "states": {str(g): [s, ttc] for g, (s, ttc) in self.states.items()},
        }


class CamEmitter:
    """Rate-limited CAM generation from participant states."""

    def __init__(self, anchor: GeoAnchor, rate_hz: float = DEFAULT_CAM_RATE_HZ):
        if rate_hz <= 0:
            raise ValueError("rate must be positive")
        self.anchor = anchor
        self.min_interval = 1.0 / rate_hz
        self._last_emit: dict[int, float] = {}

    def emit(self, state: ParticipantState) -> Optional[CamMessage]:
        """CAM for one state, or None when inside the rate interval."""
        last = self._last_emit.get(state.id)
        if last is not None and state.timestamp - last < self.min_interval - 1e-12:
            return None
        self._last_emit[state.id] = state.timestamp
        lat, lon = self.anchor.enu_to_wgs84(state.position[0], state.position[1])
        return CamMessage(
            station_id=state.id,
            timestamp=state.timestamp,
            lat=lat,
            lon=lon,
            speed=state.speed,
            heading=state.yaw,
            dimensions=state.dimensions,
        )


def emit_cam(
    state: ParticipantState, anchor: GeoAnchor, emitter: Optional[CamEmitter] = None
) -> Optional[CamMessage]:
    if emitter is None:
        emitter = CamEmitter(anchor)
    return emitter.emit(state)


# -- misbehavior detection ----------------------------------------------------


@dataclass(frozen=True)
class MisbehaviorVerdict:
    station_id: int
    rule_id: str
    severity: str
    evidence: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.evidence:
            raise ValueError("a verdict must cite at least one message")


@dataclass(frozen=True)
class PerceptionSnapshot:
    """Fused perception at one timestamp: object positions in ENU meters."""

    timestamp: float
    points: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class PlausibilityParams:
    max_speed: float = R1_MAX_SPEED
    max_accel: float = R2_MAX_ACCEL
    speed_margin: float = R3_SPEED_MARGIN
    r_confirm: float = R4_CONFIRM_RADIUS_M
    missing_frames: int = R4_MISSING_FRAMES


def plausibility_check(
    messages: Sequence[CamMessage],
    anchor: GeoAnchor,
    perception: Sequence[PerceptionSnapshot] = (),
    params: PlausibilityParams = PlausibilityParams(),
) -> list[MisbehaviorVerdict]:
    """Physical-bounds and perception cross-checks over a CAM stream.

    R1 speed bound, R2 acceleration bound, R3 position-jump bound, R4:
    a station claiming positions unconfirmed by fused perception within
    r_confirm for >= missing_frames consecutive messages is flagged.
    Messages are folded per station in time order.
    """
    by_station: dict[int, list[CamMessage]] = {}
    for msg in messages:
        by_station.setdefault(msg.station_id, []).append(msg)
    perception_sorted = sorted(perception, key=lambda s: s.timestamp)
    perception_times = [s.timestamp for s in perception_sorted]

    verdicts: list[MisbehaviorVerdict] = []
    for station_id, stream in sorted(by_station.items()):
        stream.sort(key=lambda m: m.timestamp)
        prev: Optional[CamMessage] = None
        prev_xy: Optional[tuple[float, float]] = None
        unconfirmed = 0
        r4_refs: list[str] = []
        r4_flagged = False
        for msg in stream:
            ref = f"CAM station={station_id} t={msg.timestamp:.3f}"
            xy = anchor.wgs84_to_enu(msg.lat, msg.lon)
            if abs(msg.speed) > params.max_speed:
                verdicts.append(
                    MisbehaviorVerdict(
                        station_id=station_id,
                        rule_id="R1",
                        severity="high",
                        evidence=(f"{ref} claims |v|={abs(msg.speed):.1f} m/s",),
                    )
                )
            if prev is not None:
                dt = msg.timestamp - prev.timestamp
                if dt > 0:
                    accel = abs(msg.speed - prev.speed) / dt
                    if accel > params.max_accel:
                        verdicts.append(
                            MisbehaviorVerdict(
                                station_id=station_id,
                                rule_id="R2",
                                severity="medium",
                                evidence=(
                                    f"{ref} implies |dv/dt|={accel:.1f} m/s^2",
                                    f"previous t={prev.timestamp:.3f} v={prev.speed:.1f}",
                                ),
                            )
                        )
                    jump = math.hypot(xy[0] - prev_xy[0], xy[1] - prev_xy[1])
                    bound = (max(msg.speed, prev.speed) + params.speed_margin) * dt
                    if jump > bound:
                        verdicts.append(
                            MisbehaviorVerdict(
                                station_id=station_id,
                                rule_id="R3",
                                severity="high",
                                evidence=(
                                    f"{ref} jumped {jump:.1f} m in {dt:.3f} s "
                                    f"(bound {bound:.1f} m)",
                                ),
                            )
                        )
            if perception_sorted:
                snapshot = _nearest_snapshot(
                    perception_sorted, perception_times, msg.timestamp
                )
                confirmed = snapshot is not None and any(
                    math.hypot(px - xy[0], py - xy[1]) <= params.r_confirm
                    for px, py in snapshot.points
                )
                if confirmed:
                    unconfirmed = 0
                    r4_refs.clear()
                else:
                    unconfirmed += 1
                    r4_refs.append(ref)
                    if unconfirmed >= params.missing_frames and not r4_flagged:
                        verdicts.append(
                            MisbehaviorVerdict(
                                station_id=station_id,
                                rule_id="R4",
                                severity="high",
                                evidence=tuple(r4_refs[-params.missing_frames :]),
                            )
                        )
                        r4_flagged = True
            prev = msg
            prev_xy = xy
    return verdicts


def _nearest_snapshot(
    snapshots: Sequence[PerceptionSnapshot],
    times: Sequence[float],
    t: float,
    tolerance: float = 0.5,
) -> Optional[PerceptionSnapshot]:
    """Closest-in-time snapshot via bisection over the sorted timestamps."""
    i = bisect.bisect_left(times, t)
    candidates = [snapshots[j] for j in (i - 1, i) if 0 <= j < len(snapshots)]
    best = min(candidates, key=lambda s: abs(s.timestamp - t), default=None)
    if best is None or abs(best.timestamp - t) > tolerance:
        return None
    return best


# -- threat register -----------------------------------------------------------


@dataclass(frozen=True)
class ThreatEntry:
    id: int
    name: str
    description: str
    likelihood: int
    damage: dict[str, int]
    analysis_only: bool = False

    def __post_init__(self) -> None:
        if not 1 <= self.likelihood <= 5:
            raise RangeError(f"threat {self.id}: likelihood {self.likelihood} not in 1-5")
        for domain in DAMAGE_DOMAINS:
            value = self.damage.get(domain)
            if value is None or not 1 <= value <= 5:
                raise RangeError(f"threat {self.id}: damage[{domain}]={value} not in 1-5")

    @property
    def score(self) -> int:
        return self.likelihood * max(self.damage[d] for d in DAMAGE_DOMAINS)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "name": self.name,
            "description": self.description,
            "likelihood": self.likelihood,
            "damage": dict(self.damage),
            "analysis_only": self.analysis_only,
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ThreatEntry":
        return cls(
            id=int(d["id"]),
            name=str(d["name"]),
            description=str(d.get("description", "")),
            likelihood=int(d["likelihood"]),
            damage={k: int(v) for k, v in d["damage"].items()},
            analysis_only=bool(d.get("analysis_only", False)),
        )


def score_threats(register: Iterable[ThreatEntry]) -> list[ThreatEntry]:
    """Rank by score descending, ties broken by ascending id."""
    entries = list(register)
    return sorted(entries, key=lambda e: (-e.score, e.id))


def load_default_register() -> list[ThreatEntry]:
    raw = resources.files("taftwin").joinpath("data/threats.json").read_text("utf-8")
    return [ThreatEntry.from_dict(d) for d in json.loads(raw)]
