"""Road-network container, JSON serialization, and structural validation.

The on-disk format is a single JSON document with top-level keys
``anchor``, ``lanes``, ``junctions``, ``signal_groups`` and (optionally)
``signal_programs``. Lengths are meters, angles radians.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from taftwin.core.types import (
    GeoAnchor,
    Junction,
    JunctionConnection,
    LaneGeometry,
    LaneKind,
)
from taftwin.signals import SignalGroup, SignalProgram


@dataclass(frozen=True)
class ValidationFinding:
    kind: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[ValidationFinding, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.findings


@dataclass(frozen=True)
class RoadNetwork:
    anchor: GeoAnchor
    lanes: dict[int, LaneGeometry] = field(default_factory=dict)
    junctions: dict[int, Junction] = field(default_factory=dict)
    signal_groups: dict[int, SignalGroup] = field(default_factory=dict)
    signal_programs: dict[str, SignalProgram] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "anchor": self.anchor.to_dict(),
            "lanes": [
                {
                    "id": lane.id,
                    "centerline": [list(p) for p in lane.centerline],
                    "width": lane.width,
                    "successor_ids": list(lane.successor_ids),
                    "lane_kind": lane.lane_kind.value,
                }
                for lane in sorted(self.lanes.values(), key=lambda l: l.id)
            ],
            "junctions": [
                {
                    "id": j.id,
                    "connections": [
                        {
                            "from_lane": c.from_lane,
                            "to_lane": c.to_lane,
                            "curve": [list(p) for p in c.curve],
                            "signal_group_id": c.signal_group_id,
                        }
                        for c in j.connections
                    ],
                }
                for j in sorted(self.junctions.values(), key=lambda j: j.id)
            ],
            "signal_groups": [
                g.to_dict() for g in sorted(self.signal_groups.values(), key=lambda g: g.id)
            ],
            "signal_programs": {
                name: prog.to_dict() for name, prog in sorted(self.signal_programs.items())
            },
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RoadNetwork":
        lanes = {}
        for raw in d.get("lanes", []):
            lane = LaneGeometry(
                id=int(raw["id"]),
                centerline=tuple(tuple(float(v) for v in p) for p in raw["centerline"]),
                width=float(raw["width"]),
                successor_ids=tuple(int(s) for s in raw.get("successor_ids", [])),
                lane_kind=LaneKind(raw.get("lane_kind", "road")),
            )
            lanes[lane.id] = lane
        junctions = {}
        for raw in d.get("junctions", []):
            junction = Junction(
                id=int(raw["id"]),
                connections=tuple(
                    JunctionConnection(
                        from_lane=int(c["from_lane"]),
                        to_lane=int(c["to_lane"]),
                        curve=tuple(tuple(float(v) for v in p) for p in c.get("curve", [])),
                        signal_group_id=(
                            int(c["signal_group_id"])
                            if c.get("signal_group_id") is not None
                            else None
                        ),
                    )
                    for c in raw.get("connections", [])
                ),
            )
            junctions[junction.id] = junction
        groups = {
            int(raw["id"]): SignalGroup.from_dict(raw) for raw in d.get("signal_groups", [])
        }
        programs = {
            name: SignalProgram.from_dict(raw)
            for name, raw in d.get("signal_programs", {}).items()
        }
        return cls(
            anchor=GeoAnchor.from_dict(d["anchor"]),
            lanes=lanes,
            junctions=junctions,
            signal_groups=groups,
            signal_programs=programs,
        )


def load_network(path: str | Path) -> RoadNetwork:
    with open(path, encoding="utf-8") as f:
        return RoadNetwork.from_dict(json.load(f))


def save_network(network: RoadNetwork, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(network.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def validate_network(network: RoadNetwork) -> ValidationReport:
    """Structural checks; returns findings instead of raising."""
    findings: list[ValidationFinding] = []
    for lane in network.lanes.values():
        if lane.length <= 0:
            findings.append(
                ValidationFinding("zero_length_lane", f"lane {lane.id} has zero length")
            )
        for succ in lane.successor_ids:
            if succ not in network.lanes:
                findings.append(
                    ValidationFinding(
                        "dangling_successor",
                        f"lane {lane.id} references missing successor {succ}",
                    )
                )
    for junction in network.junctions.values():
        for conn in junction.connections:
            for lane_id in (conn.from_lane, conn.to_lane):
                if lane_id not in network.lanes:
                    findings.append(
                        ValidationFinding(
                            "missing_junction_lane",
                            f"junction {junction.id} connects missing lane {lane_id}",
                        )
                    )
            if (
                conn.signal_group_id is not None
                and conn.signal_group_id not in network.signal_groups
            ):
                findings.append(
                    ValidationFinding(
                        "missing_signal_group",
                        f"junction {junction.id} references missing signal group "
                        f"{conn.signal_group_id}",
                    )
                )
    return ValidationReport(findings=tuple(findings))
