"""Scenario configuration: demand, behavior parameters, attacks, metadata.

One JSON file per scenario; the CLI overlays flag overrides (seed,
duration, dt, port) on top. Environment metadata (time of day, weather,
season) is recorded into outputs but not physically modeled.
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from taftwin.behavior import (
    DEFAULT_LERP_NORM_M,
    DEFAULT_LOOKAHEAD_M,
    DEFAULT_SAFETY_MARGIN_M,
)


@dataclass(frozen=True)
class BehaviorConfig:
    v_mu: float = 13.9
    v_sigma: float = 1.4
    a: float = 2.5
    a_b: float = 4.0
    d_margin: float = DEFAULT_SAFETY_MARGIN_M
    lookahead_m: float = DEFAULT_LOOKAHEAD_M
    lerp_norm_m: float = DEFAULT_LERP_NORM_M

    def to_dict(self) -> dict[str, float]:
        return {
            "v_mu": self.v_mu,
            "v_sigma": self.v_sigma,
            "a": self.a,
            "a_b": self.a_b,
            "d_margin": self.d_margin,
            "lookahead_m": self.lookahead_m,
            "lerp_norm_m": self.lerp_norm_m,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BehaviorConfig":
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class VehicleDemand:
    """Poisson spawn process at the start of one lane."""

    lane_id: int
    rate_per_s: float
    participant_class: str = "car"
    dimensions: tuple[float, float, float] = (4.0, 1.8, 1.5)

    def __post_init__(self) -> None:
        if self.rate_per_s < 0:
            raise ValueError("spawn rate must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "lane_id": self.lane_id,
            "rate_per_s": self.rate_per_s,
            "class": self.participant_class,
            "dimensions": list(self.dimensions),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "VehicleDemand":
        return cls(
            lane_id=int(d["lane_id"]),
            rate_per_s=float(d["rate_per_s"]),
            participant_class=d.get("class", "car"),
            dimensions=tuple(float(v) for v in d.get("dimensions", (4.0, 1.8, 1.5))),
        )


@dataclass(frozen=True)
class PedestrianDemand:
    """Poisson spawn process on a walking track with optional signal gates.

    A gate is (arc position, signal group id): the walker waits there until
    the group shows green, registering a VRU call while waiting.
    """

    name: str
    waypoints: tuple[tuple[float, float, float], ...]
    rate_per_s: float
    walk_speed: float = 1.2
    signal_gates: tuple[tuple[float, int], ...] = ()
    participant_class: str = "pedestrian"

    def __post_init__(self) -> None:
        if self.rate_per_s < 0:
            raise ValueError("spawn rate must be non-negative")
        if self.walk_speed <= 0:
            raise ValueError("walk_speed must be positive")

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "waypoints": [list(p) for p in self.waypoints],
            "rate_per_s": self.rate_per_s,
            "walk_speed": self.walk_speed,
            "signal_gates": [list(g) for g in self.signal_gates],
            "class": self.participant_class,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PedestrianDemand":
        return cls(
            name=d["name"],
            waypoints=tuple(tuple(float(v) for v in p) for p in d["waypoints"]),
            rate_per_s=float(d["rate_per_s"]),
            walk_speed=float(d.get("walk_speed", 1.2)),
            signal_gates=tuple((float(a), int(g)) for a, g in d.get("signal_gates", [])),
            participant_class=d.get("class", "pedestrian"),
        )


@dataclass(frozen=True)
class GhostSpec:
    """False-data-injection attack: a spoofed vehicle ahead of a victim."""

    lane_id: int
    offset_ahead: float
    ghost_speed: float
    start_t: float
    duration: float
    mode: str = "perception"  # "perception" or "v2x"
    dimensions: tuple[float, float, float] = (4.0, 1.8, 1.5)

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise ValueError("duration must be non-negative")
        if self.mode not in ("perception", "v2x"):
            raise ValueError("mode must be 'perception' or 'v2x'")

    def to_dict(self) -> dict[str, Any]:
        return {
            "lane_id": self.lane_id,
            "offset_ahead": self.offset_ahead,
            "ghost_speed": self.ghost_speed,
            "start_t": self.start_t,
            "duration": self.duration,
            "mode": self.mode,
            "dimensions": list(self.dimensions),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GhostSpec":
        return cls(
            lane_id=int(d["lane_id"]),
            offset_ahead=float(d["offset_ahead"]),
            ghost_speed=float(d["ghost_speed"]),
            start_t=float(d["start_t"]),
            duration=float(d["duration"]),
            mode=d.get("mode", "perception"),
            dimensions=tuple(float(v) for v in d.get("dimensions", (4.0, 1.8, 1.5))),
        )


@dataclass(frozen=True)
class ScenarioConfig:
    network_path: str
    duration: float
    dt: float = 0.05
    seed: int = 0
    program: str | None = None
    behavior: BehaviorConfig = field(default_factory=BehaviorConfig)
    vehicle_demand: tuple[VehicleDemand, ...] = ()
    pedestrian_demand: tuple[PedestrianDemand, ...] = ()
    ghost: GhostSpec | None = None
    environment: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    def to_dict(self) -> dict[str, Any]:
        return {
            "network_path": self.network_path,
            "duration": self.duration,
            "dt": self.dt,
            "seed": self.seed,
            "program": self.program,
            "behavior": self.behavior.to_dict(),
            "vehicle_demand": [d.to_dict() for d in self.vehicle_demand],
            "pedestrian_demand": [d.to_dict() for d in self.pedestrian_demand],
            "ghost": self.ghost.to_dict() if self.ghost else None,
            "environment": self.environment,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ScenarioConfig":
        return cls(
            network_path=d["network_path"],
            duration=float(d["duration"]),
            dt=float(d.get("dt", 0.05)),
            seed=int(d.get("seed", 0)),
            program=d.get("program"),
            behavior=BehaviorConfig.from_dict(d.get("behavior", {})),
            vehicle_demand=tuple(VehicleDemand.from_dict(v) for v in d.get("vehicle_demand", [])),
            pedestrian_demand=tuple(
                PedestrianDemand.from_dict(p) for p in d.get("pedestrian_demand", [])
            ),
            ghost=GhostSpec.from_dict(d["ghost"]) if d.get("ghost") else None,
            environment=d.get("environment", {}),
        )

    def with_overrides(self, **kwargs: Any) -> "ScenarioConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


def load_config(path: str | Path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as f:
        config = ScenarioConfig.from_dict(json.load(f))
    # Relative network paths resolve against the config file location;
    # ":name:" entries refer to builtin networks and pass through.
    net = Path(config.network_path)
    if not config.network_path.startswith(":") and not net.is_absolute():
        config = replace(config, network_path=str((Path(path).parent / net).resolve()))
    return config


def save_config(config: ScenarioConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
