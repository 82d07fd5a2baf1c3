"""Built-in agent models: virtual driver, Euler dynamics, pedestrians.

The driver is stop/go only: it cruises at a per-vehicle set speed and,
when an obstacle scan reports something ahead, blends toward a stop at
``d_stop`` using a closed-form braking envelope:

    a_max = 3 * a_b / 4
    t0    = v_set / a_max
    dx    = v_set * t0 - a_max * t0^2 / 2      (= v_set^2 / (2 a_max))
    v_target = lerp(v_obs * d_stop / norm, v_set, clamp(d_stop / dx, 0, 1))

The interpolation parameter is clamped to [0, 1]; unclamped it would push
v_target above the set speed once the obstacle is beyond the braking
envelope. ``norm`` defaults to 50 m. v_obs is obstacle-minus-ego speed
projected on the ego heading. The pedal is clamp(v_target - v_cur, -1, 1);
position integrates with explicit Euler on the prior-step velocity, and
vehicles never reverse.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from taftwin.core.types import LaneGeometry, ParticipantState

#: Default normalization distance for the obstacle-velocity term, meters.
DEFAULT_LERP_NORM_M = 50.0

#: Default gap kept to an obstacle, meters.
DEFAULT_SAFETY_MARGIN_M = 2.0

#: Default forward scan horizon, meters.
DEFAULT_LOOKAHEAD_M = 100.0


@dataclass(frozen=True)
class DriverParams:
    """Per-vehicle driver parameters; xi is the set-speed draw in [-1, 1]."""

    v_mu: float
    v_sigma: float
    a: float
    a_b: float
    xi: float = 0.0

    def __post_init__(self) -> None:
        if self.a <= 0 or self.a_b <= 0:
            raise ValueError("accelerations must be positive")
        if not (self.v_mu >= self.v_sigma >= 0):
            raise ValueError("need v_mu >= v_sigma >= 0")
        if not -1.0 <= self.xi <= 1.0:
            raise ValueError("xi must lie in [-1, 1]")


@dataclass(frozen=True)
class ObstacleObservation:
    """What the driver sees ahead: stop distance and relative speed."""

    d_stop: float
    v_obs: float

    def __post_init__(self) -> None:
        if self.d_stop < 0:
            raise ValueError("d_stop must be non-negative")


def clamp(value: float, lo: float, hi: float) -> float:
    return max(lo, min(hi, value))


def lerp(a: float, b: float, t: float) -> float:
    return a + (b - a) * t


def draw_set_speed(params: DriverParams) -> float:
    """v_set = v_mu + xi * v_sigma."""
    return params.v_mu + params.xi * params.v_sigma


def braking_envelope(v_set: float, a_b: float) -> float:
    """Distance dx over which the driver blends from cruise to stop."""
    a_max = 3.0 * a_b / 4.0
    t0 = v_set / a_max
    return v_set * t0 - 0.5 * a_max * t0 * t0


def target_velocity(
    v_set: float,
    a_b: float,
    obs: ObstacleObservation,
    lerp_norm_m: float = DEFAULT_LERP_NORM_M,
) -> float:
    """Closed-form target speed for an obstacle at obs.d_stop."""
    if v_set <= 0:
        raise ValueError("v_set must be positive")
    if a_b <= 0:
        raise ValueError("a_b must be positive")
    dx = braking_envelope(v_set, a_b)
    t = clamp(obs.d_stop / dx, 0.0, 1.0)
    v_target = lerp(obs.v_obs * obs.d_stop / lerp_norm_m, v_set, t)
    return clamp(v_target, 0.0, v_set)


def pedal(v_target: float, v_cur: float) -> float:
    """Combined throttle/brake command in [-1, 1]."""
    return clamp(v_target - v_cur, -1.0, 1.0)


@dataclass(frozen=True)
class VehicleKinematics:
    """Lane-bound kinematic state: lane, arc position, speed."""

    lane_id: int
    s: float
    speed: float


def step_speed(speed: float, pedal_value: float, params: DriverParams, dt: float) -> float:
    """One Euler step of the speed; never reverses."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    accel = pedal_value * params.a if pedal_value >= 0 else pedal_value * params.a_b
    return max(0.0, speed + accel * dt)


def step_vehicle(
    state: ParticipantState,
    kin: VehicleKinematics,
    pedal_value: float,
    params: DriverParams,
    dt: float,
    lane: LaneGeometry,
) -> tuple[ParticipantState, VehicleKinematics]:
    """Advance one vehicle one tick along its lane centerline.

    Position advances by the prior-step speed (explicit Euler); yaw follows
    the centerline tangent at the new arc position.
    """
    new_s = kin.s + kin.speed * dt
    new_speed = step_speed(kin.speed, pedal_value, params, dt)
    pos = lane.point_at(new_s)
    yaw = lane.tangent_at(new_s)
    new_state = replace(
        state,
        timestamp=state.timestamp + dt,
        position=pos,
        yaw=yaw,
        yaw_rate=(yaw - state.yaw) / dt,
        speed=new_speed,
    )
    return new_state, VehicleKinematics(lane_id=kin.lane_id, s=new_s, speed=new_speed)


@dataclass(frozen=True)
class CorridorObstacle:
    """An obstacle somewhere ahead on the ego corridor, in arc coordinates."""

    arc_distance: float  # ego reference point to obstacle reference point
    speed_along: float  # obstacle speed projected on ego heading
    length: float = 0.0  # 0 for stop lines
    is_stop_line: bool = False


def obstacle_scan(
    ego_speed: float,
    ego_length: float,
    obstacles: Sequence[CorridorObstacle],
    lookahead_m: float = DEFAULT_LOOKAHEAD_M,
    safety_margin_m: float = DEFAULT_SAFETY_MARGIN_M,
) -> Optional[ObstacleObservation]:
    """Nearest relevant obstacle ahead, as a stop-distance observation.

    Participant distances are center-to-center and shed both half-lengths;
    stop-line distances are measured from the ego front bumper and shed
    only the margin.
    """
    best: Optional[ObstacleObservation] = None
    best_dist = math.inf
    for obstacle in obstacles:
        if obstacle.arc_distance <= 0 or obstacle.arc_distance > lookahead_m:
            continue
        if obstacle.is_stop_line:
            d_stop = obstacle.arc_distance - safety_margin_m
        else:
            d_stop = (
                obstacle.arc_distance
                - ego_length / 2.0
                - obstacle.length / 2.0
                - safety_margin_m
            )
        d_stop = max(0.0, d_stop)
        if obstacle.arc_distance < best_dist:
            best_dist = obstacle.arc_distance
            best = ObstacleObservation(d_stop=d_stop, v_obs=obstacle.speed_along - ego_speed)
    return best


def drive_tick(
    v_set: float,
    speed: float,
    params: DriverParams,
    obs: Optional[ObstacleObservation],
    lerp_norm_m: float = DEFAULT_LERP_NORM_M,
) -> float:
    """One driver decision: pedal from set speed, current speed, obstacle."""
    if obs is None:
        v_target = v_set
    else:
        v_target = target_velocity(v_set, params.a_b, obs, lerp_norm_m)
    return pedal(v_target, speed)


# -- pedestrians ---------------------------------------------------------------


@dataclass(frozen=True)
class PedestrianTrack:
    """Spline (polyline) track with dwell stops and optional looping."""

    waypoints: tuple[tuple[float, float, float], ...]
    walk_speed: float
    looped: bool = False
    stop_points: tuple[tuple[int, float], ...] = ()  # (waypoint index, dwell s)

    def __post_init__(self) -> None:
        if len(self.waypoints) < 2:
            raise ValueError("track needs >= 2 waypoints")
        if self.walk_speed <= 0:
            raise ValueError("walk_speed must be positive")
        object.__setattr__(
            self, "waypoints", tuple(tuple(p) for p in self.waypoints)
        )

    @property
    def length(self) -> float:
        return sum(
            math.dist(a, b) for a, b in zip(self.waypoints, self.waypoints[1:])
        )

    def arc_of_waypoint(self, index: int) -> float:
        arc = 0.0
        for i, (a, b) in enumerate(zip(self.waypoints, self.waypoints[1:])):
            if i >= index:
                break
            arc += math.dist(a, b)
        return arc

    def sample(self, s: float) -> tuple[tuple[float, float, float], float]:
        """Position and heading at arc position s (clamped or wrapped)."""
        length = self.length
        if self.looped:
            s = s % length
        else:
            s = clamp(s, 0.0, length)
        remaining = s
        pairs = list(zip(self.waypoints, self.waypoints[1:]))
        for i, (a, b) in enumerate(pairs):
            seg = math.dist(a, b)
            if remaining <= seg or i == len(pairs) - 1:
                t = remaining / seg if seg > 0 else 0.0
                t = min(t, 1.0)
                pos = tuple(pa + (pb - pa) * t for pa, pb in zip(a, b))
                yaw = math.atan2(b[1] - a[1], b[0] - a[0])
                return pos, yaw
            remaining -= seg
        raise AssertionError("unreachable")


class PedestrianWalker:
    """Mutable walker over a track; owns arc position and dwell countdowns."""

    def __init__(self, track: PedestrianTrack, s: float = 0.0):
        self.track = track
        self.s = s
        self.dwell_left = 0.0
        # Stop arcs still ahead, ascending. Looped tracks re-arm on wrap.
        self._pending = self._stops_after(s)

    def _stops_after(self, s: float) -> list[tuple[float, float]]:
        stops = sorted(
            (self.track.arc_of_waypoint(i), dwell) for i, dwell in self.track.stop_points
        )
        return [(arc, dwell) for arc, dwell in stops if arc > s]

    def step(self, dt: float) -> tuple[tuple[float, float, float], float]:
        """Advance dt seconds; returns (position, yaw)."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        budget = dt
        if self.dwell_left > 0:
            used = min(self.dwell_left, budget)
            self.dwell_left -= used
            budget -= used
        while budget > 1e-12:
            advance = self.track.walk_speed * budget
            if self._pending and self.s + advance >= self._pending[0][0]:
                arc, dwell = self._pending.pop(0)
                walked = arc - self.s
                budget -= walked / self.track.walk_speed
                self.s = arc
                used = min(dwell, budget)
                self.dwell_left = dwell - used
                budget -= used
                if self.dwell_left > 0:
                    break
            else:
                self.s += advance
                budget = 0.0
        if self.track.looped and self.s >= self.track.length:
            self.s -= self.track.length
            self._pending = self._stops_after(self.s)
        return self.track.sample(self.s)


def step_pedestrian(
    track: PedestrianTrack, s: float, dt: float
) -> tuple[tuple[float, float, float], float, float]:
    """Stateless single step (ignores dwell already in progress).

    Returns (position, yaw, new arc position). For dwell accounting across
    ticks use PedestrianWalker.
    """
    walker = PedestrianWalker(track, s=s)
    pos, yaw = walker.step(dt)
    return pos, yaw, walker.s
