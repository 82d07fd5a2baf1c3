"""Frame-locked simulation kernel: internal agents, ownership, tick merge.

The kernel owns all state mutation. Each tick it (1) applies validated
client updates for client-owned participants, (2) steps every internal
agent against the immutable previous frame, (3) advances the signal
controller with detector occupancy and VRU calls, and (4) publishes the
merged participant list as the next frame. Everything is driven by one
seeded RNG, so identical configs and update traces give bit-identical
frame sequences.
"""

import math
import random
from dataclasses import dataclass, field
from typing import Any, Optional

from taftwin.behavior import (
    CorridorObstacle,
    DriverParams,
    PedestrianTrack,
    PedestrianWalker,
    VehicleKinematics,
    draw_set_speed,
    drive_tick,
    obstacle_scan,
    step_speed,
)
from taftwin.config import GhostSpec, ScenarioConfig
from taftwin.core.network import RoadNetwork
from taftwin.core.types import (
    ParticipantClass,
    ParticipantState,
    StateSource,
    normalize_yaw,
)
from taftwin.cosim.protocol import FrameMessage, MessageKind
from taftwin.cosim.recording import RecordedFrame
from taftwin.signals import ControlMode, LostTimeRecord, SignalController

KERNEL_OWNER = "kernel"

#: Upstream reach of a vehicle presence detector at a stop line, meters.
DETECTOR_RANGE_M = 30.0


class NoVictim(RuntimeError):
    pass


@dataclass(frozen=True)
class StaleUpdate:
    client_id: str
    frame_no: int


@dataclass(frozen=True)
class OwnershipViolation:
    client_id: str
    participant_id: int


@dataclass(frozen=True)
class FrameState:
    frame_no: int
    sim_time: float
    participants: tuple[ParticipantState, ...]
    signals: dict[int, str] = field(default_factory=dict)

    def to_message(self) -> FrameMessage:
        return FrameMessage(
            kind=MessageKind.FRAME,
            frame_no=self.frame_no,
            sim_time=self.sim_time,
            payload=self.participants,
            control={"signals": {str(g): s for g, s in self.signals.items()}},
        )

    def to_recorded(self) -> RecordedFrame:
        return RecordedFrame(
            frame_no=self.frame_no,
            sim_time=self.sim_time,
            participants=self.participants,
            signals=dict(self.signals),
        )


@dataclass
class _VehicleAgent:
    pid: int
    route: list[int]
    chain_offsets: dict[int, float]
    route_length: float
    s: float
    speed: float
    v_set: float
    params: DriverParams
    participant_class: ParticipantClass
    dimensions: tuple[float, float, float]
    spawn_time: float

    def lane_at(self, network: RoadNetwork) -> tuple[int, float]:
        """Current (lane id, arc within lane) along the route chain."""
        for lane_id in self.route:
            offset = self.chain_offsets[lane_id]
            length = network.lanes[lane_id].length
            if self.s < offset + length or lane_id == self.route[-1]:
                return lane_id, self.s - offset
        return self.route[-1], self.s - self.chain_offsets[self.route[-1]]


@dataclass
class _PedestrianAgent:
    pid: int
    walker: PedestrianWalker
    gates: list[tuple[float, int]]  # ascending arc, not yet passed
    walk_speed: float
    participant_class: ParticipantClass
    spawn_time: float
    waiting_at_gate: Optional[int] = None  # signal group currently blocking


@dataclass
class _GhostAgent:
    pid: int
    spec: GhostSpec
    s: float  # arc position on spec.lane_id
    victim_pid: int


class SimulationKernel:
    """Master simulation state; one instance per scenario run."""

    def __init__(self, network: RoadNetwork, config: ScenarioConfig):
        self.network = network
        self.config = config
        self.dt = config.dt
        self.rng = random.Random(config.seed)
        self.frame_no = 0
        self.sim_time = 0.0
        self._next_pid = 1

        program = None
        if config.program:
            program = network.signal_programs[config.program]
        elif network.signal_programs:
            program = network.signal_programs[sorted(network.signal_programs)[0]]
        self.controller = (
            SignalController(program, network.signal_groups) if program else None
        )

        # lane id -> signal group controlling its exit stop line
        self._stop_groups: dict[int, int] = {}
        for junction in network.junctions.values():
            for conn in junction.connections:
                if conn.signal_group_id is not None:
                    self._stop_groups.setdefault(conn.from_lane, conn.signal_group_id)

        self._vehicles: dict[int, _VehicleAgent] = {}
        self._pedestrians: dict[int, _PedestrianAgent] = {}
        self._ghost: Optional[_GhostAgent] = None
        self._ghost_pending = config.ghost is not None

        self.ownership: dict[int, str] = {}
        self._external_states: dict[int, ParticipantState] = {}
        self.stale_updates: list[StaleUpdate] = []
        self.ownership_violations: list[OwnershipViolation] = []
        self.lost_time_records: list[LostTimeRecord] = []
        self.spoofed_ids: set[int] = set()

        self._last_frame = FrameState(frame_no=0, sim_time=0.0, participants=())
        self._last_frame = self._publish()

    # -- public API -------------------------------------------------------

    @property
    def last_frame(self) -> FrameState:
        return self._last_frame

    @property
    def ghost_victim_id(self) -> Optional[int]:
        return self._ghost.victim_pid if self._ghost is not None else None

    def agent_speed(self, pid: int) -> Optional[float]:
        agent = self._vehicles.get(pid)
        return agent.speed if agent is not None else None

    def agent_set_speed(self, pid: int) -> Optional[float]:
        agent = self._vehicles.get(pid)
        return agent.v_set if agent is not None else None

    def allocate_id(self) -> int:
        pid = self._next_pid
        self._next_pid += 1
        return pid

    def claim(self, client_id: str, participant_id: int) -> bool:
        """Claim-based ownership: first claimant wins, kernel yields."""
        owner = self.ownership.get(participant_id, KERNEL_OWNER)
        if owner not in (KERNEL_OWNER, client_id):
            return False
        self.ownership[participant_id] = client_id
        return True

    def spawn_external(
        self, client_id: str, state: ParticipantState
    ) -> ParticipantState:
        """Spawn a client-owned participant (fresh id assigned by the kernel)."""
        pid = self.allocate_id()
        state = ParticipantState(
            id=pid,
            timestamp=self.sim_time,
            participant_class=state.participant_class,
            position=state.position,
            yaw=state.yaw,
            yaw_rate=state.yaw_rate,
            speed=state.speed,
            dimensions=state.dimensions,
            source=StateSource.EXTERNAL_CLIENT,
        )
        self.ownership[pid] = client_id
        self._external_states[pid] = state
        return state

    def release(self, client_id: str) -> None:
        """Drop a departed client's ownerships; its objects coast on kernel models."""
        for pid, owner in list(self.ownership.items()):
            if owner == client_id:
                self.ownership[pid] = KERNEL_OWNER

    def tick(self, client_updates: list[FrameMessage] | None = None) -> FrameState:
        """Advance one frame; returns the merged new frame."""
        fresh_external: dict[int, ParticipantState] = {}
        for update in client_updates or []:
            if update.kind is not MessageKind.UPDATE:
                continue
            if update.frame_no != self.frame_no:
                self.stale_updates.append(
                    StaleUpdate(client_id=update.client_id or "?", frame_no=update.frame_no)
                )
                continue
            for state in update.payload:
                owner = self.ownership.get(state.id)
                if owner != update.client_id:
                    self.ownership_violations.append(
                        OwnershipViolation(
                            client_id=update.client_id or "?", participant_id=state.id
                        )
                    )
                    continue
                fresh_external[state.id] = state.with_source(StateSource.EXTERNAL_CLIENT)

        prev = self._last_frame
        next_time = self.sim_time + self.dt

        self._step_signals(prev)
        self._step_ghost(prev)
        self._step_vehicles(prev, next_time)
        self._step_pedestrians(next_time)
        self._spawn(next_time)

        # Externally owned objects: client state wins; otherwise dead-reckon.
        for pid, owner in self.ownership.items():
            if owner == KERNEL_OWNER:
                continue
            if pid in fresh_external:
                state = fresh_external[pid]
            else:
                state = self._external_states.get(pid)
                if state is None:
                    continue
                state = self._dead_reckon(state, next_time)
            self._external_states[pid] = state

        self.frame_no += 1
        self.sim_time = next_time
        self._last_frame = self._publish()
        return self._last_frame

    def run(self, record: bool = True) -> list[RecordedFrame]:
        """Run the whole configured duration with no clients."""
        frames = [self._last_frame.to_recorded()] if record else []
        steps = int(round(self.config.duration / self.dt))
        for _ in range(steps):
            frame = self.tick()
            if record:
                frames.append(frame.to_recorded())
        self._flush_remaining_lost_time()
        return frames

    # -- internals ----------------------------------------------------------

    def _publish(self) -> FrameState:
        participants = []
        for agent in self._vehicles.values():
            participants.append(self._vehicle_state(agent))
        for agent in self._pedestrians.values():
            participants.append(self._pedestrian_state(agent))
        if self._ghost is not None:
            participants.append(self._ghost_state(self._ghost))
        participants.extend(self._external_states.values())
        participants.sort(key=lambda p: p.id)
        signals = {}
        if self.controller is not None:
            for gid in self.network.signal_groups:
                signals[gid] = self.controller.state(gid, self.sim_time)
        return FrameState(
            frame_no=self.frame_no,
            sim_time=self.sim_time,
            participants=tuple(participants),
            signals=signals,
        )

    def _vehicle_state(self, agent: _VehicleAgent) -> ParticipantState:
        lane_id, s = agent.lane_at(self.network)
        lane = self.network.lanes[lane_id]
        pos = lane.point_at(s)
        yaw = lane.tangent_at(s)
        return ParticipantState(
            id=agent.pid,
            timestamp=self.sim_time,
            participant_class=agent.participant_class,
            position=pos,
            yaw=yaw,
            yaw_rate=0.0,
            speed=agent.speed,
            dimensions=agent.dimensions,
            source=StateSource.SIMULATED,
        )

    def _pedestrian_state(self, agent: _PedestrianAgent) -> ParticipantState:
        pos, yaw = agent.walker.track.sample(agent.walker.s)
        speed = 0.0 if agent.waiting_at_gate is not None else agent.walk_speed
        return ParticipantState(
            id=agent.pid,
            timestamp=self.sim_time,
            participant_class=agent.participant_class,
            position=pos,
            yaw=yaw,
            yaw_rate=0.0,
            speed=speed,
            dimensions=(0.5, 0.5, 1.8),
            source=StateSource.SIMULATED,
        )

    def _ghost_state(self, ghost: _GhostAgent) -> ParticipantState:
        lane = self.network.lanes[ghost.spec.lane_id]
        pos = lane.point_at(ghost.s)
        yaw = lane.tangent_at(ghost.s)
        return ParticipantState(
            id=ghost.pid,
            timestamp=self.sim_time,
            participant_class=ParticipantClass.CAR,
            position=pos,
            yaw=yaw,
            yaw_rate=0.0,
            speed=ghost.spec.ghost_speed,
            dimensions=ghost.spec.dimensions,
            source=StateSource.V2X,
        )

    def _dead_reckon(self, state: ParticipantState, next_time: float) -> ParticipantState:
        dx = state.speed * self.dt * math.cos(state.yaw)
        dy = state.speed * self.dt * math.sin(state.yaw)
        return ParticipantState(
            id=state.id,
            timestamp=next_time,
            participant_class=state.participant_class,
            position=(state.position[0] + dx, state.position[1] + dy, state.position[2]),
            yaw=normalize_yaw(state.yaw + state.yaw_rate * self.dt),
            yaw_rate=state.yaw_rate,
            speed=state.speed,
            dimensions=state.dimensions,
            source=state.source,
        )

    # -- signals ------------------------------------------------------------

    def _vru_waiting_groups(self) -> set[int]:
        return {
            agent.waiting_at_gate
            for agent in self._pedestrians.values()
            if agent.waiting_at_gate is not None
        }

    def _step_signals(self, prev: FrameState) -> None:
        if self.controller is None:
            return
        t = self.sim_time
        mode = self.controller.program.mode
        if mode is ControlMode.FIXED:
            return
        vru_waiting = self._vru_waiting_groups()
        # Vehicle detectors: anything within range upstream of a stop line.
        occupancy: dict[int, bool] = {}
        for agent in self._vehicles.values():
            stop = self._next_stop_line(agent)
            if stop is None:
                continue
            stop_arc, group = stop
            if stop_arc - agent.s <= DETECTOR_RANGE_M:
                occupancy[group] = True
        if mode is ControlMode.VRU_OPTIMIZED:
            # Extra vehicle green only while no VRU is waiting.
            if vru_waiting:
                occupancy = {g: o for g, o in occupancy.items() if g in vru_waiting}
            for group in sorted(vru_waiting):
                self.controller.request_vru_green(group, t)
        self.controller.actuated_step(occupancy, t)

    # -- vehicles -----------------------------------------------------------

    def _next_stop_line(self, agent: _VehicleAgent) -> Optional[tuple[float, int]]:
        """Nearest signalized stop line ahead on the route, as (chain arc, group)."""
        front = agent.s + agent.dimensions[0] / 2.0
        for lane_id in agent.route:
            group = self._stop_groups.get(lane_id)
            if group is None:
                continue
            stop_arc = agent.chain_offsets[lane_id] + self.network.lanes[lane_id].length
            if stop_arc > front:
                return stop_arc, group
        return None

    def _corridor_obstacles(
        self,
        agent: _VehicleAgent,
        by_lane: dict[int, list[tuple[int, float, float, float]]],
    ) -> list[CorridorObstacle]:
        """Obstacles ahead of one vehicle, in its route-chain coordinates.

        by_lane maps lane id -> [(pid, arc in lane, speed, length)], built
        from the previous frame so stepping order cannot leak.
        """
        obstacles = []
        lookahead = self.config.behavior.lookahead_m
        for lane_id in agent.route:
            offset = agent.chain_offsets[lane_id]
            for pid, s_in_lane, speed, length in by_lane.get(lane_id, ()):
                if pid == agent.pid:
                    continue
                distance = offset + s_in_lane - agent.s
                if 0 < distance <= lookahead:
                    obstacles.append(
                        CorridorObstacle(
                            arc_distance=distance, speed_along=speed, length=length
                        )
                    )
        stop = self._next_stop_line(agent)
        if stop is not None and self.controller is not None:
            stop_arc, group = stop
            if self.controller.state(group, self.sim_time) == "red":
                front = agent.s + agent.dimensions[0] / 2.0
                distance = stop_arc - front
                if 0 < distance <= lookahead:
                    obstacles.append(
                        CorridorObstacle(
                            arc_distance=distance, speed_along=0.0, is_stop_line=True
                        )
                    )
        return obstacles

    def _step_vehicles(self, prev: FrameState, next_time: float) -> None:
        behavior = self.config.behavior
        # Snapshot prior positions of everything scannable, indexed by lane.
        by_lane: dict[int, list[tuple[int, float, float, float]]] = {}
        for agent in self._vehicles.values():
            lane_id, s = agent.lane_at(self.network)
            by_lane.setdefault(lane_id, []).append(
                (agent.pid, s, agent.speed, agent.dimensions[0])
            )
        ghost = self._ghost
        if ghost is not None and ghost.spec.mode == "perception":
            by_lane.setdefault(ghost.spec.lane_id, []).append(
                (ghost.pid, ghost.s, ghost.spec.ghost_speed, ghost.spec.dimensions[0])
            )
        done = []
        for agent in self._vehicles.values():
            obstacles = self._corridor_obstacles(agent, by_lane)
            obs = obstacle_scan(
                ego_speed=agent.speed,
                ego_length=agent.dimensions[0],
                obstacles=obstacles,
                lookahead_m=behavior.lookahead_m,
                safety_margin_m=behavior.d_margin,
            )
            pedal_value = drive_tick(
                agent.v_set, agent.speed, agent.params, obs, behavior.lerp_norm_m
            )
            agent.s += agent.speed * self.dt
            agent.speed = step_speed(agent.speed, pedal_value, agent.params, self.dt)
            if agent.s >= agent.route_length:
                done.append(agent.pid)
        for pid in done:
            agent = self._vehicles.pop(pid)
            self.lost_time_records.append(
                LostTimeRecord(
                    participant_id=pid,
                    participant_class=agent.participant_class,
                    actual_s=next_time - agent.spawn_time,
                    free_flow_s=agent.route_length / agent.v_set,
                    t_entry=agent.spawn_time,
                )
            )

    # -- pedestrians ----------------------------------------------------------

    def _step_pedestrians(self, next_time: float) -> None:
        done = []
        for agent in self._pedestrians.values():
            walker = agent.walker
            # Gate logic: clamp at the next gate while its group shows red.
            if agent.gates:
                gate_arc, group = agent.gates[0]
                green = self.controller is not None and self.controller.is_green(
                    group, self.sim_time
                )
                at_gate = walker.s >= gate_arc - 1e-9
                if at_gate and not green:
                    agent.waiting_at_gate = group
                    continue
                if not green:
                    # Walk up to the gate, never past it.
                    advance = min(
                        walker.s + agent.walk_speed * self.dt, gate_arc
                    ) - walker.s
                    if advance > 0:
                        walker.step(advance / agent.walk_speed)
                    if walker.s >= gate_arc - 1e-9:
                        agent.waiting_at_gate = group
                    continue
                if at_gate or walker.s + agent.walk_speed * self.dt >= gate_arc:
                    agent.gates.pop(0)
                agent.waiting_at_gate = None
            walker.step(self.dt)
            if not walker.track.looped and walker.s >= walker.track.length - 1e-9:
                done.append(agent.pid)
        for pid in done:
            agent = self._pedestrians.pop(pid)
            self.lost_time_records.append(
                LostTimeRecord(
                    participant_id=pid,
                    participant_class=agent.participant_class,
                    actual_s=next_time - agent.spawn_time,
                    free_flow_s=agent.walker.track.length / agent.walk_speed,
                    t_entry=agent.spawn_time,
                )
            )

    # -- ghost -----------------------------------------------------------------

    def _step_ghost(self, prev: FrameState) -> None:
        spec = self.config.ghost
        if spec is None:
            return
        t = self.sim_time
        if self._ghost is None and self._ghost_pending and t >= spec.start_t:
            if spec.duration == 0:
                self._ghost_pending = False
                return
            victim = self._front_vehicle_on_lane(spec.lane_id)
            if victim is None:
                raise NoVictim(f"no vehicle on lane {spec.lane_id} at t={t:.2f}")
            lane_id, s = victim.lane_at(self.network)
            pid = self.allocate_id()
            self._ghost = _GhostAgent(
                pid=pid, spec=spec, s=s + spec.offset_ahead, victim_pid=victim.pid
            )
            self.spoofed_ids.add(pid)
            self._ghost_pending = False
        elif self._ghost is not None:
            if t >= spec.start_t + spec.duration:
                self._ghost = None
            else:
                self._ghost.s += spec.ghost_speed * self.dt

    def _front_vehicle_on_lane(self, lane_id: int) -> Optional[_VehicleAgent]:
        best = None
        best_s = -math.inf
        for agent in self._vehicles.values():
            cur_lane, s = agent.lane_at(self.network)
            if cur_lane == lane_id and s > best_s:
                best = agent
                best_s = s
        return best

    # -- spawning --------------------------------------------------------------

    def _spawn(self, next_time: float) -> None:
        behavior = self.config.behavior
        for demand in self.config.vehicle_demand:
            if self.rng.random() >= demand.rate_per_s * self.dt:
                continue
            if self._spawn_blocked(demand.lane_id, demand.dimensions[0]):
                continue
            xi = self.rng.uniform(-1.0, 1.0)
            params = DriverParams(
                v_mu=behavior.v_mu,
                v_sigma=behavior.v_sigma,
                a=behavior.a,
                a_b=behavior.a_b,
                xi=xi,
            )
            route, offsets, total = self._build_route(demand.lane_id)
            pid = self.allocate_id()
            self._vehicles[pid] = _VehicleAgent(
                pid=pid,
                route=route,
                chain_offsets=offsets,
                route_length=total,
                s=0.0,
                speed=draw_set_speed(params),
                v_set=draw_set_speed(params),
                params=params,
                participant_class=ParticipantClass(demand.participant_class),
                dimensions=demand.dimensions,
                spawn_time=next_time,
            )
        for demand in self.config.pedestrian_demand:
            if self.rng.random() >= demand.rate_per_s * self.dt:
                continue
            track = PedestrianTrack(
                waypoints=demand.waypoints, walk_speed=demand.walk_speed
            )
            pid = self.allocate_id()
            self._pedestrians[pid] = _PedestrianAgent(
                pid=pid,
                walker=PedestrianWalker(track),
                gates=sorted(demand.signal_gates),
                walk_speed=demand.walk_speed,
                participant_class=ParticipantClass(demand.participant_class),
                spawn_time=next_time,
            )

    def _spawn_blocked(self, lane_id: int, length: float) -> bool:
        for agent in self._vehicles.values():
            if agent.route and agent.route[0] == lane_id and agent.s < length + 6.0:
                return True
        return False

    def _build_route(self, start_lane: int) -> tuple[list[int], dict[int, float], float]:
        route = [start_lane]
        seen = {start_lane}
        lane = self.network.lanes[start_lane]
        while lane.successor_ids:
            candidates = [s for s in lane.successor_ids if s in self.network.lanes]
            if not candidates:
                break
            nxt = candidates[0] if len(candidates) == 1 else self.rng.choice(candidates)
            if nxt in seen:
                break
            route.append(nxt)
            seen.add(nxt)
            lane = self.network.lanes[nxt]
        offsets = {}
        total = 0.0
        for lane_id in route:
            offsets[lane_id] = total
            total += self.network.lanes[lane_id].length
        return route, offsets, total

    # -- analytics ---------------------------------------------------------------

    def _flush_remaining_lost_time(self) -> None:
        """Close out agents still in flight at the end of the run."""
        for agent in self._vehicles.values():
            progressed = min(agent.s, agent.route_length)
            if progressed <= 0:
                continue
            self.lost_time_records.append(
                LostTimeRecord(
                    participant_id=agent.pid,
                    participant_class=agent.participant_class,
                    actual_s=self.sim_time - agent.spawn_time,
                    free_flow_s=progressed / agent.v_set,
                    t_entry=agent.spawn_time,
                )
            )
        for agent in self._pedestrians.values():
            if agent.walker.s <= 0:
                continue
            self.lost_time_records.append(
                LostTimeRecord(
                    participant_id=agent.pid,
                    participant_class=agent.participant_class,
                    actual_s=self.sim_time - agent.spawn_time,
                    free_flow_s=agent.walker.s / agent.walk_speed,
                    t_entry=agent.spawn_time,
                )
            )
        self._vehicles.clear()
        self._pedestrians.clear()


def ghost_metadata(kernel: SimulationKernel) -> dict[str, Any]:
    """Ground-truth attack labels for an attacked run."""
    return {
        "spoofed_ids": sorted(kernel.spoofed_ids),
        "attack": kernel.config.ghost.to_dict() if kernel.config.ghost else None,
    }
