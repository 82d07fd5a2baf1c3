"""Traffic-signal control and lost-time analytics.

Signal groups carry a symmetric conflict relation; a program assigns each
group green intervals inside a common cycle. Three controller modes:

* ``fixed``: the program's intervals verbatim.
* ``actuated``: a green whose detector is still occupied near its end is
  extended by ``gap_time``, up to ``max_green``, never into a conflicting
  group's intergreen window.
* ``vru_optimized``: actuated, plus progressive-crossing offsets and a
  priority rule that pulls a called VRU green to the earliest feasible
  point in the cycle instead of its fixed slot.

Amber and red-amber are folded into the intergreen times; agents only ever
see red or green.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Sequence

from taftwin.core.types import (
    VEHICLE_CLASSES,
    VRU_CLASSES,
    ParticipantClass,
)


class UnknownGroup(KeyError):
    pass


class DegenerateTrajectory(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class ControlMode(str, Enum):
    FIXED = "fixed"
    ACTUATED = "actuated"
    VRU_OPTIMIZED = "vru_optimized"


@dataclass(frozen=True)
class SignalGroup:
    """A set of signal heads switched together."""

    id: int
    connections: tuple[tuple[int, int], ...] = ()
    conflicts: frozenset[int] = frozenset()
    is_vru: bool = False

    def __post_init__(self) -> None:
        if self.id in self.conflicts:
            raise ValueError(f"signal group {self.id} conflicts with itself")
        object.__setattr__(self, "conflicts", frozenset(self.conflicts))
        object.__setattr__(
            self, "connections", tuple(tuple(c) for c in self.connections)
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "connections": [list(c) for c in self.connections],
            "conflicts": sorted(self.conflicts),
            "is_vru": self.is_vru,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SignalGroup":
        return cls(
            id=int(d["id"]),
            connections=tuple((int(a), int(b)) for a, b in d.get("connections", [])),
            conflicts=frozenset(int(g) for g in d.get("conflicts", [])),
            is_vru=bool(d.get("is_vru", False)),
        )


@dataclass(frozen=True)
class SignalProgram:
    """Green intervals per group inside one cycle, plus actuation limits."""

    cycle: float
    greens: dict[int, tuple[tuple[float, float], ...]]
    min_green: float = 5.0
    intergreen: dict[tuple[int, int], float] = field(default_factory=dict)
    mode: ControlMode = ControlMode.FIXED
    gap_time: float = 3.0
    max_green: float = 60.0
    min_greens: dict[int, float] = field(default_factory=dict)  # per-group override

    def __post_init__(self) -> None:
        if self.cycle <= 0:
            raise ValueError("cycle must be positive")
        for gid, ivals in self.greens.items():
            for start, end in ivals:
                if not (0 <= start < end <= self.cycle):
                    raise ValueError(
                        f"group {gid}: interval [{start}, {end}) outside [0, {self.cycle})"
                    )
                if end - start < self.min_green_for(gid):
                    raise ValueError(
                        f"group {gid}: green shorter than min_green {self.min_green_for(gid)}"
                    )

    def min_green_for(self, gid: int) -> float:
        return self.min_greens.get(gid, self.min_green)

    def intergreen_s(self, a: int, b: int) -> float:
        return self.intergreen.get((a, b), self.intergreen.get((b, a), 0.0))

    def check_conflicts(self, groups: dict[int, SignalGroup]) -> None:
        """Raise if any two conflicting greens are closer than intergreen."""
        for gid, ivals in self.greens.items():
            group = groups.get(gid)
            if group is None:
                continue
            for other in group.conflicts:
                for s1, e1 in ivals:
                    for s2, e2 in self.greens.get(other, ()):
                        if not _separated(s1, e1, s2, e2, self.intergreen_s(gid, other), self.cycle):
                            raise ValueError(
                                f"groups {gid} and {other} violate intergreen separation"
                            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "cycle": self.cycle,
            "greens": {str(g): [list(iv) for iv in ivals] for g, ivals in self.greens.items()},
            "min_green": self.min_green,
            "intergreen": [[a, b, v] for (a, b), v in sorted(self.intergreen.items())],
            "mode": self.mode.value,
            "gap_time": self.gap_time,
            "max_green": self.max_green,
            "min_greens": {str(g): v for g, v in sorted(self.min_greens.items())},
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SignalProgram":
        return cls(
            cycle=float(d["cycle"]),
            greens={
                int(g): tuple((float(s), float(e)) for s, e in ivals)
                for g, ivals in d["greens"].items()
            },
            min_green=float(d.get("min_green", 5.0)),
            intergreen={
                (int(a), int(b)): float(v) for a, b, v in d.get("intergreen", [])
            },
            mode=ControlMode(d.get("mode", "fixed")),
            gap_time=float(d.get("gap_time", 3.0)),
            max_green=float(d.get("max_green", 60.0)),
            min_greens={int(g): float(v) for g, v in d.get("min_greens", {}).items()},
        )


def _separated(s1: float, e1: float, s2: float, e2: float, gap: float, cycle: float) -> bool:
    """True if two cyclic intervals keep >= gap seconds between green phases."""
    # Compare over adjacent cycle images so wrap-around gaps are measured.
    for shift in (-cycle, 0.0, cycle):
        a1, b1 = s1 + shift, e1 + shift
        if not (b1 + gap <= s2 or e2 + gap <= a1):
            return False
    return True


def progressive_crossing_offset(island_distance: float, walk_speed: float) -> float:
    """Green-onset shift between two consecutive crossings over an island."""
    if island_distance <= 0:
        raise ValueError("island_distance must be positive")
    if walk_speed <= 0:
        raise ValueError("walk_speed must be positive")
    return island_distance / walk_speed


def apply_progressive_offset(
    program: SignalProgram, first_group: int, second_group: int, offset: float
) -> SignalProgram:
    """Shift the second crossing's greens by ``offset`` after the first's.

    The shifted greens keep the first crossing's durations, so a pedestrian
    entering anywhere in the first green reaches the island inside the
    second green.
    """
    firsts = program.greens.get(first_group)
    if not firsts:
        raise UnknownGroup(first_group)
    shifted = []
    for s, e in firsts:
        if e + offset > program.cycle:
            raise ValueError("offset pushes the crossing green past the cycle end")
        shifted.append((s + offset, e + offset))
    shifted = tuple(shifted)
    greens = dict(program.greens)
    greens[second_group] = shifted
    return replace(program, greens=greens)


class SignalController:
    """Runs a program over simulation time with optional actuation.

    Owns the realized green intervals of the current cycle; all dynamic
    changes (gap extension, VRU priority pulls) pass a feasibility check
    against min-green, max-green and intergreen before being applied.
    """

    def __init__(self, program: SignalProgram, groups: dict[int, SignalGroup]):
        program.check_conflicts(groups)
        self.program = program
        self.groups = dict(groups)
        self._cycle_index: int | None = None
        # group id -> list of [start, end) in absolute seconds, current cycle
        self._realized: dict[int, list[list[float]]] = {}
        self._history: list[tuple[int, float, float]] = []  # (group, start, end)

    # -- cycle bookkeeping -------------------------------------------------

    def _ensure_cycle(self, t: float) -> None:
        idx = int(math.floor(t / self.program.cycle))
        if idx != self._cycle_index:
            self._flush_history()
            base = idx * self.program.cycle
            self._cycle_index = idx
            self._realized = {
                gid: [[base + s, base + e] for s, e in ivals]
                for gid, ivals in self.program.greens.items()
            }

    def _flush_history(self) -> None:
        for gid, ivals in self._realized.items():
            for s, e in ivals:
                self._history.append((gid, s, e))

    def realized_history(self) -> list[tuple[int, float, float]]:
        """All realized greens so far, including the current cycle."""
        out = list(self._history)
        for gid, ivals in self._realized.items():
            for s, e in ivals:
                out.append((gid, s, e))
        return out

    # -- queries -------------------------------------------------------------

    def state(self, group: int, t: float) -> str:
        """'green' or 'red' for a group at absolute time t."""
        if group not in self.program.greens and group not in self.groups:
            raise UnknownGroup(group)
        self._ensure_cycle(t)
        for s, e in self._realized.get(group, ()):
            if s <= t < e:
                return "green"
        return "red"

    def is_green(self, group: int, t: float) -> bool:
        return self.state(group, t) == "green"

    # -- feasibility ---------------------------------------------------------

    def _conflict_windows(self, group: int, lo: float, hi: float) -> list[tuple[float, float, float]]:
        """Conflicting greens (start, end, required gap) overlapping [lo, hi]."""
        conf = self.groups[group].conflicts if group in self.groups else frozenset()
        cycle = self.program.cycle
        base = (self._cycle_index or 0) * cycle
        out = []
        for other in conf:
            gap = self.program.intergreen_s(group, other)
            for s, e in self._realized.get(other, ()):
                out.append((s, e, gap))
            # Project the next cycle from the static program.
            for s, e in self.program.greens.get(other, ()):
                out.append((base + cycle + s, base + cycle + e, gap))
        return [(s, e, g) for s, e, g in out if e + g > lo and s - g < hi]

    def _feasible(self, group: int, start: float, end: float) -> bool:
        for s, e, gap in self._conflict_windows(group, start - 1.0, end + 1.0):
            if not (end + gap <= s or e + gap <= start):
                return False
        return True

    # -- actuation -----------------------------------------------------------

    def actuated_step(self, detector_occupancy: dict[int, bool], t: float) -> None:
        """Gap-extension rule: an occupied green holds until t + gap_time."""
        if self.program.mode is ControlMode.FIXED:
            return
        self._ensure_cycle(t)
        for gid, occupied in detector_occupancy.items():
            if not occupied:
                continue
            for ival in self._realized.get(gid, ()):
                start, end = ival
                new_end = t + self.program.gap_time
                if not (start <= t < end and new_end > end):
                    continue
                if new_end - start > self.program.max_green:
                    continue
                if not self._feasible(gid, start, new_end):
                    continue
                ival[1] = new_end

    def request_vru_green(self, group: int, t: float) -> float | None:
        """VRU priority: serve a call with the earliest feasible green >= t.

        Only active in vru_optimized mode. The upcoming scheduled green is
        pulled forward when possible; conflicting greens that are currently
        running are truncated no earlier than their min-green. When this
        cycle's scheduled greens are already spent, an extra green interval
        is inserted if it still clears the next cycle's conflicts. Returns
        the realized start of the serving green, or None if the call can
        only be served next cycle.
        """
        if self.program.mode is not ControlMode.VRU_OPTIMIZED:
            return None
        if group not in self.program.greens:
            raise UnknownGroup(group)
        self._ensure_cycle(t)
        ivals = self._realized.setdefault(group, [])
        for s, e in ivals:
            if s <= t < e:  # already green
                return s
        # Earliest start clear of conflicting greens at or before t;
        # running ones are truncated down to (at most) their min-green.
        earliest = t
        for other in self.groups[group].conflicts if group in self.groups else ():
            gap = self.program.intergreen_s(group, other)
            min_green = self.program.min_green_for(other)
            for ival in self._realized.get(other, ()):
                os_, oe = ival
                if os_ <= t < oe:
                    cut = max(os_ + min_green, t)
                    if cut < oe:
                        ival[1] = cut
                    earliest = max(earliest, ival[1] + gap)
                elif oe <= t:
                    earliest = max(earliest, oe + gap)
        future = [iv for iv in ivals if iv[0] > t]
        if future:
            nxt = min(future, key=lambda iv: iv[0])
            start, end = nxt
            duration = end - start
            new_start = earliest
            while new_start < start:
                if self._feasible(group, new_start, new_start + duration):
                    nxt[0] = new_start
                    nxt[1] = new_start + duration
                    return new_start
                new_start += 0.5
            return start
        # Scheduled greens spent: insert an extra one if it fits the cycle.
        duration = min(e - s for s, e in self.program.greens[group])
        cycle_end = ((self._cycle_index or 0) + 1) * self.program.cycle
        new_start = earliest
        while new_start + duration <= cycle_end:
            if self._feasible(group, new_start, new_start + duration):
                ivals.append([new_start, new_start + duration])
                return new_start
            new_start += 0.5
        return None


# -- lost-time analytics -----------------------------------------------------


@dataclass(frozen=True)
class LostTimeRecord:
    participant_id: int
    participant_class: ParticipantClass
    actual_s: float
    free_flow_s: float
    t_entry: float = math.nan

    @property
    def t_exit(self) -> float:
        return self.t_entry + self.actual_s

    @property
    def lost_s(self) -> float:
        return max(0.0, self.actual_s - self.free_flow_s)


def lost_time(
    trajectory: Sequence[tuple[float, float]],
    free_flow_speed: float,
    participant_id: int = 0,
    participant_class: ParticipantClass = ParticipantClass.CAR,
) -> LostTimeRecord:
    """Delay of one time-stamped arc trajectory versus free flow.

    ``trajectory`` is (time, arc position) samples, monotone in time.
    """
    if len(trajectory) < 2:
        raise DegenerateTrajectory("need >= 2 trajectory samples")
    times = [t for t, _ in trajectory]
    if any(b < a for a, b in zip(times, times[1:])):
        raise DegenerateTrajectory("trajectory not monotone in time")
    if free_flow_speed <= 0:
        raise ValueError("free_flow_speed must be positive")
    actual = trajectory[-1][0] - trajectory[0][0]
    arc = trajectory[-1][1] - trajectory[0][1]
    return LostTimeRecord(
        participant_id=participant_id,
        participant_class=participant_class,
        actual_s=actual,
        free_flow_s=arc / free_flow_speed,
        t_entry=trajectory[0][0],
    )


def aggregate_lost_time(records: Iterable[LostTimeRecord]) -> dict[str, dict[str, float]]:
    """Per-bucket {avg, max, min, count} over VRU, Vehicles, and All."""
    records = list(records)
    if not records:
        raise EmptyInput("no lost-time records")
    buckets: dict[str, list[float]] = {"VRU": [], "Vehicles": [], "All": []}
    for rec in records:
        buckets["All"].append(rec.lost_s)
        if rec.participant_class in VRU_CLASSES:
            buckets["VRU"].append(rec.lost_s)
        elif rec.participant_class in VEHICLE_CLASSES:
            buckets["Vehicles"].append(rec.lost_s)
    out: dict[str, dict[str, float]] = {}
    for name, values in buckets.items():
        if values:
            out[name] = {
                "avg": sum(values) / len(values),
                "max": max(values),
                "min": min(values),
                "count": float(len(values)),
            }
        else:
            out[name] = {"avg": math.nan, "max": math.nan, "min": math.nan, "count": 0.0}
    return out


#: Column order of the lost-time CSV export.
LOST_TIME_COLUMNS = ("id", "class", "t_entry", "t_exit", "free_flow_s", "lost_s")


def lost_time_csv(records: Iterable[LostTimeRecord]) -> str:
    """Render lost-time records as a CSV string (columns LOST_TIME_COLUMNS)."""
    lines = [",".join(LOST_TIME_COLUMNS)]
    for rec in sorted(records, key=lambda r: (r.t_entry, r.participant_id)):
        lines.append(
            f"{rec.participant_id},{rec.participant_class.value},"
            f"{rec.t_entry:.3f},{rec.t_exit:.3f},{rec.free_flow_s:.3f},{rec.lost_s:.3f}"
        )
    return "\n".join(lines) + "\n"
