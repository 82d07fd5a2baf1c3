"""Procedural road cross-sections and pattern-constrained asset placement.

A street segment's cross section is a left-to-right list of parts
(vegetation, road, pedestrian path, markings); road parts derive their
width from lane count times lane width. Assets along a linear span are
sampled by one of three strategies: uniform random, round-robin, or a
small regex-like pattern language:

    A*        as many assets as possible from set A
    A+        at least one, then as many as possible
    A?        zero or one
    (A|B)     exactly one branch
    (A|B)*CA+ concatenation of the above

"as many as possible" is greedy left-to-right filling against a length
budget, while always reserving the minimum width still owed to mandatory
elements further right. A mandatory element that cannot fit is an error,
never a silent truncation.
"""

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence, Union

from taftwin.core.network import RoadNetwork


class InvalidPart(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class BudgetExhausted(RuntimeError):
    pass


# -- cross sections -------------------------------------------------------------


@dataclass(frozen=True)
class SegmentPart:
    """One lateral slice of a street segment."""

    kind: str  # road | vegetation | pedestrian | marking
    width: float = 0.0
    height_offset: float = 0.0
    lane_count: int = 0
    lane_width: float = 0.0

    def __post_init__(self) -> None:
        if self.kind == "road" and self.lane_count > 0:
            derived = self.lane_count * self.lane_width
            if self.width and abs(self.width - derived) > 1e-9:
                raise InvalidPart(
                    f"road part width {self.width} != lane_count * lane_width {derived}"
                )
            object.__setattr__(self, "width", derived)
        if self.width <= 0:
            raise InvalidPart(f"part kind={self.kind} has non-positive width")


@dataclass(frozen=True)
class CrossSection:
    """Lateral intervals per part, cumulative from the left edge."""

    parts: tuple[SegmentPart, ...]
    intervals: tuple[tuple[float, float], ...]

    @property
    def total_width(self) -> float:
        return self.intervals[-1][1] if self.intervals else 0.0


def build_cross_section(parts: Sequence[SegmentPart]) -> CrossSection:
    if not parts:
        raise InvalidPart("cross section needs >= 1 part")
    intervals = []
    offset = 0.0
    for part in parts:
        intervals.append((offset, offset + part.width))
        offset += part.width
    return CrossSection(parts=tuple(parts), intervals=tuple(intervals))


# -- pattern language -----------------------------------------------------------


@dataclass(frozen=True)
class Leaf:
    set_name: str


@dataclass(frozen=True)
class Star:
    child: "Node"


@dataclass(frozen=True)
class Plus:
    child: "Node"


@dataclass(frozen=True)
class Maybe:
    child: "Node"


@dataclass(frozen=True)
class Alt:
    branches: tuple["Node", ...]


@dataclass(frozen=True)
class Concat:
    items: tuple["Node", ...]


Node = Union[Leaf, Star, Plus, Maybe, Alt, Concat]


def parse_pattern(text: str) -> Node:
    """Parse the pattern language.

    Grammar: expr := term+ ; term := atom ('*'|'+'|'?')? ;
    atom := SETNAME | '(' expr ('|' expr)* ')'.
    Set names are single uppercase letters, or arbitrary names in braces:
    ``{fence_low}``.
    """
    pos = 0

    def error(message: str, at: int) -> ParseError:
        return ParseError(message, at)

    def parse_expr(stop: frozenset[str]) -> Node:
        nonlocal pos
        terms = []
        while pos < len(text) and text[pos] not in stop:
            terms.append(parse_term())
        if not terms:
            raise error("empty expression", pos)
        return terms[0] if len(terms) == 1 else Concat(tuple(terms))

    def parse_term() -> Node:
        nonlocal pos
        atom = parse_atom()
        if pos < len(text) and text[pos] in "*+?":
            op = text[pos]
            pos += 1
            return {"*": Star, "+": Plus, "?": Maybe}[op](atom)
        return atom

    def parse_atom() -> Node:
        nonlocal pos
        ch = text[pos]
        if ch == "(":
            open_at = pos
            pos += 1
            if pos >= len(text):
                raise error("unbalanced parenthesis", open_at)
            branches = [parse_expr(frozenset("|)"))]
            while pos < len(text) and text[pos] == "|":
                pos += 1
                branches.append(parse_expr(frozenset("|)")))
            if pos >= len(text) or text[pos] != ")":
                raise error("unbalanced parenthesis", open_at)
            pos += 1
            return branches[0] if len(branches) == 1 else Alt(tuple(branches))
        if ch == "{":
            close = text.find("}", pos)
            if close < 0:
                raise error("unterminated set name", pos)
            name = text[pos + 1 : close]
            if not name:
                raise error("empty set name", pos)
            pos = close + 1
            return Leaf(name)
        if ch.isalpha() and ch.isupper():
            pos += 1
            return Leaf(ch)
        raise error(f"unexpected character {ch!r}", pos)

    if not text:
        raise error("empty pattern", 0)
    node = parse_expr(frozenset(")|"))
    if pos != len(text):
        raise error(f"unexpected character {text[pos]!r}", pos)
    return node


# -- sampling -------------------------------------------------------------------


@dataclass(frozen=True)
class AssetSet:
    """Named set of interchangeable assets with physical widths."""

    name: str
    members: tuple[tuple[str, float], ...]  # (asset_id, width m)

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError(f"asset set {self.name} is empty")
        if any(w <= 0 for _, w in self.members):
            raise ValueError(f"asset set {self.name} has non-positive widths")
        object.__setattr__(self, "members", tuple(tuple(m) for m in self.members))

    @property
    def min_width(self) -> float:
        return min(w for _, w in self.members)


@dataclass(frozen=True)
class Placement:
    asset_id: str
    set_name: str
    width: float
    lateral_start: float


def pattern_leaves(node: Node) -> set[str]:
    if isinstance(node, Leaf):
        return {node.set_name}
    if isinstance(node, (Star, Plus, Maybe)):
        return pattern_leaves(node.child)
    if isinstance(node, Alt):
        return set().union(*(pattern_leaves(b) for b in node.branches))
    return set().union(*(pattern_leaves(i) for i in node.items))


def _min_width(node: Node, sets: dict[str, AssetSet]) -> float:
    if isinstance(node, Leaf):
        return sets[node.set_name].min_width
    if isinstance(node, (Star, Maybe)):
        return 0.0
    if isinstance(node, Plus):
        return _min_width(node.child, sets)
    if isinstance(node, Alt):
        return min(_min_width(b, sets) for b in node.branches)
    return sum(_min_width(i, sets) for i in node.items)


def sample_assets(
    pattern: Node | str,
    sets: dict[str, AssetSet],
    budget: float,
    seed: int,
) -> list[Placement]:
    """Sample an asset sequence accepted by the pattern within the budget.

    Deterministic for a fixed seed. Raises BudgetExhausted if a mandatory
    element (a bare atom or a Plus minimum) cannot fit.
    """
    if budget < 0:
        raise ValueError("budget must be non-negative")
    if isinstance(pattern, str):
        pattern = parse_pattern(pattern)
    missing = pattern_leaves(pattern) - set(sets)
    if missing:
        raise KeyError(f"pattern references unknown asset sets: {sorted(missing)}")
    rng = random.Random(seed)
    emitted: list[tuple[str, str, float]] = []  # (asset_id, set_name, width)
    used = 0.0

    def eligible(set_name: str, reserve: float) -> list[tuple[str, float]]:
        room = budget - used - reserve
        return [m for m in sets[set_name].members if m[1] <= room + 1e-12]

    def emit(set_name: str, reserve: float, mandatory: bool) -> bool:
        nonlocal used
        options = eligible(set_name, reserve)
        if not options:
            if mandatory:
                raise BudgetExhausted(
                    f"mandatory element from set {set_name} does not fit "
                    f"(budget {budget}, used {used:.3f}, reserved {reserve:.3f})"
                )
            return False
        asset_id, width = options[rng.randrange(len(options))]
        emitted.append((asset_id, set_name, width))
        used += width
        return True

    def sample(node: Node, reserve: float) -> None:
        if isinstance(node, Leaf):
            emit(node.set_name, reserve, mandatory=True)
        elif isinstance(node, Star):
            _fill(node.child, reserve)
        elif isinstance(node, Plus):
            sample(node.child, reserve)
            _fill(node.child, reserve)
        elif isinstance(node, Maybe):
            if rng.random() < 0.5:
                _try_one(node.child, reserve)
        elif isinstance(node, Alt):
            fitting = [
                b
                for b in node.branches
                if _min_width(b, sets) <= budget - used - reserve + 1e-12
            ]
            if not fitting:
                raise BudgetExhausted("no alternation branch fits")
            sample(fitting[rng.randrange(len(fitting))], reserve)
        else:  # Concat
            suffix_min = [0.0]
            for item in reversed(node.items):
                suffix_min.append(suffix_min[-1] + _min_width(item, sets))
            suffix_min.reverse()
            for i, item in enumerate(node.items):
                sample(item, reserve + suffix_min[i + 1])

    def _fill(node: Node, reserve: float) -> None:
        """Greedy repetition: emit instances until nothing fits or no progress."""
        while True:
            before = len(emitted)
            if not _try_one(node, reserve) or len(emitted) == before:
                return

    def _try_one(node: Node, reserve: float) -> bool:
        """Optional emission of one instance of an atom; False if it can't fit."""
        if isinstance(node, Leaf):
            return emit(node.set_name, reserve, mandatory=False)
        if isinstance(node, Alt):
            fitting = [
                b
                for b in node.branches
                if _min_width(b, sets) <= budget - used - reserve + 1e-12
            ]
            if not fitting:
                return False
            sample(fitting[rng.randrange(len(fitting))], reserve)
            return True
        # Grammar only puts operators on atoms, so nested groups recurse;
        # roll back partial emission if the group cannot complete.
        nonlocal used
        checkpoint = (len(emitted), used)
        try:
            sample(node, reserve)
            return True
        except BudgetExhausted:
            del emitted[checkpoint[0] :]
            used = checkpoint[1]
            return False

    sample(pattern, 0.0)
    placements = []
    offset = 0.0
    for asset_id, set_name, width in emitted:
        placements.append(
            Placement(asset_id=asset_id, set_name=set_name, width=width, lateral_start=offset)
        )
        offset += width
    return placements


def sample_random(asset_set: AssetSet, budget: float, seed: int) -> list[Placement]:
    """Uniform draws from one set, greedily filled against the budget."""
    rng = random.Random(seed)
    placements = []
    offset = 0.0
    while True:
        options = [m for m in asset_set.members if m[1] <= budget - offset + 1e-12]
        if not options:
            return placements
        asset_id, width = options[rng.randrange(len(options))]
        placements.append(
            Placement(asset_id=asset_id, set_name=asset_set.name, width=width, lateral_start=offset)
        )
        offset += width


def sample_round_robin(asset_set: AssetSet, budget: float) -> list[Placement]:
    """Cyclic member order, greedily filled against the budget."""
    placements = []
    offset = 0.0
    index = 0
    while True:
        asset_id, width = asset_set.members[index % len(asset_set.members)]
        if width > budget - offset + 1e-12:
            return placements
        placements.append(
            Placement(asset_id=asset_id, set_name=asset_set.name, width=width, lateral_start=offset)
        )
        offset += width
        index += 1


# -- scene export ---------------------------------------------------------------


@dataclass(frozen=True)
class AssetRun:
    """A sampled placement run along a lane, offset laterally from it."""

    lane_id: int
    lateral_offset: float
    placements: tuple[Placement, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "placements", tuple(self.placements))


def export_scene(
    network: RoadNetwork,
    runs: Sequence[AssetRun] = (),
    cross_sections: Optional[dict[int, CrossSection]] = None,
) -> str:
    """Deterministic JSON scene description.

    Asset world positions resolve each placement's start arc along its
    lane, pushed sideways by the run's lateral offset (positive = left of
    travel direction). Byte-identical output for identical inputs.
    """
    scene: dict[str, Any] = {
        "anchor": network.anchor.to_dict(),
        "lanes": [
            {
                "id": lane.id,
                "centerline": [list(p) for p in lane.centerline],
                "width": lane.width,
                "lane_kind": lane.lane_kind.value,
            }
            for lane in sorted(network.lanes.values(), key=lambda l: l.id)
        ],
        "cross_sections": [],
        "assets": [],
    }
    for lane_id, section in sorted((cross_sections or {}).items()):
        scene["cross_sections"].append(
            {
                "lane_id": lane_id,
                "total_width": section.total_width,
                "parts": [
                    {
                        "kind": part.kind,
                        "width": part.width,
                        "height_offset": part.height_offset,
                        "interval": list(interval),
                    }
                    for part, interval in zip(section.parts, section.intervals)
                ],
            }
        )
    for run in runs:
        lane = network.lanes[run.lane_id]
        for placement in run.placements:
            point = lane.point_at(placement.lateral_start)
            yaw = lane.tangent_at(placement.lateral_start)
            x = point[0] - math.sin(yaw) * run.lateral_offset
            y = point[1] + math.cos(yaw) * run.lateral_offset
            scene["assets"].append(
                {
                    "asset_id": placement.asset_id,
                    "set_name": placement.set_name,
                    "lane_id": run.lane_id,
                    "arc_start": placement.lateral_start,
                    "width": placement.width,
                    "position": [x, y, point[2]],
                    "yaw": yaw,
                }
            )
    return json.dumps(scene, indent=2, sort_keys=True) + "\n"


def write_scene(path: str | Path, scene_json: str) -> None:
    Path(path).write_text(scene_json, encoding="utf-8")
