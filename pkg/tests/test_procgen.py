"""Cross-section, pattern language, and asset-sampling tests."""

import json
import random
import re

import pytest

from taftwin.procgen import (
    Alt,
    AssetRun,
    AssetSet,
    BudgetExhausted,
    Concat,
    InvalidPart,
    Leaf,
    ParseError,
    Plus,
    SegmentPart,
    Star,
    build_cross_section,
    export_scene,
    parse_pattern,
    sample_assets,
    sample_random,
    sample_round_robin,
)


class TestCrossSection:
    def test_three_part_intervals(self):
        section = build_cross_section(
            [
                SegmentPart(kind="vegetation", width=2.0),
                SegmentPart(kind="road", lane_count=2, lane_width=3.5),
                SegmentPart(kind="pedestrian", width=2.0),
            ]
        )
        assert section.intervals == ((0.0, 2.0), (2.0, 9.0), (9.0, 11.0))
        assert section.total_width == pytest.approx(11.0)

    def test_single_road_part(self):
        section = build_cross_section(
            [SegmentPart(kind="road", lane_count=1, lane_width=3.0)]
        )
        assert section.intervals == ((0.0, 3.0),)

    def test_zero_width_rejected(self):
        with pytest.raises(InvalidPart):
            SegmentPart(kind="marking", width=0.0)

    def test_road_width_must_match_lane_product(self):
        with pytest.raises(InvalidPart):
            SegmentPart(kind="road", width=5.0, lane_count=2, lane_width=3.5)

    def test_empty_section_rejected(self):
        with pytest.raises(InvalidPart):
            build_cross_section([])


class TestParsePattern:
    def test_star(self):
        assert parse_pattern("A*") == Star(Leaf("A"))

    def test_concatenation_example(self):
        node = parse_pattern("(A|B)*CA+")
        assert node == Concat(
            (Star(Alt((Leaf("A"), Leaf("B")))), Leaf("C"), Plus(Leaf("A")))
        )

    def test_unbalanced_paren_offset(self):
        with pytest.raises(ParseError) as exc:
            parse_pattern("A(")
        assert exc.value.offset == 1

    def test_braced_names(self):
        assert parse_pattern("{fence_low}+") == Plus(Leaf("fence_low"))

    def test_empty_pattern(self):
        with pytest.raises(ParseError):
            parse_pattern("")

    def test_trailing_garbage(self):
        with pytest.raises(ParseError):
            parse_pattern("A)")


SETS = {
    "A": AssetSet("A", (("a1", 3.0),)),
    "B": AssetSet("B", (("b1", 2.0),)),
    "C": AssetSet("C", (("c1", 1.0),)),
}


class TestSampleAssets:
    def test_greedy_star_fill(self):
        placements = sample_assets("A*", SETS, budget=10.0, seed=1)
        assert [(p.asset_id, p.lateral_start) for p in placements] == [
            ("a1", 0.0),
            ("a1", 3.0),
            ("a1", 6.0),
        ]

    def test_plus_minimum_must_fit(self):
        with pytest.raises(BudgetExhausted):
            sample_assets("A+", SETS, budget=2.0, seed=1)

    def test_alternation_single_draw(self):
        placements = sample_assets("(A|B)", SETS, budget=10.0, seed=5)
        assert len(placements) == 1
        assert placements[0].set_name in ("A", "B")

    def test_mandatory_atom_overflow_is_error(self):
        with pytest.raises(BudgetExhausted):
            sample_assets("AA", SETS, budget=5.0, seed=0)

    def test_concat_reserves_for_mandatory_suffix(self):
        # A* must leave room for the trailing C (1 m) in a 10 m budget.
        placements = sample_assets("A*C", SETS, budget=10.0, seed=2)
        assert [p.set_name for p in placements] == ["A", "A", "A", "C"]
        assert sum(p.width for p in placements) <= 10.0

    def test_seed_determinism(self):
        a = sample_assets("(A|B)*C", SETS, budget=20.0, seed=7)
        b = sample_assets("(A|B)*C", SETS, budget=20.0, seed=7)
        assert a == b

    def test_unknown_set_rejected(self):
        with pytest.raises(KeyError):
            sample_assets("Z*", SETS, budget=5.0, seed=0)


def random_pattern(rng: random.Random, depth: int = 0) -> str:
    """Random well-formed pattern of depth <= 3 over sets A, B, C."""
    ops = ["", "*", "+", "?"]
    if depth >= 3 or rng.random() < 0.5:
        return rng.choice("ABC") + rng.choice(ops)
    kind = rng.randrange(3)
    if kind == 0:  # alternation group
        branches = [random_pattern(rng, depth + 1) for _ in range(rng.randint(2, 3))]
        return "(" + "|".join(branches) + ")" + rng.choice(ops)
    if kind == 1:  # concatenation
        return "".join(random_pattern(rng, depth + 1) for _ in range(rng.randint(2, 3)))
    return rng.choice("ABC") + rng.choice(ops)


class TestGrammarConformance:
    def test_emissions_accepted_by_independent_matcher(self):
        # The pattern text over single-letter sets is itself a valid
        # regular expression; re.fullmatch is the independent oracle.
        rng = random.Random(2024)
        checked = 0
        while checked < 1000:
            pattern = random_pattern(rng)
            seed = rng.randrange(2**31)
            budget = rng.uniform(0.0, 25.0)
            try:
                placements = sample_assets(pattern, SETS, budget, seed)
            except BudgetExhausted:
                continue
            emission = "".join(p.set_name for p in placements)
            assert re.fullmatch(pattern, emission), (pattern, emission, seed)
            assert sum(p.width for p in placements) <= budget + 1e-9
            checked += 1

    def test_plus_emits_at_least_one_or_errors(self):
        rng = random.Random(99)
        for _ in range(200):
            budget = rng.uniform(0.0, 10.0)
            try:
                placements = sample_assets("A+", SETS, budget, rng.randrange(2**31))
            except BudgetExhausted:
                assert budget < 3.0
            else:
                assert len(placements) >= 1


class TestOtherStrategies:
    def test_round_robin_cyclic_order(self):
        asset_set = AssetSet("M", (("m1", 2.0), ("m2", 3.0)))
        placements = sample_round_robin(asset_set, budget=12.0)
        assert [p.asset_id for p in placements] == ["m1", "m2", "m1", "m2", "m1"]
        assert sum(p.width for p in placements) <= 12.0

    def test_random_strategy_budget_safe_and_deterministic(self):
        asset_set = AssetSet("M", (("m1", 2.0), ("m2", 3.0)))
        a = sample_random(asset_set, budget=17.0, seed=3)
        b = sample_random(asset_set, budget=17.0, seed=3)
        assert a == b
        assert sum(p.width for p in a) <= 17.0


class TestExportScene:
    def test_lanes_only(self, simple_network):
        scene = json.loads(export_scene(simple_network))
        assert scene["assets"] == []
        assert len(scene["lanes"]) == 1

    def test_deterministic_bytes(self, simple_network):
        runs = [
            AssetRun(
                lane_id=1,
                lateral_offset=2.0,
                placements=tuple(sample_assets("A*", SETS, 12.0, seed=4)),
            )
        ]
        assert export_scene(simple_network, runs) == export_scene(
            simple_network, runs
        )

    def test_single_placement_world_position(self, simple_network):
        runs = [
            AssetRun(
                lane_id=1,
                lateral_offset=2.0,
                placements=(
                    sample_assets("A", SETS, 10.0, seed=0)[0],
                ),
            )
        ]
        scene = json.loads(export_scene(simple_network, runs))
        assert len(scene["assets"]) == 1
        asset = scene["assets"][0]
        # East-bound lane: lateral offset +2 pushes the asset north (+y).
        assert asset["position"] == pytest.approx([0.0, 2.0, 0.0])
        assert asset["yaw"] == pytest.approx(0.0)

    def test_cross_sections_exported(self, simple_network):
        section = build_cross_section(
            [
                SegmentPart(kind="vegetation", width=2.0),
                SegmentPart(kind="road", lane_count=2, lane_width=3.5),
            ]
        )
        scene = json.loads(export_scene(simple_network, (), {1: section}))
        assert scene["cross_sections"][0]["total_width"] == pytest.approx(9.0)
        assert scene["cross_sections"][0]["parts"][1]["interval"] == [2.0, 9.0]
