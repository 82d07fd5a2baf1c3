"""Virtual driver, Euler dynamics, obstacle scan, and pedestrian tests."""

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taftwin.behavior import (
    CorridorObstacle,
    DriverParams,
    ObstacleObservation,
    PedestrianTrack,
    PedestrianWalker,
    VehicleKinematics,
    braking_envelope,
    draw_set_speed,
    drive_tick,
    obstacle_scan,
    pedal,
    step_pedestrian,
    step_speed,
    step_vehicle,
    target_velocity,
)
from taftwin.core.types import LaneGeometry
from tests.conftest import make_state


def params(v_mu=13.9, v_sigma=0.0, a=2.5, a_b=4.0, xi=0.0) -> DriverParams:
    return DriverParams(v_mu=v_mu, v_sigma=v_sigma, a=a, a_b=a_b, xi=xi)


class TestDrawSetSpeed:
    def test_zero_spread(self):
        assert draw_set_speed(params(v_mu=13.0, v_sigma=0.0, xi=0.7)) == 13.0

    def test_upper_boundary(self):
        assert draw_set_speed(params(v_mu=13.0, v_sigma=2.0, xi=1.0)) == 15.0

    def test_mid_draw(self):
        assert draw_set_speed(params(v_mu=13.0, v_sigma=2.0, xi=-0.5)) == 12.0

    def test_xi_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            params(xi=1.5)


class TestTargetVelocity:
    def test_stop_now(self):
        obs = ObstacleObservation(d_stop=0.0, v_obs=0.0)
        assert target_velocity(10.0, 4.0, obs) == 0.0

    def test_half_envelope_gives_half_speed(self):
        # a_max = 3, dx = 100/6 = 16.667, d_stop = dx/2 -> t = 0.5
        obs = ObstacleObservation(d_stop=8.3333, v_obs=0.0)
        assert target_velocity(10.0, 4.0, obs) == pytest.approx(5.0, abs=1e-3)

    def test_beyond_envelope_cruises(self):
        obs = ObstacleObservation(d_stop=20.0, v_obs=0.0)
        assert target_velocity(10.0, 4.0, obs) == pytest.approx(10.0)

    def test_never_exceeds_set_speed(self):
        # A strongly receding obstacle must not push v_target above v_set.
        obs = ObstacleObservation(d_stop=10.0, v_obs=40.0)
        assert target_velocity(10.0, 4.0, obs) <= 10.0

    def test_never_negative(self):
        obs = ObstacleObservation(d_stop=5.0, v_obs=-100.0)
        assert target_velocity(10.0, 4.0, obs) >= 0.0

    @settings(max_examples=1000, deadline=None)
    @given(
        v_set=st.floats(min_value=0.1, max_value=80.0),
        a_b=st.floats(min_value=0.1, max_value=20.0),
    )
    def test_braking_envelope_closed_form_identity(self, v_set, a_b):
        a_max = 3.0 * a_b / 4.0
        assert braking_envelope(v_set, a_b) == pytest.approx(
            v_set * v_set / (2.0 * a_max), abs=1e-9, rel=1e-9
        )

    def test_monotone_in_stop_distance(self):
        values = [
            target_velocity(13.9, 4.0, ObstacleObservation(d, 0.0))
            for d in [0.0, 1.0, 2.5, 5.0, 10.0, 15.0, 20.0, 40.0]
        ]
        assert values == sorted(values)


class TestPedal:
    def test_clamps_low(self):
        assert pedal(5.0, 10.0) == -1.0

    def test_zero_at_target(self):
        assert pedal(10.0, 10.0) == 0.0

    def test_proportional_inside_range(self):
        assert pedal(10.4, 10.0) == pytest.approx(0.4)


class TestStepVehicle:
    def test_euler_braking_step(self):
        lane = LaneGeometry(1, ((0.0, 0.0, 0.0), (100.0, 0.0, 0.0)), 3.5)
        state = make_state(speed=10.0)
        kin = VehicleKinematics(lane_id=1, s=0.0, speed=10.0)
        new_state, new_kin = step_vehicle(state, kin, -1.0, params(a_b=4.0), 0.1, lane)
        assert new_kin.speed == pytest.approx(9.6)
        # Position advances with the prior-step velocity: 10 * 0.1 = 1.0 m.
        assert new_kin.s == pytest.approx(1.0)
        assert new_state.position[0] == pytest.approx(1.0)

    def test_coasting(self):
        assert step_speed(10.0, 0.0, params(), 0.1) == pytest.approx(10.0)

    def test_never_reverses(self):
        assert step_speed(0.0, -1.0, params(), 0.1) == 0.0

    def test_acceleration_uses_a(self):
        assert step_speed(0.0, 1.0, params(a=2.5), 0.1) == pytest.approx(0.25)


class TestObstacleScan:
    def test_empty_road(self):
        assert obstacle_scan(10.0, 4.0, []) is None

    def test_participant_sheds_half_lengths_and_margin(self):
        obs = obstacle_scan(
            5.0, 4.0, [CorridorObstacle(30.0, 0.0, 4.0)], safety_margin_m=2.0
        )
        assert obs.d_stop == pytest.approx(24.0)
        assert obs.v_obs == pytest.approx(-5.0)

    def test_stop_line_sheds_margin_only(self):
        obs = obstacle_scan(
            5.0,
            4.0,
            [CorridorObstacle(15.0, 0.0, is_stop_line=True)],
            safety_margin_m=2.0,
        )
        assert obs.d_stop == pytest.approx(13.0)
        assert obs.v_obs == pytest.approx(-5.0)

    def test_nearest_of_several(self):
        obs = obstacle_scan(
            0.0,
            4.0,
            [CorridorObstacle(50.0, 1.0, 4.0), CorridorObstacle(20.0, 2.0, 4.0)],
        )
        assert obs.v_obs == pytest.approx(2.0)

    def test_behind_and_beyond_lookahead_ignored(self):
        assert (
            obstacle_scan(
                0.0,
                4.0,
                [CorridorObstacle(-5.0, 0.0, 4.0), CorridorObstacle(500.0, 0.0, 4.0)],
                lookahead_m=100.0,
            )
            is None
        )

    def test_d_stop_floored_at_zero(self):
        obs = obstacle_scan(0.0, 4.0, [CorridorObstacle(3.0, 0.0, 4.0)])
        assert obs.d_stop == 0.0


class TestClosedLoopDriving:
    def test_unobstructed_speed_bounds(self):
        p = params(v_mu=13.9)
        v = 0.0
        dt = 0.05
        for _ in range(2000):
            pedal_value = drive_tick(13.9, v, p, None)
            v = step_speed(v, pedal_value, p, dt)
            assert 0.0 <= v <= 13.9 + p.a * dt
        assert v == pytest.approx(13.9, abs=0.2)

    def test_deterministic_trajectories(self):
        def run():
            rng = random.Random(42)
            p = params(v_mu=13.9, v_sigma=1.4, xi=rng.uniform(-1, 1))
            v, s = 0.0, 0.0
            trace = []
            for _ in range(500):
                obs = obstacle_scan(
                    v, 4.0, [CorridorObstacle(200.0 - s, 0.0, 4.0)]
                )
                pedal_value = drive_tick(draw_set_speed(p), v, p, obs)
                s += v * 0.05
                v = step_speed(v, pedal_value, p, 0.05)
                trace.append((s, v))
            return trace

        assert run() == run()


class TestPedestrians:
    def test_straight_track_step(self):
        track = PedestrianTrack(
            waypoints=((0.0, 0.0, 0.0), (10.0, 0.0, 0.0)), walk_speed=1.25
        )
        pos, yaw, s = step_pedestrian(track, 0.0, 1.0)
        assert s == pytest.approx(1.25)
        assert pos == pytest.approx((1.25, 0.0, 0.0))
        assert yaw == pytest.approx(0.0)

    def test_looped_track_wraps(self):
        track = PedestrianTrack(
            waypoints=((0.0, 0.0, 0.0), (10.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
            walk_speed=2.0,
            looped=True,
        )
        walker = PedestrianWalker(track, s=track.length - 1.0)
        walker.step(1.0)
        assert 0.0 <= walker.s < track.length
        assert walker.s == pytest.approx(1.0)

    def test_dwell_at_stop_point(self):
        track = PedestrianTrack(
            waypoints=((0.0, 0.0, 0.0), (5.0, 0.0, 0.0), (10.0, 0.0, 0.0)),
            walk_speed=1.0,
            stop_points=((1, 3.0),),
        )
        walker = PedestrianWalker(track)
        walker.step(5.0)  # arrives at the stop exactly
        assert walker.s == pytest.approx(5.0)
        walker.step(1.0)  # still dwelling
        assert walker.s == pytest.approx(5.0)
        walker.step(2.5)  # dwell ends after 2 more seconds, then walks 0.5 m
        assert walker.s == pytest.approx(5.5)

    def test_track_validation(self):
        with pytest.raises(ValueError):
            PedestrianTrack(waypoints=((0.0, 0.0, 0.0),), walk_speed=1.0)
        with pytest.raises(ValueError):
            PedestrianTrack(
                waypoints=((0.0, 0.0, 0.0), (1.0, 0.0, 0.0)), walk_speed=0.0
            )
