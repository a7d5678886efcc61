import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import skygraph as sg
from skygraph.simulation import (
    EVENT_CONFLICT,
    EVENT_CONTROL_RESTORED,
    EVENT_CONTROL_REVOKED,
    EVENT_CORRECT_EXIT,
    EVENT_CRASH,
    EVENT_EXITED,
    EVENT_SPAWNED,
    Action,
    ProximityClass,
    World,
    _no_action_rollout_crashes,
    greedy_goal_action,
    nominal_maneuvers,
    pair_class_matrix,
    trajectory_record,
    wrap_heading,
    wrap_signed,
)

CFG = sg.SimConfig()


def make_state(aid=0, x=0.0, y=0.0, z=8000.0, h=0.0, s=230.0, z_des=None, s_des=None, h_des=None):
    return sg.AircraftState(
        id=aid,
        x=x,
        y=y,
        z=z,
        h=h,
        s=s,
        z_des=z if z_des is None else z_des,
        s_des=s if s_des is None else s_des,
        h_des=h if h_des is None else h_des,
    )


class TestWrap:
    def test_wrap_examples(self):
        assert wrap_signed(350.0) == -10.0
        assert wrap_signed(180.0) == 180.0
        assert wrap_signed(-180.0) == 180.0
        assert wrap_signed(0.0) == 0.0

    @given(st.floats(-1e4, 1e4))
    def test_wrap_signed_range(self, delta):
        w = wrap_signed(delta)
        assert -180.0 < w <= 180.0

    @given(st.floats(-1e4, 1e4))
    def test_wrap_heading_range(self, h):
        assert 0.0 <= wrap_heading(h) < 360.0


class TestStepAircraft:
    def test_due_east_no_action(self):
        # 250 m/s due east for 5 s covers 1250 m; hand kinematics.
        st0 = make_state(h=90.0, s=250.0)
        st1 = sg.step_aircraft(st0, Action.NO_ACTION, 5.0, CFG)
        assert st1.x == pytest.approx(1250.0, abs=1e-9)
        assert st1.y == pytest.approx(0.0, abs=1e-9)
        assert st1.z == 8000.0

    def test_zero_dt_identity(self):
        st0 = make_state(h=123.0 % 360, s=221.0)
        st1 = sg.step_aircraft(st0, Action.NO_ACTION, 0.0, CFG)
        assert (st1.x, st1.y, st1.z, st1.h, st1.s) == (st0.x, st0.y, st0.z, st0.h, st0.s)

    def test_turn_right_wraps(self):
        st0 = make_state(h=358.0)
        st1 = sg.step_aircraft(st0, Action.TURN_RIGHT, 5.0, CFG)
        assert st1.h == 3.0

    def test_turn_left_wraps(self):
        st0 = make_state(h=2.0)
        st1 = sg.step_aircraft(st0, Action.TURN_LEFT, 5.0, CFG)
        assert st1.h == 357.0

    def test_climb_descend(self):
        st0 = make_state(z=8000.0)
        assert sg.step_aircraft(st0, Action.CLIMB, 5.0, CFG).z == 8100.0
        assert sg.step_aircraft(st0, Action.DESCEND, 5.0, CFG).z == 7900.0

    def test_altitude_clamps(self):
        low = make_state(z=CFG.altitude_floor_m)
        high = make_state(z=CFG.altitude_ceiling_m)
        assert sg.step_aircraft(low, Action.DESCEND, 5.0, CFG).z == CFG.altitude_floor_m
        assert sg.step_aircraft(high, Action.CLIMB, 5.0, CFG).z == CFG.altitude_ceiling_m

    def test_speed_floor(self):
        st0 = make_state(s=CFG.speed_floor_ms)
        st1 = sg.step_aircraft(st0, Action.SLOW_DOWN, 5.0, CFG)
        assert st1.s == CFG.speed_floor_ms

    def test_action_count_increment(self):
        st0 = make_state()
        assert sg.step_aircraft(st0, Action.NO_ACTION, 5.0, CFG).action_count == 0
        for action in (a for a in Action if a != Action.NO_ACTION):
            assert sg.step_aircraft(st0, action, 5.0, CFG).action_count == 1

    def test_action_order_matches_indices(self):
        assert [a.value for a in Action] == list(range(7))
        assert Action(0) == Action.NO_ACTION
        assert Action(1) == Action.CLIMB
        assert Action(2) == Action.DESCEND
        assert Action(3) == Action.SPEED_UP
        assert Action(4) == Action.SLOW_DOWN
        assert Action(5) == Action.TURN_LEFT
        assert Action(6) == Action.TURN_RIGHT


class TestClassifyPair:
    def test_far_apart_clear(self):
        a = make_state(0)
        b = make_state(1, x=2 * CFG.detection_radius_m)
        assert sg.classify_pair(a, b, CFG) == ProximityClass.CLEAR

    def test_coincident_crash(self):
        a = make_state(0)
        b = make_state(1)
        assert sg.classify_pair(a, b, CFG) == ProximityClass.CRASH

    def test_vertical_separation_downgrades_to_detection(self):
        # Small horizontal separation is fine with enough vertical offset.
        a = make_state(0, z=8000.0)
        b = make_state(1, x=CFG.penalty_radius_m - 1.0, z=8000.0 + CFG.penalty_halfheight_m + 50.0)
        assert sg.classify_pair(a, b, CFG) == ProximityClass.DETECTION

    def test_symmetry_and_nesting_random(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            a = make_state(0, x=rng.uniform(-3e4, 3e4), y=rng.uniform(-3e4, 3e4),
                           z=6000 + 100 * rng.integers(0, 41))
            b = make_state(1, x=rng.uniform(-3e4, 3e4), y=rng.uniform(-3e4, 3e4),
                           z=6000 + 100 * rng.integers(0, 41))
            c = sg.classify_pair(a, b, CFG)
            assert c == sg.classify_pair(b, a, CFG)
            d_h = math.hypot(a.x - b.x, a.y - b.y)
            d_v = abs(a.z - b.z)
            if c >= ProximityClass.PENALTY:
                assert d_h < CFG.detection_radius_m and d_v < CFG.detection_halfheight_m
            if c == ProximityClass.CRASH:
                assert d_h < CFG.penalty_radius_m and d_v < CFG.penalty_halfheight_m

    def test_matrix_matches_scalar(self):
        rng = np.random.default_rng(3)
        states = [
            make_state(i, x=rng.uniform(-2e4, 2e4), y=rng.uniform(-2e4, 2e4),
                       z=6000 + 100 * rng.integers(0, 5))
            for i in range(8)
        ]
        classes = pair_class_matrix(states, CFG)
        for i in range(8):
            for j in range(8):
                if i == j:
                    assert classes[i, j] == ProximityClass.CLEAR
                else:
                    assert classes[i, j] == sg.classify_pair(states[i], states[j], CFG)


class TestSpawnConflictPair:
    def test_border_spawn(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a, b = sg.spawn_conflict_pair(rng, CFG)
            assert math.hypot(a.x, a.y) == pytest.approx(CFG.airspace_radius_m, abs=1e-3)
            assert math.hypot(b.x, b.y) == pytest.approx(CFG.airspace_radius_m, abs=1e-3)

    def test_values_on_spawn_grids(self):
        rng = np.random.default_rng(1)
        headings = set(CFG.heading_grid())
        speeds = set(CFG.speed_grid())
        altitudes = set(CFG.altitude_grid())
        offsets = set(CFG.desired_offset_grid())
        for _ in range(50):
            for st in sg.spawn_conflict_pair(rng, CFG):
                assert st.h in headings
                assert st.s in speeds
                assert st.z in altitudes
                assert st.s_des in speeds
                assert st.z_des in altitudes
                assert wrap_signed(st.h_des - st.h) in offsets

    def test_no_action_rollout_crashes(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            pair = sg.spawn_conflict_pair(rng, CFG)
            assert _no_action_rollout_crashes(pair, CFG)

    def test_generator_error_on_impossible_geometry(self):
        # A crash cylinder wider than the speed-grid miss cannot fail, so
        # shrink it to nearly nothing and starve the retry budget.
        cfg = sg.SimConfig(crash_radius_m=0.001, crash_halfheight_m=0.0005)
        rng = np.random.default_rng(3)
        with pytest.raises(sg.PairGenerationError):
            sg.spawn_conflict_pair(rng, cfg, max_tries=3)


class TestNominalProfile:
    def test_maneuver_count_formula(self):
        st0 = make_state(z=8000, z_des=8300, s=230, s_des=240, h=90, h_des=75)
        assert nominal_maneuvers(st0) == 3 + 2 + 3

    def test_zero_diffs_zero_maneuvers(self):
        assert nominal_maneuvers(make_state()) == 0

    def test_diff_free_crossing_time(self):
        # Diameter crossing at 215 m/s: 300 km / 215 = 1395.3 s, so the
        # first step strictly beyond the border is 1400 s.
        st0 = make_state(x=-CFG.airspace_radius_m, y=0.0, h=90.0, s=215.0)
        t, maneuvers = sg.nominal_profile(st0, CFG)
        assert maneuvers == 0
        expected = math.ceil((2 * CFG.airspace_radius_m / 215.0) / CFG.dt_s) * CFG.dt_s
        assert t == expected

    def test_greedy_policy_zeroes_diffs(self):
        st0 = make_state(
            x=-CFG.airspace_radius_m, y=0.0, h=90.0, s=230.0,
            z_des=8300.0, s_des=215.0, h_des=80.0,
        )
        for _ in range(50):
            if st0.at_goal():
                break
            st0 = sg.step_aircraft(st0, greedy_goal_action(st0), CFG.dt_s, CFG)
        assert st0.at_goal()
        assert greedy_goal_action(st0) == Action.NO_ACTION


def run_pair_world(pair, steps=400, spawn_policy=None):
    world = World(CFG, spawn_policy=spawn_policy)
    world.spawn_pair(pair)
    log = []
    for _ in range(steps):
        log.extend(world.step({}))
        if not world.aircraft:
            break
    return world, log


class TestWorld:
    def test_empty_world_step(self):
        world = World(CFG)
        events = world.step({})
        assert events == []
        assert world.time_s == CFG.dt_s

    def test_crash_event_removes_both(self):
        rng = np.random.default_rng(5)
        pair = sg.spawn_conflict_pair(rng, CFG)
        world, log = run_pair_world(pair)
        crashes = [e for e in log if e.kind == EVENT_CRASH]
        assert len(crashes) == 1
        assert set(crashes[0].aircraft) == {0, 1}
        assert world.population == 0

    def test_conflict_precedes_crash(self):
        rng = np.random.default_rng(6)
        pair = sg.spawn_conflict_pair(rng, CFG)
        _, log = run_pair_world(pair)
        kinds = [e.kind for e in log]
        assert EVENT_CONFLICT in kinds
        assert kinds.index(EVENT_CONFLICT) < kinds.index(EVENT_CRASH)

    def test_conflict_revokes_exactly_one(self):
        rng = np.random.default_rng(7)
        pair = sg.spawn_conflict_pair(rng, CFG)
        world = World(CFG)
        world.spawn_pair(pair)
        for _ in range(400):
            events = world.step({})
            if any(e.kind == EVENT_CONFLICT for e in events):
                if not world.aircraft:
                    break  # crashed in the same interval
                flags = [st.controllable for st in world.states()]
                assert sorted(flags) == [False, True]
                revoked = [e for e in events if e.kind == EVENT_CONTROL_REVOKED]
                assert len(revoked) == 1
                assert revoked[0].aircraft[0] == min(revoked[0].aircraft)
                return
        pytest.fail("pair never reached penalty")

    def test_control_restored_after_separation(self):
        # Two parallel aircraft briefly inside each other's penalty cylinder;
        # the follower diverges until the pair is clear again.
        a = make_state(0, x=0.0, y=0.0, h=0.0, s=230.0)
        b = make_state(1, x=CFG.penalty_radius_m - 500.0, y=0.0, h=0.0, s=230.0)
        world = World(CFG)
        world.aircraft = {0: a, 1: b}
        world.pairs.append((0, 1))
        events = world.step({})
        assert any(e.kind == EVENT_CONTROL_REVOKED for e in events)
        assert not world.aircraft[0].controllable
        restored = False
        for _ in range(200):
            events = world.step({1: Action.TURN_RIGHT})
            if any(e.kind == EVENT_CONTROL_RESTORED for e in events):
                restored = True
                break
        assert restored
        assert world.aircraft[0].controllable
        d_h = math.hypot(
            world.aircraft[0].x - world.aircraft[1].x,
            world.aircraft[0].y - world.aircraft[1].y,
        )
        assert sg.classify_pair(world.aircraft[0], world.aircraft[1], CFG) == ProximityClass.CLEAR

    def test_no_penalty_no_flag_changes(self):
        a = make_state(0, x=0.0, y=0.0)
        b = make_state(1, x=3 * CFG.detection_radius_m, y=0.0)
        world = World(CFG)
        world.aircraft = {0: a, 1: b}
        world.step({})
        assert all(st.controllable for st in world.states())

    def test_correct_exit_event(self):
        st0 = make_state(0, x=CFG.airspace_radius_m - 100.0, y=0.0, h=90.0, s=250.0)
        world = World(CFG)
        world.aircraft = {0: st0}
        events = world.step({})
        assert [e.kind for e in events] == [EVENT_CORRECT_EXIT]

    def test_incorrect_exit_event(self):
        st0 = make_state(0, x=CFG.airspace_radius_m - 100.0, y=0.0, h=90.0, s=250.0, s_des=215.0)
        world = World(CFG)
        world.aircraft = {0: st0}
        events = world.step({})
        assert [e.kind for e in events] == [EVENT_EXITED]

    def test_uncontrollable_never_increments_action_count(self):
        a = make_state(0, x=0.0, y=0.0, h=0.0, s=230.0)
        b = make_state(1, x=CFG.penalty_radius_m - 500.0, y=0.0, h=0.0, s=230.0)
        world = World(CFG)
        world.aircraft = {0: a, 1: b}
        world.step({})
        assert not world.aircraft[0].controllable
        before = world.aircraft[0].action_count
        for _ in range(5):
            world.step({0: Action.CLIMB, 1: Action.NO_ACTION})
        assert world.aircraft[0].action_count == before

    def test_event_times_nondecreasing(self):
        rng = np.random.default_rng(8)
        world = World(CFG, spawn_policy=lambda w: [sg.spawn_conflict_pair(rng, CFG)]
                      if w.population < 6 else [])
        world.apply_spawns()
        log = []
        for _ in range(100):
            log.extend(world.step({}))
        times = [e.time_s for e in log]
        assert times == sorted(times)

    def test_determinism_identical_event_logs(self):
        def run():
            rng = np.random.default_rng(9)
            world = World(CFG, spawn_policy=lambda w: [sg.spawn_conflict_pair(rng, CFG)]
                          if w.population < 8 else [])
            world.apply_spawns()
            log = []
            for _ in range(200):
                log.extend(world.step({}))
            return log

        assert run() == run()

    def test_trajectory_record_schema(self):
        st0 = make_state(3, x=1.0, y=2.0)
        rec = trajectory_record(10.0, st0, Action.CLIMB, -1.0)
        assert list(rec) == [
            "sim_time_s", "aircraft_id", "x", "y", "z", "h", "s",
            "z_diff", "s_diff", "h_diff", "action_index", "controllable", "reward",
        ]
        parsed = json.loads(json.dumps(rec))
        assert parsed["aircraft_id"] == 3
        assert parsed["action_index"] == 1

    def test_config_validation(self):
        with pytest.raises(ValueError):
            sg.SimConfig(dt_s=0.0)
        with pytest.raises(ValueError):
            sg.SimConfig(crash_radius_m=2e4)
        with pytest.raises(ValueError):
            sg.SimConfig(crash_halfheight_m=1e4)
