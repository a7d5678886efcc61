"""3D kinematic airspace simulation.

Aircraft fly straight-line segments inside a circular airspace, receiving one
discrete command per control interval. Pairwise proximity is classified
against three nested cylinders (detection / penalty / crash), and a stepped
``World`` applies the conflict protocol, removes crashed and exiting aircraft,
and emits a time-ordered event log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Callable, Mapping, Sequence

import numpy as np

# Increments applied by a single control command.
ALTITUDE_STEP_M = 100.0
SPEED_STEP_MS = 5.0
HEADING_STEP_DEG = 5.0

EVENT_SPAWNED = "spawned"
EVENT_EXITED = "exited"
EVENT_CORRECT_EXIT = "correct_exit"
EVENT_CONFLICT = "conflict"
EVENT_CRASH = "crash"
EVENT_CONTROL_REVOKED = "control_revoked"
EVENT_CONTROL_RESTORED = "control_restored"


class Action(IntEnum):
    """The seven discrete control commands, indexable 0..6."""

    NO_ACTION = 0
    CLIMB = 1
    DESCEND = 2
    SPEED_UP = 3
    SLOW_DOWN = 4
    TURN_LEFT = 5
    TURN_RIGHT = 6


class ProximityClass(IntEnum):
    """Pairwise proximity band; the innermost violated cylinder wins."""

    CLEAR = 0
    DETECTION = 1
    PENALTY = 2
    CRASH = 3


class PairGenerationError(RuntimeError):
    """Raised when the conflict-pair generator exhausts its retry budget."""


def wrap_heading(h: float) -> float:
    """Wrap a heading into [0, 360)."""
    w = h % 360.0
    # h % 360.0 rounds to 360.0 for tiny negative h
    return 0.0 if w == 360.0 else w


def wrap_signed(delta_deg: float) -> float:
    """Wrap an angle difference into (-180, 180]."""
    w = delta_deg % 360.0
    return w - 360.0 if w > 180.0 else w


@dataclass(frozen=True)
class SimConfig:
    """Geometry, grids and timing of the simulated airspace.

    Cylinder defaults follow standard separation minima: the penalty cylinder
    is 5 NM / 300 m half-height, detection doubles it, and the crash cylinder
    is a tenth of the penalty one.
    """

    airspace_radius_m: float = 150_000.0
    dt_s: float = 5.0
    detection_radius_m: float = 18_520.0
    detection_halfheight_m: float = 600.0
    penalty_radius_m: float = 9_260.0
    penalty_halfheight_m: float = 300.0
    crash_radius_m: float = 926.0
    crash_halfheight_m: float = 100.0
    max_aircraft: int = 10
    spawn_altitude_min_m: float = 6_000.0
    spawn_altitude_max_m: float = 10_000.0
    spawn_altitude_step_m: float = 100.0
    spawn_speed_min_ms: float = 215.0
    spawn_speed_max_ms: float = 250.0
    spawn_speed_step_ms: float = 5.0
    spawn_heading_step_deg: float = 5.0
    desired_heading_offset_max_deg: float = 30.0
    # Hard bounds for evasive maneuvers; spawning stays in the 6-10 km band.
    altitude_floor_m: float = 1_000.0
    altitude_ceiling_m: float = 15_000.0
    speed_floor_ms: float = 100.0

    def __post_init__(self) -> None:
        if self.dt_s <= 0:
            raise ValueError("dt_s must be positive")
        if not (self.crash_radius_m < self.penalty_radius_m < self.detection_radius_m):
            raise ValueError("cylinder radii must nest: crash < penalty < detection")
        if not (
            self.crash_halfheight_m < self.penalty_halfheight_m < self.detection_halfheight_m
        ):
            raise ValueError("cylinder half-heights must nest: crash < penalty < detection")

    def altitude_grid(self) -> np.ndarray:
        return np.arange(
            self.spawn_altitude_min_m,
            self.spawn_altitude_max_m + 0.5 * self.spawn_altitude_step_m,
            self.spawn_altitude_step_m,
        )

    def speed_grid(self) -> np.ndarray:
        return np.arange(
            self.spawn_speed_min_ms,
            self.spawn_speed_max_ms + 0.5 * self.spawn_speed_step_ms,
            self.spawn_speed_step_ms,
        )

    def heading_grid(self) -> np.ndarray:
        return np.arange(0.0, 360.0, self.spawn_heading_step_deg)

    def desired_offset_grid(self) -> np.ndarray:
        m = self.desired_heading_offset_max_deg
        return np.arange(-m, m + 0.5 * HEADING_STEP_DEG, HEADING_STEP_DEG)


@dataclass
class AircraftState:
    """One aircraft's kinematic record plus its goal configuration.

    Heading convention: 0 deg = north (+y), clockwise positive. ``z_diff``,
    ``s_diff`` and ``h_diff`` are derived, never stored.
    """

    id: int
    x: float
    y: float
    z: float
    h: float
    s: float
    z_des: float
    s_des: float
    h_des: float
    controllable: bool = True
    spawn_time: float = 0.0
    action_count: int = 0

    def __post_init__(self) -> None:
        if self.s <= 0:
            raise ValueError("speed must be positive")
        if not 0.0 <= self.h < 360.0:
            raise ValueError("heading must lie in [0, 360)")

    @property
    def z_diff(self) -> float:
        return self.z_des - self.z

    @property
    def s_diff(self) -> float:
        return self.s_des - self.s

    @property
    def h_diff(self) -> float:
        return wrap_signed(self.h_des - self.h)

    def at_goal(self) -> bool:
        return self.z_diff == 0.0 and self.s_diff == 0.0 and self.h_diff == 0.0


@dataclass(frozen=True)
class WorldEvent:
    """One entry of the simulation event log."""

    kind: str
    time_s: float
    aircraft: tuple[int, ...]

    def to_record(self) -> dict:
        return {"time_s": self.time_s, "kind": self.kind, "aircraft": list(self.aircraft)}


@dataclass(frozen=True)
class RemovalInfo:
    """Final-step facts about an aircraft removed from the world."""

    state: AircraftState
    crashed: bool
    in_penalty: bool
    controllable: bool
    exit_kind: str | None  # EVENT_EXITED / EVENT_CORRECT_EXIT / None for crashes


def step_aircraft(
    state: AircraftState, action: Action | int, dt_s: float, cfg: SimConfig | None = None
) -> AircraftState:
    """Apply one command and advance ``dt_s`` seconds of straight flight.

    The command delta is applied instantaneously at the step start, then the
    aircraft flies the full interval at the new heading and speed. Altitude
    changes complete within the step. ``action_count`` increments for every
    command except NO_ACTION.
    """
    cfg = cfg if cfg is not None else _DEFAULT_CFG
    action = Action(action)
    z, s, h = state.z, state.s, state.h
    if action == Action.CLIMB:
        z = min(z + ALTITUDE_STEP_M, cfg.altitude_ceiling_m)
    elif action == Action.DESCEND:
        z = max(z - ALTITUDE_STEP_M, cfg.altitude_floor_m)
    elif action == Action.SPEED_UP:
        s = s + SPEED_STEP_MS
    elif action == Action.SLOW_DOWN:
        s = max(s - SPEED_STEP_MS, cfg.speed_floor_ms)
    elif action == Action.TURN_LEFT:
        h = wrap_heading(h - HEADING_STEP_DEG)
    elif action == Action.TURN_RIGHT:
        h = wrap_heading(h + HEADING_STEP_DEG)
    rad = math.radians(h)
    return replace(
        state,
        x=state.x + s * math.sin(rad) * dt_s,
        y=state.y + s * math.cos(rad) * dt_s,
        z=z,
        h=h,
        s=s,
        action_count=state.action_count + (action != Action.NO_ACTION),
    )


def classify_pair(a: AircraftState, b: AircraftState, cfg: SimConfig) -> ProximityClass:
    """Classify an ordered pair against the nested proximity cylinders."""
    d_h = math.hypot(a.x - b.x, a.y - b.y)
    d_v = abs(a.z - b.z)
    if d_h < cfg.crash_radius_m and d_v < cfg.crash_halfheight_m:
        return ProximityClass.CRASH
    if d_h < cfg.penalty_radius_m and d_v < cfg.penalty_halfheight_m:
        return ProximityClass.PENALTY
    if d_h < cfg.detection_radius_m and d_v < cfg.detection_halfheight_m:
        return ProximityClass.DETECTION
    return ProximityClass.CLEAR


def pair_class_matrix(states: Sequence[AircraftState], cfg: SimConfig) -> np.ndarray:
    """N x N matrix of ProximityClass values (diagonal CLEAR)."""
    n = len(states)
    if n == 0:
        return np.zeros((0, 0), dtype=np.int8)
    x = np.array([st.x for st in states])
    y = np.array([st.y for st in states])
    z = np.array([st.z for st in states])
    d_h = np.hypot(x[:, None] - x[None, :], y[:, None] - y[None, :])
    d_v = np.abs(z[:, None] - z[None, :])
    classes = np.zeros((n, n), dtype=np.int8)
    classes[(d_h < cfg.detection_radius_m) & (d_v < cfg.detection_halfheight_m)] = int(
        ProximityClass.DETECTION
    )
    classes[(d_h < cfg.penalty_radius_m) & (d_v < cfg.penalty_halfheight_m)] = int(
        ProximityClass.PENALTY
    )
    classes[(d_h < cfg.crash_radius_m) & (d_v < cfg.crash_halfheight_m)] = int(
        ProximityClass.CRASH
    )
    np.fill_diagonal(classes, int(ProximityClass.CLEAR))
    return classes


def _heading_dir(h_deg: float | np.ndarray) -> np.ndarray:
    rad = np.radians(h_deg)
    return np.stack([np.sin(rad), np.cos(rad)], axis=-1)


def _grid_choice(rng: np.random.Generator, grid: np.ndarray) -> float:
    return float(grid[rng.integers(0, len(grid))])


def spawn_conflict_pair(
    rng: np.random.Generator, cfg: SimConfig, max_tries: int = 200
) -> tuple[AircraftState, AircraftState]:
    """Generate a border pair guaranteed to crash if neither ever acts.

    Construction: the first aircraft is sampled on the spawn grids and a
    crash step on its track is chosen as the meeting point. The second
    aircraft is back-solved onto the border so that its gridded heading and
    speed put it within half a crash radius of the meeting point at the
    meeting time. Both share one altitude (the 100 m altitude grid makes any
    nonzero vertical offset exceed the crash half-height). Every emitted pair
    is verified by a no-action rollout; failed constructions are resampled.
    """
    for _ in range(max_tries):
        pair = _try_build_pair(rng, cfg)
        if pair is not None and _no_action_rollout_crashes(pair, cfg):
            return pair
    raise PairGenerationError(
        f"no crash-guaranteed pair found in {max_tries} tries; "
        "config geometry is likely inconsistent with the spawn grids"
    )


def _try_build_pair(
    rng: np.random.Generator, cfg: SimConfig
) -> tuple[AircraftState, AircraftState] | None:
    radius = cfg.airspace_radius_m
    dt = cfg.dt_s
    z = _grid_choice(rng, cfg.altitude_grid())

    # First aircraft: continuous border point, gridded inbound heading.
    phi = rng.uniform(0.0, 2.0 * math.pi)
    p_a = np.array([radius * math.sin(phi), radius * math.cos(phi)])
    inward = -p_a / radius
    headings = cfg.heading_grid()
    dirs = _heading_dir(headings)
    inbound = dirs @ inward >= 0.35
    if not inbound.any():
        return None
    h_a = float(headings[rng.choice(np.flatnonzero(inbound))])
    d_a = _heading_dir(h_a)
    s_a = _grid_choice(rng, cfg.speed_grid())
    exit_dist = -2.0 * float(p_a @ d_a)  # chord length along the track
    k_max = int(min(0.8 * exit_dist / s_a, 600.0) / dt)
    k_min = 6
    if k_max < k_min:
        return None
    k_star = int(rng.integers(k_min, k_max + 1))
    t_star = k_star * dt
    meet = p_a + s_a * t_star * d_a
    if float(np.hypot(*meet)) > radius - 5_000.0:
        return None

    # Second aircraft: for every gridded heading, the distance from the
    # border to the meeting point along that heading is fixed; accept
    # headings whose implied speed rounds onto the speed grid with a miss
    # below half the crash radius.
    md = dirs @ meet
    u = md + np.sqrt(md * md + radius * radius - float(meet @ meet))
    s_implied = u / t_star
    s_lo, s_hi = cfg.spawn_speed_min_ms, cfg.spawn_speed_max_ms
    step = cfg.spawn_speed_step_ms
    s_b_all = np.clip(np.round((s_implied - s_lo) / step) * step + s_lo, s_lo, s_hi)
    miss = np.abs(u - s_b_all * t_star)
    # Start the second aircraft outside the first one's detection cylinder,
    # which also rejects the degenerate candidate sitting on A's own track.
    border_points = meet[None, :] - u[:, None] * dirs
    spawn_gap = np.hypot(border_points[:, 0] - p_a[0], border_points[:, 1] - p_a[1])
    ok = (
        (s_implied >= s_lo - 0.5 * step)
        & (s_implied <= s_hi + 0.5 * step)
        & (miss < 0.5 * cfg.crash_radius_m)
        & (spawn_gap > cfg.detection_radius_m)
    )
    if not ok.any():
        return None
    pick = int(rng.choice(np.flatnonzero(ok)))
    h_b = float(headings[pick])
    s_b = float(s_b_all[pick])
    p_b = meet - float(u[pick]) * dirs[pick]

    offsets = cfg.desired_offset_grid()
    speeds = cfg.speed_grid()
    alts = cfg.altitude_grid()

    def build(idx: int, pos: np.ndarray, h: float, s: float) -> AircraftState:
        return AircraftState(
            id=idx,
            x=float(pos[0]),
            y=float(pos[1]),
            z=z,
            h=h,
            s=s,
            z_des=_grid_choice(rng, alts),
            s_des=_grid_choice(rng, speeds),
            h_des=wrap_heading(h + _grid_choice(rng, offsets)),
        )

    return build(0, p_a, h_a, s_a), build(1, p_b, h_b, s_b)


def _no_action_rollout_crashes(
    pair: tuple[AircraftState, AircraftState], cfg: SimConfig, horizon_steps: int = 400
) -> bool:
    a, b = pair
    radius = cfg.airspace_radius_m
    for _ in range(horizon_steps):
        a = step_aircraft(a, Action.NO_ACTION, cfg.dt_s, cfg)
        b = step_aircraft(b, Action.NO_ACTION, cfg.dt_s, cfg)
        if classify_pair(a, b, cfg) == ProximityClass.CRASH:
            return True
        if math.hypot(a.x, a.y) > radius or math.hypot(b.x, b.y) > radius:
            return False
    return False


def nominal_maneuvers(state: AircraftState) -> int:
    """Minimal number of commands needed to zero all three goal differences."""
    return int(
        round(abs(state.z_diff) / ALTITUDE_STEP_M)
        + round(abs(state.s_diff) / SPEED_STEP_MS)
        + round(abs(state.h_diff) / HEADING_STEP_DEG)
    )


def greedy_goal_action(state: AircraftState) -> Action:
    """Command that reduces the largest remaining normalized goal difference."""
    n_z = abs(state.z_diff) / ALTITUDE_STEP_M
    n_s = abs(state.s_diff) / SPEED_STEP_MS
    n_h = abs(state.h_diff) / HEADING_STEP_DEG
    if n_z == 0.0 and n_s == 0.0 and n_h == 0.0:
        return Action.NO_ACTION
    best = max(range(3), key=lambda i: (n_z, n_s, n_h)[i])
    if best == 0:
        return Action.CLIMB if state.z_diff > 0 else Action.DESCEND
    if best == 1:
        return Action.SPEED_UP if state.s_diff > 0 else Action.SLOW_DOWN
    return Action.TURN_RIGHT if state.h_diff > 0 else Action.TURN_LEFT


def nominal_profile(state: AircraftState, cfg: SimConfig) -> tuple[float, int]:
    """Solo crossing time under the greedy scripted policy, and the minimal
    command count. Both serve as policy-independent baselines for the delay
    and extra-maneuver metrics."""
    maneuvers = nominal_maneuvers(state)
    st = replace(state, controllable=True)
    t = 0.0
    radius = cfg.airspace_radius_m
    for _ in range(200_000):
        if math.hypot(st.x, st.y) > radius:
            return t, maneuvers
        st = step_aircraft(st, greedy_goal_action(st), cfg.dt_s, cfg)
        t += cfg.dt_s
    raise RuntimeError("solo aircraft did not cross the airspace; config is degenerate")


SpawnPolicy = Callable[["World"], Sequence[tuple[AircraftState, AircraftState]]]


class World:
    """Mutable airspace holding all aircraft and the conflict-protocol state.

    A world instance is single-threaded; run one world per worker for
    parallel rollouts. ``step`` advances every aircraft by one control
    interval and returns the events of that interval in order: conflicts,
    crashes, control revocations, control restorations, exits, spawns.
    """

    def __init__(self, cfg: SimConfig, spawn_policy: SpawnPolicy | None = None):
        self.cfg = cfg
        self.spawn_policy = spawn_policy
        self.time_s = 0.0
        self.aircraft: dict[int, AircraftState] = {}
        self.pairs: list[tuple[int, int]] = []
        self.last_removed: dict[int, RemovalInfo] = {}
        self._next_id = 0
        self._pairs_in_penalty: set[tuple[int, int]] = set()
        self._conflict_partner: dict[int, int] = {}

    @property
    def population(self) -> int:
        return len(self.aircraft)

    @property
    def spawned_aircraft(self) -> int:
        return 2 * len(self.pairs)

    def states(self) -> list[AircraftState]:
        return list(self.aircraft.values())

    def spawn_pair(self, pair: tuple[AircraftState, AircraftState]) -> WorldEvent:
        ids = []
        for proto in pair:
            aid = self._next_id
            self._next_id += 1
            self.aircraft[aid] = replace(proto, id=aid, spawn_time=self.time_s)
            ids.append(aid)
        self.pairs.append((ids[0], ids[1]))
        return WorldEvent(EVENT_SPAWNED, self.time_s, tuple(ids))

    def apply_spawns(self) -> list[WorldEvent]:
        """Run the active spawn policy once; used to seed the world at t=0
        and called internally at the end of every step."""
        if self.spawn_policy is None:
            return []
        return [self.spawn_pair(p) for p in self.spawn_policy(self)]

    def step(self, joint_actions: Mapping[int, Action | int] | None = None) -> list[WorldEvent]:
        actions = joint_actions or {}
        cfg = self.cfg
        for aid, st in self.aircraft.items():
            act = actions.get(aid, Action.NO_ACTION) if st.controllable else Action.NO_ACTION
            self.aircraft[aid] = step_aircraft(st, act, cfg.dt_s, cfg)
        self.time_s += cfg.dt_s
        now = self.time_s
        events: list[WorldEvent] = []
        self.last_removed = {}

        states = self.states()
        ids = [st.id for st in states]
        classes = pair_class_matrix(states, cfg)
        n = len(states)
        in_penalty = (
            (classes >= int(ProximityClass.PENALTY)).any(axis=1)
            if n
            else np.zeros(0, dtype=bool)
        )
        penalty_flag = {ids[i]: bool(in_penalty[i]) for i in range(n)}

        penalty_pairs = set()
        crash_pairs = []
        for i in range(n):
            for j in range(i + 1, n):
                c = classes[i, j]
                if c >= int(ProximityClass.PENALTY):
                    penalty_pairs.add((ids[i], ids[j]))
                if c == int(ProximityClass.CRASH):
                    crash_pairs.append((ids[i], ids[j]))

        new_entries = sorted(penalty_pairs - self._pairs_in_penalty)
        self._pairs_in_penalty = penalty_pairs
        for pair in new_entries:
            events.append(WorldEvent(EVENT_CONFLICT, now, pair))

        # Crashes: greedy pair matching so each crash removes exactly two.
        crashed: set[int] = set()
        for a, b in sorted(crash_pairs):
            if a in crashed or b in crashed:
                continue
            crashed.update((a, b))
            events.append(WorldEvent(EVENT_CRASH, now, (a, b)))
            for aid in (a, b):
                st = self.aircraft.pop(aid)
                self.last_removed[aid] = RemovalInfo(
                    state=st,
                    crashed=True,
                    in_penalty=True,
                    controllable=st.controllable,
                    exit_kind=None,
                )
        if crashed:
            self._drop_from_tracking(crashed, events, now)

        # Conflict protocol: on first penalty entry of a fully controllable
        # pair, the lower id loses control until the pair is clear again.
        for a, b in new_entries:
            sa = self.aircraft.get(a)
            sb = self.aircraft.get(b)
            if sa is None or sb is None or not (sa.controllable and sb.controllable):
                continue
            loser, partner = (a, b) if a < b else (b, a)
            self.aircraft[loser] = replace(self.aircraft[loser], controllable=False)
            self._conflict_partner[loser] = partner
            events.append(WorldEvent(EVENT_CONTROL_REVOKED, now, (loser, partner)))

        index = {aid: i for i, aid in enumerate(ids)}
        for loser in sorted(self._conflict_partner):
            partner = self._conflict_partner[loser]
            if loser not in self.aircraft or partner not in self.aircraft:
                continue
            if classes[index[loser], index[partner]] == int(ProximityClass.CLEAR):
                self._restore_control(loser, partner, events, now)

        # Border crossings.
        exited = []
        for aid, st in list(self.aircraft.items()):
            if math.hypot(st.x, st.y) > cfg.airspace_radius_m:
                kind = EVENT_CORRECT_EXIT if st.at_goal() else EVENT_EXITED
                events.append(WorldEvent(kind, now, (aid,)))
                self.aircraft.pop(aid)
                self.last_removed[aid] = RemovalInfo(
                    state=st,
                    crashed=False,
                    in_penalty=penalty_flag.get(aid, False),
                    controllable=st.controllable,
                    exit_kind=kind,
                )
                exited.append(aid)
        if exited:
            self._drop_from_tracking(set(exited), events, now)

        events.extend(self.apply_spawns())
        return events

    def _restore_control(self, loser: int, partner: int, events: list, now: float) -> None:
        self._conflict_partner.pop(loser, None)
        if loser in self.aircraft:
            self.aircraft[loser] = replace(self.aircraft[loser], controllable=True)
            events.append(WorldEvent(EVENT_CONTROL_RESTORED, now, (loser, partner)))

    def _drop_from_tracking(self, gone: set[int], events: list, now: float) -> None:
        self._pairs_in_penalty = {
            p for p in self._pairs_in_penalty if p[0] not in gone and p[1] not in gone
        }
        for loser in sorted(self._conflict_partner):
            partner = self._conflict_partner[loser]
            if loser in gone:
                self._conflict_partner.pop(loser, None)
            elif partner in gone:
                self._restore_control(loser, partner, events, now)


_DEFAULT_CFG = SimConfig()


def trajectory_record(
    time_s: float,
    state: AircraftState,
    action: Action | int,
    reward: float,
) -> dict:
    """One trajectory-log record; the JSON-lines schema of the replay files."""
    return {
        "sim_time_s": time_s,
        "aircraft_id": state.id,
        "x": state.x,
        "y": state.y,
        "z": state.z,
        "h": state.h,
        "s": state.s,
        "z_diff": state.z_diff,
        "s_diff": state.s_diff,
        "h_diff": state.h_diff,
        "action_index": int(action),
        "controllable": state.controllable,
        "reward": reward,
    }
