"""Day-scale evaluation of a trained controller.

Conflict pairs arrive as a Poisson stream calibrated to a daily overflight
count, the policy steers every aircraft each control interval, and five
safety/efficiency metrics are accumulated from the event log: crashes,
share of potential conflicts solved, average crossing delay, average extra
maneuvers, and correct-exit percentage. Runs aggregate to medians and IQRs.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .graphs import AdjacencySet, build_adjacency, build_features
from .policy import Policy, greedy_actions, sample_actions
from .simulation import (
    Action,
    AircraftState,
    EVENT_CONFLICT,
    EVENT_CORRECT_EXIT,
    EVENT_CRASH,
    EVENT_EXITED,
    EVENT_SPAWNED,
    SimConfig,
    World,
    WorldEvent,
    nominal_profile,
    spawn_conflict_pair,
    trajectory_record,
)

METRIC_NAMES = (
    "crashes",
    "conflicts_solved_pct",
    "avg_delay_s",
    "avg_extra_maneuvers",
    "correct_exit_pct",
)


@dataclass(frozen=True)
class EvalConfig:
    """Traffic volume and run matrix of one evaluation campaign."""

    duration_s: float = 86_400.0
    density: float = 1.0
    overflights_per_day: int = 1_300
    runs_per_model: int = 5
    action_mode: str = "greedy"  # or "sample"

    def __post_init__(self) -> None:
        if self.duration_s < 0:
            raise ValueError("duration_s must be nonnegative")
        if self.action_mode not in ("greedy", "sample"):
            raise ValueError("action_mode must be 'greedy' or 'sample'")

    @property
    def pair_rate_per_s(self) -> float:
        pairs_per_day = self.density * self.overflights_per_day / 2.0
        return pairs_per_day / 86_400.0


@dataclass
class MetricsReport:
    """One evaluation run's metrics plus the event accounting behind them."""

    crashes: int
    potential_conflicts: int
    conflicts_solved_pct: float
    avg_delay_s: float
    avg_extra_maneuvers: float
    correct_exit_pct: float
    max_concurrent: int
    mean_concurrent: float
    spawned_aircraft: int
    exited_aircraft: int
    airborne_at_cutoff: int
    degenerate_denominators: bool
    duration_s: float
    density: float
    seed: int
    event_log: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        return cls(**data)


Controller = Callable[
    [np.ndarray, AdjacencySet, Sequence[int], np.ndarray], Mapping[int, Action]
]


def policy_controller(policy: Policy, mode: str, rng: np.random.Generator) -> Controller:
    def control(features, adjacency, ids, controllable):
        if len(ids) == 0:
            return {}
        out = policy.output(features, adjacency)
        if mode == "greedy":
            acts = greedy_actions(out)
        else:
            acts, _ = sample_actions(out, rng)
        return {aid: acts[i] for i, aid in enumerate(ids) if controllable[i]}

    return control


def noop_controller() -> Controller:
    """Baseline that never issues a command; every spawned pair crashes."""

    def control(features, adjacency, ids, controllable):
        return {}

    return control


def random_controller(rng: np.random.Generator) -> Controller:
    """Baseline sampling one of the seven commands uniformly per aircraft."""

    def control(features, adjacency, ids, controllable):
        return {
            aid: Action(int(rng.integers(0, len(Action))))
            for i, aid in enumerate(ids)
            if controllable[i]
        }

    return control


def pair_arrival_times(
    rng: np.random.Generator, cfg: EvalConfig
) -> np.ndarray:
    """Exponential inter-arrival times of conflict pairs over the horizon."""
    rate = cfg.pair_rate_per_s
    if rate <= 0 or cfg.duration_s == 0:
        return np.zeros(0)
    times = []
    t = 0.0
    while True:
        t += rng.exponential(1.0 / rate)
        if t >= cfg.duration_s:
            return np.array(times)
        times.append(t)


class ScheduleSpawner:
    """Evaluation spawn policy: release pairs at precomputed arrival times,
    with no population cap."""

    def __init__(self, rng: np.random.Generator, cfg: SimConfig, arrivals: np.ndarray):
        self.rng = rng
        self.cfg = cfg
        self.arrivals = arrivals
        self._next = 0

    def __call__(self, world: World) -> list[tuple[AircraftState, AircraftState]]:
        out = []
        while self._next < len(self.arrivals) and self.arrivals[self._next] <= world.time_s:
            out.append(spawn_conflict_pair(self.rng, self.cfg))
            self._next += 1
        return out


def run_experiment(
    controller: Controller,
    sim_cfg: SimConfig,
    eval_cfg: EvalConfig,
    seed: int,
    event_log_path: str | None = None,
    trajectory_log_path: str | None = None,
) -> MetricsReport:
    """Simulate the full horizon under ``controller`` and account the five
    metrics from the resulting events.

    A spawned pair counts as a potential conflict; it is solved if neither
    member ever appears in a conflict or crash event. Aircraft still airborne
    at cutoff are excluded from the delay, maneuver and exit metrics.
    """
    seq = np.random.SeedSequence([seed, 0xE7A1])
    arrival_seq, spawn_seq, action_seq = seq.spawn(3)
    arrivals = pair_arrival_times(np.random.default_rng(arrival_seq), eval_cfg)
    spawner = ScheduleSpawner(np.random.default_rng(spawn_seq), sim_cfg, arrivals)
    action_rng = np.random.default_rng(action_seq)

    world = World(sim_cfg, spawn_policy=spawner)
    events: list[WorldEvent] = world.apply_spawns()

    nominal: dict[int, tuple[float, int]] = {}
    spawn_times: dict[int, float] = {}

    def register_spawns(evs: list[WorldEvent]) -> None:
        for ev in evs:
            if ev.kind == EVENT_SPAWNED:
                for aid in ev.aircraft:
                    st = world.aircraft[aid]
                    nominal[aid] = nominal_profile(st, sim_cfg)
                    spawn_times[aid] = st.spawn_time

    register_spawns(events)

    traj_fh = open(trajectory_log_path, "w", encoding="utf-8") if trajectory_log_path else None
    delays: list[float] = []
    extra_maneuvers: list[float] = []
    exits = 0
    correct_exits = 0
    crashes = 0
    involved_in_conflict: set[int] = set()
    population_samples: list[int] = []
    max_concurrent = 0

    steps = int(round(eval_cfg.duration_s / sim_cfg.dt_s))
    for _ in range(steps):
        states = world.states()
        ids = [st.id for st in states]
        controllable = np.array([st.controllable for st in states], dtype=bool)
        if ids:
            features = build_features(states, sim_cfg)
            adjacency = build_adjacency(states, sim_cfg)
            joint = controller(features, adjacency, ids, controllable)
        else:
            joint = {}
        step_events = world.step(joint)
        events.extend(step_events)
        register_spawns(step_events)
        for ev in step_events:
            if ev.kind == EVENT_CONFLICT:
                involved_in_conflict.update(ev.aircraft)
            elif ev.kind == EVENT_CRASH:
                crashes += 1
                involved_in_conflict.update(ev.aircraft)
            elif ev.kind in (EVENT_EXITED, EVENT_CORRECT_EXIT):
                aid = ev.aircraft[0]
                st = world.last_removed[aid].state
                crossing = ev.time_s - spawn_times[aid]
                nominal_time, nominal_mnv = nominal[aid]
                delays.append(crossing - nominal_time)
                extra_maneuvers.append(st.action_count - nominal_mnv)
                exits += 1
                correct_exits += ev.kind == EVENT_CORRECT_EXIT
        if traj_fh is not None:
            for st in world.states():
                act = joint.get(st.id, Action.NO_ACTION) if st.controllable else Action.NO_ACTION
                traj_fh.write(
                    json.dumps(
                        trajectory_record(world.time_s, st, act, 0.0),
                        separators=(",", ":"),
                    )
                    + "\n"
                )
        population_samples.append(world.population)
        max_concurrent = max(max_concurrent, world.population)
    if traj_fh is not None:
        traj_fh.close()

    # A pair with a member still airborne at cutoff and no conflict yet has
    # an unknown outcome; it leaves the denominator instead of counting as
    # solved. Conflicted pairs always count.
    airborne = set(world.aircraft)
    resolved_pairs = [
        (a, b)
        for a, b in world.pairs
        if a in involved_in_conflict
        or b in involved_in_conflict
        or (a not in airborne and b not in airborne)
    ]
    solved = sum(
        1
        for a, b in resolved_pairs
        if a not in involved_in_conflict and b not in involved_in_conflict
    )
    pairs = resolved_pairs
    degenerate = len(pairs) == 0 or exits == 0
    report = MetricsReport(
        crashes=crashes,
        potential_conflicts=len(pairs),
        conflicts_solved_pct=100.0 * solved / len(pairs) if pairs else 100.0,
        avg_delay_s=float(np.mean(delays)) if delays else 0.0,
        avg_extra_maneuvers=float(np.mean(extra_maneuvers)) if extra_maneuvers else 0.0,
        correct_exit_pct=100.0 * correct_exits / exits if exits else 100.0,
        max_concurrent=max_concurrent,
        mean_concurrent=float(np.mean(population_samples)) if population_samples else 0.0,
        spawned_aircraft=world.spawned_aircraft,
        exited_aircraft=exits,
        airborne_at_cutoff=world.population,
        degenerate_denominators=degenerate,
        duration_s=eval_cfg.duration_s,
        density=eval_cfg.density,
        seed=seed,
        event_log=event_log_path,
    )
    if event_log_path is not None:
        write_event_log(event_log_path, events)
    return report


def write_event_log(path: str, events: Sequence[WorldEvent]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_record(), separators=(",", ":")) + "\n")


def accounting_closure(events: Sequence[WorldEvent]) -> tuple[int, int, int]:
    """(spawned, exited, crashed) aircraft counts from an event sequence;
    spawned - exited - crashed equals the airborne population."""
    spawned = exited = crashed = 0
    for ev in events:
        if ev.kind == EVENT_SPAWNED:
            spawned += len(ev.aircraft)
        elif ev.kind in (EVENT_EXITED, EVENT_CORRECT_EXIT):
            exited += len(ev.aircraft)
        elif ev.kind == EVENT_CRASH:
            crashed += len(ev.aircraft)
    return spawned, exited, crashed


def aggregate(reports: Sequence[MetricsReport | dict]) -> dict:
    """Median and interquartile range (linear-interpolation quantiles) of
    every metric across a run matrix."""
    if not reports:
        raise ValueError("aggregate() needs at least one report")
    dicts = [r.to_dict() if isinstance(r, MetricsReport) else dict(r) for r in reports]
    summary: dict[str, dict[str, float]] = {}
    for name in METRIC_NAMES:
        values = np.array([d[name] for d in dicts], dtype=float)
        q1, median, q3 = np.percentile(values, [25.0, 50.0, 75.0])
        summary[name] = {
            "median": float(median),
            "iqr": float(q3 - q1),
            "q1": float(q1),
            "q3": float(q3),
            "min": float(values.min()),
            "max": float(values.max()),
        }
    return {"n_reports": len(dicts), "metrics": summary, "reports": dicts}


def _run_one(args: tuple) -> dict:
    model_path, sim_cfg, eval_cfg, seed, event_log_path = args
    policy = Policy.load(model_path)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xAC7]))
    controller = policy_controller(policy, eval_cfg.action_mode, rng)
    report = run_experiment(controller, sim_cfg, eval_cfg, seed, event_log_path)
    return report.to_dict()


def evaluate_models(
    model_paths: Sequence[str],
    sim_cfg: SimConfig,
    eval_cfg: EvalConfig,
    seed: int,
    jobs: int = 1,
    events_dir: str | None = None,
) -> dict:
    """Run ``runs_per_model`` seeded experiments for every checkpoint and
    aggregate the full run matrix. Runs are independent worlds; ``jobs``
    parallelizes them across processes without affecting the seeding."""
    specs = []
    for m_idx, path in enumerate(model_paths):
        Policy.load(path)  # fail fast on bad/mismatched checkpoints
        for r_idx in range(eval_cfg.runs_per_model):
            run_seed = int(
                np.random.SeedSequence([seed, m_idx, r_idx]).generate_state(1)[0]
            )
            event_path = None
            if events_dir is not None:
                os.makedirs(events_dir, exist_ok=True)
                event_path = os.path.join(events_dir, f"events_m{m_idx}_r{r_idx}.jsonl")
            specs.append((path, sim_cfg, eval_cfg, run_seed, event_path))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            dicts = list(pool.map(_run_one, specs))
    else:
        dicts = [_run_one(spec) for spec in specs]
    result = aggregate(dicts)
    result["models"] = list(model_paths)
    result["seed"] = seed
    return result
