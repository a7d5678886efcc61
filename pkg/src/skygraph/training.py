"""Actor-critic training with generalized advantage estimation and
potential-based reward shaping.

Episodes continuously spawn crash-guaranteed aircraft pairs into a capped
world; each control step samples per-aircraft actions, advances the world
5 seconds, and credits each aircraft a base reward plus the temporal
difference of a potential function. One gradient update runs per episode.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor, add, mul, no_grad, square, sub, texp, tsum
from .graphs import AdjacencySet, build_adjacency, build_features
from .nn import optimizer_step
from .policy import ArchitectureSpec, Policy, PolicyOutput, sample_actions
from .simulation import (
    ALTITUDE_STEP_M,
    HEADING_STEP_DEG,
    SPEED_STEP_MS,
    Action,
    AircraftState,
    EVENT_CONFLICT,
    EVENT_CRASH,
    ProximityClass,
    SimConfig,
    World,
    pair_class_matrix,
    spawn_conflict_pair,
    trajectory_record,
)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the training loop and the shaped reward."""

    gamma: float = 0.99
    lam: float = 0.95
    learning_rate: float = 3e-4
    entropy_coeff: float = 0.01
    value_coeff: float = 0.5
    episodes: int = 5_000
    max_aircraft: int = 10
    aircraft_per_episode: int = 30
    max_steps_per_episode: int = 2_000
    # Pyramid potential: zero on the penalty-cylinder rim, -b at contact.
    potential_b: float = 2.0
    potential_c1: float | None = None  # default 1 / penalty radius
    potential_c2: float | None = None  # default 1 / penalty half-height
    # Goal-distance weights turning the L1 potential into a remaining-action
    # count (one unit per command).
    goal_weight_z: float = 1.0 / ALTITUDE_STEP_M
    goal_weight_s: float = 1.0 / SPEED_STEP_MS
    goal_weight_h: float = 1.0 / HEADING_STEP_DEG
    checkpoint_every: int = 500
    log_trajectories: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")


def base_reward(
    state_after: AircraftState, neighbor_in_penalty: bool, crashed: bool, controllable: bool
) -> float:
    """Per-step base reward; exactly one case fires, in the precedence
    crash > uncontrollable > penalty > goal."""
    if crashed:
        return -100.0
    if not controllable:
        return 0.0
    if neighbor_in_penalty:
        return -1.0
    if state_after.at_goal():
        return 1.0
    return 0.0


def potential(
    state: AircraftState,
    neighbors: Sequence[tuple[AircraftState, ProximityClass]],
    cfg: SimConfig,
    train_cfg: TrainConfig | None = None,
) -> float:
    """Shaping potential of one aircraft's situation.

    With an intruder inside the penalty cylinder the potential is an inverted
    rectangular pyramid over (horizontal, vertical) distance to the deepest
    intruder: zero on the cylinder rim, -b at contact, so increasing either
    separation raises it. With an empty neighborhood it is minus the
    remaining command count toward the goal. Uncontrollable aircraft and
    aircraft with detection-band-only neighbors sit at zero.
    """
    tc = train_cfg if train_cfg is not None else _DEFAULT_TRAIN_CFG
    if not state.controllable:
        return 0.0
    c1 = tc.potential_c1 if tc.potential_c1 is not None else 1.0 / cfg.penalty_radius_m
    c2 = tc.potential_c2 if tc.potential_c2 is not None else 1.0 / cfg.penalty_halfheight_m

    best: float | None = None
    any_detect = False
    for other, cls in neighbors:
        if cls >= ProximityClass.DETECTION:
            any_detect = True
        if cls >= ProximityClass.PENALTY:
            x = float(np.hypot(state.x - other.x, state.y - other.y))
            y = abs(state.z - other.z)
            phi = -tc.potential_b + abs(c1 * x + c2 * y) + abs(c2 * y - c1 * x)
            if best is None or phi < best:
                best = phi
    if best is not None:
        return best
    if any_detect:
        return 0.0
    return -(
        tc.goal_weight_z * abs(state.z_diff)
        + tc.goal_weight_s * abs(state.s_diff)
        + tc.goal_weight_h * abs(state.h_diff)
    )


def shaped_reward(base: float, phi_prev: float, phi_next: float, gamma: float) -> float:
    """Base reward plus the potential's discounted temporal difference;
    terminal transitions pass phi_next = 0."""
    return base + gamma * phi_next - phi_prev


def compute_gae(
    rewards: Sequence[float],
    values: Sequence[float],
    terminal_value: float,
    gamma: float,
    lam: float,
) -> np.ndarray:
    """Backward-recursive advantages A_t = delta_t + gamma*lam*A_{t+1} with
    delta_t = r_t + gamma*V_{t+1} - V_t and V_T the terminal/bootstrap value."""
    n = len(rewards)
    adv = np.empty(n)
    running = 0.0
    v_next = terminal_value
    for t in range(n - 1, -1, -1):
        delta = rewards[t] + gamma * v_next - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
        v_next = values[t]
    return adv


@dataclass
class StepRecord:
    """Everything of one control step the update pass needs to replay it."""

    ids: tuple[int, ...]
    features: np.ndarray
    adjacency: AdjacencySet
    actions: np.ndarray  # int, per row; NO_ACTION for uncontrollable
    log_probs: np.ndarray
    controllable: np.ndarray  # bool, at decision time
    base_rewards: np.ndarray
    shaped_rewards: np.ndarray
    dones: np.ndarray  # bool; crash or exit terminating the trajectory
    phi_prev: np.ndarray
    phi_next: np.ndarray


@dataclass
class EpisodeBuffer:
    """Per-step records of one episode plus the final world snapshot used to
    bootstrap unfinished trajectories."""

    steps: list[StepRecord] = field(default_factory=list)
    final_ids: tuple[int, ...] = ()
    final_features: np.ndarray | None = None
    final_adjacency: AdjacencySet | None = None

    def trajectories(self) -> dict[int, list[tuple[int, int]]]:
        """Aircraft id -> ordered (step index, row) locations."""
        out: dict[int, list[tuple[int, int]]] = {}
        for t, rec in enumerate(self.steps):
            for row, aid in enumerate(rec.ids):
                out.setdefault(aid, []).append((t, row))
        return out

    @property
    def n_transitions(self) -> int:
        return sum(len(rec.ids) for rec in self.steps)


@dataclass
class WorldSnapshot:
    ids: tuple[int, ...]
    states: list[AircraftState]
    features: np.ndarray
    adjacency: AdjacencySet
    controllable: np.ndarray
    in_penalty: np.ndarray
    phi: dict[int, float]


def snapshot_world(world: World, train_cfg: TrainConfig) -> WorldSnapshot:
    states = world.states()
    cfg = world.cfg
    classes = pair_class_matrix(states, cfg)
    n = len(states)
    phi: dict[int, float] = {}
    for i, st in enumerate(states):
        neighbors = [
            (states[j], ProximityClass(int(classes[i, j]))) for j in range(n) if j != i
        ]
        phi[st.id] = potential(st, neighbors, cfg, train_cfg)
    return WorldSnapshot(
        ids=tuple(st.id for st in states),
        states=states,
        features=build_features(states, cfg),
        adjacency=build_adjacency(states, cfg),
        controllable=np.array([st.controllable for st in states], dtype=bool),
        in_penalty=(
            (classes >= int(ProximityClass.PENALTY)).any(axis=1)
            if n
            else np.zeros(0, dtype=bool)
        ),
        phi=phi,
    )


class PairBudgetSpawner:
    """Training spawn policy: fill the world with conflict pairs up to the
    population cap until the per-episode creation budget is spent."""

    def __init__(
        self, rng: np.random.Generator, cfg: SimConfig, max_aircraft: int, budget: int
    ):
        self.rng = rng
        self.cfg = cfg
        self.max_aircraft = max_aircraft
        self.budget = budget
        self.created = 0

    def __call__(self, world: World) -> list[tuple[AircraftState, AircraftState]]:
        out = []
        while (
            self.created + 2 <= self.budget
            and world.population + 2 * len(out) + 2 <= self.max_aircraft
        ):
            out.append(spawn_conflict_pair(self.rng, self.cfg))
            self.created += 2
        return out


def collect_episode(
    policy: Policy,
    sim_cfg: SimConfig,
    train_cfg: TrainConfig,
    spawn_rng: np.random.Generator,
    action_rng: np.random.Generator,
    trajectory_sink: Callable[[dict], None] | None = None,
) -> tuple[EpisodeBuffer, dict]:
    """Roll out one episode under the sampling policy.

    The episode ends once the aircraft creation budget is spent or the step
    cap is reached; unfinished trajectories are bootstrapped at the update.
    """
    spawner = PairBudgetSpawner(
        spawn_rng, sim_cfg, train_cfg.max_aircraft, train_cfg.aircraft_per_episode
    )
    world = World(sim_cfg, spawn_policy=spawner)
    world.apply_spawns()
    buffer = EpisodeBuffer()
    snap = snapshot_world(world, train_cfg)
    gamma = train_cfg.gamma
    stats = {"steps": 0, "crashes": 0, "conflicts": 0, "base_return": 0.0, "shaped_return": 0.0}

    while True:
        if snap.ids:
            out = policy.output(snap.features, snap.adjacency)
            sampled, log_probs = sample_actions(out, action_rng)
            actions = np.array(
                [
                    int(sampled[i]) if snap.controllable[i] else int(Action.NO_ACTION)
                    for i in range(len(snap.ids))
                ]
            )
            lp = np.array(
                [log_probs[i] if snap.controllable[i] else 0.0 for i in range(len(snap.ids))]
            )
            joint = {
                aid: Action(actions[i])
                for i, aid in enumerate(snap.ids)
                if snap.controllable[i]
            }
        else:
            actions = np.zeros(0, dtype=int)
            lp = np.zeros(0)
            joint = {}

        events = world.step(joint)
        stats["crashes"] += sum(1 for e in events if e.kind == EVENT_CRASH)
        stats["conflicts"] += sum(1 for e in events if e.kind == EVENT_CONFLICT)
        next_snap = snapshot_world(world, train_cfg)
        next_index = {aid: i for i, aid in enumerate(next_snap.ids)}

        n = len(snap.ids)
        base = np.zeros(n)
        shaped = np.zeros(n)
        dones = np.zeros(n, dtype=bool)
        phi_next = np.zeros(n)
        for i, aid in enumerate(snap.ids):
            if aid in world.last_removed:
                info = world.last_removed[aid]
                base[i] = base_reward(info.state, info.in_penalty, info.crashed, info.controllable)
                dones[i] = True
                post_state = info.state
            else:
                j = next_index[aid]
                st = next_snap.states[j]
                base[i] = base_reward(
                    st, bool(next_snap.in_penalty[j]), False, st.controllable
                )
                phi_next[i] = next_snap.phi[aid]
                post_state = st
            shaped[i] = shaped_reward(base[i], snap.phi[aid], phi_next[i], gamma)
            if trajectory_sink is not None:
                trajectory_sink(
                    trajectory_record(world.time_s, post_state, actions[i], shaped[i])
                )

        if n:
            buffer.steps.append(
                StepRecord(
                    ids=snap.ids,
                    features=snap.features,
                    adjacency=snap.adjacency,
                    actions=actions,
                    log_probs=lp,
                    controllable=snap.controllable.copy(),
                    base_rewards=base,
                    shaped_rewards=shaped,
                    dones=dones,
                    phi_prev=np.array([snap.phi[aid] for aid in snap.ids]),
                    phi_next=phi_next,
                )
            )
            stats["base_return"] += float(base.sum())
            stats["shaped_return"] += float(shaped.sum())
        stats["steps"] += 1
        snap = next_snap

        if spawner.created >= train_cfg.aircraft_per_episode:
            break
        if stats["steps"] >= train_cfg.max_steps_per_episode:
            break

    buffer.final_ids = snap.ids
    buffer.final_features = snap.features
    buffer.final_adjacency = snap.adjacency
    stats["aircraft_created"] = spawner.created
    return buffer, stats


def compute_targets(
    policy: Policy, buffer: EpisodeBuffer, cfg: TrainConfig
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Advantages and value targets per (step, row), held fixed during the
    update: they are recomputed from the current critic and then treated as
    constants by the loss."""
    with no_grad():
        values = [
            policy.forward_tensors(rec.features, rec.adjacency)[1].data[:, 0]
            for rec in buffer.steps
        ]
        bootstrap: dict[int, float] = {}
        if buffer.final_ids:
            final_v = policy.forward_tensors(buffer.final_features, buffer.final_adjacency)[1]
            bootstrap = {
                aid: float(final_v.data[i, 0]) for i, aid in enumerate(buffer.final_ids)
            }

    advantages = [np.zeros(len(rec.ids)) for rec in buffer.steps]
    targets = [np.zeros(len(rec.ids)) for rec in buffer.steps]
    for aid, locations in buffer.trajectories().items():
        rewards = [float(buffer.steps[t].shaped_rewards[row]) for t, row in locations]
        vals = [float(values[t][row]) for t, row in locations]
        last_t, last_row = locations[-1]
        done = bool(buffer.steps[last_t].dones[last_row])
        terminal_value = 0.0 if done else bootstrap.get(aid, 0.0)
        adv = compute_gae(rewards, vals, terminal_value, cfg.gamma, cfg.lam)
        for (t, row), a, v in zip(locations, adv, vals):
            advantages[t][row] = a
            targets[t][row] = a + v
    return advantages, targets


def build_losses(
    policy: Policy,
    buffer: EpisodeBuffer,
    cfg: TrainConfig,
    advantages: list[np.ndarray],
    targets: list[np.ndarray],
) -> tuple[Tensor, dict]:
    """Compose the scalar training loss from replayed forward passes.

    Policy term: -mean(log pi(a|s) * advantage) over controllable decisions,
    minus an entropy bonus. Critic term: value-coefficient-weighted MSE
    against the GAE returns over all transitions.
    """
    n_actions = policy.arch.n_actions
    m_policy = sum(int(rec.controllable.sum()) for rec in buffer.steps)
    m_value = buffer.n_transitions
    total: Tensor | None = None
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}

    for rec, adv, tgt in zip(buffer.steps, advantages, targets):
        logp, values = policy.forward_tensors(rec.features, rec.adjacency)
        n = len(rec.ids)
        parts: list[Tensor] = []

        if m_policy > 0:
            c_pg = np.zeros((n, n_actions))
            c_ent = np.zeros((n, n_actions))
            for i in range(n):
                if rec.controllable[i]:
                    c_pg[i, rec.actions[i]] = -adv[i] / m_policy
                    c_ent[i, :] = cfg.entropy_coeff / m_policy
            parts.append(tsum(mul(logp, Tensor(c_pg))))
            parts.append(tsum(mul(mul(texp(logp), logp), Tensor(c_ent))))

        c_v = np.full((n, 1), cfg.value_coeff / max(m_value, 1))
        parts.append(tsum(mul(square(sub(values, Tensor(tgt[:, None]))), Tensor(c_v))))

        step_loss = parts[0]
        for p in parts[1:]:
            step_loss = add(step_loss, p)
        total = step_loss if total is None else add(total, step_loss)

        if m_policy > 0:
            mask = rec.controllable
            picked = logp.data[np.arange(n), rec.actions]
            stats["policy_loss"] += float(-(picked[mask] * adv[mask]).sum() / m_policy)
            p = np.exp(logp.data)
            stats["entropy"] += float(-(p[mask] * logp.data[mask]).sum() / m_policy)
        stats["value_loss"] += float(
            cfg.value_coeff * ((values.data[:, 0] - tgt) ** 2).sum() / max(m_value, 1)
        )

    if total is None:
        raise ValueError("empty episode buffer")
    return total, stats


def update(policy: Policy, buffer: EpisodeBuffer, cfg: TrainConfig) -> dict:
    """One gradient step on actor and critic from a collected episode."""
    if not buffer.steps:
        return {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "skipped": True}
    advantages, targets = compute_targets(policy, buffer, cfg)
    loss, stats = build_losses(policy, buffer, cfg, advantages, targets)
    policy.actor.zero_grad()
    policy.critic.zero_grad()
    loss.backward()
    optimizer_step(policy.actor, lr=cfg.learning_rate)
    optimizer_step(policy.critic, lr=cfg.learning_rate)
    stats["skipped"] = False
    return stats


@dataclass
class TrainResult:
    policy: Policy
    episode_stats: list[dict]
    checkpoint_path: str | None
    log_path: str | None


def run_training(
    sim_cfg: SimConfig,
    train_cfg: TrainConfig,
    kind: str,
    seed: int,
    out_dir: str | None = None,
    arch: ArchitectureSpec | None = None,
    progress: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Train a fresh policy for ``train_cfg.episodes`` episodes.

    All randomness stems from ``seed``; with a fixed seed the training log is
    byte-identical across runs. Writes a JSON-lines log, periodic
    checkpoints, and the final ``policy.ckpt`` when ``out_dir`` is given.
    """
    arch = arch if arch is not None else ArchitectureSpec(kind=kind)
    seq = np.random.SeedSequence(seed)
    init_seq, spawn_seq, action_seq = seq.spawn(3)
    policy = Policy(arch, rng=np.random.default_rng(init_seq))
    spawn_rng = np.random.default_rng(spawn_seq)
    action_rng = np.random.default_rng(action_seq)

    log_fh = None
    log_path = None
    traj_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_path = os.path.join(out_dir, "training_log.jsonl")
        log_fh = open(log_path, "w", encoding="utf-8")
        if train_cfg.log_trajectories:
            traj_fh = open(
                os.path.join(out_dir, "trajectories.jsonl"), "w", encoding="utf-8"
            )

    sink = None
    if traj_fh is not None:
        sink = lambda record: traj_fh.write(json.dumps(record, separators=(",", ":")) + "\n")

    episode_stats: list[dict] = []
    checkpoint_path = None
    try:
        for episode in range(train_cfg.episodes):
            buffer, stats = collect_episode(
                policy, sim_cfg, train_cfg, spawn_rng, action_rng, trajectory_sink=sink
            )
            loss_stats = update(policy, buffer, train_cfg)
            created = max(stats["aircraft_created"], 1)
            record = {
                "episode": episode,
                "steps": stats["steps"],
                "aircraft_created": stats["aircraft_created"],
                "crashes": stats["crashes"],
                "conflicts": stats["conflicts"],
                "mean_base_return": stats["base_return"] / created,
                "mean_shaped_return": stats["shaped_return"] / created,
                "policy_loss": loss_stats["policy_loss"],
                "value_loss": loss_stats["value_loss"],
                "entropy": loss_stats["entropy"],
            }
            episode_stats.append(record)
            if log_fh is not None:
                log_fh.write(json.dumps(record, separators=(",", ":")) + "\n")
            if progress is not None:
                progress(record)
            if out_dir is not None and (
                (episode + 1) % train_cfg.checkpoint_every == 0
                or episode + 1 == train_cfg.episodes
            ):
                path = os.path.join(out_dir, f"checkpoint_ep{episode + 1:05d}.ckpt")
                policy.save(path, extra_meta={"episodes_trained": episode + 1, "seed": seed})
        if out_dir is not None:
            checkpoint_path = os.path.join(out_dir, "policy.ckpt")
            policy.save(
                checkpoint_path,
                extra_meta={"episodes_trained": train_cfg.episodes, "seed": seed},
            )
    finally:
        if log_fh is not None:
            log_fh.close()
        if traj_fh is not None:
            traj_fh.close()
    return TrainResult(policy, episode_stats, checkpoint_path, log_path)


_DEFAULT_TRAIN_CFG = TrainConfig()
