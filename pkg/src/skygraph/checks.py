"""Property oracles shared by the test suite and the ``selftest`` command.

Each check re-derives an expected result by an independent route (hand
kinematics, brute-force sums, finite differences, isolated rollouts) and
compares the implementation against it.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .autodiff import Tensor, no_grad
from .graphs import build_adjacency, build_features
from .policy import ArchitectureSpec, Policy
from .simulation import (
    Action,
    AircraftState,
    ProximityClass,
    SimConfig,
    classify_pair,
    spawn_conflict_pair,
    step_aircraft,
    _no_action_rollout_crashes,
)
from .training import EpisodeBuffer, TrainConfig, build_losses, compute_gae, compute_targets


def gae_reference(
    rewards: np.ndarray, values: np.ndarray, terminal_value: float, gamma: float, lam: float
) -> np.ndarray:
    """Explicit double sum A_t = sum_k (gamma*lam)^k * delta_{t+k}."""
    n = len(rewards)
    v_next = np.append(values[1:], terminal_value)
    deltas = rewards + gamma * v_next - values
    out = np.zeros(n)
    for t in range(n):
        for k in range(n - t):
            out[t] += (gamma * lam) ** k * deltas[t + k]
    return out


def random_states(
    rng: np.random.Generator, n: int, cfg: SimConfig, spread: float = 0.3
) -> list[AircraftState]:
    """Aircraft scattered near the center, spaced to hit all proximity bands."""
    states = []
    for i in range(n):
        states.append(
            AircraftState(
                id=i,
                x=float(rng.uniform(-spread, spread) * cfg.airspace_radius_m),
                y=float(rng.uniform(-spread, spread) * cfg.airspace_radius_m),
                z=float(rng.choice(cfg.altitude_grid())),
                h=float(rng.choice(cfg.heading_grid())),
                s=float(rng.choice(cfg.speed_grid())),
                z_des=float(rng.choice(cfg.altitude_grid())),
                s_des=float(rng.choice(cfg.speed_grid())),
                h_des=float(rng.choice(cfg.heading_grid())),
            )
        )
    return states


def crowded_states(rng: np.random.Generator, n: int, cfg: SimConfig) -> list[AircraftState]:
    """States packed within a few detection radii so all three adjacency
    matrices carry edges."""
    states = random_states(rng, n, cfg)
    for i, st in enumerate(states):
        st.x = float(rng.uniform(-2.0, 2.0) * cfg.detection_radius_m)
        st.y = float(rng.uniform(-2.0, 2.0) * cfg.detection_radius_m)
        st.z = float(rng.choice(cfg.altitude_grid()[:6]))
    return states


def tiny_training_buffer(
    rng: np.random.Generator, policy: Policy, cfg: SimConfig, n_steps: int = 3, n_aircraft: int = 3
) -> EpisodeBuffer:
    """Synthetic episode buffer over random crowded worlds, for loss-level
    gradient checks without running the simulator."""
    from .graphs import AdjacencySet
    from .training import StepRecord

    buffer = EpisodeBuffer()
    for _ in range(n_steps):
        states = crowded_states(rng, n_aircraft, cfg)
        features = build_features(states, cfg)
        adjacency = build_adjacency(states, cfg)
        n = len(states)
        controllable = rng.random(n) > 0.2
        if not controllable.any():
            controllable[0] = True
        actions = rng.integers(0, policy.arch.n_actions, size=n)
        actions[~controllable] = int(Action.NO_ACTION)
        buffer.steps.append(
            StepRecord(
                ids=tuple(st.id + 100 * len(buffer.steps) for st in states),
                features=features,
                adjacency=adjacency,
                actions=actions,
                log_probs=np.zeros(n),
                controllable=controllable,
                base_rewards=rng.normal(size=n),
                shaped_rewards=rng.normal(size=n),
                dones=rng.random(n) > 0.7,
                phi_prev=np.zeros(n),
                phi_next=np.zeros(n),
            )
        )
    buffer.final_ids = ()
    return buffer


def composite_loss_gradcheck(
    seed: int,
    kind: str,
    eps: float = 1e-5,
    rel_tol: float = 1e-4,
) -> float:
    """Max relative error between analytic and central-difference gradients
    of the full training loss on one tiny random instance."""
    rng = np.random.default_rng(seed)
    arch = ArchitectureSpec(
        kind=kind, feature_dim=8, embed_dims=(5, 6), dense_dim=4, n_actions=7
    )
    policy = Policy(arch, rng=rng)
    # jitter every parameter so no preactivation sits exactly on a ReLU kink
    # (zero-initialized biases otherwise pin dead rows to the kink, where
    # finite differences and subgradients legitimately disagree)
    for store in (policy.actor, policy.critic):
        for _, p in store.items():
            p.data += rng.normal(0.0, 0.05, size=p.data.shape)
    cfg = SimConfig()
    tcfg = TrainConfig(entropy_coeff=0.013, value_coeff=0.4)
    buffer = tiny_training_buffer(rng, policy, cfg, n_steps=2, n_aircraft=3)
    advantages, targets = compute_targets(policy, buffer, tcfg)

    loss, _ = build_losses(policy, buffer, tcfg, advantages, targets)
    policy.actor.zero_grad()
    policy.critic.zero_grad()
    loss.backward()

    def loss_value() -> float:
        with no_grad():
            l, _ = build_losses(policy, buffer, tcfg, advantages, targets)
        return float(l.data)

    def central_difference(flat, i, step) -> float:
        orig = flat[i]
        flat[i] = orig + step
        up = loss_value()
        flat[i] = orig - step
        down = loss_value()
        flat[i] = orig
        return (up - down) / (2.0 * step)

    def rel_error(a: float, b: float) -> float:
        return abs(a - b) / max(abs(a), abs(b), 1e-6)

    worst = 0.0
    for store in (policy.actor, policy.critic):
        for name, p in store.items():
            analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            grad_flat = analytic.reshape(-1)
            for i in range(flat.size):
                numeric = central_difference(flat, i, eps)
                err = rel_error(grad_flat[i], numeric)
                # a ReLU kink inside the step window breaks the central
                # difference itself; shrinking the window isolates the
                # true local slope
                for refine in (16.0, 256.0, 1024.0):
                    if err <= rel_tol:
                        break
                    numeric = central_difference(flat, i, eps / refine)
                    err = rel_error(grad_flat[i], numeric)
                worst = max(worst, err)
    return worst


def forward_outputs(
    policy: Policy, features: np.ndarray, adjacency
) -> tuple[np.ndarray, np.ndarray]:
    out = policy.output(features, adjacency)
    return out.probs, out.values


def equivariance_error(seed: int, kind: str, n: int) -> float:
    """Max elementwise deviation from exact permutation of probs/values."""
    rng = np.random.default_rng(seed)
    cfg = SimConfig()
    policy = Policy(ArchitectureSpec(kind=kind), rng=rng)
    states = crowded_states(rng, n, cfg)
    features = build_features(states, cfg)
    adjacency = build_adjacency(states, cfg)
    probs, values = forward_outputs(policy, features, adjacency)

    perm = rng.permutation(n)
    permuted_states = [states[i] for i in perm]
    p_features = build_features(permuted_states, cfg)
    p_adjacency = build_adjacency(permuted_states, cfg)
    p_probs, p_values = forward_outputs(policy, p_features, p_adjacency)
    return max(
        float(np.abs(p_probs - probs[perm]).max()),
        float(np.abs(p_values - values[perm]).max()),
    )


def run_selftest(emit: Callable[[str], None] = print) -> bool:
    """Run the quick property oracles; one line per check."""
    ok = True

    def check(name: str, passed: bool, detail: str = "") -> None:
        nonlocal ok
        ok = ok and passed
        emit(f"{'ok  ' if passed else 'FAIL'} {name}" + (f": {detail}" if detail else ""))

    cfg = SimConfig()
    rng = np.random.default_rng(2024)

    st = AircraftState(id=0, x=0, y=0, z=8000, h=90.0, s=250.0, z_des=8000, s_des=250, h_des=90)
    moved = step_aircraft(st, Action.NO_ACTION, 5.0, cfg)
    check(
        "kinematics: due-east no-action step",
        abs(moved.x - 1250.0) < 1e-9 and abs(moved.y) < 1e-9 and moved.z == 8000.0,
    )

    sym_ok = True
    nest_ok = True
    for _ in range(200):
        a, b = random_states(rng, 2, cfg, spread=0.05)
        b.id = 1
        c_ab = classify_pair(a, b, cfg)
        c_ba = classify_pair(b, a, cfg)
        sym_ok &= c_ab == c_ba
        if c_ab == ProximityClass.CRASH:
            d_h = math.hypot(a.x - b.x, a.y - b.y)
            d_v = abs(a.z - b.z)
            nest_ok &= d_h < cfg.penalty_radius_m and d_v < cfg.penalty_halfheight_m
    check("proximity: classification symmetric", sym_ok)
    check("proximity: crash implies penalty cylinder", nest_ok)

    crashes = sum(
        _no_action_rollout_crashes(spawn_conflict_pair(rng, cfg), cfg) for _ in range(100)
    )
    check("spawner: 100/100 pairs crash under no-action", crashes == 100, f"{crashes}/100")

    worst = 0.0
    for i in range(200):
        t = int(rng.integers(1, 11))
        rewards = rng.normal(size=t)
        values = rng.normal(size=t)
        gamma = float(rng.uniform(0.5, 1.0))
        lam = float(rng.uniform(0.0, 1.0))
        terminal = float(rng.normal())
        got = compute_gae(rewards, values, terminal, gamma, lam)
        want = gae_reference(rewards, values, terminal, gamma, lam)
        worst = max(worst, float(np.abs(got - want).max()))
    check("gae: recursion equals double sum", worst < 1e-12, f"max err {worst:.2e}")

    err = max(composite_loss_gradcheck(11, "gcn"), composite_loss_gradcheck(12, "gat"))
    check("gradients: composite loss vs finite differences", err < 1e-4, f"max rel {err:.2e}")

    eq = max(equivariance_error(5, "gcn", 6), equivariance_error(6, "gat", 6))
    check("policy: permutation equivariance", eq < 1e-9, f"max dev {eq:.2e}")

    q1, med, q3 = np.percentile([1.0, 2.0, 3.0, 4.0, 5.0], [25, 50, 75])
    check("aggregate: quantiles of 1..5", med == 3.0 and q3 - q1 == 2.0)

    return ok
