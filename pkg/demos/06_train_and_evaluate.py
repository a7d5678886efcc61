"""A miniature end-to-end run: train briefly, evaluate against baselines.

Sixty episodes in a shrunken airspace are far from convergence but already
show fewer crashes than the do-nothing controller. Scale the episode count
and airspace back up (SimConfig/TrainConfig defaults) for real runs, or use
the CLI: ``skygraph train --out runs/demo`` then ``skygraph eval``.
"""

import numpy as np

import skygraph as sg
from skygraph.evaluation import (
    EvalConfig,
    noop_controller,
    policy_controller,
    random_controller,
    run_experiment,
)
from skygraph.training import TrainConfig, run_training

sim_cfg = sg.SimConfig(airspace_radius_m=60_000.0)
train_cfg = TrainConfig(
    episodes=60,
    learning_rate=3e-3,
    max_aircraft=6,
    aircraft_per_episode=10,
    max_steps_per_episode=400,
)

result = run_training(
    sim_cfg,
    train_cfg,
    "gat",
    seed=1,
    progress=lambda r: print(
        f"episode {r['episode'] + 1:3d}: return {r['mean_base_return']:+7.2f} "
        f"crashes {r['crashes']}"
    )
    if (r["episode"] + 1) % 10 == 0
    else None,
)

eval_cfg = EvalConfig(duration_s=1800.0, density=3.0)
controllers = {
    "trained (greedy)": policy_controller(result.policy, "greedy", np.random.default_rng(0)),
    "no-op baseline": noop_controller(),
    "random baseline": random_controller(np.random.default_rng(1)),
}
print("\n30 simulated minutes at 3x density:")
for name, controller in controllers.items():
    rep = run_experiment(controller, sim_cfg, eval_cfg, seed=5)
    print(
        f"  {name:<17} crashes {rep.crashes:3d}  solved {rep.conflicts_solved_pct:5.1f}%  "
        f"pairs {rep.potential_conflicts}"
    )
