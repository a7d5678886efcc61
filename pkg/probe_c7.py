"""Scratch probe for the scaled learning check (kept out of the package)."""
import json
import sys
import time

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

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 7
lr = float(sys.argv[2]) if len(sys.argv) > 2 else 3e-4
ent = float(sys.argv[3]) if len(sys.argv) > 3 else 0.01
episodes = int(sys.argv[4]) if len(sys.argv) > 4 else 500

sim_cfg = sg.SimConfig()
tcfg = TrainConfig(episodes=episodes, learning_rate=lr, entropy_coeff=ent)

t0 = time.time()
window = []


def progress(rec):
    window.append(rec)
    if (rec["episode"] + 1) % 25 == 0:
        recent = window[-25:]
        print(
            f"ep {rec['episode']+1:4d}  base {np.mean([r['mean_base_return'] for r in recent]):+8.2f}  "
            f"crashes {np.mean([r['crashes'] for r in recent]):.2f}  "
            f"conflicts {np.mean([r['conflicts'] for r in recent]):.2f}  "
            f"steps {np.mean([r['steps'] for r in recent]):.0f}  "
            f"ent {np.mean([r['entropy'] for r in recent]):.3f}  "
            f"t={time.time()-t0:.0f}s",
            flush=True,
        )


result = run_training(sim_cfg, tcfg, "gat", seed=seed, progress=progress)
train_time = time.time() - t0
print(f"train time: {train_time:.0f}s", flush=True)

ecfg = EvalConfig(duration_s=2 * 3600.0, density=1.0)
rng = np.random.default_rng(123)
trained = run_experiment(policy_controller(result.policy, "greedy", rng), sim_cfg, ecfg, seed=99)
noop = run_experiment(noop_controller(), sim_cfg, ecfg, seed=99)
rand = run_experiment(random_controller(np.random.default_rng(5)), sim_cfg, ecfg, seed=99)
for name, rep in (("trained", trained), ("noop", noop), ("random", rand)):
    print(
        f"{name:8s} solved {rep.conflicts_solved_pct:6.1f}%  crashes {rep.crashes:3d}  "
        f"pairs {rep.potential_conflicts}  delay {rep.avg_delay_s:8.1f}  "
        f"extra_mnv {rep.avg_extra_maneuvers:7.1f}  correct {rep.correct_exit_pct:5.1f}%",
        flush=True,
    )
print(json.dumps({"seed": seed, "lr": lr, "ent": ent, "train_time_s": train_time}))
