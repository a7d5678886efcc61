"""Graph-policy en-route airspace control.

A kinematic multi-aircraft simulator, graph actor-critic networks (GCN or
GAT) on a hand-rolled autodiff core, shaped-reward training with generalized
advantage estimation, and a day-scale evaluation harness.
"""

from .autodiff import Tensor, no_grad
from .evaluation import (
    EvalConfig,
    MetricsReport,
    aggregate,
    evaluate_models,
    noop_controller,
    policy_controller,
    random_controller,
    run_experiment,
)
from .graphs import AdjacencySet, build_adjacency, build_features
from .nn import (
    CheckpointError,
    ParameterStore,
    gat_forward,
    gcn_forward,
    linear_forward,
    load_checkpoint,
    optimizer_step,
    save_checkpoint,
)
from .policy import (
    ArchitectureSpec,
    Policy,
    PolicyOutput,
    greedy_actions,
    sample_actions,
)
from .simulation import (
    Action,
    AircraftState,
    PairGenerationError,
    ProximityClass,
    SimConfig,
    World,
    WorldEvent,
    classify_pair,
    nominal_profile,
    spawn_conflict_pair,
    step_aircraft,
)
from .training import (
    EpisodeBuffer,
    TrainConfig,
    base_reward,
    collect_episode,
    compute_gae,
    potential,
    run_training,
    shaped_reward,
    update,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "AdjacencySet",
    "AircraftState",
    "ArchitectureSpec",
    "CheckpointError",
    "EpisodeBuffer",
    "EvalConfig",
    "MetricsReport",
    "PairGenerationError",
    "ParameterStore",
    "Policy",
    "PolicyOutput",
    "ProximityClass",
    "SimConfig",
    "Tensor",
    "TrainConfig",
    "World",
    "WorldEvent",
    "aggregate",
    "base_reward",
    "build_adjacency",
    "build_features",
    "classify_pair",
    "collect_episode",
    "compute_gae",
    "evaluate_models",
    "gat_forward",
    "gcn_forward",
    "greedy_actions",
    "linear_forward",
    "load_checkpoint",
    "no_grad",
    "nominal_profile",
    "noop_controller",
    "optimizer_step",
    "policy_controller",
    "potential",
    "random_controller",
    "run_experiment",
    "run_training",
    "sample_actions",
    "save_checkpoint",
    "shaped_reward",
    "spawn_conflict_pair",
    "step_aircraft",
    "update",
]
