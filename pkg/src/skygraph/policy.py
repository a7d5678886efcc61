"""Actor and critic networks over aircraft graphs.

Both networks share one architecture and no weights: two feed-forward
embedding layers, three parallel graph layers (one per adjacency matrix), a
four-way skip sum, a dense layer, and a softmax action head (actor) or a
linear value head (critic). The graph layers are either graph-convolution or
graph-attention, switched by one config field.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Tensor, add, no_grad, relu, row_log_softmax, texp
from .graphs import FEATURE_DIM, AdjacencySet
from .nn import (
    CheckpointError,
    ParameterStore,
    gat_forward,
    gcn_forward,
    init_parameters,
    linear_forward,
    load_checkpoint,
    save_checkpoint,
)
from .simulation import Action

N_ACTIONS = 7
GRAPH_LAYER_NAMES = ("graph_global", "graph_detect", "graph_penalty")


@dataclass(frozen=True)
class ArchitectureSpec:
    """Network dimensions plus the graph-layer kind ("gcn" or "gat").

    Defaults are the production sizes; tests shrink them for exhaustive
    gradient checks.
    """

    kind: str
    feature_dim: int = FEATURE_DIM
    embed_dims: tuple[int, int] = (64, 128)
    dense_dim: int = 64
    n_actions: int = N_ACTIONS

    def __post_init__(self) -> None:
        if self.kind not in ("gcn", "gat"):
            raise ValueError(f"unknown graph layer kind {self.kind!r}")
        dims = (self.feature_dim, *self.embed_dims, self.dense_dim, self.n_actions)
        if any(d <= 0 for d in dims):
            raise ValueError("all architecture dimensions must be positive")

    @property
    def graph_dim(self) -> int:
        return self.embed_dims[1]

    def to_meta(self) -> dict:
        return {
            "kind": self.kind,
            "feature_dim": self.feature_dim,
            "embed_dims": list(self.embed_dims),
            "dense_dim": self.dense_dim,
            "n_actions": self.n_actions,
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "ArchitectureSpec":
        try:
            return cls(
                kind=meta["kind"],
                feature_dim=int(meta["feature_dim"]),
                embed_dims=tuple(int(d) for d in meta["embed_dims"]),
                dense_dim=int(meta["dense_dim"]),
                n_actions=int(meta["n_actions"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"incomplete architecture metadata: {exc}") from exc


@dataclass
class PolicyOutput:
    """Per-aircraft action distributions and value estimates."""

    probs: np.ndarray  # N x n_actions, rows on the simplex
    values: np.ndarray  # N


def network_layout(arch: ArchitectureSpec, head_dim: int):
    d_in, (d1, d2), d3 = arch.feature_dim, arch.embed_dims, arch.dense_dim
    layout: list[tuple[str, tuple[int, ...], int | None]] = [
        ("embed1.w", (d_in, d1), d_in),
        ("embed1.b", (d1,), None),
        ("embed2.w", (d1, d2), d1),
        ("embed2.b", (d2,), None),
    ]
    for name in GRAPH_LAYER_NAMES:
        layout.append((f"{name}.w", (d2, d2), d2))
        if arch.kind == "gcn":
            layout.append((f"{name}.b", (d2,), None))
        else:
            layout.append((f"{name}.attn", (2 * d2, 1), 2 * d2))
    layout += [
        ("dense.w", (d2, d3), d2),
        ("dense.b", (d3,), None),
        ("head.w", (d3, head_dim), d3),
        ("head.b", (head_dim,), None),
    ]
    return layout


def network_forward(
    store: ParameterStore, arch: ArchitectureSpec, features: np.ndarray, adj: AdjacencySet
) -> Tensor:
    """Run one network up to its head output (N x head_dim logits/values)."""
    x = Tensor(features)
    e = relu(linear_forward(x, store["embed1.w"], store["embed1.b"]))
    e = relu(linear_forward(e, store["embed2.w"], store["embed2.b"]))
    matrices = (adj.a_global, adj.a_detect, adj.a_penalty)
    summed = e
    for name, a in zip(GRAPH_LAYER_NAMES, matrices):
        if arch.kind == "gcn":
            g = gcn_forward(e, a, store[f"{name}.w"], store[f"{name}.b"])
        else:
            g = gat_forward(e, a, store[f"{name}.w"], store[f"{name}.attn"])
        summed = add(summed, g)
    s = relu(summed)
    hidden = relu(linear_forward(s, store["dense.w"], store["dense.b"]))
    return linear_forward(hidden, store["head.w"], store["head.b"])


class Policy:
    """Actor-critic pair over one architecture, with disjoint parameters."""

    def __init__(
        self,
        arch: ArchitectureSpec,
        rng: np.random.Generator | None = None,
        actor: ParameterStore | None = None,
        critic: ParameterStore | None = None,
    ):
        self.arch = arch
        if actor is not None and critic is not None:
            self.actor, self.critic = actor, critic
        else:
            rng = rng if rng is not None else np.random.default_rng(0)
            self.actor = init_parameters(rng, network_layout(arch, arch.n_actions))
            self.critic = init_parameters(rng, network_layout(arch, 1))

    def forward_tensors(self, features: np.ndarray, adj: AdjacencySet) -> tuple[Tensor, Tensor]:
        """(log-probs N x A, values N x 1) with the graph recorded for
        backpropagation. Call inside ``no_grad()`` for inference."""
        logits = network_forward(self.actor, self.arch, features, adj)
        values = network_forward(self.critic, self.arch, features, adj)
        return row_log_softmax(logits), values

    def output(self, features: np.ndarray, adj: AdjacencySet) -> PolicyOutput:
        """Inference-mode forward; no graph is recorded."""
        n = features.shape[0]
        if n == 0:
            return PolicyOutput(np.zeros((0, self.arch.n_actions)), np.zeros(0))
        with no_grad():
            logp, values = self.forward_tensors(features, adj)
            probs = texp(logp)
        return PolicyOutput(probs.data, values.data[:, 0])

    def save(self, path: str, extra_meta: dict | None = None) -> None:
        arrays: dict[str, np.ndarray] = {}
        for prefix, store in (("actor/", self.actor), ("critic/", self.critic)):
            for name, t in store.items():
                arrays[prefix + name] = t.data
        meta = {"architecture": self.arch.to_meta()}
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(path, arrays, meta)

    @classmethod
    def load(cls, path: str, expected: ArchitectureSpec | None = None) -> "Policy":
        """Rebuild a policy from a checkpoint, refusing mismatched
        architectures with a diagnostic."""
        arrays, meta = load_checkpoint(path)
        if "architecture" not in meta:
            raise CheckpointError(f"{path!r} carries no architecture metadata")
        arch = ArchitectureSpec.from_meta(meta["architecture"])
        if expected is not None and arch != expected:
            raise CheckpointError(
                f"architecture mismatch: checkpoint {arch.to_meta()} vs expected "
                f"{expected.to_meta()}"
            )
        policy = cls(arch, rng=np.random.default_rng(0))
        for prefix, store in (("actor/", policy.actor), ("critic/", policy.critic)):
            subset = {
                name[len(prefix) :]: value
                for name, value in arrays.items()
                if name.startswith(prefix)
            }
            store.load_arrays(subset)
        return policy


def sample_actions(
    output: PolicyOutput, rng: np.random.Generator
) -> tuple[list[Action], list[float]]:
    """Draw one action per aircraft from its row distribution; log
    probabilities feed the policy-gradient estimator."""
    actions: list[Action] = []
    log_probs: list[float] = []
    for row in output.probs:
        cdf = np.cumsum(row)
        idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        idx = min(idx, len(row) - 1)
        actions.append(Action(idx))
        log_probs.append(float(np.log(max(row[idx], 1e-300))))
    return actions, log_probs


def greedy_actions(output: PolicyOutput) -> list[Action]:
    """Per-row argmax; ties break toward the lowest action index."""
    return [Action(int(i)) for i in np.argmax(output.probs, axis=1)]
