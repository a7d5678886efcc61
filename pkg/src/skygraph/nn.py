"""Network building blocks on top of the autodiff engine.

Linear, graph-convolution and graph-attention layers, fan-in-scaled uniform
initialization, an adaptive-moment optimizer, and a binary checkpoint format
for named parameter archives.
"""

from __future__ import annotations

import struct
from typing import Iterable, Iterator

import json

import numpy as np

from .autodiff import (
    Tensor,
    add,
    leaky_relu,
    masked_row_softmax,
    matmul,
    rows,
    transpose,
)

CHECKPOINT_VERSION = 1
LEAKY_SLOPE = 0.2


class CheckpointError(RuntimeError):
    """Raised for malformed, truncated or incompatible checkpoint files."""


class ParameterStore:
    """Ordered name -> Tensor map for one network's trainable weights,
    with per-parameter moment buffers for the optimizer."""

    def __init__(self) -> None:
        self._params: dict[str, Tensor] = {}
        self.moments: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self.step_count = 0

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        self.moments[name] = (np.zeros_like(t.data), np.zeros_like(t.data))
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._params.items())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self._params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, t in self._params.items():
            if name not in arrays:
                raise CheckpointError(f"missing parameter {name!r}")
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != t.data.shape:
                raise CheckpointError(
                    f"shape mismatch for {name!r}: stored {value.shape}, "
                    f"expected {t.data.shape}"
                )
            t.data = value.copy()


def uniform_fan_in(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """Uniform(-a, a) with a = sqrt(3/fan_in), so Var(w) = 1/fan_in."""
    limit = np.sqrt(3.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def init_parameters(
    rng: np.random.Generator, layout: Iterable[tuple[str, tuple[int, ...], int | None]]
) -> ParameterStore:
    """Build a store from (name, shape, fan_in) entries, in order. Entries
    with ``fan_in`` None are biases, initialized to zero. Deterministic for a
    given generator state."""
    store = ParameterStore()
    for name, shape, fan_in in layout:
        if fan_in is None:
            store.add(name, np.zeros(shape))
        else:
            store.add(name, uniform_fan_in(rng, shape, fan_in))
    return store


def linear_forward(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """X @ W + b with the bias broadcast over rows."""
    return add(matmul(x, w), b)


def gcn_forward(x: Tensor, adjacency: np.ndarray, w: Tensor, b: Tensor) -> Tensor:
    """Neighbor-mean aggregation followed by a linear map.

    Rows with no neighbors aggregate to zero and therefore output the bias.
    """
    deg = adjacency.sum(axis=1, keepdims=True)
    norm = adjacency / np.maximum(deg, 1.0)
    return add(matmul(matmul(Tensor(norm), x), w), b)


def gat_forward(
    x: Tensor,
    adjacency: np.ndarray,
    w: Tensor,
    attn: Tensor,
    return_attention: bool = False,
):
    """Single-head attention aggregation over the adjacency's edges.

    Edge scores are LeakyReLU(attn . [h_i || h_j]) with h = XW; attention is
    a softmax over each node's neighbor set. Isolated rows output zero.
    """
    h = matmul(x, w)
    f = h.data.shape[1]
    a_src = rows(attn, 0, f)
    a_dst = rows(attn, f, 2 * f)
    scores = add(matmul(h, a_src), transpose(matmul(h, a_dst)))
    alpha = masked_row_softmax(leaky_relu(scores, LEAKY_SLOPE), adjacency > 0)
    out = matmul(alpha, h)
    if return_attention:
        return out, alpha
    return out


def optimizer_step(
    store: ParameterStore,
    lr: float = 3e-4,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> None:
    """One adaptive-moment update on the stored gradients; gradients are
    cleared afterwards. Parameters with no gradient this round keep their
    moments decaying toward zero."""
    beta1, beta2 = betas
    store.step_count += 1
    t = store.step_count
    bias1 = 1.0 - beta1**t
    bias2 = 1.0 - beta2**t
    for name, p in store.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m, v = store.moments[name]
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        store.moments[name] = (m, v)
        p.data -= lr * (m / bias1) / (np.sqrt(v / bias2) + eps)
        p.grad = None


def save_checkpoint(path: str, arrays: dict[str, np.ndarray], meta: dict) -> None:
    """Write a flat little-endian archive.

    Layout: u32 format version, u32 metadata length, metadata (UTF-8 JSON),
    u32 parameter count, then per parameter: u32 name length, name bytes,
    u32 rank, u64 per dimension, and the row-major float64 values.
    """
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(arrays)))
        for name, value in arrays.items():
            arr = np.ascontiguousarray(value, dtype="<f8")
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<I", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(arr.tobytes())


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    """Read an archive written by :func:`save_checkpoint`; bit-exact."""
    with open(path, "rb") as fh:
        blob = fh.read()

    offset = 0

    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(blob):
            raise CheckpointError(f"truncated checkpoint {path!r}")
        piece = blob[offset : offset + n]
        offset += n
        return piece

    (version,) = struct.unpack("<I", take(4))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack("<I", take(4))
    try:
        meta = json.loads(take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint metadata in {path!r}") from exc
    (count,) = struct.unpack("<I", take(4))
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = tuple(struct.unpack("<Q", take(8))[0] for _ in range(rank))
        size = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(take(size * 8), dtype="<f8").reshape(dims)
        arrays[name] = data.astype(np.float64)
    if offset != len(blob):
        raise CheckpointError(f"trailing bytes in checkpoint {path!r}")
    return arrays, meta
