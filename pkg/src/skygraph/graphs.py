"""Graph inputs for the control policy.

Every aircraft is a node. Three binary adjacency matrices connect nodes at
three proximity bands (everyone / detection cylinder / penalty cylinder), and
an N x 8 feature matrix carries each aircraft's normalized state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .simulation import AircraftState, SimConfig, wrap_signed

FEATURE_DIM = 8

# Normalization constants; positions scale by the airspace radius.
ALTITUDE_SCALE_M = 10_000.0
SPEED_SCALE_MS = 250.0
HEADING_SCALE_DEG = 180.0


@dataclass(frozen=True)
class AdjacencySet:
    """The three N x N binary adjacency matrices, rows/cols in ``id_order``.

    All matrices are symmetric with a zero diagonal, and every penalty edge
    is also a detection edge (the cylinders nest).
    """

    a_global: np.ndarray
    a_detect: np.ndarray
    a_penalty: np.ndarray
    id_order: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.id_order)


def build_adjacency(states: Sequence[AircraftState], cfg: SimConfig) -> AdjacencySet:
    """Connect aircraft globally, within detection range, and within penalty
    range. No self-loops: own-state information flows through the network's
    skip connection instead."""
    n = len(states)
    ids = tuple(st.id for st in states)
    if n == 0:
        z = np.zeros((0, 0))
        return AdjacencySet(z, z.copy(), z.copy(), ids)
    x = np.array([st.x for st in states])
    y = np.array([st.y for st in states])
    z = np.array([st.z for st in states])
    d_h = np.hypot(x[:, None] - x[None, :], y[:, None] - y[None, :])
    d_v = np.abs(z[:, None] - z[None, :])
    detect = (d_h < cfg.detection_radius_m) & (d_v < cfg.detection_halfheight_m)
    penalty = (d_h < cfg.penalty_radius_m) & (d_v < cfg.penalty_halfheight_m)
    np.fill_diagonal(detect, False)
    np.fill_diagonal(penalty, False)
    a_global = np.ones((n, n)) - np.eye(n)
    return AdjacencySet(a_global, detect.astype(float), penalty.astype(float), ids)


def feature_row(state: AircraftState, cfg: SimConfig) -> np.ndarray:
    """Normalized 8-vector (x, y, z, h, s, z_diff, s_diff, h_diff)."""
    return np.array(
        [
            state.x / cfg.airspace_radius_m,
            state.y / cfg.airspace_radius_m,
            state.z / ALTITUDE_SCALE_M,
            (state.h - 180.0) / HEADING_SCALE_DEG,
            state.s / SPEED_SCALE_MS,
            state.z_diff / ALTITUDE_SCALE_M,
            state.s_diff / SPEED_SCALE_MS,
            wrap_signed(state.h_des - state.h) / HEADING_SCALE_DEG,
        ]
    )


def build_features(states: Sequence[AircraftState], cfg: SimConfig) -> np.ndarray:
    """N x 8 feature matrix, row i matching ``id_order[i]`` of the adjacency."""
    if not states:
        return np.zeros((0, FEATURE_DIM))
    return np.stack([feature_row(st, cfg) for st in states])
