"""The three adjacency matrices and the normalized feature matrix.

Four aircraft at staged separations: the global matrix connects everyone,
the detection matrix only the middle cluster, and the penalty matrix the one
pair violating separation minima.
"""

import numpy as np

import skygraph as sg

cfg = sg.SimConfig()


def aircraft(aid, x_km, z=8000.0):
    return sg.AircraftState(
        id=aid, x=x_km * 1000.0, y=0.0, z=z, h=0.0, s=230.0,
        z_des=z, s_des=230.0, h_des=0.0,
    )


states = [
    aircraft(0, 0.0),      # reference
    aircraft(1, 5.0),      # inside the penalty cylinder of 0
    aircraft(2, 15.0),     # detection range of 1, detection of 0
    aircraft(3, 120.0),    # far away: global connectivity only
]

for a in states:
    for b in states:
        if a.id < b.id:
            cls = sg.classify_pair(a, b, cfg)
            print(f"pair ({a.id},{b.id}): {cls.name}")

adj = sg.build_adjacency(states, cfg)
np.set_printoptions(precision=0)
print("\nglobal adjacency:\n", adj.a_global)
print("detection adjacency:\n", adj.a_detect)
print("penalty adjacency:\n", adj.a_penalty)

features = sg.build_features(states, cfg)
np.set_printoptions(precision=3, suppress=True)
print("\nnormalized features (x, y, z, h, s, z_diff, s_diff, h_diff):")
print(features)
