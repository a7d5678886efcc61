"""The reverse-mode core, checked against finite differences.

A two-layer graph network is differentiated analytically; each gradient
entry is then re-derived by central differences.
"""

import numpy as np

from skygraph.autodiff import Tensor, mul, no_grad, relu, tsum
from skygraph.nn import gat_forward, gcn_forward

rng = np.random.default_rng(0)
adjacency = np.array([[0, 1, 1], [1, 0, 0], [1, 0, 0]], dtype=float)

x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
w = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
b = Tensor(rng.normal(size=4), requires_grad=True)
attn = Tensor(rng.normal(size=(8, 1)), requires_grad=True)
weights = Tensor(rng.normal(size=(3, 4)))  # fixed projection to a scalar


def loss():
    hidden = relu(gcn_forward(x, adjacency, w, b))
    return tsum(mul(gat_forward(hidden, adjacency, w, attn), weights))


loss().backward()

eps = 1e-6
for name, p in (("w", w), ("b", b), ("attn", attn)):
    flat = p.data.reshape(-1)
    analytic = p.grad.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        with no_grad():
            up = float(loss().data)
        flat[i] = orig - eps
        with no_grad():
            down = float(loss().data)
        flat[i] = orig
        numeric = (up - down) / (2 * eps)
        worst = max(worst, abs(analytic[i] - numeric))
    print(f"{name}: max |analytic - numeric| = {worst:.3e} over {flat.size} entries")
