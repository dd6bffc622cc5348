"""Three graph filters driven by the same shift recursion.

Runs a graph convolution both as a matrix polynomial and as the recursion
w_k = S w_{k-1}, then feeds the same signal through the recurrent-shift and
gated state-space filters and prints their per-step state norms.

    python demos/filters_as_state_space.py
"""

import numpy as np

from shiftnets.filters import (
    GcnnFilterParams,
    gcnn_filter_direct,
    gcnn_filter_recursive,
    init_params,
    lssm_filter,
    rsn_filter,
)
from shiftnets.graph import normalize_shift, sbm_generate
from shiftnets.numerics import make_rng

rng = make_rng(0)
graph = sbm_generate(30, 3, 0.7, 0.1, rng)
S = normalize_shift(graph)
K = 6

x = np.zeros(graph.n)
x[0] = 1.0

# %% polynomial vs recursion
taps = GcnnFilterParams(rng.uniform(-1, 1, K + 1))
y_rec, trace = gcnn_filter_recursive(S, taps, x)
y_dir = gcnn_filter_direct(S, taps, x)
print("max |recursive - direct| =", np.max(np.abs(y_rec - y_dir)))

# %% nonlinear extensions
rsn = init_params("rsn", K, rng)
lssm = init_params("lssm", K, rng)
_, tr_rsn = rsn_filter(S, rsn, x, sigma_w="tanh", sigma_y="relu")
_, tr_lssm = lssm_filter(S, lssm, x, sigma_y="relu")

print(f"{'k':>2} {'gcnn':>10} {'rsn':>10} {'lssm':>10}")
for k, (a, b, c) in enumerate(zip(trace.state_norms(), tr_rsn.state_norms(), tr_lssm.state_norms())):
    print(f"{k:>2} {a:10.4f} {b:10.4f} {c:10.4f}")

# gate activity of the state-space filter, averaged over nodes
print("mean forget gate per k:", np.round([g.mean() for g in tr_lssm.forget[1:]], 3))
