"""Exploding and vanishing states of the linear shift recursion.

Compares the raw SBM adjacency with the spectrally normalized shift and shows
that the per-step growth rate tracks the eigenvalue the input excites.

    python demos/stability.py
"""

import numpy as np

from shiftnets.diagnostics import compare_filter_traces, state_norm_trace
from shiftnets.filters import init_params
from shiftnets.graph import normalize_shift, sbm_generate, unnormalized_shift
from shiftnets.numerics import make_rng

rng = make_rng(1)
graph = sbm_generate(50, 5, 0.8, 0.2, rng)
A = unnormalized_shift(graph)
S = normalize_shift(graph)
K = 20

ones = np.ones(graph.n) / np.sqrt(graph.n)
for name, shift in (("adjacency", A), ("normalized", S)):
    rep = state_norm_trace(shift, ones, K)
    print(f"{name:>10}: rate {rep.growth_rate:8.4f}  rho {rep.spectral_radius:8.4f}  -> {rep.classification}")

# an input living on the second eigenvector decays at |lambda_2|
w, v = np.linalg.eigh(S.matrix)
order = np.argsort(-np.abs(w))
rep = state_norm_trace(S, v[:, order[1]], K)
print(f"second eigenvector: rate {rep.growth_rate:.6f}, |lambda_2| {abs(w[order[1]]):.6f} -> {rep.classification}")

# the nonlinear filters keep their states bounded on the raw adjacency
taps, rsn, lssm = (init_params(k, 8, rng) for k in ("gcnn", "rsn", "lssm"))
rows = compare_filter_traces(A, ones, 8, taps, rsn, lssm, sigma_w="tanh")
print(f"{'k':>2} {'gcnn':>12} {'rsn':>8} {'lssm':>8}")
for r in rows:
    print(f"{r['k']:>2} {r['norm_gcnn']:12.4g} {r['norm_rsn']:8.4f} {r['norm_lssm']:8.4f}")
