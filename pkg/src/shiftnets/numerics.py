"""Pointwise nonlinearities and power iteration, plus seeded random streams.

Matrices and vectors are plain ``float64`` numpy arrays. Random streams come
from numpy's ``Generator`` backed by PCG64; stage-specific generators are
derived from a root seed through ``SeedSequence`` so that the graph, data,
initialization and shuffling streams can be varied independently.
"""

from __future__ import annotations

import numpy as np

RNG_ALGORITHM = "numpy.random.Generator(PCG64)"

ACTIVATIONS = ("relu", "tanh", "sigmoid", "identity")

_STAGES = {"graph": 0, "data": 1, "init": 2, "shuffle": 3, "split": 4}


class ConvergenceError(RuntimeError):
    """Power iteration ran out of iterations before settling."""

    def __init__(self, message, last_estimate):
        super().__init__(message)
        self.last_estimate = last_estimate


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def stage_rng(seed, stage):
    """Generator for one pipeline stage, derived deterministically from ``seed``.

    ``seed`` is an int or a tuple of ints (e.g. ``(root, graph, split)``).
    """
    if stage not in _STAGES:
        raise ValueError(f"unknown stage {stage!r}; expected one of {sorted(_STAGES)}")
    parts = [int(v) for v in seed] if isinstance(seed, (tuple, list)) else [int(seed)]
    ss = np.random.SeedSequence(parts + [_STAGES[stage]])
    return np.random.Generator(np.random.PCG64(ss))


def matvec(m, v):
    m = np.asarray(m, dtype=float)
    v = np.asarray(v, dtype=float)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ValueError(f"matvec dimension mismatch: {m.shape} @ {v.shape}")
    return m @ v


def sigmoid(z):
    # tanh form avoids overflow in exp for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def activation(kind, v):
    """Apply the named pointwise nonlinearity."""
    v = np.asarray(v, dtype=float)
    if kind == "relu":
        return np.maximum(v, 0.0)
    if kind == "tanh":
        return np.tanh(v)
    if kind == "sigmoid":
        return sigmoid(v)
    if kind == "identity":
        return v.copy()
    raise ValueError(f"unknown activation {kind!r}")


def activation_grad(kind, v):
    """Derivative of ``activation(kind, .)`` evaluated at the pre-activation ``v``.

    The ReLU derivative at exactly zero is taken to be 0.
    """
    v = np.asarray(v, dtype=float)
    if kind == "relu":
        return (v > 0.0).astype(float)
    if kind == "tanh":
        t = np.tanh(v)
        return 1.0 - t * t
    if kind == "sigmoid":
        s = sigmoid(v)
        return s * (1.0 - s)
    if kind == "identity":
        return np.ones_like(v)
    raise ValueError(f"unknown activation {kind!r}")


def power_iteration(m, tol=1e-12, max_iters=10000):
    """Dominant eigenpair magnitude of a square matrix.

    Iterates ``v <- m v / |m v|`` from the normalized all-ones vector and
    tracks the estimate ``|m v| / |v|``, which converges to the largest
    eigenvalue magnitude even when ``m`` has a ``+rho, -rho`` pair (bipartite
    graphs). If the first product vanishes the iteration restarts once from a
    fixed-seed random vector.

    Returns:
        (estimate, v): the magnitude estimate and the last unit iterate.

    Raises:
        ConvergenceError: successive estimates still differ by ``tol`` or more
            after ``max_iters`` iterations.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"power iteration needs a square matrix, got {m.shape}")
    n = m.shape[0]
    if n == 0:
        raise ValueError("empty matrix")

    v = np.ones(n) / np.sqrt(n)
    mv = m @ v
    if np.linalg.norm(mv) == 0.0:
        v = make_rng(0).standard_normal(n)
        v /= np.linalg.norm(v)
        mv = m @ v
        if np.linalg.norm(mv) == 0.0:
            return 0.0, v

    estimate = np.linalg.norm(mv)
    for _ in range(max_iters):
        v = mv / np.linalg.norm(mv)
        mv = m @ v
        new = np.linalg.norm(mv)
        if abs(new - estimate) < tol * max(1.0, new):
            return float(new), v
        if new == 0.0:
            return 0.0, v
        estimate = new
    raise ConvergenceError(
        f"power iteration did not converge in {max_iters} iterations "
        f"(last estimate {estimate!r})",
        float(estimate),
    )


def spectral_radius(m, tol=1e-12, max_iters=10000):
    return power_iteration(m, tol=tol, max_iters=max_iters)[0]
