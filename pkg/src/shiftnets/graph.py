"""Graphs, shift operators, stochastic block models and the graph file format.

Adjacency follows the shift-operator convention: ``A[i, j]`` is non-zero when
there is an edge from ``j`` into ``i``. In the JSON graph file an entry
``[i, j, w]`` of a directed graph is the edge ``i -> j`` and lands in
``A[j, i]``; for undirected graphs each pair is listed once and mirrored.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import spectral_radius


class GraphFormatError(ValueError):
    pass


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Graph:
    adjacency: np.ndarray
    communities: np.ndarray | None = None
    directed: bool = False
    self_loops: bool = False

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("adjacency has non-finite entries")
        if not self.directed and not np.array_equal(a, a.T):
            raise ValueError("undirected graph needs a symmetric adjacency")
        if not self.self_loops and np.any(np.diag(a) != 0):
            raise ValueError("adjacency has self-loops but self_loops is False")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        if self.communities is not None:
            c = np.array(self.communities, dtype=np.int64)
            if c.shape != (a.shape[0],):
                raise ValueError("need one community index per node")
            if np.any(c < 0):
                raise ValueError("community indices must be non-negative")
            c.setflags(write=False)
            object.__setattr__(self, "communities", c)

    @property
    def n(self):
        return self.adjacency.shape[0]

    @property
    def num_communities(self):
        if self.communities is None:
            return 0
        return int(self.communities.max()) + 1

    def num_edges(self):
        nz = np.count_nonzero(self.adjacency - np.diag(np.diag(self.adjacency)))
        loops = np.count_nonzero(np.diag(self.adjacency))
        return nz + loops if self.directed else nz // 2 + loops


@dataclass(frozen=True)
class ShiftOperator:
    matrix: np.ndarray
    normalization: str = "none"
    spectral_radius_estimate: float = float("nan")

    @property
    def n(self):
        return self.matrix.shape[0]


def as_matrix(s):
    """Accept a ShiftOperator, a Graph or a raw square array."""
    if isinstance(s, ShiftOperator):
        return s.matrix
    if isinstance(s, Graph):
        return s.adjacency
    m = np.asarray(s, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"shift operator must be square, got shape {m.shape}")
    return m


def sbm_generate(n, c, p, q, rng, max_tries=100):
    """Sample a connected undirected SBM with ``c`` equal blocks of ``n // c`` nodes.

    Draws are rejected until connected; ``GenerationError`` after
    ``max_tries`` consecutive disconnected draws.
    """
    if c < 1 or n < 1:
        raise ValueError("n and c must be positive")
    if n % c != 0:
        raise ValueError(f"community count c={c} must divide n={n}")
    if not (0.0 <= q <= p <= 1.0):
        raise ValueError(f"need 0 <= q <= p <= 1, got p={p}, q={q}")

    communities = np.repeat(np.arange(c), n // c)
    same = communities[:, None] == communities[None, :]
    probs = np.where(same, p, q)
    iu = np.triu_indices(n, k=1)
    for _ in range(max_tries):
        upper = rng.random(iu[0].size) < probs[iu]
        a = np.zeros((n, n))
        a[iu] = upper
        a = a + a.T
        g = Graph(a, communities)
        if is_connected(g):
            return g
    raise GenerationError(
        f"no connected SBM draw in {max_tries} tries (n={n}, c={c}, p={p}, q={q})"
    )


def is_connected(g):
    """Breadth-first reachability over the undirected skeleton."""
    a = g.adjacency if isinstance(g, Graph) else np.asarray(g)
    n = a.shape[0]
    if n == 0:
        return True
    nbrs = (a != 0) | (a.T != 0)
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in np.flatnonzero(nbrs[i] & ~seen):
            seen[j] = True
            queue.append(j)
    return bool(seen.all())


def normalize_shift(g, tol=1e-13, max_iters=100000):
    """Adjacency divided by its spectral radius."""
    a = g.adjacency
    if not is_connected(g):
        raise ValueError("normalize_shift expects a connected graph")
    rho = spectral_radius(a, tol=tol, max_iters=max_iters)
    if rho < 1e-12:
        raise ValueError("spectral radius is ~0; graph has no edges")
    s = a / rho
    s.setflags(write=False)
    rho_s = spectral_radius(s, tol=tol, max_iters=max_iters)
    return ShiftOperator(s, "by_spectral_radius", rho_s)


def unnormalized_shift(g):
    return ShiftOperator(g.adjacency, "none", spectral_radius(g.adjacency))


def permutation_matrix(perm):
    perm = _check_perm(perm)
    n = perm.size
    p = np.zeros((n, n))
    # node i moves to position perm[i]
    p[perm, np.arange(n)] = 1.0
    return p


def _check_perm(perm):
    perm = np.asarray(perm, dtype=np.int64)
    if perm.ndim != 1 or not np.array_equal(np.sort(perm), np.arange(perm.size)):
        raise ValueError("perm must be a bijection on 0..n-1")
    return perm


def permute_graph(g, perm):
    """Relabel nodes so that node ``i`` becomes node ``perm[i]``.

    Equivalent to ``P A P^T`` with ``P = permutation_matrix(perm)``.
    """
    perm = _check_perm(perm)
    if perm.size != g.n:
        raise ValueError(f"perm has {perm.size} entries for a {g.n}-node graph")
    a = np.empty_like(g.adjacency)
    a[np.ix_(perm, perm)] = g.adjacency
    comm = None
    if g.communities is not None:
        comm = np.empty_like(g.communities)
        comm[perm] = g.communities
    return Graph(a, comm, g.directed, g.self_loops)


def permute_signal(x, perm):
    """Move entry ``i`` of the last axis to position ``perm[i]`` (i.e. ``P x``)."""
    perm = _check_perm(perm)
    x = np.asarray(x)
    out = np.empty_like(x)
    out[..., perm] = x
    return out


def graph_to_dict(g, config=None):
    a = g.adjacency
    edges = []
    n = g.n
    for i in range(n):
        for j in range(n):
            if g.directed:
                # A[j, i] holds the edge i -> j
                w = a[j, i]
                if w != 0:
                    edges.append([i, j, float(w)])
            elif j >= i and a[i, j] != 0:
                edges.append([i, j, float(a[i, j])])
    doc = {
        "n": n,
        "directed": g.directed,
        "edges": edges,
        "communities": None if g.communities is None else [int(c) for c in g.communities],
    }
    if g.self_loops:
        doc["self_loops"] = True
    if config is not None:
        doc["config"] = config
    return doc


def graph_from_dict(doc):
    if not isinstance(doc, dict):
        raise GraphFormatError("graph document must be a JSON object")
    for key in ("n", "directed", "edges", "communities"):
        if key not in doc:
            raise GraphFormatError(f"missing field {key!r}")
    n = doc["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise GraphFormatError(f"field 'n' must be a positive integer, got {n!r}")
    directed = doc["directed"]
    if not isinstance(directed, bool):
        raise GraphFormatError("field 'directed' must be a boolean")
    self_loops = bool(doc.get("self_loops", False))
    a = np.zeros((n, n))
    if not isinstance(doc["edges"], list):
        raise GraphFormatError("field 'edges' must be a list")
    for idx, e in enumerate(doc["edges"]):
        if not (isinstance(e, list) and len(e) == 3):
            raise GraphFormatError(f"edges[{idx}] must be [i, j, weight]")
        i, j, w = e
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (i, j)):
            raise GraphFormatError(f"edges[{idx}] node indices must be integers")
        if not (0 <= i < n and 0 <= j < n):
            raise GraphFormatError(f"edges[{idx}] node index out of range 0..{n - 1}")
        if not isinstance(w, (int, float)) or not np.isfinite(w):
            raise GraphFormatError(f"edges[{idx}] weight must be a finite number")
        if i == j and not self_loops:
            raise GraphFormatError(f"edges[{idx}] is a self-loop but self_loops is not set")
        a[j, i] = w
        if not directed:
            a[i, j] = w
    comm = doc["communities"]
    if comm is not None:
        if not isinstance(comm, list) or len(comm) != n:
            raise GraphFormatError(f"field 'communities' must list {n} integers or be null")
        if not all(isinstance(c, int) and not isinstance(c, bool) and c >= 0 for c in comm):
            raise GraphFormatError("field 'communities' must hold non-negative integers")
    try:
        return Graph(a, comm, directed, self_loops)
    except ValueError as exc:
        raise GraphFormatError(str(exc)) from exc


def save_graph(g, path, config=None):
    Path(path).write_text(json.dumps(graph_to_dict(g, config), indent=1) + "\n")


def load_graph(path):
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return graph_from_dict(doc)
