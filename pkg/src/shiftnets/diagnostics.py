"""State-norm traces showing when shift recursions explode or vanish."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .filters import gcnn_filter_recursive, lssm_filter, rsn_filter
from .graph import as_matrix
from .numerics import power_iteration

EXPLODE_ABOVE = 1.05
VANISH_BELOW = 0.95


@dataclass
class StabilityReport:
    norms: list
    growth_rate: float
    classification: str
    spectral_radius: float
    alignment: float

    def to_dict(self):
        return asdict(self)


def classify_rate(rate):
    if rate > EXPLODE_ABOVE:
        return "exploding"
    if rate < VANISH_BELOW:
        return "vanishing"
    return "marginal"


def growth_rate(norms):
    """Geometric mean of the last ``ceil(K/2)`` successive norm ratios."""
    norms = np.asarray(norms, dtype=float)
    K = norms.size - 1
    if K < 1:
        raise ValueError("need at least two norms")
    tail = norms[K - math.ceil(K / 2):]
    if np.any(tail[:-1] == 0.0):
        return 0.0
    ratios = tail[1:] / tail[:-1]
    if np.any(ratios == 0.0):
        return 0.0
    return float(np.exp(np.mean(np.log(ratios))))


def state_norm_trace(s, x, K):
    """Norms ``||S^k x||_2`` for ``k = 0..K`` of the linear shift recursion.

    The report also carries the growth-rate estimate and its regime, the
    spectral radius of ``S`` and the alignment ``|<x, v1>| / ||x||`` with the
    power-iteration dominant eigenvector ``v1``.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    m = as_matrix(s)
    x = np.asarray(x, dtype=float)
    norms = [float(np.linalg.norm(x))]
    w = x
    for _ in range(K):
        w = m @ w
        norms.append(float(np.linalg.norm(w)))
    rate = growth_rate(norms)
    rho, v1 = power_iteration(m, tol=1e-13, max_iters=100000)
    xn = np.linalg.norm(x)
    align = float(abs(x @ v1) / xn) if xn > 0 else 0.0
    return StabilityReport(norms, rate, classify_rate(rate), float(rho), align)


def compare_filter_traces(s, x, K, taps, rsn_params, lssm_params, sigma_w="relu", sigma_y="relu"):
    """Per-shift state norms of the three filter kinds on the same input.

    Returns one dict per ``k = 0..K`` with keys ``k, norm_gcnn, norm_rsn,
    norm_lssm``. Pure reporting; nothing is asserted.
    """
    for p in (taps, rsn_params, lssm_params):
        if p.order != K:
            raise ValueError(f"all filters must have order K={K}, got {p.order}")
    _, tg = gcnn_filter_recursive(s, taps, x)
    _, tr = rsn_filter(s, rsn_params, x, sigma_w, sigma_y)
    _, tl = lssm_filter(s, lssm_params, x, sigma_y)
    ng, nr, nl = tg.state_norms(), tr.state_norms(), tl.state_norms()
    return [
        {"k": k, "norm_gcnn": float(ng[k]), "norm_rsn": float(nr[k]), "norm_lssm": float(nl[k])}
        for k in range(K + 1)
    ]


def write_trace_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["k", "norm_gcnn", "norm_rsn", "norm_lssm"])
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def write_summary_json(report, path, extra=None):
    doc = {"stability": report.to_dict()}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
