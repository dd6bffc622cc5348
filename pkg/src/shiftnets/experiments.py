"""Repeated source-localization runs over graph and data-split realizations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import make_source_loc_dataset
from .graph import normalize_shift, sbm_generate
from .models import Model, stack_layers
from .numerics import stage_rng
from .training import TrainConfig, train


@dataclass
class StudyResult:
    accuracies: dict = field(default_factory=dict)  # kind -> list over realizations
    seconds: dict = field(default_factory=dict)

    def mean(self, kind):
        return float(np.mean(self.accuracies[kind]))

    def std(self, kind):
        return float(np.std(self.accuracies[kind]))


def source_localization_study(
    kinds=("gcnn", "rsn", "lssm"),
    n_graphs=5,
    n_splits=2,
    n_nodes=50,
    n_communities=5,
    p=0.8,
    q=0.2,
    n_train=2048,
    n_val=512,
    n_test=512,
    t_max=50,
    num_layers=2,
    features=4,
    order=4,
    epochs=40,
    batch_size=20,
    learning_rate=1e-3,
    source_mode="max_degree",
    seed=0,
    log=None,
):
    """Train every kind on ``n_graphs x n_splits`` realizations.

    Realization ``(g, r)`` uses graph ``g`` (seeded by ``(seed, g)``) and a
    fresh dataset and initialization seeded by ``(seed, g, r)``
    (the shuffle order uses a seed derived from the same triple). All kinds see identical graphs and datasets.
    """
    result = StudyResult({k: [] for k in kinds}, {k: 0.0 for k in kinds})
    for gi in range(n_graphs):
        graph = sbm_generate(n_nodes, n_communities, p, q, stage_rng((seed, gi), "graph"))
        s = normalize_shift(graph)
        for ri in range(n_splits):
            ds = make_source_loc_dataset(graph, s, n_train, n_val, n_test, t_max,
                                         stage_rng((seed, gi, ri), "data"), source_mode)
            run_seed = (seed * 1000 + gi) * 1000 + ri
            for kind in kinds:
                specs = stack_layers(kind, num_layers, features, order)
                model = Model.init(n_nodes, n_communities, specs, stage_rng((seed, gi, ri), "init"))
                cfg = TrainConfig(epochs=epochs, batch_size=batch_size,
                                  learning_rate=learning_rate, seed=run_seed)
                report = train(model, s, ds, cfg)
                result.accuracies[kind].append(report.test_accuracy)
                result.seconds[kind] += report.seconds
                if log is not None:
                    log(f"graph {gi} split {ri} {kind:5s} test {report.test_accuracy:.4f} "
                        f"({report.seconds:.1f}s)")
    return result
