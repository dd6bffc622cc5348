"""Source localization on a stochastic block model graph.

A Kronecker delta placed on one community and diffused for t steps has to be
traced back to its community. Trains one model of each kind on a single
small realization and reports test accuracy. The full 10-realization study
lives in tests/test_acceptance.py.

    python demos/source_localization.py            # ~2 minutes
"""

from shiftnets.data import make_source_loc_dataset
from shiftnets.graph import normalize_shift, sbm_generate
from shiftnets.models import Model, param_count, stack_layers
from shiftnets.numerics import stage_rng
from shiftnets.training import TrainConfig, train

SEED = 0
graph = sbm_generate(50, 5, 0.8, 0.2, stage_rng(SEED, "graph"))
S = normalize_shift(graph)
data = make_source_loc_dataset(graph, S, 1024, 256, 256, t_max=50,
                               rng=stage_rng(SEED, "data"), source_mode="max_degree")
print(data.provenance)

cfg = TrainConfig(epochs=20, batch_size=20, learning_rate=1e-3, seed=SEED)
for kind in ("gcnn", "rsn", "lssm"):
    layers = stack_layers(kind, num_layers=2, features=4, order=4)
    model = Model.init(graph.n, data.classes, layers, stage_rng(SEED, "init"))
    rep = train(model, S, data, cfg)
    pc = param_count(model)
    print(f"{kind:>5}: test {rep.test_accuracy:.3f} (best epoch {rep.best_epoch}, "
          f"{pc.literal} filter params, {rep.seconds:.0f}s)")
