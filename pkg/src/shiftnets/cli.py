"""Command-line front end: ``shiftnets <command> [options]``.

Commands: gen-graph, gen-data, train, eval, gradcheck, diagnose.

Every command accepts ``--config FILE`` (a flat JSON object keyed by option
name with dashes or underscores). Explicit flags beat config values, which
beat the built-in defaults. Exit codes: 0 success, 1 usage or validation
error, 2 graph generation failure, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import diagnostics, filters
from .graph import (
    GenerationError,
    GraphFormatError,
    load_graph,
    normalize_shift,
    save_graph,
    sbm_generate,
    unnormalized_shift,
)
from .models import Model, load_checkpoint, save_checkpoint, stack_layers
from .numerics import ACTIVATIONS, RNG_ALGORITHM, spectral_radius, stage_rng
from .training import (
    NumericalAbort,
    TrainConfig,
    accuracy,
    confusion_matrix,
    gradient_check_suite,
    train,
)

EXIT_OK, EXIT_USAGE, EXIT_GENERATION, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


DEFAULTS = {
    "gen-graph": {"n": 50, "c": 5, "p": 0.8, "q": 0.2, "seed": 0, "out": "graph.json"},
    "gen-data": {
        "graph": None, "n_train": 10240, "n_val": 2560, "n_test": 2560, "t_max": 50,
        "source_mode": "max_degree", "seed": 0, "out": "dataset.json",
    },
    "train": {
        "graph": None, "data": None, "kind": "lssm", "layers": 1, "features": 4, "order": 4,
        "sigma": "relu", "sigma_w": "relu", "sigma_y": "relu", "shift": "normalized",
        "epochs": 40, "batch_size": 100, "lr": 1e-3, "beta1": 0.9, "beta2": 0.999,
        "eps": 1e-8, "seed": 0, "out": "run",
    },
    "eval": {"checkpoint": None, "graph": None, "data": None, "split": "test", "out": None},
    "gradcheck": {
        "kind": "all", "order": None, "layers": None, "instances": 20, "nodes": 8,
        "features": 2, "step": 1e-5, "tol": 1e-5, "seed": 0,
    },
    "diagnose": {
        "graph": None, "order": 30, "shift": "normalized", "input": "delta",
        "sigma_w": "relu", "sigma_y": "relu", "seed": 0, "out": "diagnose",
    },
}


def _parser():
    p = argparse.ArgumentParser(prog="shiftnets", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def cmd(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON file with option values")
        return sp

    g = cmd("gen-graph", "sample a connected SBM graph")
    g.add_argument("--n", type=int)
    g.add_argument("--c", type=int)
    g.add_argument("--p", type=float)
    g.add_argument("--q", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--out")

    d = cmd("gen-data", "generate a source-localization dataset on a graph")
    d.add_argument("--graph")
    d.add_argument("--n-train", type=int)
    d.add_argument("--n-val", type=int)
    d.add_argument("--n-test", type=int)
    d.add_argument("--t-max", type=int)
    d.add_argument("--source-mode", choices=data_mod.SOURCE_MODES)
    d.add_argument("--seed", type=int)
    d.add_argument("--out")

    t = cmd("train", "train a model and write its report and checkpoint")
    t.add_argument("--graph")
    t.add_argument("--data")
    t.add_argument("--kind", choices=filters.KINDS)
    t.add_argument("--layers", type=int)
    t.add_argument("--features", type=int)
    t.add_argument("--order", type=int)
    for a in ("--sigma", "--sigma-w", "--sigma-y"):
        t.add_argument(a, choices=ACTIVATIONS)
    t.add_argument("--shift", choices=("normalized", "adjacency"))
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--beta1", type=float)
    t.add_argument("--beta2", type=float)
    t.add_argument("--eps", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", help="output directory")

    e = cmd("eval", "accuracy and confusion counts of a checkpoint on a split")
    e.add_argument("--checkpoint")
    e.add_argument("--graph")
    e.add_argument("--data")
    e.add_argument("--split", choices=data_mod.SPLITS)
    e.add_argument("--out", help="confusion CSV path (also printed)")

    gc = cmd("gradcheck", "compare backprop gradients with finite differences")
    gc.add_argument("--kind", choices=("all",) + filters.KINDS)
    gc.add_argument("--order", type=int)
    gc.add_argument("--layers", type=int)
    gc.add_argument("--instances", type=int)
    gc.add_argument("--nodes", type=int)
    gc.add_argument("--features", type=int)
    gc.add_argument("--step", type=float)
    gc.add_argument("--tol", type=float)
    gc.add_argument("--seed", type=int)

    dg = cmd("diagnose", "state-norm traces of the shift recursions on a graph")
    dg.add_argument("--graph")
    dg.add_argument("--order", type=int)
    dg.add_argument("--shift", choices=("normalized", "adjacency"))
    dg.add_argument("--input", choices=("delta", "ones", "random", "dominant", "second"))
    dg.add_argument("--sigma-w", choices=ACTIVATIONS)
    dg.add_argument("--sigma-y", choices=ACTIVATIONS)
    dg.add_argument("--seed", type=int)
    dg.add_argument("--out", help="output directory")
    return p


def _resolve(args):
    """Merge flags over config file over defaults into one flat dict."""
    defaults = DEFAULTS[args.command]
    file_cfg = {}
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        file_cfg = {k.replace("-", "_"): v for k, v in file_cfg.items()}
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys for {args.command}: {sorted(unknown)}")
    cfg = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        cfg[key] = flag if flag is not None else file_cfg.get(key, default)
    return cfg


def _require(cfg, *keys):
    for k in keys:
        if cfg.get(k) is None:
            raise UsageError(f"--{k.replace('_', '-')} is required")
        if k in ("graph", "data", "checkpoint") and not Path(cfg[k]).is_file():
            raise UsageError(f"file not found: {cfg[k]}")


def _recorded(command, cfg):
    # the output location does not influence results, so reruns into
    # different directories stay byte-identical
    return {"command": command, **{k: v for k, v in cfg.items() if k != "out"}, "rng": RNG_ALGORITHM}


def _shift_for(graph, mode):
    if mode == "normalized":
        return normalize_shift(graph)
    return unnormalized_shift(graph)


def cmd_gen_graph(cfg, out):
    n, c, p, q = cfg["n"], cfg["c"], cfg["p"], cfg["q"]
    if n < 1 or c < 1 or n % c != 0:
        raise UsageError(f"c must divide n (got n={n}, c={c})")
    if not (0.0 <= q <= p <= 1.0):
        raise UsageError(f"need 0 <= q <= p <= 1 (got p={p}, q={q})")
    g = sbm_generate(n, c, p, q, stage_rng(cfg["seed"], "graph"))
    rho = spectral_radius(g.adjacency, tol=1e-13, max_iters=100000)
    save_graph(g, cfg["out"], config=_recorded("gen-graph", cfg))
    print(f"nodes {g.n}  communities {g.num_communities}  edges {g.num_edges()}", file=out)
    print(f"spectral_radius {rho!r}", file=out)
    return EXIT_OK


def cmd_gen_data(cfg, out):
    _require(cfg, "graph")
    g = load_graph(cfg["graph"])
    if g.communities is None:
        raise UsageError(f"{cfg['graph']} has no community labels")
    s = normalize_shift(g)
    ds = data_mod.make_source_loc_dataset(
        g, s, cfg["n_train"], cfg["n_val"], cfg["n_test"], cfg["t_max"],
        stage_rng(cfg["seed"], "data"), cfg["source_mode"],
    )
    ds.config = _recorded("gen-data", cfg)
    data_mod.save_dataset(ds, cfg["out"])
    print(f"samples {len(ds)}  classes {ds.classes}  -> {cfg['out']}", file=out)
    return EXIT_OK


def cmd_train(cfg, out):
    _require(cfg, "graph", "data")
    g = load_graph(cfg["graph"])
    ds = data_mod.load_dataset(cfg["data"])
    if ds.n != g.n:
        raise UsageError(f"dataset has {ds.n} nodes, graph has {g.n}")
    s = _shift_for(g, cfg["shift"])
    specs = stack_layers(cfg["kind"], cfg["layers"], cfg["features"], cfg["order"],
                         sigma=cfg["sigma"], sigma_w=cfg["sigma_w"], sigma_y=cfg["sigma_y"])
    model = Model.init(g.n, ds.classes, specs, stage_rng(cfg["seed"], "init"))
    tc = TrainConfig(cfg["epochs"], cfg["batch_size"], cfg["lr"], cfg["beta1"], cfg["beta2"],
                     cfg["eps"], cfg["seed"])
    report = train(model, s, ds, tc)
    outdir = Path(cfg["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    experiment = _recorded("train", cfg)
    meta = {
        "seed": cfg["seed"],
        "shift": cfg["shift"],
        "spectral_radius": float(s.spectral_radius_estimate),
        "config": experiment,
    }
    save_checkpoint(model, outdir / "checkpoint.json", meta)
    report.save(outdir / "report.json", outdir / "metrics.csv", extra={"experiment": experiment})
    print(f"test_accuracy {report.test_accuracy!r}  best_epoch {report.best_epoch}", file=out)
    print(f"seconds {report.seconds:.2f}", file=out)
    return EXIT_OK


def cmd_eval(cfg, out):
    _require(cfg, "checkpoint", "graph", "data")
    try:
        model, meta = load_checkpoint(cfg["checkpoint"])
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"bad checkpoint: {exc}") from exc
    g = load_graph(cfg["graph"])
    ds = data_mod.load_dataset(cfg["data"])
    if model.n_nodes != g.n or ds.n != g.n or ds.classes != model.n_classes:
        raise UsageError(
            f"shape mismatch: checkpoint N={model.n_nodes} C={model.n_classes}, "
            f"graph N={g.n}, dataset N={ds.n} C={ds.classes}"
        )
    s = _shift_for(g, meta.get("shift", "normalized"))
    acc = accuracy(model, s, ds, cfg["split"])
    counts = confusion_matrix(model, s, ds, cfg["split"])
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["true"] + [f"pred_{j}" for j in range(ds.classes)])
    for i, row in enumerate(counts):
        w.writerow([i] + row.tolist())
    print(f"accuracy {acc!r}", file=out)
    out.write(buf.getvalue())
    if cfg["out"]:
        Path(cfg["out"]).write_text(buf.getvalue())
    return EXIT_OK


def cmd_gradcheck(cfg, out, grad_fn=None):
    kinds = filters.KINDS if cfg["kind"] == "all" else (cfg["kind"],)
    orders = (2, 3) if cfg["order"] is None else (cfg["order"],)
    layers = (1, 2) if cfg["layers"] is None else (cfg["layers"],)
    results = gradient_check_suite(
        kinds=kinds, layers=layers, orders=orders, n_nodes=cfg["nodes"],
        features=cfg["features"], instances=cfg["instances"], step=cfg["step"],
        seed=cfg["seed"], grad_fn=grad_fn,
    )
    worst = 0.0
    for r in results:
        ok = r["worst_rel_error"] < cfg["tol"]
        print(f"{'PASS' if ok else 'FAIL'} kind={r['kind']} L={r['layers']} K={r['order']} "
              f"act={r['activation']} worst_rel_error={r['worst_rel_error']:.3e}", file=out)
        worst = max(worst, r["worst_rel_error"])
    passed = worst < cfg["tol"]
    print(f"worst_rel_error {worst:.3e} ({'pass' if passed else 'FAIL'}, tol {cfg['tol']:g})", file=out)
    return EXIT_OK if passed else EXIT_USAGE


def _diagnose_input(kind, m, rng):
    n = m.shape[0]
    if kind == "delta":
        x = np.zeros(n)
        x[0] = 1.0
        return x
    if kind == "ones":
        return np.ones(n) / np.sqrt(n)
    if kind == "random":
        x = rng.standard_normal(n)
        return x / np.linalg.norm(x)
    if not np.array_equal(m, m.T):
        raise UsageError("eigenvector inputs need an undirected graph")
    vals, vecs = np.linalg.eigh(m)
    order = np.argsort(-np.abs(vals), kind="stable")
    return vecs[:, order[0 if kind == "dominant" else 1]]


def cmd_diagnose(cfg, out):
    _require(cfg, "graph")
    K = cfg["order"]
    if K < 1:
        raise UsageError("--order must be >= 1")
    g = load_graph(cfg["graph"])
    s = _shift_for(g, cfg["shift"])
    rng = stage_rng(cfg["seed"], "init")
    x = _diagnose_input(cfg["input"], s.matrix, rng)
    report = diagnostics.state_norm_trace(s, x, K)
    taps = filters.init_params("gcnn", K, rng)
    rsn = filters.init_params("rsn", K, rng)
    lssm = filters.init_params("lssm", K, rng)
    rows = diagnostics.compare_filter_traces(s, x, K, taps, rsn, lssm, cfg["sigma_w"], cfg["sigma_y"])
    outdir = Path(cfg["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    diagnostics.write_trace_csv(rows, outdir / "traces.csv")
    diagnostics.write_summary_json(
        report, outdir / "summary.json",
        extra={"config": _recorded("diagnose", cfg)},
    )
    print(f"classification {report.classification}  growth_rate {report.growth_rate!r}  "
          f"spectral_radius {report.spectral_radius!r}  alignment {report.alignment:.4f}", file=out)
    return EXIT_OK


COMMANDS = {
    "gen-graph": cmd_gen_graph,
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "diagnose": cmd_diagnose,
}


def main(argv=None, out=None):
    out = out or sys.stdout
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](cfg, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GraphFormatError, data_mod.DatasetFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GenerationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
