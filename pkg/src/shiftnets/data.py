"""Source-localization datasets and the JSON dataset format.

Dataset file layout::

    {"n": int, "classes": int,
     "samples": [{"x": [float * n], "label": int, "meta": {...} | null}, ...],
     "splits": {"train": [int], "val": [int], "test": [int]},
     "provenance": str}

An optional ``"config"`` object records the generating configuration. The
same format carries externally prepared classification data on a graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import as_matrix

SPLITS = ("train", "val", "test")


class DatasetFormatError(ValueError):
    pass


@dataclass
class Sample:
    signal: np.ndarray
    label: int
    meta: dict | None = None


@dataclass
class Dataset:
    signals: np.ndarray  # (M, N)
    labels: np.ndarray  # (M,)
    splits: dict
    classes: int
    meta: list = field(default_factory=list)
    provenance: str = ""
    config: dict | None = None

    def __post_init__(self):
        self.signals = np.asarray(self.signals, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.signals.ndim != 2 or self.labels.shape != (self.signals.shape[0],):
            raise ValueError("signals must be (M, N) with one label per row")
        if not np.all(np.isfinite(self.signals)):
            raise ValueError("signals contain non-finite values")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise ValueError(f"labels must lie in 0..{self.classes - 1}")
        if not self.meta:
            self.meta = [None] * len(self.labels)
        self.splits = {k: np.asarray(self.splits.get(k, []), dtype=np.int64) for k in SPLITS}
        seen = np.concatenate(list(self.splits.values()))
        if seen.size and (seen.min() < 0 or seen.max() >= len(self.labels)):
            raise ValueError("split index out of range")
        if np.unique(seen).size != seen.size:
            raise ValueError("splits must be disjoint")
        missing = set(range(self.classes)) - set(self.labels[self.splits["train"]].tolist())
        if missing:
            raise ValueError(f"classes {sorted(missing)} are absent from the training split")

    @property
    def n(self):
        return self.signals.shape[1]

    def __len__(self):
        return len(self.labels)

    @property
    def samples(self):
        return [Sample(self.signals[i], int(self.labels[i]), self.meta[i]) for i in range(len(self))]

    def split_indices(self, split):
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return self.splits[split]


def diffusion_powers(s, t_max):
    """``[S^0, S^1, ..., S^t_max]`` by repeated multiplication."""
    s = as_matrix(s)
    out = [np.eye(s.shape[0])]
    for _ in range(t_max):
        out.append(s @ out[-1])
    return out


SOURCE_MODES = ("uniform", "max_degree", "random_fixed")


def community_sources(graph, mode, rng):
    """One source node per community, or ``None`` for ``mode="uniform"``.

    ``max_degree`` takes the highest-degree member (lowest index on ties);
    ``random_fixed`` draws one member per community once.
    """
    if mode not in SOURCE_MODES:
        raise ValueError(f"unknown source mode {mode!r}; expected one of {SOURCE_MODES}")
    if mode == "uniform":
        return None
    deg = np.count_nonzero(graph.adjacency, axis=0)
    out = []
    for c in range(graph.num_communities):
        members = np.flatnonzero(graph.communities == c)
        if mode == "max_degree":
            out.append(int(members[np.argmax(deg[members])]))
        else:
            out.append(int(members[rng.integers(members.size)]))
    return np.array(out, dtype=np.int64)


def make_source_loc_dataset(graph, s, n_train, n_val, n_test, t_max, rng, source_mode="uniform"):
    """Diffused Kronecker deltas labelled by their source community.

    Each sample picks a community uniformly and an integer time ``t``
    uniformly in ``0..t_max``; the signal is ``S^t e_source``. With
    ``source_mode="uniform"`` the source is drawn uniformly inside the
    community for every sample; the other modes fix one source node per
    community (see ``community_sources``). Splits are contiguous blocks in
    generation order.
    """
    if graph.communities is None:
        raise ValueError("source localization needs community labels on the graph")
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    total = n_train + n_val + n_test
    comm = graph.communities
    classes = graph.num_communities
    members = [np.flatnonzero(comm == c) for c in range(classes)]
    if any(m.size == 0 for m in members):
        raise ValueError("every community index must have at least one node")
    fixed = community_sources(graph, source_mode, rng)
    powers = diffusion_powers(s, t_max)

    labels = rng.integers(0, classes, size=total)
    if fixed is None:
        sources = np.array([members[c][rng.integers(members[c].size)] for c in labels], dtype=np.int64)
    else:
        sources = fixed[labels]
    times = rng.integers(0, t_max + 1, size=total)
    signals = np.stack([powers[t][:, src] for t, src in zip(times, sources)]) if total else np.zeros((0, graph.n))
    meta = [{"source": int(src), "t": int(t)} for src, t in zip(sources, times)]
    splits = {
        "train": np.arange(0, n_train),
        "val": np.arange(n_train, n_train + n_val),
        "test": np.arange(n_train + n_val, total),
    }
    prov = (f"source_localization n_train={n_train} n_val={n_val} n_test={n_test} "
            f"t_max={t_max} classes={classes} source_mode={source_mode}")
    return Dataset(signals, labels, splits, classes, meta, prov)


def split_dataset(samples, fractions, rng, classes=None, max_tries=100, provenance=""):
    """Shuffle, then cut contiguous train/val/test blocks of the given fractions.

    Val and test sizes are rounded; train takes the remainder. The shuffle is
    redrawn (at most ``max_tries`` times) until every class appears in train.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must be three non-negative numbers summing to 1")
    samples = list(samples)
    m = len(samples)
    signals = np.stack([np.asarray(smp.signal, dtype=float) for smp in samples])
    labels = np.array([smp.label for smp in samples], dtype=np.int64)
    meta = [smp.meta for smp in samples]
    if classes is None:
        classes = int(labels.max()) + 1
    n_val = int(round(fractions[1] * m))
    n_test = int(round(fractions[2] * m))
    n_train = m - n_val - n_test
    for _ in range(max_tries):
        order = rng.permutation(m)
        train = order[:n_train]
        if np.unique(labels[train]).size == classes:
            splits = {
                "train": train,
                "val": order[n_train:n_train + n_val],
                "test": order[n_train + n_val:],
            }
            return Dataset(signals, labels, splits, classes, meta, provenance)
    raise ValueError(f"could not place every class in the training split after {max_tries} shuffles")


def dataset_to_dict(ds):
    doc = {
        "n": ds.n,
        "classes": ds.classes,
        "samples": [
            {"x": ds.signals[i].tolist(), "label": int(ds.labels[i]), "meta": ds.meta[i]}
            for i in range(len(ds))
        ],
        "splits": {k: ds.splits[k].tolist() for k in SPLITS},
        "provenance": ds.provenance,
    }
    if ds.config is not None:
        doc["config"] = ds.config
    return doc


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def dataset_from_dict(doc):
    if not isinstance(doc, dict):
        raise DatasetFormatError("dataset document must be a JSON object")
    for key in ("n", "classes", "samples", "splits", "provenance"):
        if key not in doc:
            raise DatasetFormatError(f"missing field {key!r}")
    n, classes = doc["n"], doc["classes"]
    if not _is_int(n) or n < 1:
        raise DatasetFormatError("field 'n' must be a positive integer")
    if not _is_int(classes) or classes < 1:
        raise DatasetFormatError("field 'classes' must be a positive integer")
    if not isinstance(doc["samples"], list):
        raise DatasetFormatError("field 'samples' must be a list")
    signals = np.zeros((len(doc["samples"]), n))
    labels = np.zeros(len(doc["samples"]), dtype=np.int64)
    meta = []
    for i, smp in enumerate(doc["samples"]):
        where = f"samples[{i}]"
        if not isinstance(smp, dict) or "x" not in smp or "label" not in smp:
            raise DatasetFormatError(f"{where}: expected an object with 'x' and 'label'")
        x = smp["x"]
        if not isinstance(x, list) or len(x) != n:
            raise DatasetFormatError(f"{where}.x: expected a list of {n} numbers")
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x):
            raise DatasetFormatError(f"{where}.x: entries must be numbers")
        row = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(row)):
            raise DatasetFormatError(f"{where}.x: entries must be finite")
        if not _is_int(smp["label"]) or not (0 <= smp["label"] < classes):
            raise DatasetFormatError(f"{where}.label: expected an integer in 0..{classes - 1}")
        m = smp.get("meta")
        if m is not None and not isinstance(m, dict):
            raise DatasetFormatError(f"{where}.meta: expected an object or null")
        signals[i] = row
        labels[i] = smp["label"]
        meta.append(m)
    splits = doc["splits"]
    if not isinstance(splits, dict):
        raise DatasetFormatError("field 'splits' must be an object")
    for k in SPLITS:
        idx = splits.get(k)
        if not isinstance(idx, list) or not all(_is_int(v) for v in idx):
            raise DatasetFormatError(f"splits.{k}: expected a list of integers")
    if not isinstance(doc["provenance"], str):
        raise DatasetFormatError("field 'provenance' must be a string")
    try:
        return Dataset(signals, labels, splits, classes, meta, doc["provenance"], doc.get("config"))
    except ValueError as exc:
        raise DatasetFormatError(str(exc)) from exc


def save_dataset(ds, path):
    Path(path).write_text(json.dumps(dataset_to_dict(ds), separators=(",", ":")) + "\n")


def load_dataset(path):
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return dataset_from_dict(doc)
