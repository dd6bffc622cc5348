"""Multi-feature graph layers, layered models with a readout, checkpoints.

A layer maps node features ``(..., N, F_in)`` to ``(..., N, F_out)`` through
a bank of ``F_out x F_in`` filters of one kind::

    x_out[:, f] = sigma(sum_g H^{fg}(S) x_in[:, g])

The nonlinear filter kinds keep their internal ``sigma_w``/``sigma_y`` and the
layer ``sigma`` still wraps the bank sum. The last layer's ``N x F_L`` output
is flattened node-major (index ``n * F_L + f``) and mapped to ``C`` logits by
one affine readout.

All parameters of a ``Model`` live in one flat float64 vector ``theta``; the
filter banks and readout arrays are views into it, so an optimizer that
updates ``theta`` in place updates the model.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .filters import (
    KINDS,
    filter_forward,
    filter_vjp,
    param_size,
    params_from_vector,
)
from .graph import as_matrix
from .numerics import ACTIVATIONS, activation, activation_grad


@dataclass(frozen=True)
class LayerSpec:
    filter_kind: str
    in_features: int
    out_features: int
    order: int
    sigma: str = "relu"
    sigma_w: str = "relu"
    sigma_y: str = "relu"

    def __post_init__(self):
        if self.filter_kind not in KINDS:
            raise ValueError(f"unknown filter kind {self.filter_kind!r}")
        if self.in_features < 1 or self.out_features < 1:
            raise ValueError("feature counts must be >= 1")
        min_order = 0 if self.filter_kind == "gcnn" else 1
        if self.order < min_order:
            raise ValueError(f"{self.filter_kind} needs order >= {min_order}")
        for a in (self.sigma, self.sigma_w, self.sigma_y):
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")

    @property
    def bank_shape(self):
        return (self.out_features, self.in_features)

    def bank_size(self):
        return param_size(self.filter_kind, self.order, self.bank_shape)


def stack_layers(kind, num_layers, features, order, in_features=1, **activations):
    """``num_layers`` layers of one kind with a constant feature width."""
    specs = []
    f_in = in_features
    for _ in range(num_layers):
        specs.append(LayerSpec(kind, f_in, features, order, **activations))
        f_in = features
    return specs


class Model:
    def __init__(self, n_nodes, n_classes, layers, theta=None):
        layers = list(layers)
        if not layers:
            raise ValueError("a model needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_features != b.in_features:
                raise ValueError("adjacent layer feature counts do not chain")
        self.n_nodes = int(n_nodes)
        self.n_classes = int(n_classes)
        self.layers = layers
        size = sum(spec.bank_size() for spec in layers) + self.n_classes * (self.readout_in + 1)
        if theta is None:
            theta = np.zeros(size)
        theta = np.array(theta, dtype=float)
        if theta.shape != (size,):
            raise ValueError(f"parameter vector has shape {theta.shape}, model needs ({size},)")
        self.theta = theta
        self.banks, self.readout_w, self.readout_b = _views(self, theta)

    @property
    def readout_in(self):
        return self.n_nodes * self.layers[-1].out_features

    @property
    def num_params(self):
        return self.theta.size

    @classmethod
    def init(cls, n_nodes, n_classes, layers, rng):
        """Filter scalars uniform on ``+-1/sqrt(K+1)``, readout weights on
        ``+-1/sqrt(N F_L)``, readout bias zero."""
        m = cls(n_nodes, n_classes, layers)
        for spec, bank in zip(m.layers, m.banks):
            bound = 1.0 / np.sqrt(spec.order + 1)
            for name, _ in bank.layout:
                arr = getattr(bank, name)
                arr[...] = rng.uniform(-bound, bound, size=arr.shape)
        bound = 1.0 / np.sqrt(m.readout_in)
        m.readout_w[...] = rng.uniform(-bound, bound, size=m.readout_w.shape)
        return m

    def get_params(self):
        return self.theta.copy()

    def set_params(self, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != self.theta.shape:
            raise ValueError(f"expected {self.theta.shape} parameters, got {vec.shape}")
        self.theta[...] = vec

    def config(self):
        return {
            "n_nodes": self.n_nodes,
            "n_classes": self.n_classes,
            "layers": [asdict(spec) for spec in self.layers],
        }

    @classmethod
    def from_config(cls, config, theta=None):
        layers = [LayerSpec(**spec) for spec in config["layers"]]
        return cls(config["n_nodes"], config["n_classes"], layers, theta)


def _views(model, vec):
    banks = []
    offset = 0
    for spec in model.layers:
        size = spec.bank_size()
        banks.append(
            params_from_vector(spec.filter_kind, spec.order, vec[offset:offset + size], spec.bank_shape)
        )
        offset += size
    n_w = model.n_classes * model.readout_in
    w = vec[offset:offset + n_w].reshape(model.n_classes, model.readout_in)
    b = vec[offset + n_w:offset + n_w + model.n_classes]
    return banks, w, b


@dataclass
class LayerCache:
    x_in: np.ndarray  # (B, 1, F_in, N)
    trace: object
    pre: np.ndarray  # (B, F_out, N) bank sum before sigma


@dataclass
class ForwardCache:
    x: np.ndarray  # (B, N)
    layers: list
    features: np.ndarray  # (B, N * F_L)
    logits: np.ndarray  # (B, C)
    theta_size: int


def layer_forward(spec, bank, s, x_in):
    """One multi-feature layer; ``x_in`` is ``(..., N, F_in)``.

    Returns ``(x_out, cache)`` with ``x_out`` shaped ``(..., N, F_out)``.
    """
    s = as_matrix(s)
    x_in = np.asarray(x_in, dtype=float)
    if x_in.shape[-2:] != (s.shape[0], spec.in_features):
        raise ValueError(
            f"layer expects (..., {s.shape[0]}, {spec.in_features}) input, got {x_in.shape}"
        )
    lead = x_in.shape[:-2]
    xf = np.swapaxes(x_in, -1, -2).reshape((-1, 1, spec.in_features, s.shape[0]))
    y, trace = filter_forward(spec.filter_kind, s, bank, xf, spec.sigma_w, spec.sigma_y)
    pre = y.sum(axis=-2)
    out = np.swapaxes(activation(spec.sigma, pre), -1, -2)
    return out.reshape(lead + out.shape[-2:]), LayerCache(xf, trace, pre)


def layer_backward(spec, bank, s, cache, g_out):
    """Gradients of a layer given ``g_out`` shaped like its output.

    Returns ``(grad_bank, g_in)`` with ``g_in`` shaped like the layer input.
    """
    s = as_matrix(s)
    b, n = cache.pre.shape[0], cache.pre.shape[-1]
    g_out = np.asarray(g_out, dtype=float)
    lead = g_out.shape[:-2]
    g = np.swapaxes(g_out.reshape(b, n, spec.out_features), -1, -2)
    g_pre = g * activation_grad(spec.sigma, cache.pre)
    up = np.broadcast_to(g_pre[:, :, None, :], (b, spec.out_features, spec.in_features, n))
    grad_bank, gx = filter_vjp(
        spec.filter_kind, s, bank, cache.x_in, up, spec.sigma_w, spec.sigma_y, cache.trace
    )
    g_in = np.swapaxes(gx.reshape(b, spec.in_features, n), -1, -2)
    return grad_bank, g_in.reshape(lead + (n, spec.in_features))


def _as_batch(model, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != model.n_nodes:
        raise ValueError(f"model expects signals of length {model.n_nodes}, got shape {x.shape}")
    return xb, single


def model_features(model, s, x):
    """Pre-readout node features, ``(N, F_L)`` or ``(B, N, F_L)``."""
    xb, single = _as_batch(model, x)
    h = xb[:, :, None]
    for spec, bank in zip(model.layers, model.banks):
        h, _ = layer_forward(spec, bank, s, h)
    return h[0] if single else h


def model_forward(model, s, x):
    """Logits for one signal ``(N,)`` or a batch ``(B, N)``; softmax lives in the loss."""
    xb, single = _as_batch(model, x)
    h = xb[:, :, None]
    caches = []
    for spec, bank in zip(model.layers, model.banks):
        h, c = layer_forward(spec, bank, s, h)
        caches.append(c)
    feats = h.reshape(h.shape[0], -1)
    logits = feats @ model.readout_w.T + model.readout_b
    cache = ForwardCache(xb, caches, feats, logits, model.theta.size)
    return (logits[0] if single else logits), cache


def model_backward(model, s, cache, grad_logits):
    """Flat gradient (layout of ``model.theta``) of ``sum <grad_logits, logits>``.

    Batched caches yield the gradient summed over the batch.
    """
    if cache.theta_size != model.theta.size:
        raise ValueError("stale cache: parameter layout changed since the forward pass")
    g = np.asarray(grad_logits, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != cache.logits.shape:
        raise ValueError(f"grad_logits shape {g.shape} does not match logits {cache.logits.shape}")
    grad = np.zeros_like(model.theta)
    gbanks, gw, gb = _views(model, grad)
    gw[...] = g.T @ cache.features
    gb[...] = g.sum(axis=0)
    b = g.shape[0]
    last = model.layers[-1]
    gh = (g @ model.readout_w).reshape(b, model.n_nodes, last.out_features)
    for i in range(len(model.layers) - 1, -1, -1):
        spec, bank = model.layers[i], model.banks[i]
        gbank, gh = layer_backward(spec, bank, s, cache.layers[i], gh)
        for name, _ in bank.layout:
            getattr(gbanks[i], name)[...] = getattr(gbank, name)
    return grad


class ParamCount(NamedTuple):
    literal: int
    remark_formula: int
    readout: int


def param_count(model):
    """Stored filter scalars next to the per-layer closed-form counts.

    The closed forms are ``K F_in F_out`` (gcnn), ``4 K F_in F_out`` (rsn) and
    ``10 (K+1) F_in F_out`` (lssm); ``literal`` counts what the layers actually
    store, readout excluded.
    """
    literal = sum(spec.bank_size() for spec in model.layers)
    per_pair = {"gcnn": lambda k: k, "rsn": lambda k: 4 * k, "lssm": lambda k: 10 * (k + 1)}
    formula = sum(
        per_pair[spec.filter_kind](spec.order) * spec.in_features * spec.out_features
        for spec in model.layers
    )
    readout = model.readout_w.size + model.readout_b.size
    return ParamCount(literal, formula, readout)


def save_checkpoint(model, path, metadata=None):
    doc = {
        "format": "shiftnets-checkpoint/1",
        "model": model.config(),
        "params": model.theta.tolist(),
        "metadata": metadata or {},
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_checkpoint(path):
    """Returns ``(model, metadata)``."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    for key in ("model", "params"):
        if key not in doc:
            raise ValueError(f"{path}: checkpoint is missing field {key!r}")
    model = Model.from_config(doc["model"], np.asarray(doc["params"], dtype=float))
    return model, doc.get("metadata", {})
