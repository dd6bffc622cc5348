"""Training loop with ADAM on cross-entropy, plus finite-difference gradient checks."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .filters import KINDS
from .models import Model, model_backward, model_forward, stack_layers
from .numerics import make_rng, stage_rng


class NumericalAbort(FloatingPointError):
    """Training produced a non-finite loss or gradient."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 100
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size):
        return cls(np.zeros(size), np.zeros(size), 0)


@dataclass
class TrainReport:
    train_loss: list
    val_accuracy: list
    test_accuracy: float
    best_epoch: int
    config: dict
    seconds: float = field(default=0.0, compare=False)

    def to_dict(self):
        """Everything except wall-clock time, so reruns serialize identically."""
        d = asdict(self)
        d.pop("seconds")
        return d

    def save(self, json_path, csv_path=None, extra=None):
        doc = self.to_dict()
        if extra:
            doc.update(extra)
        Path(json_path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        if csv_path is not None:
            with open(csv_path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["epoch", "train_loss", "val_accuracy"])
                for i, (loss, acc) in enumerate(zip(self.train_loss, self.val_accuracy), 1):
                    w.writerow([i, repr(loss), repr(acc)])


def softmax(logits):
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits, label):
    """``-log softmax(logits)[label]`` and its gradient ``softmax - onehot``.

    Works on one logit vector with an integer label, or row-wise on a
    ``(B, C)`` batch with a label array (per-sample losses, no averaging).
    """
    z = np.asarray(logits, dtype=float)
    single = z.ndim == 1
    zb = z[None, :] if single else z
    lab = np.atleast_1d(np.asarray(label, dtype=np.int64))
    if np.any(lab < 0) or np.any(lab >= zb.shape[1]):
        raise ValueError(f"label out of range for {zb.shape[1]} classes")
    shifted = zb - zb.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(zb.shape[0])
    loss = logsum - shifted[rows, lab]
    grad = np.exp(shifted - logsum[:, None])
    grad[rows, lab] -= 1.0
    if single:
        return float(loss[0]), grad[0]
    return loss, grad


def adam_step(params, grads, state, cfg):
    """One bias-corrected ADAM update. Returns ``(new_params, new_state)``."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ValueError("params, grads and optimizer state must share a shape")
    t = state.t + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grads
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grads * grads
    m_hat = m / (1.0 - cfg.beta1 ** t)
    v_hat = v / (1.0 - cfg.beta2 ** t)
    new = params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return new, OptimizerState(m, v, t)


def predict(model, s, signals, chunk=512):
    signals = np.asarray(signals, dtype=float)
    out = np.empty(signals.shape[0], dtype=np.int64)
    for i in range(0, signals.shape[0], chunk):
        logits, _ = model_forward(model, s, signals[i:i + chunk])
        out[i:i + chunk] = np.argmax(logits, axis=1)
    return out


def accuracy(model, s, dataset, split):
    idx = dataset.split_indices(split)
    if idx.size == 0:
        return float("nan")
    pred = predict(model, s, dataset.signals[idx])
    return float(np.mean(pred == dataset.labels[idx]))


def confusion_matrix(model, s, dataset, split):
    """``counts[true, predicted]`` over one split."""
    idx = dataset.split_indices(split)
    pred = predict(model, s, dataset.signals[idx])
    counts = np.zeros((dataset.classes, dataset.classes), dtype=np.int64)
    np.add.at(counts, (dataset.labels[idx], pred), 1)
    return counts


def train(model, s, dataset, cfg, log=None):
    """Mini-batch ADAM on the training split with best-validation selection.

    The training split is reshuffled every epoch from ``cfg.seed``; within a
    batch samples are processed in ascending index order and the gradient is
    the batch mean. After training, the model holds the parameters of the
    epoch with the highest validation accuracy (ties go to the later epoch).

    Raises:
        NumericalAbort: the loss or gradient became non-finite.
    """
    start = time.perf_counter()
    rng = stage_rng(cfg.seed, "shuffle")
    train_idx = dataset.split_indices("train")
    if train_idx.size == 0:
        raise ValueError("training split is empty")
    x, y = dataset.signals, dataset.labels
    state = OptimizerState.zeros(model.num_params)
    theta = model.get_params()
    best_theta, best_acc, best_epoch = theta.copy(), -1.0, 0
    losses, val_accs = [], []

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(train_idx)
        total = 0.0
        for b, start_i in enumerate(range(0, order.size, cfg.batch_size)):
            idx = np.sort(order[start_i:start_i + cfg.batch_size])
            # overflow is caught by the finiteness check below
            with np.errstate(over="ignore", invalid="ignore"):
                logits, cache = model_forward(model, s, x[idx])
                loss, g_logits = cross_entropy(logits, y[idx])
                grad = model_backward(model, s, cache, g_logits / idx.size)
            if not (np.all(np.isfinite(loss)) and np.all(np.isfinite(grad))):
                finite = np.abs(logits[np.isfinite(logits)])
                peak = finite.max() if finite.size else float("nan")
                raise NumericalAbort(
                    f"non-finite loss/gradient at epoch {epoch}, batch {b}; "
                    f"largest finite |logit| = {peak:.3g}. "
                    "Lower the learning rate or normalize the shift operator "
                    "(unnormalized shifts make the filter states explode)."
                )
            total += float(loss.sum())
            theta, state = adam_step(theta, grad, state, cfg)
            model.set_params(theta)
        losses.append(total / train_idx.size)
        acc = accuracy(model, s, dataset, "val")
        val_accs.append(acc)
        if acc >= best_acc or np.isnan(acc):
            best_theta, best_acc, best_epoch = theta.copy(), acc, epoch
        if log is not None:
            log(f"epoch {epoch:3d}  loss {losses[-1]:.4f}  val {acc:.4f}")

    model.set_params(best_theta)
    test_acc = accuracy(model, s, dataset, "test")
    return TrainReport(
        train_loss=losses,
        val_accuracy=val_accs,
        test_accuracy=test_acc,
        best_epoch=best_epoch,
        config=asdict(cfg),
        seconds=time.perf_counter() - start,
    )


def finite_diff_grad(f, params, step=1e-5):
    """Central differences of a scalar function, one coordinate at a time."""
    if step <= 0:
        raise ValueError("step must be positive")
    p = np.array(params, dtype=float)
    g = np.empty_like(p)
    for i in range(p.size):
        old = p[i]
        p[i] = old + step
        up = f(p)
        p[i] = old - step
        down = f(p)
        p[i] = old
        g[i] = (up - down) / (2.0 * step)
    return g


# Central differences at step h carry roundoff of roughly 100 * eps * |f| / h
# (about 2e-9 * |f| at h = 1e-5). Coordinates smaller than FD_FLOOR * |f| are
# below what the difference quotient can resolve to 1e-5 relative accuracy.
FD_FLOOR = 1e-5


def fd_floor(fval, base=FD_FLOOR):
    """Relative-error floor scaled to the magnitude of the checked function."""
    return base * max(1.0, abs(float(fval)))


def relative_error(a, b, floor=FD_FLOOR):
    """Coordinate-wise ``|a - b| / max(|a|, |b|, floor)``."""
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def _relu_margin(model, cache):
    # smallest |pre-activation| feeding a ReLU anywhere in the network
    margins = [np.inf]
    for spec, lc in zip(model.layers, cache.layers):
        arrays = []
        if spec.sigma == "relu":
            arrays.append(lc.pre)
        tr = lc.trace
        if spec.filter_kind == "rsn" and spec.sigma_w == "relu":
            arrays.extend(tr.state_pre[1:])
        if spec.filter_kind != "gcnn" and spec.sigma_y == "relu":
            arrays.extend(tr.output_pre)
            arrays.append(tr.total_pre)
        margins.extend(float(np.min(np.abs(a))) for a in arrays)
    return min(margins)


def model_loss(model, s, x, labels):
    logits, _ = model_forward(model, s, x)
    loss, _ = cross_entropy(logits, labels)
    return float(np.mean(loss))


def gradient_check(model, s, x, labels, step=1e-5, grad_fn=None):
    """Worst coordinate relative error between ``model_backward`` and central
    differences of the mean cross-entropy."""
    grad_fn = grad_fn or model_backward
    theta = model.get_params()
    logits, cache = model_forward(model, s, x)
    _, g_logits = cross_entropy(logits, labels)
    analytic = grad_fn(model, s, cache, g_logits / np.atleast_2d(logits).shape[0])

    def f(th):
        model.set_params(th)
        return model_loss(model, s, x, labels)

    try:
        numeric = finite_diff_grad(f, theta, step)
        floor = fd_floor(f(theta))
    finally:
        model.set_params(theta)
    return float(np.max(relative_error(analytic, numeric, floor)))


def random_symmetric_shift(n, rng):
    a = rng.random((n, n))
    a = np.triu(a, 1)
    a = a + a.T
    return a / np.max(np.abs(np.linalg.eigvalsh(a)))


def gradient_check_suite(
    kinds=KINDS,
    layers=(1, 2),
    orders=(2, 3),
    n_nodes=8,
    features=2,
    n_classes=3,
    batch=3,
    instances=20,
    activations=("relu", "tanh"),
    step=1e-5,
    seed=0,
    grad_fn=None,
):
    """Finite-difference check over random small models.

    Instances whose ReLU pre-activations come within ``1e-4`` of the kink are
    redrawn. Returns a list of dicts, one per configuration, carrying the
    worst relative error seen over its instances.
    """
    rng = make_rng(seed)
    results = []
    for kind in kinds:
        for num_layers in layers:
            for order in orders:
                for act in activations:
                    specs = stack_layers(kind, num_layers, features, order,
                                         sigma=act, sigma_w=act, sigma_y=act)
                    worst = 0.0
                    done = 0
                    while done < instances:
                        s = random_symmetric_shift(n_nodes, rng)
                        model = Model.init(n_nodes, n_classes, specs, rng)
                        x = rng.standard_normal((batch, n_nodes))
                        labels = rng.integers(0, n_classes, size=batch)
                        if act == "relu":
                            _, cache = model_forward(model, s, x)
                            if _relu_margin(model, cache) < 1e-4:
                                continue
                        err = gradient_check(model, s, x, labels, step, grad_fn)
                        worst = max(worst, err)
                        done += 1
                    results.append({
                        "kind": kind, "layers": num_layers, "order": order,
                        "activation": act, "instances": instances, "worst_rel_error": worst,
                    })
    return results
