"""Graph filters written as state-space recursions over graph shifts.

Three filter kinds are provided:

* ``gcnn``: the linear convolution ``y = sum_k h_k S^k x``, evaluated through
  the recursion ``w_k = S w_{k-1}``, ``y_k = h_k w_k`` with ``w_0 = x``.
* ``rsn`` (recursive shift network): every state update and instantaneous
  output is a nonlinear function of the previous state *and* of the input::

      w_k = sigma_w(h_kww S w_{k-1} + h_kwx x)
      y_k = sigma_y(h_kyw w_k + h_kyx x)
      y   = sigma_y(sum_{k=0}^K y_k)

* ``lssm`` (long short shift memory): a gated recursion with a candidate
  memory, four gates and a global memory ``c_k`` (``c_0 = 0``).

All filters act on the last axis of ``x`` (the node axis). Every coefficient
array has the shift index ``k`` as its first axis and may carry extra
"bank" axes that broadcast against the leading axes of ``x``; a bank of
``F_out x F_in`` filters applied to a batch is one call with coefficient
shape ``(K+1, F_out, F_in)`` and ``x`` of shape ``(B, 1, F_in, N)``.

For the RSN the state coefficients ``h_ww, h_wx`` exist for ``k = 1..K``
(stored at index ``k - 1``) while the output pair ``h_yw, h_yx`` also has a
``k = 0`` entry giving ``y_0 = sigma_y(h_0yw x + h_0yx x)``. The LSSM stores
all ten coefficients for ``k = 0..K``; only the output pair is read at
``k = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from .graph import as_matrix
from .numerics import activation, activation_grad, sigmoid

KINDS = ("gcnn", "rsn", "lssm")


@dataclass
class GcnnFilterParams:
    taps: np.ndarray

    kind: ClassVar[str] = "gcnn"
    # (field name, first shift index stored)
    layout: ClassVar[tuple] = (("taps", 0),)

    @property
    def order(self):
        return len(self.taps) - 1


@dataclass
class RsnFilterParams:
    ww: np.ndarray
    wx: np.ndarray
    yw: np.ndarray
    yx: np.ndarray

    kind: ClassVar[str] = "rsn"
    layout: ClassVar[tuple] = (("ww", 1), ("wx", 1), ("yw", 0), ("yx", 0))

    @property
    def order(self):
        return len(self.yw) - 1


@dataclass
class LssmFilterParams:
    cw: np.ndarray
    cx: np.ndarray
    fw: np.ndarray
    fx: np.ndarray
    uw: np.ndarray
    ux: np.ndarray
    ww: np.ndarray
    wx: np.ndarray
    yw: np.ndarray
    yx: np.ndarray

    kind: ClassVar[str] = "lssm"
    layout: ClassVar[tuple] = tuple(
        (name, 0) for name in ("cw", "cx", "fw", "fx", "uw", "ux", "ww", "wx", "yw", "yx")
    )

    @property
    def order(self):
        return len(self.yw) - 1


PARAM_CLASSES = {
    "gcnn": GcnnFilterParams,
    "rsn": RsnFilterParams,
    "lssm": LssmFilterParams,
}


def _check_kind(kind):
    if kind not in PARAM_CLASSES:
        raise ValueError(f"unknown filter kind {kind!r}; expected one of {KINDS}")
    return PARAM_CLASSES[kind]


def param_shapes(kind, order, bank_shape=()):
    """``[(field, shape), ...]`` in storage order for one filter (or bank)."""
    cls = _check_kind(kind)
    if order < 0 or (kind != "gcnn" and order < 1):
        raise ValueError(f"invalid order {order} for {kind}")
    return [(name, (order + 1 - first,) + tuple(bank_shape)) for name, first in cls.layout]


def param_size(kind, order, bank_shape=()):
    return sum(int(np.prod(shape)) for _, shape in param_shapes(kind, order, bank_shape))


def params_from_vector(kind, order, vec, bank_shape=()):
    """Build params whose arrays are views into ``vec`` (no copy)."""
    cls = _check_kind(kind)
    arrays = {}
    offset = 0
    for name, shape in param_shapes(kind, order, bank_shape):
        size = int(np.prod(shape))
        arrays[name] = vec[offset:offset + size].reshape(shape)
        offset += size
    if offset != vec.size:
        raise ValueError(f"vector has {vec.size} entries, layout needs {offset}")
    return cls(**arrays)


def params_to_vector(p):
    return np.concatenate([np.ravel(getattr(p, name)) for name, _ in p.layout])


def init_params(kind, order, rng, bank_shape=()):
    """Uniform draws on ``[-1/sqrt(K+1), 1/sqrt(K+1)]``."""
    bound = 1.0 / np.sqrt(order + 1)
    vec = rng.uniform(-bound, bound, size=param_size(kind, order, bank_shape))
    return params_from_vector(kind, order, vec, bank_shape)


def zeros_params(kind, order, bank_shape=()):
    return params_from_vector(kind, order, np.zeros(param_size(kind, order, bank_shape)), bank_shape)


@dataclass
class FilterTrace:
    """Intermediate quantities of one forward pass, indexed by shift ``k``.

    List entries at ``k = 0`` are ``None`` for quantities that only exist from
    the first shift on (shifted states, gates, memories' candidates).
    """

    kind: str
    states: list  # w_k
    outputs: list  # y_k
    output_pre: list  # argument of sigma_y inside y_k (nonlinear kinds)
    total_pre: np.ndarray | None = None  # sum_k y_k before the outer sigma_y
    shifted: list = field(default_factory=list)  # S w_{k-1}
    state_pre: list = field(default_factory=list)  # RSN argument of sigma_w
    candidate: list = field(default_factory=list)  # LSSM c~_k
    memory: list = field(default_factory=list)  # LSSM c_k, c_0 = 0
    forget: list = field(default_factory=list)
    update: list = field(default_factory=list)
    state_gate: list = field(default_factory=list)

    @property
    def order(self):
        return len(self.states) - 1

    def state_norms(self):
        """``||w_k||_2`` over the node axis, stacked along a leading ``k`` axis."""
        return np.stack([np.linalg.norm(w, axis=-1) for w in self.states])

    def gates(self):
        return [g for seq in (self.forget, self.update, self.state_gate) for g in seq if g is not None]


def _c(a):
    # coefficient of shape bank -> broadcastable against (..., N)
    return np.asarray(a)[..., None]


def _shift(s, w):
    return w @ s.T


def _check_dims(s, x):
    if x.shape[-1] != s.shape[0]:
        raise ValueError(f"signal has {x.shape[-1]} nodes, shift operator is {s.shape}")


def gcnn_filter_recursive(s, p, x):
    """Linear graph convolution by repeated shifting."""
    s = as_matrix(s)
    x = np.asarray(x, dtype=float)
    _check_dims(s, x)
    w = x
    y = _c(p.taps[0]) * w
    states, outputs = [w], [y]
    for k in range(1, p.order + 1):
        w = _shift(s, w)
        yk = _c(p.taps[k]) * w
        y = y + yk
        states.append(w)
        outputs.append(yk)
    return y, FilterTrace("gcnn", states, outputs, output_pre=[])


def gcnn_filter_direct(s, p, x):
    """Linear graph convolution through explicit matrix powers ``S^k``."""
    s = as_matrix(s)
    x = np.asarray(x, dtype=float)
    _check_dims(s, x)
    y = 0.0
    for k in range(p.order + 1):
        sk = np.linalg.matrix_power(s, k)
        y = y + _c(p.taps[k]) * (x @ sk.T)
    return y


def rsn_filter(s, p, x, sigma_w="relu", sigma_y="relu"):
    s = as_matrix(s)
    x = np.asarray(x, dtype=float)
    _check_dims(s, x)
    w = x
    a0 = _c(p.yw[0]) * w + _c(p.yx[0]) * x
    y0 = activation(sigma_y, a0)
    tr = FilterTrace("rsn", [w], [y0], [a0], shifted=[None], state_pre=[None])
    total = y0
    for k in range(1, p.order + 1):
        sw = _shift(s, w)
        z = _c(p.ww[k - 1]) * sw + _c(p.wx[k - 1]) * x
        w = activation(sigma_w, z)
        a = _c(p.yw[k]) * w + _c(p.yx[k]) * x
        yk = activation(sigma_y, a)
        total = total + yk
        tr.shifted.append(sw)
        tr.state_pre.append(z)
        tr.states.append(w)
        tr.output_pre.append(a)
        tr.outputs.append(yk)
    tr.total_pre = total
    return activation(sigma_y, total), tr


def lssm_filter(s, p, x, sigma_y="relu"):
    s = as_matrix(s)
    x = np.asarray(x, dtype=float)
    _check_dims(s, x)
    w = x
    c = np.zeros_like(x)
    a0 = _c(p.yw[0]) * w + _c(p.yx[0]) * x
    y0 = activation(sigma_y, a0)
    tr = FilterTrace(
        "lssm", [w], [y0], [a0],
        shifted=[None], candidate=[None], memory=[c],
        forget=[None], update=[None], state_gate=[None],
    )
    total = y0
    for k in range(1, p.order + 1):
        sw = _shift(s, w)
        ct = np.tanh(_c(p.cw[k]) * sw + _c(p.cx[k]) * x)
        gf = sigmoid(_c(p.fw[k]) * sw + _c(p.fx[k]) * x)
        gu = sigmoid(_c(p.uw[k]) * sw + _c(p.ux[k]) * x)
        gw = sigmoid(_c(p.ww[k]) * sw + _c(p.wx[k]) * x)
        c = gf * c + gu * ct
        w = gw * np.tanh(c)
        a = _c(p.yw[k]) * w + _c(p.yx[k]) * x
        yk = activation(sigma_y, a)
        total = total + yk
        tr.shifted.append(sw)
        tr.candidate.append(ct)
        tr.forget.append(gf)
        tr.update.append(gu)
        tr.state_gate.append(gw)
        tr.memory.append(c)
        tr.states.append(w)
        tr.output_pre.append(a)
        tr.outputs.append(yk)
    tr.total_pre = total
    return activation(sigma_y, total), tr


def filter_forward(kind, s, p, x, sigma_w="relu", sigma_y="relu"):
    """Dispatch on ``kind``; returns ``(y, trace)``."""
    if kind == "gcnn":
        return gcnn_filter_recursive(s, p, x)
    if kind == "rsn":
        return rsn_filter(s, p, x, sigma_w, sigma_y)
    if kind == "lssm":
        return lssm_filter(s, p, x, sigma_y)
    raise ValueError(f"unknown filter kind {kind!r}")


def _sum_to(g, shape):
    """Reduce a broadcast gradient back to ``shape``."""
    shape = tuple(shape)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _coef_grad(g, u, bank_shape):
    # d<g, c*u>/dc for a coefficient broadcast along the node axis
    return _sum_to(np.sum(g * u, axis=-1), bank_shape)


def filter_vjp(kind, s, p, x, upstream, sigma_w="relu", sigma_y="relu", trace=None):
    """Reverse-mode gradients of ``<upstream, y>``.

    Back-propagates through every shift of the unrolled recursion. Pass the
    ``trace`` of a matching forward call to skip recomputation.

    Returns:
        (grad_params, grad_x): ``grad_params`` has the type and array shapes of
        ``p``; ``grad_x`` has the shape of ``x``.
    """
    s = as_matrix(s)
    x = np.asarray(x, dtype=float)
    if trace is None:
        _, trace = filter_forward(kind, s, p, x, sigma_w, sigma_y)
    if trace.kind != kind or trace.order != p.order:
        raise ValueError("trace does not match the filter kind/order")
    g = np.asarray(upstream, dtype=float)
    if kind == "gcnn":
        return _gcnn_vjp(s, p, x, g, trace)
    if kind == "rsn":
        return _rsn_vjp(s, p, x, g, trace, sigma_w, sigma_y)
    if kind == "lssm":
        return _lssm_vjp(s, p, x, g, trace, sigma_y)
    raise ValueError(f"unknown filter kind {kind!r}")


def _gcnn_vjp(s, p, x, g, tr):
    bank = p.taps.shape[1:]
    K = p.order
    taps = np.stack([_coef_grad(g, tr.states[k], bank) for k in range(K + 1)])
    # Horner in the adjoint: sum_k h_k (S^T)^k g
    gx = _c(p.taps[K]) * g
    for k in range(K - 1, -1, -1):
        gx = gx @ s + _c(p.taps[k]) * g
    return GcnnFilterParams(taps), _sum_to(gx, x.shape)


def _rsn_vjp(s, p, x, g, tr, sigma_w, sigma_y):
    K = p.order
    bank = p.yw.shape[1:]
    grads = {name: np.zeros_like(np.asarray(getattr(p, name))) for name, _ in p.layout}
    g_total = g * activation_grad(sigma_y, tr.total_pre)
    gx = 0.0
    g_state = [None] * (K + 1)
    for k in range(K + 1):
        ga = g_total * activation_grad(sigma_y, tr.output_pre[k])
        grads["yw"][k] = _coef_grad(ga, tr.states[k], bank)
        grads["yx"][k] = _coef_grad(ga, x, bank)
        gx = gx + _c(p.yx[k]) * ga
        g_state[k] = _c(p.yw[k]) * ga
    carry = 0.0
    for k in range(K, 0, -1):
        gw = g_state[k] + carry
        gz = gw * activation_grad(sigma_w, tr.state_pre[k])
        grads["ww"][k - 1] = _coef_grad(gz, tr.shifted[k], bank)
        grads["wx"][k - 1] = _coef_grad(gz, x, bank)
        gx = gx + _c(p.wx[k - 1]) * gz
        carry = (_c(p.ww[k - 1]) * gz) @ s
    gx = gx + g_state[0] + carry
    return RsnFilterParams(**grads), _sum_to(np.broadcast_to(gx, np.broadcast_shapes(np.shape(gx), x.shape)), x.shape)


def _lssm_vjp(s, p, x, g, tr, sigma_y):
    K = p.order
    bank = p.yw.shape[1:]
    grads = {name: np.zeros_like(np.asarray(getattr(p, name))) for name, _ in p.layout}
    g_total = g * activation_grad(sigma_y, tr.total_pre)
    gx = 0.0
    g_state = [None] * (K + 1)
    for k in range(K + 1):
        ga = g_total * activation_grad(sigma_y, tr.output_pre[k])
        grads["yw"][k] = _coef_grad(ga, tr.states[k], bank)
        grads["yx"][k] = _coef_grad(ga, x, bank)
        gx = gx + _c(p.yx[k]) * ga
        g_state[k] = _c(p.yw[k]) * ga
    carry_w = 0.0
    carry_c = 0.0
    for k in range(K, 0, -1):
        gf, gu, gw = tr.forget[k], tr.update[k], tr.state_gate[k]
        ct, c_prev, sw = tr.candidate[k], tr.memory[k - 1], tr.shifted[k]
        tc = np.tanh(tr.memory[k])
        g_w = g_state[k] + carry_w
        g_c = carry_c + g_w * gw * (1.0 - tc * tc)
        z_grads = {
            "w": g_w * tc * gw * (1.0 - gw),
            "f": g_c * c_prev * gf * (1.0 - gf),
            "u": g_c * ct * gu * (1.0 - gu),
            "c": g_c * gu * (1.0 - ct * ct),
        }
        carry_c = g_c * gf
        g_sw = 0.0
        for gate, gz in z_grads.items():
            grads[gate + "w"][k] = _coef_grad(gz, sw, bank)
            grads[gate + "x"][k] = _coef_grad(gz, x, bank)
            gx = gx + _c(getattr(p, gate + "x")[k]) * gz
            g_sw = g_sw + _c(getattr(p, gate + "w")[k]) * gz
        carry_w = g_sw @ s
    gx = gx + g_state[0] + carry_w
    return LssmFilterParams(**grads), _sum_to(np.broadcast_to(gx, np.broadcast_shapes(np.shape(gx), x.shape)), x.shape)
