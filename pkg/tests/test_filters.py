import math

import numpy as np
import pytest
from conftest import random_perm_matrix, random_shift

from shiftnets.filters import (
    GcnnFilterParams,
    LssmFilterParams,
    RsnFilterParams,
    filter_forward,
    filter_vjp,
    gcnn_filter_direct,
    gcnn_filter_recursive,
    init_params,
    lssm_filter,
    param_size,
    params_from_vector,
    params_to_vector,
    rsn_filter,
    zeros_params,
)
from shiftnets.numerics import make_rng
from shiftnets.training import fd_floor, finite_diff_grad, relative_error

ACT = {
    "identity": lambda v: v,
    "relu": lambda v: max(v, 0.0),
    "tanh": math.tanh,
    "sigmoid": lambda v: 1.0 / (1.0 + math.exp(-v)),
}


def shift_list(s, w):
    n = len(w)
    return [sum(s[i][j] * w[j] for j in range(n)) for i in range(n)]


def rsn_scalar(s, p, x, sw, sy):
    s, x = s.tolist(), list(x)
    n, K = len(x), p.order
    fw, fy = ACT[sw], ACT[sy]
    w = list(x)
    total = [fy(p.yw[0] * w[i] + p.yx[0] * x[i]) for i in range(n)]
    for k in range(1, K + 1):
        sh = shift_list(s, w)
        w = [fw(p.ww[k - 1] * sh[i] + p.wx[k - 1] * x[i]) for i in range(n)]
        for i in range(n):
            total[i] += fy(p.yw[k] * w[i] + p.yx[k] * x[i])
    return np.array([fy(t) for t in total])


def lssm_scalar(s, p, x, sy):
    s, x = s.tolist(), list(x)
    n, K = len(x), p.order
    sig, fy = ACT["sigmoid"], ACT[sy]
    w, c = list(x), [0.0] * n
    total = [fy(p.yw[0] * w[i] + p.yx[0] * x[i]) for i in range(n)]
    for k in range(1, K + 1):
        sh = shift_list(s, w)
        new_w = []
        for i in range(n):
            ct = math.tanh(p.cw[k] * sh[i] + p.cx[k] * x[i])
            gf = sig(p.fw[k] * sh[i] + p.fx[k] * x[i])
            gu = sig(p.uw[k] * sh[i] + p.ux[k] * x[i])
            gw = sig(p.ww[k] * sh[i] + p.wx[k] * x[i])
            c[i] = gf * c[i] + gu * ct
            new_w.append(gw * math.tanh(c[i]))
        w = new_w
        for i in range(n):
            total[i] += fy(p.yw[k] * w[i] + p.yx[k] * x[i])
    return np.array([fy(t) for t in total])


def test_gcnn_identity_taps(rng):
    s = random_shift(rng, 6)
    x = rng.standard_normal(6)
    y, tr = gcnn_filter_recursive(s, GcnnFilterParams(np.array([1.0, 0, 0, 0])), x)
    np.testing.assert_array_equal(y, x)
    assert len(tr.states) == 4


def test_gcnn_zero_input(rng):
    s = random_shift(rng, 5)
    y, tr = gcnn_filter_recursive(s, GcnnFilterParams(rng.standard_normal(4)), np.zeros(5))
    assert np.all(y == 0) and np.all(tr.state_norms() == 0)


def test_gcnn_direct_scaling_and_path_shift():
    x = np.array([1.0, -2.0, 3.0])
    np.testing.assert_allclose(gcnn_filter_direct(np.eye(3), GcnnFilterParams(np.array([2.5])), x), 2.5 * x)
    a = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    y = gcnn_filter_direct(a, GcnnFilterParams(np.array([0.0, 1.0])), np.array([1.0, 0.0, 0.0]))
    np.testing.assert_array_equal(y, [0.0, 1.0, 0.0])


def test_gcnn_recursive_matches_direct(rng):
    for _ in range(100):
        n, K = rng.integers(2, 21), rng.integers(0, 9)
        s = random_shift(rng, n, symmetric=bool(rng.integers(2)))
        p = GcnnFilterParams(rng.standard_normal(K + 1))
        x = rng.standard_normal(n)
        y, _ = gcnn_filter_recursive(s, p, x)
        assert np.max(np.abs(y - gcnn_filter_direct(s, p, x))) < 1e-10


def test_filters_reject_dimension_mismatch(rng):
    s = random_shift(rng, 4)
    with pytest.raises(ValueError):
        gcnn_filter_recursive(s, GcnnFilterParams(np.ones(2)), np.ones(5))
    with pytest.raises(ValueError):
        rsn_filter(s, init_params("rsn", 2, rng), np.ones(3))
    with pytest.raises(ValueError):
        lssm_filter(s, init_params("lssm", 2, rng), np.ones(3))


def rsn_from_taps(h):
    K = len(h) - 1
    return RsnFilterParams(
        ww=np.ones(K), wx=np.zeros(K), yw=np.array(h, dtype=float), yx=np.zeros(K + 1)
    )


def test_rsn_reduces_to_gcnn(rng):
    for _ in range(20):
        n, K = rng.integers(2, 15), rng.integers(1, 8)
        s = random_shift(rng, n)
        h = rng.standard_normal(K + 1)
        x = rng.standard_normal(n)
        y_rsn, _ = rsn_filter(s, rsn_from_taps(h), x, "identity", "identity")
        y_gcnn, _ = gcnn_filter_recursive(s, GcnnFilterParams(h), x)
        assert np.max(np.abs(y_rsn - y_gcnn)) < 1e-12


def test_rsn_zero_params(rng):
    s = random_shift(rng, 5)
    y, _ = rsn_filter(s, zeros_params("rsn", 3), rng.standard_normal(5), "tanh", "identity")
    assert np.all(y == 0)


@pytest.mark.parametrize("acts", [("tanh", "tanh"), ("relu", "relu"), ("sigmoid", "identity")])
def test_rsn_matches_transliteration(acts, rng):
    for _ in range(5):
        s = random_shift(rng, 4)
        p = init_params("rsn", 2, rng)
        x = rng.standard_normal(4)
        y, _ = rsn_filter(s, p, x, *acts)
        np.testing.assert_allclose(y, rsn_scalar(s, p, x, *acts), rtol=1e-12, atol=1e-13)


def test_lssm_zero_everything():
    s = np.array([[0, 1.0], [1.0, 0]])
    y, tr = lssm_filter(s, zeros_params("lssm", 3), np.zeros(2), "sigmoid")
    for g in tr.gates():
        assert np.all(g == 0.5)
    for k in range(1, 4):
        assert np.all(tr.candidate[k] == 0) and np.all(tr.memory[k] == 0) and np.all(tr.states[k] == 0)
    # each of the K+1 output terms is sigmoid(0) = 0.5, then the sum passes sigma_y again
    np.testing.assert_allclose(y, [1 / (1 + math.exp(-2.0))] * 2, rtol=1e-15)


def test_lssm_saturated_forget_gate_freezes_memory(rng):
    s = random_shift(rng, 5)
    p = init_params("lssm", 4, rng)
    # gates are driven through x alone: forget saturates open, update shut
    p.fw[:] = 0.0
    p.uw[:] = 0.0
    x = np.ones(5)
    p.fx[:] = 30.0
    p.ux[:] = -30.0
    _, tr = lssm_filter(s, p, x, "relu")
    for k in range(1, 5):
        np.testing.assert_allclose(tr.memory[k], tr.memory[0], atol=1e-12)


@pytest.mark.parametrize("sy", ["tanh", "relu", "identity"])
def test_lssm_matches_transliteration(sy, rng):
    for _ in range(5):
        s = random_shift(rng, 4)
        p = init_params("lssm", 2, rng)
        x = rng.standard_normal(4)
        y, _ = lssm_filter(s, p, x, sy)
        np.testing.assert_allclose(y, lssm_scalar(s, p, x, sy), rtol=1e-12, atol=1e-13)


def test_lssm_gate_range_and_state_bound(rng):
    s = random_shift(rng, 10)
    p = init_params("lssm", 8, rng)
    _, tr = lssm_filter(s, p, rng.standard_normal(10) * 3, "relu")
    for g in tr.gates():
        assert np.all((g > 0) & (g < 1))
    for w in tr.states[1:]:
        assert np.max(np.abs(w)) < 1


def test_param_sizes():
    assert param_size("gcnn", 4) == 5
    assert param_size("rsn", 4) == 4 * 4 + 2
    assert param_size("lssm", 4) == 10 * 5
    assert param_size("lssm", 4, (3, 2)) == 300


def test_params_vector_round_trip(rng):
    for kind in ("gcnn", "rsn", "lssm"):
        vec = rng.standard_normal(param_size(kind, 3, (2, 2)))
        p = params_from_vector(kind, 3, vec, (2, 2))
        assert np.array_equal(params_to_vector(p), vec)
        first = p.layout[0][0]
        getattr(p, first)[0, 0, 0] = 99.0
        assert vec[0] == 99.0  # arrays are views


def test_init_bounds(rng):
    p = init_params("lssm", 3, rng)
    v = params_to_vector(p)
    assert np.all(np.abs(v) <= 0.5)


def test_batched_bank_matches_single_filters(rng):
    s = random_shift(rng, 6)
    for kind in ("gcnn", "rsn", "lssm"):
        bank = init_params(kind, 3, rng, (3, 2))
        x = rng.standard_normal((4, 1, 2, 6))
        y, _ = filter_forward(kind, s, bank, x, "tanh", "relu")
        assert y.shape == (4, 3, 2, 6)
        for f in range(3):
            for g in range(2):
                single = type(bank)(**{name: getattr(bank, name)[:, f, g] for name, _ in bank.layout})
                for b in range(4):
                    ys, _ = filter_forward(kind, s, single, x[b, 0, g], "tanh", "relu")
                    np.testing.assert_allclose(y[b, f, g], ys, rtol=1e-13, atol=1e-14)


@pytest.mark.parametrize("kind", ["gcnn", "rsn", "lssm"])
def test_permutation_equivariance(kind, rng):
    for _ in range(10):
        s = random_shift(rng, 9)
        p = init_params(kind, 3, rng)
        x = rng.standard_normal(9)
        _, P = random_perm_matrix(rng, 9)
        y, _ = filter_forward(kind, s, p, x, "tanh", "relu")
        yp, _ = filter_forward(kind, P @ s @ P.T, p, P @ x, "tanh", "relu")
        assert np.max(np.abs(yp - P @ y)) < 1e-10


def test_linear_state_growth_and_decay(rng):
    n = 8
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = np.array([1.5, 0.9, 0.7, -0.5, 0.4, 0.3, 0.2, 0.1])
    s = q @ np.diag(lam) @ q.T
    x = q @ np.ones(n)
    _, tr = gcnn_filter_recursive(s, GcnnFilterParams(np.ones(31)), x)
    norms = tr.state_norms()
    assert norms[30] / norms[29] == pytest.approx(1.5, rel=0.01)
    sn = s / 1.5
    v = q[:, 3]
    _, tr = gcnn_filter_recursive(sn, GcnnFilterParams(np.ones(31)), v)
    expect = (0.5 / 1.5) ** np.arange(31)
    np.testing.assert_allclose(tr.state_norms(), expect, atol=1e-8)


def test_gcnn_tap_gradient_closed_form(rng):
    s = random_shift(rng, 6)
    x = rng.standard_normal(6)
    up = rng.standard_normal(6)
    p = GcnnFilterParams(rng.standard_normal(4))
    g, gx = filter_vjp("gcnn", s, p, x, up)
    for k in range(4):
        assert g.taps[k] == pytest.approx(up @ np.linalg.matrix_power(s, k) @ x, abs=1e-12)
    H = sum(p.taps[k] * np.linalg.matrix_power(s, k) for k in range(4))
    np.testing.assert_allclose(gx, H.T @ up, atol=1e-12)


@pytest.mark.parametrize("kind", ["gcnn", "rsn", "lssm"])
def test_zero_upstream_gives_zero_gradients(kind, rng):
    s = random_shift(rng, 5)
    p = init_params(kind, 3, rng)
    g, gx = filter_vjp(kind, s, p, rng.standard_normal(5), np.zeros(5), "tanh", "tanh")
    assert np.all(params_to_vector(g) == 0) and np.all(gx == 0)


@pytest.mark.parametrize("kind", ["gcnn", "rsn", "lssm"])
@pytest.mark.parametrize("acts", [("tanh", "tanh"), ("relu", "relu"), ("sigmoid", "identity")])
def test_filter_vjp_matches_finite_differences(kind, acts, rng):
    n, K = 6, 3
    for _ in range(5):
        s = random_shift(rng, n)
        p = init_params(kind, K, rng)
        x = rng.standard_normal(n)
        up = rng.standard_normal(n)
        sw, sy = acts
        if "relu" in acts:
            # keep away from kinks: skip draws with a relu argument near zero
            _, tr = filter_forward(kind, s, p, x, sw, sy)
            pre = tr.output_pre + [tr.total_pre] + (tr.state_pre[1:] if kind == "rsn" else [])
            if kind != "gcnn" and min(np.min(np.abs(a)) for a in pre) < 1e-4:
                continue
        gp, gx = filter_vjp(kind, s, p, x, up, sw, sy)
        theta = params_to_vector(p)

        def f_theta(th):
            q = params_from_vector(kind, K, th.copy())
            y, _ = filter_forward(kind, s, q, x, sw, sy)
            return float(up @ y)

        def f_x(xx):
            y, _ = filter_forward(kind, s, p, xx, sw, sy)
            return float(up @ y)

        floor = fd_floor(f_theta(theta))
        assert relative_error(params_to_vector(gp), finite_diff_grad(f_theta, theta, 1e-5), floor).max() < 1e-5
        assert relative_error(gx, finite_diff_grad(f_x, x, 1e-5), floor).max() < 1e-5


def test_vjp_rejects_mismatched_trace(rng):
    s = random_shift(rng, 4)
    p = init_params("rsn", 2, rng)
    _, tr = filter_forward("lssm", s, init_params("lssm", 2, rng), np.ones(4))
    with pytest.raises(ValueError):
        filter_vjp("rsn", s, p, np.ones(4), np.ones(4), trace=tr)
