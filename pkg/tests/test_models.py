import json

import numpy as np
import pytest
from conftest import random_perm_matrix, random_shift

from shiftnets.filters import GcnnFilterParams, gcnn_filter_direct, init_params, zeros_params
from shiftnets.models import (
    LayerSpec,
    Model,
    layer_forward,
    load_checkpoint,
    model_backward,
    model_features,
    model_forward,
    param_count,
    save_checkpoint,
    stack_layers,
)
from shiftnets.training import _relu_margin, cross_entropy, gradient_check


def test_layerspec_validation():
    with pytest.raises(ValueError):
        LayerSpec("gcnn", 0, 1, 2)
    with pytest.raises(ValueError):
        LayerSpec("rsn", 1, 1, 0)
    with pytest.raises(ValueError):
        LayerSpec("lssm", 1, 1, 2, sigma="softplus")
    with pytest.raises(ValueError):
        LayerSpec("cnn", 1, 1, 2)
    LayerSpec("gcnn", 1, 1, 0)


def test_model_rejects_unchained_layers():
    with pytest.raises(ValueError):
        Model(5, 2, [LayerSpec("gcnn", 1, 3, 2), LayerSpec("gcnn", 2, 3, 2)])


def test_single_bank_layer_is_a_graph_convolution(rng):
    s = random_shift(rng, 7)
    spec = LayerSpec("gcnn", 1, 1, 3, sigma="identity")
    bank = init_params("gcnn", 3, rng, spec.bank_shape)
    x = rng.standard_normal(7)
    out, _ = layer_forward(spec, bank, s, x[:, None])
    ref = gcnn_filter_direct(s, GcnnFilterParams(bank.taps[:, 0, 0]), x)
    np.testing.assert_allclose(out[:, 0], ref, atol=1e-12)


@pytest.mark.parametrize("kind", ["gcnn", "rsn", "lssm"])
def test_zero_banks_relu_gives_zero(kind, rng):
    s = random_shift(rng, 5)
    spec = LayerSpec(kind, 2, 3, 2, sigma="relu")
    bank = zeros_params(kind, 2, spec.bank_shape)
    out, _ = layer_forward(spec, bank, s, rng.standard_normal((5, 2)))
    assert np.all(out == 0.0)


def test_layer_superposition_over_input_features(rng):
    s = random_shift(rng, 6)
    spec = LayerSpec("gcnn", 2, 1, 3, sigma="identity")
    bank = init_params("gcnn", 3, rng, spec.bank_shape)
    x = rng.standard_normal((6, 2))
    out, _ = layer_forward(spec, bank, s, x)
    sep = sum(gcnn_filter_direct(s, GcnnFilterParams(bank.taps[:, 0, g]), x[:, g]) for g in range(2))
    np.testing.assert_allclose(out[:, 0], sep, atol=1e-12)


def test_gcnn_identity_layer_is_linear(rng):
    s = random_shift(rng, 6)
    spec = LayerSpec("gcnn", 2, 3, 4, sigma="identity")
    bank = init_params("gcnn", 4, rng, spec.bank_shape)
    a, b = rng.standard_normal((2, 6, 2))
    alpha, beta = 1.7, -0.4
    lhs, _ = layer_forward(spec, bank, s, alpha * a + beta * b)
    ra, _ = layer_forward(spec, bank, s, a)
    rb, _ = layer_forward(spec, bank, s, b)
    np.testing.assert_allclose(lhs, alpha * ra + beta * rb, atol=1e-10)


def test_layer_shape_mismatch(rng):
    s = random_shift(rng, 5)
    spec = LayerSpec("gcnn", 2, 1, 1)
    with pytest.raises(ValueError):
        layer_forward(spec, zeros_params("gcnn", 1, spec.bank_shape), s, np.zeros((5, 3)))


def test_zero_readout_gives_zero_logits(rng):
    m = Model.init(6, 4, stack_layers("rsn", 2, 2, 2), rng)
    m.readout_w[...] = 0.0
    m.readout_b[...] = 0.0
    logits, _ = model_forward(m, random_shift(rng, 6), rng.standard_normal(6))
    assert np.all(logits == 0.0)


def test_plumbing_identity_selects_entries(rng):
    n = 5
    m = Model(n, 3, [LayerSpec("gcnn", 1, 1, 0, sigma="identity")])
    m.banks[0].taps[...] = 1.0
    m.readout_w[...] = 0.0
    for c, node in enumerate([4, 0, 2]):
        m.readout_w[c, node] = 1.0
    x = rng.standard_normal(n)
    logits, _ = model_forward(m, random_shift(rng, n), x)
    np.testing.assert_array_equal(logits, x[[4, 0, 2]])


def test_one_layer_model_matches_composition(rng):
    n, F, K, C = 10, 2, 2, 3
    s = random_shift(rng, n)
    m = Model.init(n, C, [LayerSpec("gcnn", 1, F, K, sigma="tanh")], rng)
    m.readout_b[...] = rng.standard_normal(C)
    x = rng.standard_normal(n)
    feats = np.stack(
        [np.tanh(gcnn_filter_direct(s, GcnnFilterParams(m.banks[0].taps[:, f, 0]), x)) for f in range(F)],
        axis=1,
    )
    expect = m.readout_w @ feats.reshape(-1) + m.readout_b
    logits, _ = model_forward(m, s, x)
    np.testing.assert_allclose(logits, expect, atol=1e-12)


def test_batched_forward_matches_single(rng):
    s = random_shift(rng, 6)
    m = Model.init(6, 3, stack_layers("lssm", 2, 2, 2), rng)
    xs = rng.standard_normal((4, 6))
    batch, _ = model_forward(m, s, xs)
    for i in range(4):
        one, _ = model_forward(m, s, xs[i])
        np.testing.assert_allclose(batch[i], one, atol=1e-13)


def test_forward_rejects_wrong_length(rng):
    m = Model.init(6, 3, stack_layers("gcnn", 1, 2, 2), rng)
    with pytest.raises(ValueError):
        model_forward(m, random_shift(rng, 6), np.zeros(5))


@pytest.mark.parametrize("kind", ["gcnn", "rsn", "lssm"])
def test_zero_upstream_gives_zero_gradient(kind, rng):
    s = random_shift(rng, 6)
    m = Model.init(6, 3, stack_layers(kind, 2, 2, 2), rng)
    _, cache = model_forward(m, s, rng.standard_normal(6))
    assert np.all(model_backward(m, s, cache, np.zeros(3)) == 0.0)


def test_readout_gradient_closed_form(rng):
    s = random_shift(rng, 6)
    m = Model.init(6, 4, stack_layers("rsn", 1, 3, 2, sigma="tanh"), rng)
    x = rng.standard_normal((2, 6))
    _, cache = model_forward(m, s, x)
    g = rng.standard_normal((2, 4))
    grad = model_backward(m, s, cache, g)
    feats = model_features(m, s, x).reshape(2, -1)
    gm = Model(6, 4, m.layers, grad)
    np.testing.assert_allclose(gm.readout_w, g.T @ feats, atol=1e-12)
    np.testing.assert_allclose(gm.readout_b, g.sum(axis=0), atol=1e-12)


@pytest.mark.parametrize("kind", ["gcnn", "rsn", "lssm"])
@pytest.mark.parametrize("act", ["tanh", "relu"])
def test_full_model_gradient_matches_finite_differences(kind, act, rng):
    n, C = 8, 3
    specs = stack_layers(kind, 2, 2, 2, sigma=act, sigma_w=act, sigma_y=act)
    checked = 0
    while checked < 3:
        s = random_shift(rng, n)
        m = Model.init(n, C, specs, rng)
        x = rng.standard_normal((2, n))
        labels = rng.integers(0, C, size=2)
        if act == "relu":
            _, cache = model_forward(m, s, x)
            if _relu_margin(m, cache) < 1e-4:
                continue
        assert gradient_check(m, s, x, labels, step=1e-5) < 1e-5
        checked += 1


def test_stale_cache_is_rejected(rng):
    s = random_shift(rng, 6)
    small = Model.init(6, 3, stack_layers("gcnn", 1, 2, 2), rng)
    big = Model.init(6, 3, stack_layers("gcnn", 1, 2, 3), rng)
    _, cache = model_forward(small, s, np.ones(6))
    with pytest.raises(ValueError):
        model_backward(big, s, cache, np.ones(3))
    with pytest.raises(ValueError):
        model_backward(small, s, cache, np.ones(4))


@pytest.mark.parametrize("kind,formula,literal", [("lssm", 800, 800), ("rsn", 256, 288), ("gcnn", 64, 80)])
def test_param_counts(kind, formula, literal):
    m = Model(10, 5, [LayerSpec(kind, 4, 4, 4)])
    pc = param_count(m)
    assert pc.remark_formula == formula
    assert pc.literal == literal
    assert pc.readout == 5 * 10 * 4 + 5
    assert m.num_params == pc.literal + pc.readout


def test_flat_parameter_round_trip(rng):
    m = Model(7, 3, stack_layers("lssm", 2, 3, 2))
    vec = rng.standard_normal(m.num_params)
    m.set_params(vec)
    assert np.array_equal(m.get_params(), vec)
    assert m.get_params() is not m.theta


def test_parameter_views_alias_theta(rng):
    m = Model.init(5, 2, stack_layers("rsn", 1, 2, 2), rng)
    m.theta[...] = 0.0
    assert np.all(m.banks[0].ww == 0.0) and np.all(m.readout_w == 0.0)
    m.readout_b[1] = 3.0
    assert m.theta[-1] == 3.0


@pytest.mark.parametrize("kind", ["gcnn", "rsn", "lssm"])
def test_feature_permutation_equivariance(kind, rng):
    n = 9
    s = random_shift(rng, n)
    perm, P = random_perm_matrix(rng, n)
    m = Model.init(n, 3, stack_layers(kind, 2, 3, 3, sigma="tanh", sigma_w="tanh", sigma_y="tanh"), rng)
    x = rng.standard_normal(n)
    base = model_features(m, s, x)
    moved = model_features(m, P @ s @ P.T, P @ x)
    np.testing.assert_allclose(moved, P @ base, atol=1e-9)


def test_init_bounds(rng):
    m = Model.init(10, 5, stack_layers("gcnn", 1, 4, 3), rng)
    assert np.all(np.abs(m.banks[0].taps) <= 0.5)
    assert np.all(np.abs(m.readout_w) <= 1 / np.sqrt(40))
    assert np.all(m.readout_b == 0.0)


def test_checkpoint_round_trip(tmp_path, rng):
    m = Model.init(6, 3, stack_layers("lssm", 2, 2, 3, sigma_y="tanh"), rng)
    path = tmp_path / "ck.json"
    save_checkpoint(m, path, {"seed": 7, "spectral_radius": 1.25})
    back, meta = load_checkpoint(path)
    assert meta == {"seed": 7, "spectral_radius": 1.25}
    assert back.config() == m.config()
    assert np.array_equal(back.theta, m.theta)
    s = random_shift(rng, 6)
    x = rng.standard_normal(6)
    assert np.array_equal(model_forward(back, s, x)[0], model_forward(m, s, x)[0])


def test_checkpoint_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  \"model\": ")
    with pytest.raises(ValueError, match="line 2"):
        load_checkpoint(bad)
    bad.write_text(json.dumps({"params": []}))
    with pytest.raises(ValueError, match="model"):
        load_checkpoint(bad)


def test_backward_consistent_with_loss_gradient(rng):
    # gradient of the summed per-sample loss equals the sum of single-sample gradients
    s = random_shift(rng, 6)
    m = Model.init(6, 3, stack_layers("rsn", 2, 2, 2, sigma="tanh", sigma_w="tanh", sigma_y="tanh"), rng)
    xs = rng.standard_normal((3, 6))
    labels = np.array([0, 2, 1])
    logits, cache = model_forward(m, s, xs)
    _, g = cross_entropy(logits, labels)
    total = model_backward(m, s, cache, g)
    parts = []
    for i in range(3):
        li, ci = model_forward(m, s, xs[i])
        _, gi = cross_entropy(li, labels[i])
        parts.append(model_backward(m, s, ci, gi))
    np.testing.assert_allclose(total, sum(parts), atol=1e-12)
