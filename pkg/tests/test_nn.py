import math

import numpy as np
import pytest

from fedaudit import ArchSpec, evaluate, forward, init_params, loss_and_grad, synth_dataset, train
from fedaudit.nn import ModelParams, params_to_vector, vector_to_params

from oracles import central_differences


def test_arch_tap_width():
    arch = ArchSpec.build(32, 5, [(8, 5, 2)], [16])
    # (32-5)//2+1 = 14 positions, 8 filters
    assert arch.tap_width == 112
    assert arch.tap_layer_index == 0
    deep = ArchSpec.build(32, 5, [(4, 5, 1), (6, 3, 2)], [])
    # 28 after first conv, (28-3)//2+1 = 13 after second
    assert deep.tap_width == 6 * 13
    assert deep.tap_layer_index == 1


def test_arch_rejects_inconsistent_tap():
    with pytest.raises(ValueError):
        ArchSpec(32, 5, ((8, 5, 2),), (16,), tap_layer_index=0, tap_width=999)
    with pytest.raises(ValueError):
        ArchSpec.build(4, 2, [(1, 9, 1)], [])  # kernel longer than input


def test_init_params_deterministic(tiny_arch):
    a = init_params(tiny_arch, 1)
    b = init_params(tiny_arch, 1)
    for (wa, ba), (wb, bb) in zip(a.layers, b.layers):
        assert np.array_equal(wa, wb)
        assert np.array_equal(ba, bb)


def test_init_params_seeds_differ(tiny_arch):
    a = init_params(tiny_arch, 1)
    b = init_params(tiny_arch, 2)
    assert any(not np.array_equal(wa, wb) for (wa, _), (wb, _) in zip(a.layers, b.layers))


def test_init_params_zero_biases(tiny_arch):
    params = init_params(tiny_arch, 3)
    for _, b in params.layers:
        assert np.all(b == 0.0)


def test_forward_identity_conv_taps_input():
    # 1 filter, kernel 1, stride 1, weight 1: post-ReLU activations equal x
    arch = ArchSpec.build(3, 2, [(1, 1, 1)], [])
    params = ModelParams([
        (np.ones((1, 1, 1)), np.zeros(1)),
        (np.zeros((3, 2)), np.zeros(2)),
    ])
    rec = forward(arch, params, np.array([1.0, 2.0, 3.0]), 0)
    assert np.array_equal(rec.activations, np.array([1.0, 2.0, 3.0]))


def test_forward_zero_output_weights_uniform(tiny_arch, tiny_params):
    layers = [(w.copy(), b.copy()) for w, b in tiny_params.layers]
    layers[-1] = (np.zeros_like(layers[-1][0]), np.zeros_like(layers[-1][1]))
    params = ModelParams(layers)
    rec = forward(tiny_arch, params, np.zeros(8), 1)
    assert np.allclose(rec.probs, 1.0 / 3.0)
    assert rec.class_prob == pytest.approx(1.0 / 3.0)


def test_forward_probs_sum_to_one(tiny_arch, tiny_params):
    rng = np.random.default_rng(0)
    for _ in range(20):
        rec = forward(tiny_arch, tiny_params, rng.normal(size=8), 0)
        assert abs(rec.probs.sum() - 1.0) <= 1e-9
        assert np.all(rec.probs >= 0.0) and np.all(rec.probs <= 1.0)


def test_forward_stable_for_huge_logits():
    # scaled-up weights drive logits to ~1e4; softmax must stay exact
    arch = ArchSpec.build(4, 3, [(1, 1, 1)], [])
    params = ModelParams([
        (np.full((1, 1, 1), 100.0), np.zeros(1)),
        (np.full((4, 3), 25.0) + np.arange(12).reshape(4, 3), np.zeros(3)),
    ])
    rec = forward(arch, params, np.array([10.0, 10.0, 10.0, 10.0]), 2)
    assert np.all(np.isfinite(rec.probs))
    assert abs(rec.probs.sum() - 1.0) <= 1e-9


def test_forward_rejects_bad_shapes(tiny_arch, tiny_params):
    with pytest.raises(ValueError):
        forward(tiny_arch, tiny_params, np.zeros(9), 0)
    with pytest.raises(ValueError):
        forward(tiny_arch, tiny_params, np.zeros(8), 3)


def test_loss_uniform_probs_is_log_c():
    arch = ArchSpec.build(6, 5, [(2, 3, 1)], [])
    params = init_params(arch, 0)
    layers = [(w.copy(), b.copy()) for w, b in params.layers]
    layers[-1] = (np.zeros_like(layers[-1][0]), np.zeros_like(layers[-1][1]))
    params = ModelParams(layers)
    batch = [(np.ones(6), 0), (np.zeros(6), 4)]
    loss, _ = loss_and_grad(arch, params, batch)
    assert loss == pytest.approx(math.log(5.0), abs=1e-12)


def test_loss_and_grad_rejects_empty(tiny_arch, tiny_params):
    with pytest.raises(ValueError):
        loss_and_grad(tiny_arch, tiny_params, [])


def test_loss_duplicated_batch_invariant(tiny_arch, tiny_params, small_ds):
    batch = [(small_ds.features[i], int(small_ds.labels[i])) for i in range(6)]
    loss1, g1 = loss_and_grad(tiny_arch, tiny_params, batch)
    loss2, g2 = loss_and_grad(tiny_arch, tiny_params, batch + batch)
    assert loss1 == pytest.approx(loss2, rel=1e-12)
    for (wa, ba), (wb, bb) in zip(g1.layers, g2.layers):
        assert np.allclose(wa, wb, atol=1e-12)
        assert np.allclose(ba, bb, atol=1e-12)


def test_gradients_match_finite_differences():
    # every parameter of a <=500-parameter net, central differences eps=1e-5
    arch = ArchSpec.build(10, 3, [(3, 3, 2)], [6])
    params = init_params(arch, 11)
    ds = synth_dataset(3, 8, 10, 0.4, 5)
    batch = [(ds.features[i], int(ds.labels[i])) for i in range(12)]
    assert params.num_params() <= 500

    _, analytic = loss_and_grad(arch, params, batch)

    def f(layers):
        loss, _ = loss_and_grad(arch, ModelParams(layers), batch)
        return loss

    numeric = central_differences(f, [(w.copy(), b.copy()) for w, b in params.layers])
    for (aw, ab), (nw, nb) in zip(analytic.layers, numeric):
        for a, n in ((aw, nw), (ab, nb)):
            scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
            rel = np.abs(a - n) / scale
            mask = np.maximum(np.abs(a), np.abs(n)) > 1e-10
            assert np.all(rel[mask] <= 1e-4)


def test_train_ascent_equals_negative_lr_descent(tiny_arch, tiny_params, small_ds):
    one_batch = small_ds.subset(range(10))
    up = train(tiny_arch, tiny_params, one_batch, 1, 0.05, 16, 3, direction="ascent")
    down = train(tiny_arch, tiny_params, one_batch, 1, -0.05, 16, 3, direction="descent")
    for (wa, ba), (wb, bb) in zip(up.layers, down.layers):
        assert np.array_equal(wa, wb)
        assert np.array_equal(ba, bb)


def test_train_zero_epochs_identity(tiny_arch, tiny_params, small_ds):
    out = train(tiny_arch, tiny_params, small_ds, 0, 0.05, 16, 0)
    for (wa, ba), (wb, bb) in zip(out.layers, tiny_params.layers):
        assert np.array_equal(wa, wb)
        assert np.array_equal(ba, bb)


def test_train_validates_inputs(tiny_arch, tiny_params, small_ds):
    with pytest.raises(ValueError):
        train(tiny_arch, tiny_params, small_ds, -1, 0.05, 16, 0)
    with pytest.raises(ValueError):
        train(tiny_arch, tiny_params, small_ds, 1, 0.0, 16, 0)
    with pytest.raises(ValueError):
        train(tiny_arch, tiny_params, small_ds, 1, 0.05, 16, 0, direction="sideways")


def test_train_deterministic(tiny_arch, tiny_params, small_ds):
    a = train(tiny_arch, tiny_params, small_ds, 2, 0.05, 8, 9)
    b = train(tiny_arch, tiny_params, small_ds, 2, 0.05, 8, 9)
    for (wa, _), (wb, _) in zip(a.layers, b.layers):
        assert np.array_equal(wa, wb)


def test_train_separable_two_class():
    arch = ArchSpec.build(16, 2, [(2, 5, 2)], [4])
    ds = synth_dataset(2, 40, 16, 0.2, 1)
    params = train(arch, init_params(arch, 0), ds, 50, 0.1, 16, 0)
    assert evaluate(arch, params, ds) >= 0.95
    # sanity oracle: logistic regression separates the same data
    X = np.hstack([ds.features, np.ones((len(ds), 1))])
    y = ds.labels.astype(np.float64)
    w = np.zeros(X.shape[1])
    for _ in range(500):
        p = 1.0 / (1.0 + np.exp(-X @ w))
        w -= 0.5 * X.T @ (p - y) / len(y)
    assert (((X @ w) > 0) == (y == 1)).mean() >= 0.95


def test_evaluate_single_correct(tiny_arch, small_ds):
    params = train(tiny_arch, init_params(tiny_arch, 0), small_ds, 30, 0.1, 16, 0)
    for i in range(len(small_ds)):
        one = small_ds.subset([i])
        acc = evaluate(tiny_arch, params, one)
        if acc == 1.0:
            return
    pytest.fail("no correctly classified sample found after training")


def test_evaluate_random_weights_near_chance():
    arch = ArchSpec.build(32, 5, [(8, 5, 2)], [16])
    ds = synth_dataset(5, 200, 32, 0.3, 2)
    acc = evaluate(arch, init_params(arch, 123), ds)
    assert 0.1 <= acc <= 0.35


def test_evaluate_deterministic(tiny_arch, tiny_params, small_ds):
    assert evaluate(tiny_arch, tiny_params, small_ds) == evaluate(tiny_arch, tiny_params, small_ds)


def test_evaluate_rejects_empty(tiny_arch, tiny_params, small_ds):
    with pytest.raises(ValueError):
        evaluate(tiny_arch, tiny_params, small_ds.subset([]))


def test_tap_length_equals_tap_width():
    for conv, dense in [([(8, 5, 2)], [16]), ([(2, 3, 1)], []), ([(4, 5, 1), (3, 3, 2)], [8])]:
        arch = ArchSpec.build(20, 4, conv, dense)
        params = init_params(arch, 0)
        rec = forward(arch, params, np.linspace(-1, 1, 20), 0)
        assert rec.activations.shape == (arch.tap_width,)


def test_forward_no_nan_for_finite_inputs(tiny_arch):
    rng = np.random.default_rng(5)
    params = init_params(tiny_arch, 0)
    scaled = ModelParams([(w * 50.0, b + 10.0) for w, b in params.layers])
    for _ in range(30):
        rec = forward(tiny_arch, scaled, rng.normal(scale=100.0, size=8), 2)
        assert np.all(np.isfinite(rec.probs))
        assert np.all(np.isfinite(rec.activations))


def test_vector_round_trip(tiny_params):
    vec = params_to_vector(tiny_params)
    back = vector_to_params(vec, tiny_params)
    for (wa, ba), (wb, bb) in zip(tiny_params.layers, back.layers):
        assert np.array_equal(wa, wb)
        assert np.array_equal(ba, bb)
