import numpy as np
import pytest

from fedaudit import AttackSpec, synth_dataset
from fedaudit.attacks import (attack_additive_gaussian, attack_feature_poison,
                              attack_gradient_ascent, attack_label_swap,
                              attack_random_label_and_feature, attack_random_label_flip,
                              attack_same_value, attack_sign_flip, apply_data_attack,
                              default_noise_std)
from fedaudit.nn import ArchSpec, ModelParams, init_params, loss_and_grad, params_to_vector
from fedaudit import train


@pytest.fixture
def ds():
    return synth_dataset(4, 25, 12, 0.3, 0)


# ---------------------------------------------------------------- data attacks

def test_rl_two_classes_full_fraction_flips_everything():
    ds2 = synth_dataset(2, 10, 8, 0.1, 0)
    out = attack_random_label_flip(ds2, 1.0, 5)
    assert np.all(out.labels == 1 - ds2.labels)


def test_rl_features_untouched(ds):
    out = attack_random_label_flip(ds, 0.7, 5)
    assert np.array_equal(out.features, ds.features)


def test_rl_exact_diff_count():
    ds = synth_dataset(5, 20, 8, 0.2, 1)  # n=100
    out = attack_random_label_flip(ds, 0.5, 3)
    assert int((out.labels != ds.labels).sum()) == 50


def test_rl_rejects_single_class():
    ds1 = synth_dataset(1, 5, 8, 0.1, 0)
    with pytest.raises(ValueError):
        attack_random_label_flip(ds1, 0.5, 0)


def test_rlf_zero_noise_equals_rl(ds):
    a = attack_random_label_flip(ds, 0.4, 9)
    b = attack_random_label_and_feature(ds, 0.4, 0.0, 9)
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.features, b.features)


def test_rlf_noise_variance_matches():
    ds = synth_dataset(2, 200, 32, 0.1, 2)  # selected n*l >= 1e4 at fraction 1
    std = 0.8
    out = attack_random_label_and_feature(ds, 1.0, std, 4)
    mse = float(((out.features - ds.features) ** 2).mean())
    assert abs(mse - std ** 2) <= 0.2 * std ** 2


def test_rlf_unselected_rows_untouched(ds):
    out = attack_random_label_and_feature(ds, 0.3, 0.5, 11)
    untouched = out.labels == ds.labels
    # unselected rows keep bit-identical features (selected rows all differ
    # in label by construction)
    assert np.array_equal(out.features[untouched], ds.features[untouched])


def test_ls_full_fraction_involution(ds):
    once = attack_label_swap(ds, 0, 2, 1.0, 7)
    twice = attack_label_swap(once, 0, 2, 1.0, 7)
    assert np.array_equal(twice.labels, ds.labels)
    assert np.array_equal(twice.features, ds.features)


def test_ls_conserves_pair_counts(ds):
    out = attack_label_swap(ds, 1, 3, 0.6, 2)
    before = ds.class_counts()
    after = out.class_counts()
    assert before[1] + before[3] == after[1] + after[3]


def test_ls_other_classes_untouched(ds):
    out = attack_label_swap(ds, 0, 1, 1.0, 2)
    others = (ds.labels != 0) & (ds.labels != 1)
    assert np.array_equal(out.labels[others], ds.labels[others])


def test_ls_rejects_missing_class(ds):
    with pytest.raises(ValueError):
        attack_label_swap(ds, 0, 9, 1.0, 0)


def test_fp_labels_untouched(ds):
    out = attack_feature_poison(ds, 0.8, 1.5, 3)
    assert np.array_equal(out.labels, ds.labels)


def test_fp_rejects_zero_fraction_or_noise(ds):
    with pytest.raises(ValueError):
        attack_feature_poison(ds, 0.0, 1.0, 0)
    with pytest.raises(ValueError):
        attack_feature_poison(ds, 0.5, 0.0, 0)
    out = attack_feature_poison(ds, 1.0, 0.5, 0)
    assert np.all(out.features != ds.features) or (out.features != ds.features).mean() > 0.99


def test_fp_noise_variance_matches():
    ds = synth_dataset(2, 200, 32, 0.1, 6)
    std = 1.2
    out = attack_feature_poison(ds, 1.0, std, 8)
    mse = float(((out.features - ds.features) ** 2).mean())
    assert abs(mse - std ** 2) <= 0.2 * std ** 2


def test_data_attacks_preserve_shape(ds):
    for out in (attack_random_label_flip(ds, 0.5, 0),
                attack_random_label_and_feature(ds, 0.5, 0.3, 0),
                attack_label_swap(ds, 0, 1, 0.5, 0),
                attack_feature_poison(ds, 0.5, 0.3, 0)):
        assert len(out) == len(ds)
        assert out.length == ds.length
        assert np.all(np.isfinite(out.features))


# --------------------------------------------------------------- model attacks

def _scalar_params(values):
    return ModelParams([(np.array([[[v]]]), np.zeros(1)) for v in values])


def test_sf_formula():
    params = ModelParams([(np.array([[[1.0, -2.0]]]), np.array([0.5]))])
    out = attack_sign_flip(params, 3.0)
    assert np.array_equal(out.layers[0][0], np.array([[[-3.0, 6.0]]]))
    assert np.array_equal(out.layers[0][1], np.array([-1.5]))


def test_sf_scale_one_involution(tiny_params):
    back = attack_sign_flip(attack_sign_flip(tiny_params, 1.0), 1.0)
    for (wa, ba), (wb, bb) in zip(back.layers, tiny_params.layers):
        assert np.array_equal(wa, wb)
        assert np.array_equal(ba, bb)


def test_sf_norm_homogeneity(tiny_params):
    out = attack_sign_flip(tiny_params, 2.5)
    assert np.linalg.norm(params_to_vector(out)) == pytest.approx(
        2.5 * np.linalg.norm(params_to_vector(tiny_params)))


def test_sf_rejects_small_scale(tiny_params):
    with pytest.raises(ValueError):
        attack_sign_flip(tiny_params, 0.5)


def test_sv_constant(tiny_params):
    out = attack_same_value(tiny_params, 100.0)
    for w, b in out.layers:
        assert np.all(w == 100.0)
        assert np.all(b == 100.0)


def test_sv_idempotent(tiny_params):
    once = attack_same_value(tiny_params, 7.0)
    twice = attack_same_value(once, 7.0)
    for (wa, ba), (wb, bb) in zip(once.layers, twice.layers):
        assert np.array_equal(wa, wb)
        assert np.array_equal(ba, bb)


def test_sv_preserves_shapes(tiny_params):
    out = attack_same_value(tiny_params, 1.0)
    for (wa, ba), (wb, bb) in zip(out.layers, tiny_params.layers):
        assert wa.shape == wb.shape and ba.shape == bb.shape


def test_aga_deterministic(tiny_params):
    a = attack_additive_gaussian(tiny_params, 0.5, 42)
    b = attack_additive_gaussian(tiny_params, 0.5, 42)
    for (wa, _), (wb, _) in zip(a.layers, b.layers):
        assert np.array_equal(wa, wb)


def test_aga_tiny_noise_limit(tiny_params):
    out = attack_additive_gaussian(tiny_params, 1e-12, 0)
    for (wa, ba), (wb, bb) in zip(out.layers, tiny_params.layers):
        assert np.abs(wa - wb).max() <= 1e-10
        assert np.abs(ba - bb).max() <= 1e-10


def test_aga_empirical_std():
    arch = ArchSpec.build(64, 4, [(16, 5, 1)], [12])
    params = init_params(arch, 0)
    assert params.num_params() >= 10_000
    std = 0.7
    out = attack_additive_gaussian(params, std, 3)
    deltas = params_to_vector(out) - params_to_vector(params)
    assert abs(float(deltas.std()) - std) <= 0.1 * std


def test_ga_equals_ascent_train(tiny_arch, tiny_params, small_ds):
    a = attack_gradient_ascent(tiny_arch, small_ds, tiny_params, 2, 0.05, 16, 5)
    b = train(tiny_arch, tiny_params, small_ds, 2, 0.05, 16, 5, direction="ascent")
    for (wa, _), (wb, _) in zip(a.layers, b.layers):
        assert np.array_equal(wa, wb)


def test_ga_increases_loss(tiny_arch, tiny_params, small_ds):
    batch = [(small_ds.features[i], int(small_ds.labels[i])) for i in range(len(small_ds))]
    before, _ = loss_and_grad(tiny_arch, tiny_params, batch)
    out = attack_gradient_ascent(tiny_arch, small_ds, tiny_params, 1, 0.01, 16, 5)
    after, _ = loss_and_grad(tiny_arch, out, batch)
    assert after >= before


def test_ga_zero_epochs_unchanged(tiny_arch, tiny_params, small_ds):
    out = attack_gradient_ascent(tiny_arch, small_ds, tiny_params, 0, 0.05, 16, 5)
    for (wa, _), (wb, _) in zip(out.layers, tiny_params.layers):
        assert np.array_equal(wa, wb)


# ----------------------------------------------------------------- AttackSpec

def test_attack_spec_rejects_irrelevant_fields():
    with pytest.raises(ValueError):
        AttackSpec(kind="SF", fraction=0.5)
    with pytest.raises(ValueError):
        AttackSpec(kind="NONE", noise_std=1.0)
    with pytest.raises(ValueError):
        AttackSpec(kind="RL", constant_value=5.0)


def test_attack_spec_validates_values():
    with pytest.raises(ValueError):
        AttackSpec(kind="RL", fraction=0.0)
    with pytest.raises(ValueError):
        AttackSpec(kind="SF", sign_scale=0.9)
    with pytest.raises(ValueError):
        AttackSpec(kind="LS", swap_pair=(1, 1))
    with pytest.raises(ValueError):
        AttackSpec(kind="bogus")


def test_apply_data_attack_defaults(ds):
    out = apply_data_attack(AttackSpec(kind="RL"), ds, 3)
    assert np.all(out.labels != ds.labels)  # default fraction 1.0, always different label
    same = apply_data_attack(AttackSpec(kind="SV", constant_value=1.0), ds, 3)
    assert same is ds


def test_default_noise_std_tracks_feature_std(ds):
    assert default_noise_std(ds) == pytest.approx(3.0 * float(np.std(ds.features)))
