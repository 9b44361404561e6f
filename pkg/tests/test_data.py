import numpy as np
import pytest

from fedaudit import ArchSpec, Dataset, PartitionSpec, evaluate, init_params, load_csv, \
    partition_non_iid, save_csv, split, synth_dataset, train


def _rows(ds):
    return sorted((tuple(f), l) for f, l in ds)


def test_synth_noiseless_per_class_identical():
    ds = synth_dataset(3, 5, 16, 0.0, 0)
    for c in range(3):
        block = ds.features[ds.labels == c]
        assert np.array_equal(block, np.tile(block[0], (5, 1)))


def test_synth_balanced_counts():
    ds = synth_dataset(5, 100, 32, 0.3, 0)
    assert len(ds) == 500
    assert np.all(ds.class_counts() == 100)


def test_synth_deterministic_and_seeded():
    a = synth_dataset(4, 10, 16, 0.5, 3)
    b = synth_dataset(4, 10, 16, 0.5, 3)
    c = synth_dataset(4, 10, 16, 0.5, 4)
    assert np.array_equal(a.features, b.features)
    assert not np.array_equal(a.features, c.features)


def test_synth_classes_separable():
    # 1-NN oracle for separability at the default desk noise level
    ds = synth_dataset(5, 100, 32, 0.3, 7)
    tr, te = split(ds, 0.3, 0)
    d = ((te.features[:, None, :] - tr.features[None, :, :]) ** 2).sum(axis=2)
    knn_acc = (tr.labels[d.argmin(axis=1)] == te.labels).mean()
    assert knn_acc >= 0.9
    # a small CNN reaches the same bar
    arch = ArchSpec.build(32, 5, [(8, 5, 2)], [16])
    params = train(arch, init_params(arch, 0), tr, 20, 0.1, 32, 0)
    assert evaluate(arch, params, te) >= 0.9


def test_split_even_per_class():
    ds = synth_dataset(5, 20, 8, 0.1, 0)
    tr, te = split(ds, 0.5, 1)
    assert len(tr) == 50 and len(te) == 50
    assert np.all(tr.class_counts() == 10)
    assert np.all(te.class_counts() == 10)


def test_split_partition_property():
    ds = synth_dataset(3, 15, 8, 0.2, 2)
    tr, te = split(ds, 0.4, 5)
    combined = _rows(tr) + _rows(te)
    assert sorted(combined) == _rows(ds)
    assert not set(_rows(tr)) & set(_rows(te))


def test_split_deterministic():
    ds = synth_dataset(3, 15, 8, 0.2, 2)
    a = split(ds, 0.3, 9)
    b = split(ds, 0.3, 9)
    assert np.array_equal(a[0].features, b[0].features)
    assert np.array_equal(a[1].labels, b[1].labels)


def test_split_rejects_tiny_class():
    ds = Dataset(np.zeros((3, 4)), np.array([0, 0, 1]), 2)
    with pytest.raises(ValueError, match="class 1"):
        split(ds, 0.5, 0)


def test_split_rejects_bad_fraction(small_ds):
    for frac in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            split(small_ds, frac, 0)


def test_partition_even_split():
    ds = synth_dataset(2, 100, 8, 0.1, 0)
    parts = partition_non_iid(ds, PartitionSpec(2), 0)
    for p in parts:
        assert np.all(p.class_counts() == 50)


def test_partition_deficit_counts():
    # deficit 0.4 on a share of 50 leaves 30 samples
    ds = synth_dataset(2, 100, 8, 0.1, 1)
    spec = PartitionSpec(2, {(1, 0): 0.4})
    parts = partition_non_iid(ds, spec, 0)
    assert parts[1].class_counts()[0] == 30
    assert parts[0].class_counts()[0] == 50


def test_partition_disjoint():
    ds = synth_dataset(3, 30, 8, 0.3, 4)
    parts = partition_non_iid(ds, PartitionSpec(3, {(0, 1): 0.5}), 2)
    seen = set()
    for p in parts:
        rows = set(_rows(p))
        assert not rows & seen
        seen |= rows
    assert seen <= set(_rows(ds))


def test_partition_rejects_infeasible():
    ds = synth_dataset(2, 3, 8, 0.1, 0)
    with pytest.raises(ValueError):
        partition_non_iid(ds, PartitionSpec(5), 0)  # share would be 0
    with pytest.raises(ValueError):
        partition_non_iid(ds, PartitionSpec(2, {(0, 7): 0.4}), 0)  # unknown class


def test_partition_spec_validation():
    with pytest.raises(ValueError):
        PartitionSpec(0)
    with pytest.raises(ValueError):
        PartitionSpec(2, {(0, 0): 0.95})
    with pytest.raises(ValueError):
        PartitionSpec(2, {(5, 0): 0.4})


def test_csv_round_trip(tmp_path):
    ds = synth_dataset(4, 6, 10, 0.4, 8)
    path = tmp_path / "ds.csv"
    save_csv(ds, path)
    back = load_csv(path)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)
    assert back.num_classes == ds.num_classes


def test_csv_two_rows(tmp_path):
    path = tmp_path / "two.csv"
    path.write_text("f0,f1,label\n0.5,1.5,0\n-1.0,2.0,1\n")
    ds = load_csv(path)
    assert len(ds) == 2
    assert ds.length == 2
    assert ds.num_classes == 2


def test_csv_rejects_nan_with_line_number(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("f0,f1,label\n0.5,1.5,0\nNaN,2.0,1\n")
    with pytest.raises(ValueError, match="line 3"):
        load_csv(path)


def test_csv_rejects_ragged_row(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("f0,f1,label\n0.5,1.5,0\n1.0,1\n")
    with pytest.raises(ValueError, match="line 3"):
        load_csv(path)


def test_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "hdr.csv"
    path.write_text("a,b,label\n0.5,1.5,0\n")
    with pytest.raises(ValueError, match="line 1"):
        load_csv(path)


def test_csv_rejects_bad_label(tmp_path):
    path = tmp_path / "lbl.csv"
    path.write_text("f0,label\n0.5,1.5\n")
    with pytest.raises(ValueError, match="line 2"):
        load_csv(path)
    path.write_text("f0,label\n0.5,-1\n")
    with pytest.raises(ValueError, match="line 2"):
        load_csv(path)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.array([[np.inf, 0.0]]), np.array([0]), 1)
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 3)), np.array([0, 5]), 2)
    with pytest.raises(ValueError):
        Dataset(np.zeros(3), np.array([0]), 1)
