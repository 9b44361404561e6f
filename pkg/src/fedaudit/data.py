"""Labeled time-series datasets: synthesis, CSV I/O, splitting, client partitioning.

The synthetic generator produces frequency-separated sinusoid classes, a
controllable stand-in for real signal corpora. Partitioning follows the
unbalanced scheme where a client can hold a deficit (fewer samples) for
specific classes.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .seeds import make_rng


@dataclass
class Dataset:
    """Fixed-length feature vectors with integer class labels.

    features is (n, length) float64, labels is (n,) int64 with values in
    [0, num_classes). All features must be finite.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array of shape (n, length)")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must be 1-D with one entry per sample")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        if int(self.num_classes) < 1:
            raise ValueError("num_classes must be positive")
        self.num_classes = int(self.num_classes)
        if len(self.labels) > 0:
            if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
                raise ValueError("labels must lie in [0, num_classes)")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def __iter__(self):
        for i in range(len(self)):
            yield self.features[i], int(self.labels[i])

    @property
    def length(self) -> int:
        return int(self.features.shape[1])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx].copy(), self.labels[idx].copy(), self.num_classes)

    def copy(self) -> "Dataset":
        return Dataset(self.features.copy(), self.labels.copy(), self.num_classes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass(frozen=True)
class PartitionSpec:
    """Per-client class deficits for non-IID partitioning.

    deficits maps (client, class) to a fraction in [0, 0.9]; a client with
    deficit d for class c receives (1 - d) times the even per-class share.
    """

    num_clients: int
    deficits: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        for (client, cls), frac in self.deficits.items():
            if not (0 <= client < self.num_clients):
                raise ValueError(f"deficit client {client} out of range")
            if cls < 0:
                raise ValueError(f"deficit class {cls} out of range")
            if not (0.0 <= frac <= 0.9):
                raise ValueError(f"deficit fraction {frac} outside [0, 0.9]")


def synth_dataset(num_classes: int, samples_per_class: int, length: int,
                  noise_std: float, seed: int) -> Dataset:
    """Balanced multi-class set of noisy class-specific sinusoids.

    Class c is a sinusoid with frequency c+1 cycles over the window and a
    class-specific phase; i.i.d. Gaussian noise of noise_std is added per
    sample. Deterministic for a fixed seed.
    """
    if num_classes < 1 or samples_per_class < 1 or length < 1:
        raise ValueError("num_classes, samples_per_class and length must be positive")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    rng = make_rng(seed)
    t = np.arange(length, dtype=np.float64)
    blocks = []
    labels = []
    for c in range(num_classes):
        phase = 2.0 * math.pi * c / num_classes
        base = np.sin(2.0 * math.pi * (c + 1) * t / length + phase)
        block = np.tile(base, (samples_per_class, 1))
        if noise_std > 0:
            block = block + rng.normal(0.0, noise_std, size=block.shape)
        blocks.append(block)
        labels.append(np.full(samples_per_class, c, dtype=np.int64))
    return Dataset(np.vstack(blocks), np.concatenate(labels), num_classes)


def split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified disjoint train/test split; every class lands in both sides."""
    if not (0.0 < test_fraction < 1.0):
        raise ValueError("test_fraction must be in (0, 1)")
    rng = make_rng(seed)
    test_mask = np.zeros(len(ds), dtype=bool)
    for c in range(ds.num_classes):
        idx = np.flatnonzero(ds.labels == c)
        if len(idx) < 2:
            raise ValueError(f"class {c} has fewer than 2 samples; cannot split")
        k = int(round(test_fraction * len(idx)))
        k = min(max(k, 1), len(idx) - 1)
        picked = idx[rng.permutation(len(idx))[:k]]
        test_mask[picked] = True
    train = ds.subset(np.flatnonzero(~test_mask))
    test = ds.subset(np.flatnonzero(test_mask))
    return train, test


def partition_non_iid(ds: Dataset, spec: PartitionSpec, seed: int) -> list[Dataset]:
    """Disjoint client datasets honoring the spec's per-class deficits.

    Client k gets floor((1 - deficit(k, c)) * share + 0.5) samples of class c,
    where share is the even per-class split n_c // K. Leftover samples are
    discarded deterministically.
    """
    K = spec.num_clients
    for (_, cls) in spec.deficits:
        if cls >= ds.num_classes:
            raise ValueError(f"deficit references class {cls} but dataset has "
                             f"{ds.num_classes} classes")
    rng = make_rng(seed)
    per_client: list[list[int]] = [[] for _ in range(K)]
    for c in range(ds.num_classes):
        idx = np.flatnonzero(ds.labels == c)
        share = len(idx) // K
        if share == 0:
            raise ValueError(f"class {c} has {len(idx)} samples, too few for {K} clients")
        shuffled = idx[rng.permutation(len(idx))]
        pos = 0
        for k in range(K):
            deficit = spec.deficits.get((k, c), 0.0)
            count = int(math.floor((1.0 - deficit) * share + 0.5))
            per_client[k].extend(shuffled[pos:pos + count].tolist())
            pos += count
    return [ds.subset(np.sort(np.asarray(ix, dtype=np.int64))) for ix in per_client]


def _csv_header(length: int) -> list[str]:
    return [f"f{i}" for i in range(length)] + ["label"]


def save_csv(ds: Dataset, path) -> None:
    """Write a dataset in the f0..f{l-1},label CSV format (UTF-8, repr floats)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_csv_header(ds.length))
        for i in range(len(ds)):
            writer.writerow([repr(float(v)) for v in ds.features[i]] + [int(ds.labels[i])])


def load_csv(path) -> Dataset:
    """Parse a f0..f{l-1},label CSV; malformed content raises with its line number."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        length = len(header) - 1
        if length < 1 or header != _csv_header(length):
            raise ValueError(f"{path}: line 1: malformed header, expected f0,...,f{{l-1}},label")
        feats = []
        labels = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != length + 1:
                raise ValueError(f"{path}: line {lineno}: expected {length + 1} fields, got {len(row)}")
            try:
                values = [float(v) for v in row[:length]]
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: non-numeric feature value") from None
            if not all(math.isfinite(v) for v in values):
                raise ValueError(f"{path}: line {lineno}: non-finite feature value")
            try:
                label = int(row[length])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: label must be an integer") from None
            if label < 0:
                raise ValueError(f"{path}: line {lineno}: label must be >= 0")
            feats.append(values)
            labels.append(label)
    if not feats:
        raise ValueError(f"{path}: no data rows")
    labels_arr = np.asarray(labels, dtype=np.int64)
    return Dataset(np.asarray(feats, dtype=np.float64), labels_arr, int(labels_arr.max()) + 1)
