"""Minimal 1-D convolutional network engine with hand-written backprop.

One fixed architecture family: a stack of strided valid 1-D convolutions
(ReLU), a stack of dense ReLU layers, and a softmax output. The flattened
post-ReLU output of the last convolutional layer is the "tap" used by the
auditor. Plain SGD only, in descent or ascent direction, all float64.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .seeds import make_rng


@dataclass(frozen=True)
class ArchSpec:
    """Network family description.

    conv_layers entries are (filters, kernel_size, stride). tap_layer_index
    names the last conv layer; tap_width is its flattened post-ReLU size,
    fully determined by input_length and conv_layers.
    """

    input_length: int
    num_classes: int
    conv_layers: tuple
    dense_layers: tuple
    tap_layer_index: int
    tap_width: int

    @staticmethod
    def build(input_length: int, num_classes: int, conv_layers, dense_layers=()) -> "ArchSpec":
        conv = tuple((int(f), int(k), int(s)) for f, k, s in conv_layers)
        dense = tuple(int(u) for u in dense_layers)
        lengths = _conv_lengths(int(input_length), conv)
        tap_width = conv[-1][0] * lengths[-1]
        return ArchSpec(int(input_length), int(num_classes), conv, dense,
                        len(conv) - 1, tap_width)

    def __post_init__(self):
        if self.input_length < 1:
            raise ValueError("input_length must be positive")
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        if len(self.conv_layers) < 1:
            raise ValueError("at least one conv layer is required (the tap point)")
        for f, k, s in self.conv_layers:
            if f < 1 or k < 1 or s < 1:
                raise ValueError("conv layer sizes must be positive")
        for u in self.dense_layers:
            if u < 1:
                raise ValueError("dense layer sizes must be positive")
        lengths = _conv_lengths(self.input_length, self.conv_layers)
        if self.tap_layer_index != len(self.conv_layers) - 1:
            raise ValueError("tap_layer_index must name the last conv layer")
        if self.tap_width != self.conv_layers[-1][0] * lengths[-1]:
            raise ValueError("tap_width inconsistent with input_length and conv_layers")

    def conv_output_lengths(self) -> list:
        return _conv_lengths(self.input_length, self.conv_layers)


def _conv_lengths(input_length: int, conv_layers) -> list:
    lengths = []
    cur = input_length
    for _, k, s in conv_layers:
        if k > cur:
            raise ValueError(f"kernel size {k} exceeds input length {cur}")
        cur = (cur - k) // s + 1
        lengths.append(cur)
    return lengths


@dataclass
class ModelParams:
    """Ordered (weights, biases) tensors for one ArchSpec.

    Layer order: conv layers, then dense layers, then the output layer.
    Conv weights are (filters, in_channels, kernel); dense weights are
    (in_dim, out_dim); biases are 1-D.
    """

    layers: list

    def clone(self) -> "ModelParams":
        return ModelParams([(w.copy(), b.copy()) for w, b in self.layers])

    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in self.layers)


@dataclass(frozen=True)
class TapRecord:
    """Per-sample audit observables: tapped activations, own-class probability."""

    activations: np.ndarray
    class_prob: float
    probs: np.ndarray


def expected_shapes(arch: ArchSpec) -> list:
    """(weight shape, bias shape) per layer, in ModelParams order."""
    shapes = []
    in_channels = 1
    for f, k, _ in arch.conv_layers:
        shapes.append(((f, in_channels, k), (f,)))
        in_channels = f
    prev = arch.tap_width
    for units in arch.dense_layers:
        shapes.append(((prev, units), (units,)))
        prev = units
    shapes.append(((prev, arch.num_classes), (arch.num_classes,)))
    return shapes


def validate_params(params: ModelParams, arch: ArchSpec) -> None:
    shapes = expected_shapes(arch)
    if len(params.layers) != len(shapes):
        raise ValueError(f"expected {len(shapes)} layers, got {len(params.layers)}")
    for i, ((w, b), (ws, bs)) in enumerate(zip(params.layers, shapes)):
        if w.shape != ws or b.shape != bs:
            raise ValueError(f"layer {i}: shape mismatch, expected {ws}/{bs}, "
                             f"got {w.shape}/{b.shape}")


def init_params(arch: ArchSpec, seed: int) -> ModelParams:
    """Uniform fan-in-scaled weights, zero biases; deterministic per (arch, seed)."""
    rng = make_rng(seed)
    layers = []
    for (w_shape, b_shape) in expected_shapes(arch):
        if len(w_shape) == 3:
            fan_in = w_shape[1] * w_shape[2]
        else:
            fan_in = w_shape[0]
        bound = 1.0 / math.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=w_shape)
        layers.append((w, np.zeros(b_shape)))
    return ModelParams(layers)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_batch(params: ModelParams, arch: ArchSpec, X: np.ndarray, keep_cache: bool = False):
    """Returns (tap, probs, cache); cache is None unless keep_cache."""
    n = X.shape[0]
    n_conv = len(arch.conv_layers)
    h = X[:, None, :]
    conv_cache = []
    for i, (f, k, s) in enumerate(arch.conv_layers):
        w, b = params.layers[i]
        l_out = (h.shape[2] - k) // s + 1
        pre = np.zeros((n, f, l_out))
        for kk in range(k):
            seg = h[:, :, kk:kk + s * (l_out - 1) + 1:s]
            pre += np.einsum("oc,ncl->nol", w[:, :, kk], seg)
        pre += b[None, :, None]
        if keep_cache:
            conv_cache.append((h, pre))
        h = np.maximum(pre, 0.0)
    tap = h.reshape(n, -1)
    z = tap
    dense_cache = []
    for j in range(len(arch.dense_layers)):
        w, b = params.layers[n_conv + j]
        pre = z @ w + b
        if keep_cache:
            dense_cache.append((z, pre))
        z = np.maximum(pre, 0.0)
    w_out, b_out = params.layers[-1]
    logits = z @ w_out + b_out
    probs = _softmax(logits)
    cache = None
    if keep_cache:
        cache = {"conv": conv_cache, "dense": dense_cache, "out_in": z, "logits": logits}
    return tap, probs, cache


def forward(arch: ArchSpec, params: ModelParams, x, label: int) -> TapRecord:
    """Single-sample forward pass, tapping the last conv layer.

    class_prob is the softmax probability the model assigns to the sample's
    own label.
    """
    validate_params(params, arch)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (arch.input_length,):
        raise ValueError(f"input length {x.shape} does not match arch ({arch.input_length},)")
    if not (0 <= int(label) < arch.num_classes):
        raise ValueError(f"label {label} out of range for {arch.num_classes} classes")
    tap, probs, _ = _forward_batch(params, arch, x[None, :])
    return TapRecord(activations=tap[0].copy(),
                     class_prob=float(probs[0, int(label)]),
                     probs=probs[0].copy())


def _loss_and_grads_arrays(params: ModelParams, arch: ArchSpec,
                           X: np.ndarray, y: np.ndarray):
    n = X.shape[0]
    n_conv = len(arch.conv_layers)
    _, probs, cache = _forward_batch(params, arch, X, keep_cache=True)
    logits = cache["logits"]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -float(log_probs[np.arange(n), y].mean())

    grads: list = [None] * len(params.layers)
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    w_out, _ = params.layers[-1]
    z = cache["out_in"]
    grads[-1] = (z.T @ dlogits, dlogits.sum(axis=0))
    dz = dlogits @ w_out.T
    for j in range(len(arch.dense_layers) - 1, -1, -1):
        z_in, pre = cache["dense"][j]
        dpre = dz * (pre > 0.0)
        w, _ = params.layers[n_conv + j]
        grads[n_conv + j] = (z_in.T @ dpre, dpre.sum(axis=0))
        dz = dpre @ w.T

    f_last, _, _ = arch.conv_layers[-1]
    dh = dz.reshape(n, f_last, -1)
    for i in range(n_conv - 1, -1, -1):
        h_in, pre = cache["conv"][i]
        _, k, s = arch.conv_layers[i]
        l_out = pre.shape[2]
        dpre = dh * (pre > 0.0)
        w, _ = params.layers[i]
        gw = np.zeros_like(w)
        dh_in = np.zeros_like(h_in)
        for kk in range(k):
            sl = slice(kk, kk + s * (l_out - 1) + 1, s)
            gw[:, :, kk] = np.einsum("nol,ncl->oc", dpre, h_in[:, :, sl])
            dh_in[:, :, sl] += np.einsum("nol,oc->ncl", dpre, w[:, :, kk])
        grads[i] = (gw, dpre.sum(axis=(0, 2)))
        dh = dh_in
    return loss, ModelParams(grads)


def _as_arrays(batch, arch: ArchSpec):
    if isinstance(batch, Dataset):
        return batch.features, batch.labels
    pairs = list(batch)
    if not pairs:
        return np.zeros((0, arch.input_length)), np.zeros(0, dtype=np.int64)
    X = np.asarray([np.asarray(x, dtype=np.float64) for x, _ in pairs])
    y = np.asarray([int(lbl) for _, lbl in pairs], dtype=np.int64)
    return X, y


def loss_and_grad(arch: ArchSpec, params: ModelParams, batch):
    """Mean cross-entropy over a batch of (x, label) pairs plus its gradients.

    Gradients come back shaped exactly like params.
    """
    validate_params(params, arch)
    X, y = _as_arrays(batch, arch)
    if X.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    if X.shape[1] != arch.input_length:
        raise ValueError("batch feature length does not match arch")
    if y.min() < 0 or y.max() >= arch.num_classes:
        raise ValueError("batch label out of range")
    return _loss_and_grads_arrays(params, arch, X, y)


def train(arch: ArchSpec, params: ModelParams, ds: Dataset, epochs: int, lr: float,
          batch_size: int, seed: int, direction: str = "descent") -> ModelParams:
    """Plain SGD for `epochs` passes with per-epoch seeded shuffling.

    direction="ascent" applies +lr*grad instead of -lr*grad (the update rule
    is sign-symmetric: ascent with lr equals descent with -lr, bit for bit).
    epochs=0 returns an untouched copy. lr must be finite and nonzero;
    negative lr is accepted and simply runs the opposite direction.
    """
    if direction not in ("descent", "ascent"):
        raise ValueError(f"direction must be 'descent' or 'ascent', got {direction!r}")
    if not isinstance(epochs, (int, np.integer)) or epochs < 0:
        raise ValueError("epochs must be a non-negative integer")
    if not math.isfinite(lr) or lr == 0.0:
        raise ValueError("lr must be finite and nonzero")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if len(ds) == 0:
        raise ValueError("training dataset must be non-empty")
    validate_params(params, arch)
    if ds.length != arch.input_length or ds.num_classes > arch.num_classes:
        raise ValueError("dataset does not match arch")

    sign = 1.0 if direction == "ascent" else -1.0
    rng = make_rng(seed)
    current = params.clone()
    n = len(ds)
    for _ in range(int(epochs)):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            _, grads = _loss_and_grads_arrays(current, arch, ds.features[idx], ds.labels[idx])
            layers = []
            for (w, b), (gw, gb) in zip(current.layers, grads.layers):
                if sign > 0:
                    layers.append((w + lr * gw, b + lr * gb))
                else:
                    layers.append((w - lr * gw, b - lr * gb))
            current = ModelParams(layers)
    return current


def evaluate(arch: ArchSpec, params: ModelParams, ds: Dataset, chunk: int = 512) -> float:
    """Fraction of argmax-correct predictions; ties resolve to the lowest class."""
    validate_params(params, arch)
    if len(ds) == 0:
        raise ValueError("evaluation dataset must be non-empty")
    correct = 0
    for start in range(0, len(ds), chunk):
        X = ds.features[start:start + chunk]
        y = ds.labels[start:start + chunk]
        _, probs, _ = _forward_batch(params, arch, X)
        correct += int((probs.argmax(axis=1) == y).sum())
    return correct / len(ds)


def params_to_vector(params: ModelParams) -> np.ndarray:
    parts = []
    for w, b in params.layers:
        parts.append(w.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts)


def vector_to_params(vec: np.ndarray, template: ModelParams) -> ModelParams:
    layers = []
    pos = 0
    for w, b in template.layers:
        new_w = vec[pos:pos + w.size].reshape(w.shape).copy()
        pos += w.size
        new_b = vec[pos:pos + b.size].reshape(b.shape).copy()
        pos += b.size
        layers.append((new_w, new_b))
    if pos != vec.size:
        raise ValueError("vector length does not match template")
    return ModelParams(layers)


def map_params(fn, params: ModelParams) -> ModelParams:
    """New ModelParams with fn applied to every weight and bias array."""
    return ModelParams([(np.asarray(fn(w), dtype=np.float64),
                         np.asarray(fn(b), dtype=np.float64)) for w, b in params.layers])


def params_allfinite(params: ModelParams) -> bool:
    return all(np.all(np.isfinite(w)) and np.all(np.isfinite(b)) for w, b in params.layers)
