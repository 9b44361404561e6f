"""Data- and model-poisoning attacks as pure transformations.

Data attacks rewrite a copy of the client dataset before local training;
model attacks rewrite trained parameters before they are shared. The
gradient-ascent attack is a training mode, wired through federation's
local_train.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .data import Dataset
from .nn import ModelParams, map_params
from .seeds import make_rng

DATA_ATTACKS = ("RL", "RLF", "LS", "FP")
MODEL_ATTACKS = ("SF", "SV", "AGA", "GA")
ATTACK_KINDS = ("NONE",) + DATA_ATTACKS + MODEL_ATTACKS

# Which optional fields each kind may carry ("params present iff relevant").
_ALLOWED_FIELDS = {
    "NONE": set(),
    "RL": {"fraction", "seed"},
    "RLF": {"fraction", "noise_std", "seed"},
    "LS": {"swap_pair", "fraction", "seed"},
    "FP": {"fraction", "noise_std", "seed"},
    "SF": {"sign_scale"},
    "SV": {"constant_value"},
    "AGA": {"noise_std", "seed"},
    "GA": set(),
}

DEFAULT_FRACTION = 1.0
DEFAULT_SIGN_SCALE = 3.0
DEFAULT_CONSTANT_VALUE = 100.0
DEFAULT_SWAP_PAIR = (0, 1)
# Data-attack noise defaults to this multiple of the dataset feature std.
DEFAULT_NOISE_FACTOR = 3.0
# Parameter-space noise for AGA when unset.
DEFAULT_AGA_NOISE_STD = 0.5


@dataclass(frozen=True)
class AttackSpec:
    """One client's attack; fields other than kind are set only when relevant."""

    kind: str = "NONE"
    fraction: float | None = None
    noise_std: float | None = None
    swap_pair: tuple | None = None
    constant_value: float | None = None
    sign_scale: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        allowed = _ALLOWED_FIELDS[self.kind]
        for name in ("fraction", "noise_std", "swap_pair", "constant_value",
                     "sign_scale", "seed"):
            if getattr(self, name) is not None and name not in allowed:
                raise ValueError(f"attack {self.kind}: field {name!r} is not relevant")
        if self.fraction is not None and not (0.0 < self.fraction <= 1.0):
            raise ValueError("fraction must be in (0, 1]")
        if self.noise_std is not None and self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.sign_scale is not None and self.sign_scale < 1.0:
            raise ValueError("sign_scale must be >= 1")
        if self.constant_value is not None and not math.isfinite(self.constant_value):
            raise ValueError("constant_value must be finite")
        if self.swap_pair is not None:
            a, b = self.swap_pair
            if a == b:
                raise ValueError("swap_pair classes must differ")
            if a < 0 or b < 0:
                raise ValueError("swap_pair classes must be >= 0")

    @property
    def is_data_attack(self) -> bool:
        return self.kind in DATA_ATTACKS

    @property
    def is_model_attack(self) -> bool:
        return self.kind in MODEL_ATTACKS


def _select(rng: np.random.Generator, n: int, fraction: float) -> np.ndarray:
    if not (0.0 < fraction <= 1.0):
        raise ValueError("fraction must be in (0, 1]")
    count = int(math.ceil(fraction * n))
    return rng.choice(n, size=count, replace=False)


def attack_random_label_flip(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Replace a seeded random subset's labels with uniformly random *other* labels."""
    if ds.num_classes < 2:
        raise ValueError("label flipping needs at least 2 classes")
    rng = make_rng(seed)
    idx = _select(rng, len(ds), fraction)
    labels = ds.labels.copy()
    draws = rng.integers(0, ds.num_classes - 1, size=len(idx))
    labels[idx] = draws + (draws >= labels[idx])
    return Dataset(ds.features.copy(), labels, ds.num_classes)


def attack_random_label_and_feature(ds: Dataset, fraction: float, noise_std: float,
                                    seed: int) -> Dataset:
    """Label flip plus i.i.d. Gaussian feature noise on the same subset.

    With noise_std=0 this equals attack_random_label_flip for the same seed.
    """
    if ds.num_classes < 2:
        raise ValueError("label flipping needs at least 2 classes")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    rng = make_rng(seed)
    idx = _select(rng, len(ds), fraction)
    labels = ds.labels.copy()
    draws = rng.integers(0, ds.num_classes - 1, size=len(idx))
    labels[idx] = draws + (draws >= labels[idx])
    features = ds.features.copy()
    if noise_std > 0:
        features[idx] += rng.normal(0.0, noise_std, size=(len(idx), ds.length))
    return Dataset(features, labels, ds.num_classes)


def attack_label_swap(ds: Dataset, class_a: int, class_b: int, fraction: float,
                      seed: int) -> Dataset:
    """Relabel selected class_a samples as class_b and vice versa."""
    if class_a == class_b:
        raise ValueError("swap classes must differ")
    idx_a = np.flatnonzero(ds.labels == class_a)
    idx_b = np.flatnonzero(ds.labels == class_b)
    if len(idx_a) == 0 or len(idx_b) == 0:
        raise ValueError(f"classes {class_a} and {class_b} must both be present")
    rng = make_rng(seed)
    pick_a = idx_a[_select(rng, len(idx_a), fraction)]
    pick_b = idx_b[_select(rng, len(idx_b), fraction)]
    labels = ds.labels.copy()
    labels[pick_a] = class_b
    labels[pick_b] = class_a
    return Dataset(ds.features.copy(), labels, ds.num_classes)


def attack_feature_poison(ds: Dataset, fraction: float, noise_std: float,
                          seed: int) -> Dataset:
    """Gaussian noise on a selected subset's features; labels untouched."""
    if noise_std <= 0:
        raise ValueError("noise_std must be > 0")
    rng = make_rng(seed)
    idx = _select(rng, len(ds), fraction)
    features = ds.features.copy()
    features[idx] += rng.normal(0.0, noise_std, size=(len(idx), ds.length))
    return Dataset(features, ds.labels.copy(), ds.num_classes)


def attack_sign_flip(params: ModelParams, scale: float) -> ModelParams:
    """Every weight and bias w becomes -scale*w."""
    if scale < 1.0:
        raise ValueError("scale must be >= 1")
    return map_params(lambda a: -scale * a, params)


def attack_same_value(params: ModelParams, constant: float) -> ModelParams:
    """Every parameter set to one constant."""
    if not math.isfinite(constant):
        raise ValueError("constant must be finite")
    return map_params(lambda a: np.full_like(a, constant), params)


def attack_additive_gaussian(params: ModelParams, noise_std: float, seed: int) -> ModelParams:
    """I.i.d. Gaussian noise on every parameter; deterministic per seed."""
    if noise_std <= 0:
        raise ValueError("noise_std must be > 0")
    rng = make_rng(seed)
    layers = []
    for w, b in params.layers:
        layers.append((w + rng.normal(0.0, noise_std, size=w.shape),
                       b + rng.normal(0.0, noise_std, size=b.shape)))
    return ModelParams(layers)


def attack_gradient_ascent(arch, ds: Dataset, global_params: ModelParams,
                           epochs: int, lr: float, batch_size: int, seed: int) -> ModelParams:
    """Local training with the update sign inverted."""
    return nn.train(arch, global_params, ds, epochs, lr, batch_size, seed,
                    direction="ascent")


def default_noise_std(ds: Dataset) -> float:
    """Data-attack noise default: DEFAULT_NOISE_FACTOR times the feature std."""
    return DEFAULT_NOISE_FACTOR * float(np.std(ds.features))


def apply_data_attack(spec: AttackSpec, ds: Dataset, seed: int) -> Dataset:
    """Dispatch a data attack; NONE and model attacks leave the dataset alone."""
    if not spec.is_data_attack:
        return ds
    attack_seed = spec.seed if spec.seed is not None else seed
    fraction = spec.fraction if spec.fraction is not None else DEFAULT_FRACTION
    if spec.kind == "RL":
        return attack_random_label_flip(ds, fraction, attack_seed)
    if spec.kind == "RLF":
        std = spec.noise_std if spec.noise_std is not None else default_noise_std(ds)
        return attack_random_label_and_feature(ds, fraction, std, attack_seed)
    if spec.kind == "LS":
        pair = spec.swap_pair if spec.swap_pair is not None else DEFAULT_SWAP_PAIR
        return attack_label_swap(ds, pair[0], pair[1], fraction, attack_seed)
    std = spec.noise_std if spec.noise_std is not None else default_noise_std(ds)
    return attack_feature_poison(ds, fraction, std, attack_seed)


def apply_model_attack(spec: AttackSpec, params: ModelParams, seed: int) -> ModelParams:
    """Dispatch a post-training model attack (SF, SV, AGA); others pass through."""
    if spec.kind == "SF":
        scale = spec.sign_scale if spec.sign_scale is not None else DEFAULT_SIGN_SCALE
        return attack_sign_flip(params, scale)
    if spec.kind == "SV":
        const = spec.constant_value if spec.constant_value is not None else DEFAULT_CONSTANT_VALUE
        return attack_same_value(params, const)
    if spec.kind == "AGA":
        std = spec.noise_std if spec.noise_std is not None else DEFAULT_AGA_NOISE_STD
        attack_seed = spec.seed if spec.seed is not None else seed
        return attack_additive_gaussian(params, std, attack_seed)
    return params
