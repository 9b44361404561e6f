"""Experiment configuration: strict JSON parsing with full-path error reporting.

Unknown keys, missing required keys, and out-of-range values are all
rejected, naming the offending key path. Defaults are desk scale: 5 sinusoid
classes of length 32, three clients, one round.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .attacks import ATTACK_KINDS, AttackSpec
from .federation import Aggregator, TrainConfig, make_aggregator
from .nn import ArchSpec


class ConfigError(ValueError):
    """Invalid configuration; message starts with the offending key path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass(frozen=True)
class SyntheticSource:
    samples_per_class: int = 200
    client_samples_per_class: int = 300
    noise_std: float = 0.3
    test_fraction: float = 0.4
    deficits: tuple = ()  # (client, class, fraction) triples; () = auto scheme


@dataclass(frozen=True)
class CsvSource:
    public: str = ""
    clients: tuple = ()
    test_fraction: float = 0.25


@dataclass(frozen=True)
class DetectorSettings:
    enabled: bool = True
    alpha: float = 1.0
    nu: float = 0.1
    gamma_mode: str = "scaled_median"
    gamma: float | None = None
    gamma_scale: float = 8.0


@dataclass(frozen=True)
class OutputSettings:
    prefix: str | None = None
    figures: bool = True


@dataclass
class ExperimentConfig:
    seed: int = 0
    arch: ArchSpec = field(default_factory=lambda: ArchSpec.build(32, 5, [(8, 5, 2)], [16]))
    data: object = field(default_factory=SyntheticSource)
    clients: list = field(default_factory=lambda: [AttackSpec(), AttackSpec(), AttackSpec()])
    training: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=25, lr=0.1,
                                                                      batch_size=32))
    detector: DetectorSettings = field(default_factory=DetectorSettings)
    aggregator: Aggregator = field(default_factory=lambda: make_aggregator("fedavg"))
    rounds: int = 1
    output: OutputSettings = field(default_factory=OutputSettings)

    @property
    def num_clients(self) -> int:
        return len(self.clients)


def _expect_dict(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(path, f"expected an object, got {type(value).__name__}")
    return value


def _check_keys(d: dict, allowed, path: str) -> None:
    for key in d:
        if key not in allowed:
            where = f"{path}.{key}" if path else str(key)
            raise ConfigError(where, "unknown key")


def _get_int(d: dict, key: str, path: str, default=None, lo=None, hi=None):
    if key not in d:
        if default is None:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required key")
        return default
    v = d[key]
    where = f"{path}.{key}" if path else key
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(where, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(where, f"must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(where, f"must be <= {hi}, got {v}")
    return v


def _get_number(d: dict, key: str, path: str, default=None, lo=None, hi=None,
                lo_open=False, hi_open=False):
    if key not in d:
        if default is None:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required key")
        return default
    v = d[key]
    where = f"{path}.{key}" if path else key
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(where, f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(where, "must be finite")
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ConfigError(where, f"must be {'>' if lo_open else '>='} {lo}, got {v}")
    if hi is not None and (v >= hi if hi_open else v > hi):
        raise ConfigError(where, f"must be {'<' if hi_open else '<='} {hi}, got {v}")
    return v


def _get_bool(d: dict, key: str, path: str, default: bool) -> bool:
    if key not in d:
        return default
    v = d[key]
    if not isinstance(v, bool):
        raise ConfigError(f"{path}.{key}", f"expected true/false, got {v!r}")
    return v


def _get_str(d: dict, key: str, path: str, default=None, choices=None) -> str:
    if key not in d:
        if default is None:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required key")
        return default
    v = d[key]
    where = f"{path}.{key}" if path else key
    if not isinstance(v, str):
        raise ConfigError(where, f"expected a string, got {v!r}")
    if choices is not None and v not in choices:
        raise ConfigError(where, f"must be one of {sorted(choices)}, got {v!r}")
    return v


def _parse_arch(d: dict, path: str) -> ArchSpec:
    _check_keys(d, {"input_length", "num_classes", "conv_layers", "dense_layers"}, path)
    input_length = _get_int(d, "input_length", path, default=32, lo=1)
    num_classes = _get_int(d, "num_classes", path, default=5, lo=2)
    conv_raw = d.get("conv_layers", [[8, 5, 2]])
    if not isinstance(conv_raw, list) or not conv_raw:
        raise ConfigError(f"{path}.conv_layers", "expected a non-empty list")
    conv = []
    for i, entry in enumerate(conv_raw):
        if (not isinstance(entry, list) or len(entry) != 3
                or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 1
                           for v in entry)):
            raise ConfigError(f"{path}.conv_layers[{i}]",
                              "expected [filters, kernel_size, stride] of positive integers")
        conv.append(tuple(entry))
    dense_raw = d.get("dense_layers", [16])
    if not isinstance(dense_raw, list):
        raise ConfigError(f"{path}.dense_layers", "expected a list")
    dense = []
    for i, units in enumerate(dense_raw):
        if not isinstance(units, int) or isinstance(units, bool) or units < 1:
            raise ConfigError(f"{path}.dense_layers[{i}]", "expected a positive integer")
        dense.append(units)
    try:
        return ArchSpec.build(input_length, num_classes, conv, dense)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def _parse_data(d: dict, path: str):
    _check_keys(d, {"synthetic", "csv"}, path)
    if ("synthetic" in d) == ("csv" in d):
        raise ConfigError(path, "exactly one of 'synthetic' or 'csv' is required")
    if "synthetic" in d:
        s = _expect_dict(d["synthetic"], f"{path}.synthetic")
        spath = f"{path}.synthetic"
        _check_keys(s, {"samples_per_class", "client_samples_per_class", "noise_std",
                        "test_fraction", "deficits"}, spath)
        deficits = []
        for i, entry in enumerate(s.get("deficits", [])):
            epath = f"{spath}.deficits[{i}]"
            e = _expect_dict(entry, epath)
            _check_keys(e, {"client", "class", "fraction"}, epath)
            deficits.append((_get_int(e, "client", epath, lo=0),
                             _get_int(e, "class", epath, lo=0),
                             _get_number(e, "fraction", epath, lo=0.0, hi=0.9)))
        return SyntheticSource(
            samples_per_class=_get_int(s, "samples_per_class", spath, default=200, lo=4),
            client_samples_per_class=_get_int(s, "client_samples_per_class", spath,
                                              default=300, lo=2),
            noise_std=_get_number(s, "noise_std", spath, default=0.3, lo=0.0),
            test_fraction=_get_number(s, "test_fraction", spath, default=0.4,
                                      lo=0.0, hi=1.0, lo_open=True, hi_open=True),
            deficits=tuple(deficits))
    c = _expect_dict(d["csv"], f"{path}.csv")
    cpath = f"{path}.csv"
    _check_keys(c, {"public", "clients", "test_fraction"}, cpath)
    public = _get_str(c, "public", cpath)
    clients_raw = c.get("clients")
    if not isinstance(clients_raw, list) or not clients_raw:
        raise ConfigError(f"{cpath}.clients", "expected a non-empty list of CSV paths")
    for i, p in enumerate(clients_raw):
        if not isinstance(p, str):
            raise ConfigError(f"{cpath}.clients[{i}]", "expected a path string")
    return CsvSource(public=public, clients=tuple(clients_raw),
                     test_fraction=_get_number(c, "test_fraction", cpath, default=0.25,
                                               lo=0.0, hi=1.0, lo_open=True, hi_open=True))


_ATTACK_KEYS = {
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


def _parse_attack(d: dict, path: str, num_classes: int) -> AttackSpec:
    kind = _get_str(d, "kind", path, default="NONE", choices=set(ATTACK_KINDS))
    _check_keys(d, {"kind"} | _ATTACK_KEYS[kind], path)
    kwargs = {"kind": kind}
    if "fraction" in d:
        kwargs["fraction"] = _get_number(d, "fraction", path, lo=0.0, hi=1.0, lo_open=True)
    if "noise_std" in d:
        kwargs["noise_std"] = _get_number(d, "noise_std", path, lo=0.0,
                                          lo_open=(kind in ("FP", "AGA")))
    if "sign_scale" in d:
        kwargs["sign_scale"] = _get_number(d, "sign_scale", path, lo=1.0)
    if "constant_value" in d:
        kwargs["constant_value"] = _get_number(d, "constant_value", path)
    if "seed" in d:
        kwargs["seed"] = _get_int(d, "seed", path, lo=0)
    if "swap_pair" in d:
        pair = d["swap_pair"]
        ppath = f"{path}.swap_pair"
        if (not isinstance(pair, list) or len(pair) != 2
                or not all(isinstance(v, int) and not isinstance(v, bool) for v in pair)):
            raise ConfigError(ppath, "expected [class_a, class_b]")
        a, b = pair
        if a == b:
            raise ConfigError(ppath, "classes must differ")
        if not (0 <= a < num_classes and 0 <= b < num_classes):
            raise ConfigError(ppath, f"classes must be in [0, {num_classes})")
        kwargs["swap_pair"] = (a, b)
    try:
        return AttackSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def _parse_detector(d: dict, path: str) -> DetectorSettings:
    _check_keys(d, {"enabled", "alpha", "nu", "gamma_mode", "gamma", "gamma_scale"}, path)
    gamma_mode = _get_str(d, "gamma_mode", path, default="scaled_median",
                          choices={"median_heuristic", "scaled_median", "fixed"})
    gamma = None
    gamma_scale = 8.0
    if gamma_mode == "fixed":
        gamma = _get_number(d, "gamma", path, lo=0.0, lo_open=True)
    elif "gamma" in d:
        raise ConfigError(f"{path}.gamma", "only valid with gamma_mode='fixed'")
    if gamma_mode == "scaled_median":
        gamma_scale = _get_number(d, "gamma_scale", path, default=8.0, lo=0.0, lo_open=True)
    elif "gamma_scale" in d:
        raise ConfigError(f"{path}.gamma_scale", "only valid with gamma_mode='scaled_median'")
    return DetectorSettings(
        enabled=_get_bool(d, "enabled", path, default=True),
        alpha=_get_number(d, "alpha", path, default=1.0, lo=0.0),
        nu=_get_number(d, "nu", path, default=0.1, lo=0.0, hi=1.0,
                       lo_open=True, hi_open=True),
        gamma_mode=gamma_mode, gamma=gamma, gamma_scale=gamma_scale)


def _parse_aggregator(d: dict, path: str, num_clients: int) -> Aggregator:
    name = _get_str(d, "name", path, default="fedavg",
                    choices={"fedavg", "krum", "coordinate_median", "trimmed_mean"})
    allowed = {"name"}
    if name == "krum":
        allowed.add("f")
    if name == "trimmed_mean":
        allowed.add("trim")
    _check_keys(d, allowed, path)
    f = _get_int(d, "f", path, default=0, lo=0) if name == "krum" else 0
    trim = _get_int(d, "trim", path, default=0, lo=0) if name == "trimmed_mean" else 0
    if name == "krum" and num_clients < f + 3:
        raise ConfigError(f"{path}.f", f"krum needs at least f+3={f + 3} clients, "
                                       f"got {num_clients}")
    if name == "trimmed_mean" and num_clients <= 2 * trim:
        raise ConfigError(f"{path}.trim", f"trimmed_mean needs more than 2*trim="
                                          f"{2 * trim} clients, got {num_clients}")
    return make_aggregator(name, f=f, trim=trim)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate experiment JSON; defaults fill anything omitted."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc}") from None
    top = _expect_dict(raw, "")
    _check_keys(top, {"seed", "arch", "data", "clients", "training", "detector",
                      "aggregator", "rounds", "output"}, "")

    seed = _get_int(top, "seed", "", default=0, lo=0)
    arch = _parse_arch(_expect_dict(top.get("arch", {}), "arch"), "arch")
    data = _parse_data(_expect_dict(top.get("data", {"synthetic": {}}), "data"), "data")

    clients_raw = top.get("clients", [{}, {}, {}])
    if not isinstance(clients_raw, list) or not clients_raw:
        raise ConfigError("clients", "expected a non-empty list")
    clients = []
    for i, entry in enumerate(clients_raw):
        cpath = f"clients[{i}]"
        e = _expect_dict(entry, cpath)
        _check_keys(e, {"attack"}, cpath)
        attack_d = _expect_dict(e.get("attack", {}), f"{cpath}.attack")
        clients.append(_parse_attack(attack_d, f"{cpath}.attack", arch.num_classes))

    t = _expect_dict(top.get("training", {}), "training")
    _check_keys(t, {"epochs", "lr", "batch_size"}, "training")
    training = TrainConfig(epochs=_get_int(t, "epochs", "training", default=25, lo=1),
                           lr=_get_number(t, "lr", "training", default=0.1,
                                          lo=0.0, lo_open=True),
                           batch_size=_get_int(t, "batch_size", "training", default=32, lo=1))

    detector = _parse_detector(_expect_dict(top.get("detector", {}), "detector"), "detector")
    aggregator = _parse_aggregator(_expect_dict(top.get("aggregator", {}), "aggregator"),
                                   "aggregator", len(clients))
    rounds = _get_int(top, "rounds", "", default=1, lo=1)

    o = _expect_dict(top.get("output", {}), "output")
    _check_keys(o, {"prefix", "figures"}, "output")
    prefix = o.get("prefix")
    if prefix is not None and not isinstance(prefix, str):
        raise ConfigError("output.prefix", "expected a path string")
    output = OutputSettings(prefix=prefix, figures=_get_bool(o, "figures", "output", True))

    if isinstance(data, CsvSource) and len(data.clients) != len(clients):
        raise ConfigError("data.csv.clients",
                          f"{len(data.clients)} client CSVs for {len(clients)} clients")
    if isinstance(data, SyntheticSource):
        for i, (client, cls, _) in enumerate(data.deficits):
            if client >= len(clients):
                raise ConfigError(f"data.synthetic.deficits[{i}].client",
                                  f"client {client} out of range for {len(clients)} clients")
            if cls >= arch.num_classes:
                raise ConfigError(f"data.synthetic.deficits[{i}].class",
                                  f"class {cls} out of range for {arch.num_classes} classes")

    return ExperimentConfig(seed=seed, arch=arch, data=data, clients=clients,
                            training=training, detector=detector, aggregator=aggregator,
                            rounds=rounds, output=output)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
