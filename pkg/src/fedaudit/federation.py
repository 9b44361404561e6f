"""Global rounds: local training, update auditing, aggregation.

Aggregators: sample-weighted averaging plus three robust baselines (Krum,
coordinate-wise median, trimmed mean). When an auditor is supplied, only
accepted updates are aggregated, with averaging weights renormalized over
the accepted set; a round where everything is rejected keeps the previous
global parameters and flags it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import attacks, auditor, nn
from .attacks import AttackSpec
from .auditor import DetectorConfig, OcsvmModel, Verdict
from .data import Dataset
from .nn import ArchSpec, ModelParams, params_to_vector, vector_to_params
from .seeds import derive_seed


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 25
    lr: float = 0.1
    batch_size: int = 32


@dataclass(frozen=True)
class Update:
    """One client's shared parameters plus its local sample count."""

    client_id: int
    params: ModelParams
    n_samples: int

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")


@dataclass
class RoundReport:
    round_index: int
    aggregator: str
    verdicts: list
    accepted_ids: list
    attacks: dict = field(default_factory=dict)
    accuracy_before: float = 0.0
    accuracy_after: float = 0.0
    all_rejected: bool = False
    detector_enabled: bool = True


@dataclass(frozen=True)
class Aggregator:
    """Named aggregation rule over a list of accepted updates."""

    name: str
    f: int = 0
    trim: int = 0

    def __call__(self, updates: list) -> ModelParams:
        if self.name == "fedavg":
            return fedavg(updates)
        if self.name == "krum":
            return krum(updates, self.f)
        if self.name == "coordinate_median":
            return coordinate_median(updates)
        if self.name == "trimmed_mean":
            return trimmed_mean(updates, self.trim)
        raise ValueError(f"unknown aggregator {self.name!r}")


def make_aggregator(name: str, f: int = 0, trim: int = 0) -> Aggregator:
    if name not in ("fedavg", "krum", "coordinate_median", "trimmed_mean"):
        raise ValueError(f"unknown aggregator {name!r}")
    return Aggregator(name=name, f=f, trim=trim)


def local_train(client_id: int, client_ds: Dataset, global_params: ModelParams,
                arch: ArchSpec, hyper: TrainConfig, seed: int,
                attack: AttackSpec = AttackSpec()) -> Update:
    """One client's contribution for a round.

    Data attacks poison the local dataset before training; model attacks
    rewrite the trained parameters; GA trains in ascent mode on clean data.
    n_samples always reports the original local set size.
    """
    if len(client_ds) == 0:
        raise ValueError("client dataset must be non-empty")
    attack_seed = derive_seed(seed, "attack")
    train_ds = attacks.apply_data_attack(attack, client_ds, attack_seed)
    direction = "ascent" if attack.kind == "GA" else "descent"
    trained = nn.train(arch, global_params, train_ds, hyper.epochs, hyper.lr,
                       hyper.batch_size, derive_seed(seed, "train"), direction=direction)
    shared = attacks.apply_model_attack(attack, trained, attack_seed)
    return Update(client_id=client_id, params=shared, n_samples=len(client_ds))


def _stack(updates: list) -> np.ndarray:
    if not updates:
        raise ValueError("need at least one update")
    vecs = [params_to_vector(u.params) for u in updates]
    width = vecs[0].size
    if any(v.size != width for v in vecs):
        raise ValueError("update parameter shapes disagree")
    return np.stack(vecs)


def fedavg(updates: list) -> ModelParams:
    """Sample-count-weighted mean of the updates' parameters."""
    mat = _stack(updates)
    counts = np.asarray([u.n_samples for u in updates], dtype=np.float64)
    weights = counts / counts.sum()
    return vector_to_params(weights @ mat, updates[0].params)


def krum(updates: list, f: int) -> ModelParams:
    """Return the update closest to its K-f-2 nearest neighbours.

    score(i) sums the squared distances from i to its K-f-2 nearest other
    updates; the minimum-score update wins, ties broken by lowest client_id.
    """
    if f < 0:
        raise ValueError("f must be >= 0")
    K = len(updates)
    if K < f + 3:
        raise ValueError(f"krum needs at least f+3={f + 3} updates, got {K}")
    mat = _stack(updates)
    diff = mat[:, None, :] - mat[None, :, :]
    sq = (diff * diff).sum(axis=2)
    keep = K - f - 2
    scores = []
    for i in range(K):
        others = np.delete(sq[i], i)
        others.sort()
        scores.append(float(others[:keep].sum()))
    best = None
    for i in sorted(range(K), key=lambda i: updates[i].client_id):
        if best is None or scores[i] < scores[best]:
            best = i
    return updates[best].params.clone()


def coordinate_median(updates: list) -> ModelParams:
    """Per-coordinate median; an even count averages the two middle values."""
    mat = _stack(updates)
    return vector_to_params(np.median(mat, axis=0), updates[0].params)


def trimmed_mean(updates: list, trim: int) -> ModelParams:
    """Drop the trim largest and trim smallest values per coordinate, average the rest."""
    if trim < 0:
        raise ValueError("trim must be >= 0")
    K = len(updates)
    if K <= 2 * trim:
        raise ValueError(f"trimmed_mean needs more than 2*trim={2 * trim} updates, got {K}")
    mat = np.sort(_stack(updates), axis=0)
    kept = mat[trim:K - trim]
    return vector_to_params(kept.mean(axis=0), updates[0].params)


def setup_detector(arch: ArchSpec, dp_train: Dataset, dp_test: Dataset,
                   hyper: TrainConfig, nu: float, gamma_mode: str, seed: int,
                   alpha: float = 1.0, gamma: float | None = None,
                   gamma_scale: float = auditor.DEFAULT_GAMMA_SCALE,
                   init: ModelParams | None = None):
    """Train the reference model and fit the auditor; returns (rm, am, cfg).

    The reference model starts from `init` when given (the broadcast initial
    global parameters), otherwise from a seed-derived initialization. The
    auditor is fitted on the reference model's audit rows over dp_train;
    h_train/h_test are its outlier rates on the train and held-out splits.
    """
    if len(dp_train) == 0 or len(dp_test) == 0:
        raise ValueError("dp_train and dp_test must be non-empty")
    for c in range(dp_train.num_classes):
        if not (dp_train.labels == c).any() or not (dp_test.labels == c).any():
            raise ValueError(f"class {c} missing from the public split")
    if init is None:
        init = nn.init_params(arch, derive_seed(seed, "rm-init"))
    rm = nn.train(arch, init, dp_train, hyper.epochs, hyper.lr, hyper.batch_size,
                  derive_seed(seed, "rm-train"))
    da_train = auditor.build_audit_dataset(rm, dp_train, arch, source="train")
    da_test = auditor.build_audit_dataset(rm, dp_test, arch, source="test")
    am = auditor.ocsvm_fit(da_train, nu=nu, gamma_mode=gamma_mode, gamma=gamma,
                           gamma_scale=gamma_scale)
    h_train = auditor.poisoned_rate(am, da_train)
    h_test = auditor.poisoned_rate(am, da_test)
    cfg = auditor.calibrate(h_train, h_test, alpha)
    return rm, am, cfg


def _aggregate_accepted(updates: list, accepted_ids: list, aggregator: Aggregator):
    accepted = [u for u in updates if u.client_id in set(accepted_ids)]
    accepted.sort(key=lambda u: u.client_id)
    if not accepted:
        return None
    return aggregator(accepted)


def run_round(global_params: ModelParams, clients: list, arch: ArchSpec,
              dp: tuple, am: OcsvmModel | None, cfg: DetectorConfig | None,
              aggregator: Aggregator, seed: int, hyper: TrainConfig,
              round_index: int = 0) -> tuple:
    """One global round over clients given as (Dataset, AttackSpec) pairs.

    Every client trains and is audited (when an auditor is supplied); only
    accepted updates are aggregated. With no auditor every update passes and
    the verdicts carry NaN rates. Returns (new_global, RoundReport).
    """
    _, dp_test = dp
    updates = []
    for i, (client_ds, attack) in enumerate(clients):
        client_seed = derive_seed(seed, "client", i)
        updates.append(local_train(i, client_ds, global_params, arch, hyper,
                                   client_seed, attack))
    detector_enabled = am is not None and cfg is not None
    verdicts: list = []
    for u in updates:
        if detector_enabled:
            verdicts.append(auditor.audit_update(u.client_id, u.params, arch,
                                                 dp_test, am, cfg))
        else:
            verdicts.append(Verdict(client_id=u.client_id, h=float("nan"),
                                    threshold=float("nan"), accepted=True,
                                    degenerate_count=0))
    accepted_ids = sorted(v.client_id for v in verdicts if v.accepted)
    aggregate = _aggregate_accepted(updates, accepted_ids, aggregator)
    all_rejected = aggregate is None
    new_global = global_params.clone() if all_rejected else aggregate

    acc_before = nn.evaluate(arch, global_params, dp_test)
    acc_after = nn.evaluate(arch, new_global, dp_test)
    report = RoundReport(round_index=round_index, aggregator=aggregator.name,
                         verdicts=verdicts, accepted_ids=accepted_ids,
                         attacks={i: spec.kind for i, (_, spec) in enumerate(clients)},
                         accuracy_before=acc_before, accuracy_after=acc_after,
                         all_rejected=all_rejected, detector_enabled=detector_enabled)
    return new_global, report
