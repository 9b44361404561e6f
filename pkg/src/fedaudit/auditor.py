"""Update auditing: audit-vector construction, one-class SVM, verdicts.

An audit sample is [input ∥ tapped last-conv activations ∥ own-class
probability], built by running a candidate parameter set over the public
test split. The auditor is a nu-one-class SVM with an RBF kernel, fitted by
SMO on the reference model's audit vectors; a client update is rejected when
the share of its audit samples scored as outliers exceeds the calibrated
threshold.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .nn import ArchSpec, ModelParams, _forward_batch, validate_params

# Contract bound on the SMO's terminal KKT gap; the default solve runs
# tighter so rho (determined only up to the gap) has headroom.
KKT_TOL = 1e-6
DEFAULT_SMO_TOL = 1e-8
DEFAULT_GAMMA_SCALE = 8.0


@dataclass(frozen=True)
class AuditSample:
    """One audit row; degenerate rows (non-finite activations) are zeroed."""

    s: np.ndarray
    degenerate: bool = False


@dataclass
class AuditDataset:
    """Audit rows for one model over one dataset.

    rows is (n, l + j + 1): input features, tapped activations, own-class
    probability. degenerate marks rows whose activations or probability came
    out NaN/Inf; such rows are stored as all zeros and score as outliers.
    """

    rows: np.ndarray
    degenerate: np.ndarray
    source: str = ""

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        self.degenerate = np.asarray(self.degenerate, dtype=bool)
        if self.rows.ndim != 2:
            raise ValueError("rows must be 2-D")
        if self.degenerate.shape != (self.rows.shape[0],):
            raise ValueError("degenerate flags must match row count")

    def __len__(self) -> int:
        return int(self.rows.shape[0])

    def sample(self, i: int) -> AuditSample:
        return AuditSample(self.rows[i].copy(), bool(self.degenerate[i]))


@dataclass
class OcsvmModel:
    """Fitted nu-one-class SVM: standardizer, support set, kernel, offset."""

    support_vectors: np.ndarray
    alphas: np.ndarray
    rho: float
    nu: float
    gamma: float
    mean: np.ndarray
    std: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])


@dataclass(frozen=True)
class DetectorConfig:
    """Acceptance threshold derived from the reference model's own rates.

    sigma and threshold are recomputed from the stored rates on every access,
    never cached.
    """

    h_train: float
    h_test: float
    alpha: float = 1.0

    def __post_init__(self):
        for name in ("h_train", "h_test"):
            v = getattr(self, name)
            if not (0.0 <= v <= 100.0):
                raise ValueError(f"{name} must be in [0, 100]")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not (0.0 <= self.threshold <= 200.0):
            raise ValueError("threshold outside [0, 200]; lower alpha")

    @property
    def sigma(self) -> float:
        return abs(self.h_test - self.h_train)

    @property
    def threshold(self) -> float:
        return self.h_test + self.alpha * self.sigma


@dataclass(frozen=True)
class Verdict:
    client_id: int
    h: float
    threshold: float
    accepted: bool
    degenerate_count: int


def build_audit_dataset(params: ModelParams, ds: Dataset, arch: ArchSpec,
                        source: str = "", chunk: int = 512) -> AuditDataset:
    """One audit row per sample, in dataset order."""
    validate_params(params, arch)
    if len(ds) == 0:
        raise ValueError("dataset must be non-empty")
    if ds.length != arch.input_length:
        raise ValueError("dataset feature length does not match arch")
    if ds.num_classes > arch.num_classes:
        raise ValueError("dataset has more classes than arch")
    n = len(ds)
    width = arch.input_length + arch.tap_width + 1
    rows = np.zeros((n, width))
    degenerate = np.zeros(n, dtype=bool)
    for start in range(0, n, chunk):
        X = ds.features[start:start + chunk]
        y = ds.labels[start:start + chunk]
        with np.errstate(over="ignore", invalid="ignore"):
            tap, probs, _ = _forward_batch(params, arch, X)
            yc = probs[np.arange(len(y)), y]
        bad = ~(np.isfinite(tap).all(axis=1) & np.isfinite(yc))
        block = np.concatenate([X, tap, yc[:, None]], axis=1)
        block[bad] = 0.0
        rows[start:start + chunk] = block
        degenerate[start:start + chunk] = bad
    return AuditDataset(rows, degenerate, source=source)


def save_audit_csv(da: AuditDataset, path) -> None:
    """Export rows as CSV with columns s0..s{d-1}."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"s{i}" for i in range(da.rows.shape[1])])
        for row in da.rows:
            writer.writerow([repr(float(v)) for v in row])


def _median_pairwise_sq_dist(Z: np.ndarray) -> float:
    sq = _sq_dists(Z, Z)
    iu = np.triu_indices(len(Z), k=1)
    return float(np.median(sq[iu]))


def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    aa = (A * A).sum(axis=1)[:, None]
    bb = (B * B).sum(axis=1)[None, :]
    sq = aa + bb - 2.0 * (A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return sq


def _smo_one_class(K: np.ndarray, nu: float, tol: float, max_iter: int):
    """SMO on the nu-one-class dual: min 1/2 a'Ka, 0 <= a_i <= 1/(nu m), sum a = 1.

    Returns (alpha, rho, kkt_gap). Maximal-violating-pair selection; the pair
    subproblem is solved exactly with box clipping. G = K @ alpha is kept
    incrementally.

    rho is any value in the KKT band [max G over a>0 ... min G over a<cap]
    shrunk to width <= tol; we take the smallest interior-SV gradient, which
    puts every margin SV's decision at >= 0 exactly. Counting outliers as
    decision < 0 then matches the exact-optimum semantics (margin SVs are
    not margin errors), instead of flipping on solver round-off.
    """
    m = K.shape[0]
    cap = 1.0 / (nu * m)
    alpha = np.zeros(m)
    n_full = int(math.floor(nu * m))
    alpha[:n_full] = cap
    if n_full < m:
        alpha[n_full] = 1.0 - n_full * cap
    G = K @ alpha

    gap = math.inf
    for _ in range(max_iter):
        can_up = alpha < cap
        can_down = alpha > 0.0
        g_up = np.where(can_up, G, math.inf)
        g_down = np.where(can_down, G, -math.inf)
        i = int(np.argmin(g_up))
        j = int(np.argmax(g_down))
        gap = G[j] - G[i]
        if gap <= tol:
            break
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 1e-12:
            quad = 1e-12
        t = gap / quad
        room_up = cap - alpha[i]
        room_down = alpha[j]
        if t >= room_up and room_up <= room_down:
            t = room_up
            alpha[i] = cap
            alpha[j] -= t
        elif t >= room_down:
            t = room_down
            alpha[j] = 0.0
            alpha[i] += t
        else:
            alpha[i] += t
            alpha[j] -= t
        G += t * (K[:, i] - K[:, j])
    else:
        raise RuntimeError(f"SMO did not reach KKT gap {tol} in {max_iter} iterations")

    np.clip(alpha, 0.0, cap, out=alpha)
    interior = (alpha > 0.0) & (alpha < cap)
    if interior.any():
        rho = float(G[interior].min())
    else:
        lo = float(np.min(np.where(alpha < cap, G, math.inf)))
        hi = float(np.max(np.where(alpha > 0.0, G, -math.inf)))
        rho = 0.5 * (lo + hi)
    return alpha, rho, gap


def ocsvm_fit(da_train: AuditDataset, nu: float, gamma_mode: str = "median_heuristic",
              gamma: float | None = None, gamma_scale: float = DEFAULT_GAMMA_SCALE,
              tol: float = DEFAULT_SMO_TOL, max_iter: int | None = None) -> OcsvmModel:
    """Standardize the audit rows and solve the nu-one-class-SVM dual by SMO.

    gamma_mode is "median_heuristic" (1 / (2 * median pairwise squared
    distance), parameter-free), "scaled_median" (the same times gamma_scale,
    a sharper kernel that opens the train/test gap the threshold needs), or
    "fixed" with an explicit gamma.
    """
    if not (0.0 < nu < 1.0):
        raise ValueError("nu must be in (0, 1)")
    m = len(da_train)
    if m < 2:
        raise ValueError("need at least 2 training rows")
    if da_train.degenerate.any():
        raise ValueError("training rows must not be degenerate")

    mean = da_train.rows.mean(axis=0)
    std = da_train.rows.std(axis=0)
    std = np.maximum(std, 1e-12)
    Z = (da_train.rows - mean) / std
    if np.all(Z == Z[0]):
        raise ValueError("all training rows identical: zero kernel spread")

    if gamma_mode in ("median_heuristic", "scaled_median"):
        med = _median_pairwise_sq_dist(Z)
        if med <= 0.0:
            raise ValueError("median pairwise distance is zero: degenerate audit data")
        gamma_val = 1.0 / (2.0 * med)
        if gamma_mode == "scaled_median":
            if not (gamma_scale > 0.0):
                raise ValueError("gamma_scale must be > 0")
            gamma_val *= float(gamma_scale)
    elif gamma_mode == "fixed":
        if gamma is None or not (gamma > 0.0):
            raise ValueError("fixed gamma_mode requires gamma > 0")
        gamma_val = float(gamma)
    else:
        raise ValueError(f"unknown gamma_mode {gamma_mode!r}")

    K = np.exp(-gamma_val * _sq_dists(Z, Z))
    if max_iter is None:
        max_iter = max(200_000, 200 * m)
    alpha, rho, _ = _smo_one_class(K, nu, tol, max_iter)

    sv_mask = alpha > 0.0
    return OcsvmModel(support_vectors=Z[sv_mask].copy(), alphas=alpha[sv_mask].copy(),
                      rho=rho, nu=nu, gamma=gamma_val, mean=mean, std=std)


def decision_values(model: OcsvmModel, da: AuditDataset) -> np.ndarray:
    """Decision function for every row; degenerate rows score -inf."""
    if da.rows.shape[1] != model.dim:
        raise ValueError(f"audit rows have width {da.rows.shape[1]}, model expects {model.dim}")
    Z = (da.rows - model.mean) / model.std
    k = np.exp(-model.gamma * _sq_dists(Z, model.support_vectors))
    values = k @ model.alphas - model.rho
    values[da.degenerate] = -math.inf
    return values


def ocsvm_decision(model: OcsvmModel, sample) -> float:
    """Decision value for one audit sample (AuditSample or raw vector)."""
    if isinstance(sample, AuditSample):
        if sample.degenerate:
            return -math.inf
        vec = sample.s
    else:
        vec = np.asarray(sample, dtype=np.float64)
    if vec.shape != (model.dim,):
        raise ValueError(f"sample has length {vec.shape}, model expects ({model.dim},)")
    z = (vec - model.mean) / model.std
    k = np.exp(-model.gamma * ((model.support_vectors - z) ** 2).sum(axis=1))
    return float(k @ model.alphas - model.rho)


def poisoned_rate(model: OcsvmModel, da: AuditDataset) -> float:
    """Percentage of rows scored as outliers (decision < 0, degenerates included)."""
    if len(da) == 0:
        raise ValueError("audit dataset must be non-empty")
    outliers = int((decision_values(model, da) < 0.0).sum())
    return outliers * 100.0 / len(da)


def calibrate(h_train: float, h_test: float, alpha: float = 1.0) -> DetectorConfig:
    """Threshold = h_test + alpha * |h_test - h_train|."""
    return DetectorConfig(h_train=float(h_train), h_test=float(h_test), alpha=float(alpha))


def audit_update(client_id: int, params: ModelParams, arch: ArchSpec, dp_test: Dataset,
                 am: OcsvmModel, cfg: DetectorConfig) -> Verdict:
    """Score one client's parameters over the public test split."""
    da = build_audit_dataset(params, dp_test, arch, source=f"client({client_id})")
    h = poisoned_rate(am, da)
    return Verdict(client_id=int(client_id), h=h, threshold=cfg.threshold,
                   accepted=bool(h <= cfg.threshold),
                   degenerate_count=int(da.degenerate.sum()))
