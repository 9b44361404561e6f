"""Experiment execution: data preparation, rounds, reports, scaling benchmark.

Everything is keyed off the config seed through derived per-entity streams,
so a config run twice produces byte-identical report files.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass

import numpy as np

from . import auditor, data, federation, nn
from .auditor import DetectorConfig, OcsvmModel
from .config import CsvSource, ExperimentConfig, SyntheticSource
from .data import Dataset, PartitionSpec
from .federation import RoundReport, Update
from .nn import ArchSpec, ModelParams
from .seeds import derive_seed


@dataclass
class PreparedData:
    dp_train: Dataset
    dp_test: Dataset
    client_datasets: list


def _auto_deficits(cfg: ExperimentConfig) -> dict:
    """Benign clients alternate 40%/50% deficits, one class each; attackers
    keep balanced data (more attacking power)."""
    deficits = {}
    benign_rank = 0
    for i, spec in enumerate(cfg.clients):
        if spec.kind == "NONE":
            frac = 0.4 if benign_rank % 2 == 0 else 0.5
            deficits[(i, benign_rank % cfg.arch.num_classes)] = frac
            benign_rank += 1
    return deficits


def prepare_data(cfg: ExperimentConfig) -> PreparedData:
    """Materialize the public splits and the per-client datasets."""
    src = cfg.data
    if isinstance(src, SyntheticSource):
        public = data.synth_dataset(cfg.arch.num_classes, src.samples_per_class,
                                    cfg.arch.input_length, src.noise_std,
                                    derive_seed(cfg.seed, "public"))
        pool = data.synth_dataset(cfg.arch.num_classes, src.client_samples_per_class,
                                  cfg.arch.input_length, src.noise_std,
                                  derive_seed(cfg.seed, "clients"))
        dp_train, dp_test = data.split(public, src.test_fraction,
                                       derive_seed(cfg.seed, "split"))
        if src.deficits:
            deficits = {(c, k): f for c, k, f in src.deficits}
        else:
            deficits = _auto_deficits(cfg)
        spec = PartitionSpec(num_clients=cfg.num_clients, deficits=deficits)
        clients = data.partition_non_iid(pool, spec, derive_seed(cfg.seed, "partition"))
        return PreparedData(dp_train, dp_test, clients)
    if isinstance(src, CsvSource):
        public = data.load_csv(src.public)
        if public.length != cfg.arch.input_length:
            raise ValueError(f"public CSV feature length {public.length} does not match "
                             f"arch input_length {cfg.arch.input_length}")
        dp_train, dp_test = data.split(public, src.test_fraction,
                                       derive_seed(cfg.seed, "split"))
        clients = []
        for path in src.clients:
            ds = data.load_csv(path)
            if ds.length != cfg.arch.input_length:
                raise ValueError(f"{path}: feature length {ds.length} does not match arch")
            clients.append(Dataset(ds.features, ds.labels, cfg.arch.num_classes))
        return PreparedData(dp_train, dp_test, clients)
    raise TypeError(f"unknown data source {type(src).__name__}")


def run_experiment(cfg: ExperimentConfig, emit: bool = True) -> list:
    """Execute detector setup (when enabled) plus the configured rounds.

    With the detector enabled, the server warm-starts the global model from
    the trained reference model (it owns the public data either way); clients
    then fine-tune it, which keeps honest updates inside the auditor's benign
    envelope. Without the detector the global model starts from the seeded
    initialization. Returns the round reports; with an output prefix
    configured (and emit true) also writes the report files.
    """
    prepared = prepare_data(cfg)
    init = nn.init_params(cfg.arch, derive_seed(cfg.seed, "init"))

    am: OcsvmModel | None = None
    det_cfg: DetectorConfig | None = None
    rm: ModelParams | None = None
    if cfg.detector.enabled:
        rm, am, det_cfg = federation.setup_detector(
            cfg.arch, prepared.dp_train, prepared.dp_test, cfg.training,
            nu=cfg.detector.nu, gamma_mode=cfg.detector.gamma_mode,
            seed=derive_seed(cfg.seed, "detector"), alpha=cfg.detector.alpha,
            gamma=cfg.detector.gamma, gamma_scale=cfg.detector.gamma_scale,
            init=init)

    clients = list(zip(prepared.client_datasets, cfg.clients))
    global_params = rm if rm is not None else init
    reports = []
    for r in range(cfg.rounds):
        global_params, report = federation.run_round(
            global_params, clients, cfg.arch, (prepared.dp_train, prepared.dp_test),
            am, det_cfg, cfg.aggregator, derive_seed(cfg.seed, "round", r),
            cfg.training, round_index=r)
        reports.append(report)

    if emit and cfg.output.prefix:
        emit_report(reports, cfg.output.prefix)
        if cfg.detector.enabled:
            save_detector(f"{cfg.output.prefix}_detector.json", cfg.arch, am, det_cfg)
        if cfg.output.figures:
            from . import plots
            plots.save_report_figures(reports, cfg.output.prefix)
    return reports


def _float_cell(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def _report_dict(report: RoundReport) -> dict:
    return {
        "round": report.round_index,
        "aggregator": report.aggregator,
        "detector_enabled": report.detector_enabled,
        "all_rejected": report.all_rejected,
        "accuracy_before": report.accuracy_before,
        "accuracy_after": report.accuracy_after,
        "accepted_ids": list(report.accepted_ids),
        "attacks": {str(k): v for k, v in report.attacks.items()},
        "verdicts": [
            {
                "client_id": v.client_id,
                "h": None if math.isnan(v.h) else v.h,
                "threshold": None if math.isnan(v.threshold) else v.threshold,
                "accepted": v.accepted,
                "degenerate_count": v.degenerate_count,
            }
            for v in report.verdicts
        ],
    }


def emit_report(reports: list, path_prefix: str) -> tuple:
    """Write <prefix>_rounds.json and <prefix>_summary.csv; returns the paths."""
    if not reports:
        raise ValueError("no reports to emit")
    json_path = f"{path_prefix}_rounds.json"
    csv_path = f"{path_prefix}_summary.csv"
    doc = {"rounds": [_report_dict(r) for r in reports]}
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    lines = ["round,client_id,attack,h,P,accepted,acc_before,acc_after"]
    for report in reports:
        for v in report.verdicts:
            attack = report.attacks.get(v.client_id, "NONE")
            lines.append(",".join([
                str(report.round_index), str(v.client_id), attack,
                _float_cell(v.h), _float_cell(v.threshold),
                "true" if v.accepted else "false",
                repr(float(report.accuracy_before)), repr(float(report.accuracy_after)),
            ]))
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    return json_path, csv_path


def load_report_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def save_detector(path, arch: ArchSpec, am: OcsvmModel, cfg: DetectorConfig) -> None:
    """Persist a fitted detector (architecture, auditor, calibration) as JSON."""
    doc = {
        "arch": {
            "input_length": arch.input_length,
            "num_classes": arch.num_classes,
            "conv_layers": [list(c) for c in arch.conv_layers],
            "dense_layers": list(arch.dense_layers),
        },
        "auditor": {
            "nu": am.nu,
            "gamma": am.gamma,
            "rho": am.rho,
            "alphas": am.alphas.tolist(),
            "support_vectors": am.support_vectors.tolist(),
            "mean": am.mean.tolist(),
            "std": am.std.tolist(),
        },
        "calibration": {"h_train": cfg.h_train, "h_test": cfg.h_test, "alpha": cfg.alpha},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_detector(path) -> tuple:
    """Inverse of save_detector; returns (arch, am, cfg)."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        a = doc["arch"]
        arch = ArchSpec.build(a["input_length"], a["num_classes"],
                              [tuple(c) for c in a["conv_layers"]], a["dense_layers"])
        m = doc["auditor"]
        am = OcsvmModel(support_vectors=np.asarray(m["support_vectors"], dtype=np.float64),
                        alphas=np.asarray(m["alphas"], dtype=np.float64),
                        rho=float(m["rho"]), nu=float(m["nu"]), gamma=float(m["gamma"]),
                        mean=np.asarray(m["mean"], dtype=np.float64),
                        std=np.asarray(m["std"], dtype=np.float64))
        c = doc["calibration"]
        cfg = DetectorConfig(h_train=float(c["h_train"]), h_test=float(c["h_test"]),
                             alpha=float(c["alpha"]))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed detector file ({exc})") from None
    return arch, am, cfg


def bench_scaling(cfg: ExperimentConfig, k_values: list, repeats: int = 3) -> list:
    """Wall time of the audit phase as the client count grows, all else fixed.

    One benign update is trained once; each K audits that update K times
    (distinct client ids). Returns [(K, seconds)], taking the best of
    `repeats` passes to damp scheduler noise.
    """
    if not k_values:
        raise ValueError("k_values must be non-empty")
    if list(k_values) != sorted(k_values):
        raise ValueError("k_values must be ascending")
    prepared = prepare_data(cfg)
    init = nn.init_params(cfg.arch, derive_seed(cfg.seed, "init"))
    rm, am, det_cfg = federation.setup_detector(
        cfg.arch, prepared.dp_train, prepared.dp_test, cfg.training,
        nu=cfg.detector.nu, gamma_mode=cfg.detector.gamma_mode,
        seed=derive_seed(cfg.seed, "detector"), alpha=cfg.detector.alpha,
        gamma=cfg.detector.gamma, gamma_scale=cfg.detector.gamma_scale, init=init)
    update = federation.local_train(0, prepared.client_datasets[0], rm, cfg.arch,
                                    cfg.training, derive_seed(cfg.seed, "bench-client"))
    rows = []
    for k in k_values:
        best = math.inf
        for _ in range(repeats):
            start = time.perf_counter()
            for client_id in range(k):
                auditor.audit_update(client_id, update.params, cfg.arch,
                                     prepared.dp_test, am, det_cfg)
            best = min(best, time.perf_counter() - start)
        rows.append((int(k), best))
    return rows


def emit_bench_csv(rows: list, path) -> None:
    lines = ["clients,audit_seconds"]
    for k, seconds in rows:
        lines.append(f"{k},{repr(float(seconds))}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
