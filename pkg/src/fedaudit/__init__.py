"""fedaudit: a deterministic federated-learning simulator with an
activation-based update auditor.

A reference model trained on a public dataset, plus a one-class SVM over
its [input ∥ tapped activations ∥ own-class probability] audit vectors,
filters poisoned client updates before aggregation.
"""

from .attacks import AttackSpec
from .auditor import (AuditDataset, AuditSample, DetectorConfig, OcsvmModel, Verdict,
                      audit_update, build_audit_dataset, calibrate, ocsvm_decision,
                      ocsvm_fit, poisoned_rate)
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .data import Dataset, PartitionSpec, load_csv, partition_non_iid, save_csv, split, synth_dataset
from .federation import (Aggregator, RoundReport, TrainConfig, Update, coordinate_median,
                         fedavg, krum, local_train, make_aggregator, run_round,
                         setup_detector, trimmed_mean)
from .harness import bench_scaling, emit_report, run_experiment
from .nn import ArchSpec, ModelParams, TapRecord, evaluate, forward, init_params, loss_and_grad, train
from .serialize import deserialize_params, load_params, save_params, serialize_params

__version__ = "0.1.0"
