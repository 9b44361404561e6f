"""Command-line interface.

Subcommands: run (execute an experiment from a JSON config), bench (audit
scaling benchmark), audit (score one serialized model against a saved
detector), attack-preview (emit one client's attacked dataset/parameters).
Exit codes: 0 success, 1 validation error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import attacks, auditor, data, federation, harness, nn, serialize
from .config import ConfigError, load_config
from .seeds import derive_seed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedaudit",
                                     description="Federated-learning poisoning-defense simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("--config", required=True, help="path to experiment JSON")

    p_bench = sub.add_parser("bench", help="measure audit-phase scaling in K")
    p_bench.add_argument("--config", required=True, help="path to experiment JSON")
    p_bench.add_argument("--clients", required=True,
                         help="comma-separated ascending client counts, e.g. 2,4,8,16")
    p_bench.add_argument("--output", default=None,
                         help="output CSV path (default <prefix>_bench.csv)")

    p_audit = sub.add_parser("audit", help="audit one serialized model")
    p_audit.add_argument("--model", required=True, help="FLPD parameter file")
    p_audit.add_argument("--public", required=True, help="public dataset CSV")
    p_audit.add_argument("--detector", required=True, help="detector calibration JSON")

    p_prev = sub.add_parser("attack-preview",
                            help="emit one client's attacked dataset/parameters")
    p_prev.add_argument("--config", required=True, help="path to experiment JSON")
    p_prev.add_argument("--client", required=True, type=int, help="client index")
    p_prev.add_argument("--output", default=None,
                        help="output path prefix (default <prefix>_client<i>)")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    reports = harness.run_experiment(cfg)
    for r in reports:
        line = (f"round {r.round_index}: aggregator={r.aggregator} "
                f"accepted={r.accepted_ids} acc_after={r.accuracy_after:.3f}")
        if r.all_rejected:
            line += "  [ALL UPDATES REJECTED: global model unchanged]"
        print(line)
    if cfg.output.prefix:
        print(f"reports written to {cfg.output.prefix}_rounds.json / _summary.csv")
    return 0


def _cmd_bench(args) -> int:
    cfg = load_config(args.config)
    try:
        k_values = [int(v) for v in args.clients.split(",") if v.strip()]
    except ValueError:
        raise ConfigError("clients", f"expected comma-separated integers, got {args.clients!r}")
    if not k_values or k_values != sorted(k_values) or k_values[0] < 1:
        raise ConfigError("clients", "client counts must be positive and ascending")
    rows = harness.bench_scaling(cfg, k_values)
    out = args.output or f"{cfg.output.prefix or 'fedaudit'}_bench.csv"
    harness.emit_bench_csv(rows, out)
    if cfg.output.figures:
        from . import plots
        plots.save_bench_figure(rows, out.rsplit(".", 1)[0] + ".png")
    for k, seconds in rows:
        print(f"K={k}: audit {seconds:.4f}s")
    print(f"benchmark written to {out}")
    return 0


def _cmd_audit(args) -> int:
    arch, am, det_cfg = harness.load_detector(args.detector)
    params = serialize.load_params(args.model)
    nn.validate_params(params, arch)
    public = data.load_csv(args.public)
    if public.length != arch.input_length:
        raise ValueError(f"{args.public}: feature length {public.length} does not match "
                         f"detector arch ({arch.input_length})")
    verdict = auditor.audit_update(0, params, arch,
                                   data.Dataset(public.features, public.labels,
                                                arch.num_classes),
                                   am, det_cfg)
    print(json.dumps({
        "h": verdict.h,
        "threshold": verdict.threshold,
        "accepted": verdict.accepted,
        "degenerate_count": verdict.degenerate_count,
    }, indent=2, sort_keys=True))
    return 0


def _cmd_attack_preview(args) -> int:
    cfg = load_config(args.config)
    if not (0 <= args.client < cfg.num_clients):
        raise ConfigError("client", f"client {args.client} out of range for "
                                    f"{cfg.num_clients} clients")
    prefix = args.output or f"{cfg.output.prefix or 'fedaudit'}_client{args.client}"
    prepared = harness.prepare_data(cfg)
    spec = cfg.clients[args.client]
    client_ds = prepared.client_datasets[args.client]
    round_seed = derive_seed(cfg.seed, "round", 0)
    client_seed = derive_seed(round_seed, "client", args.client)
    print(f"client {args.client}: attack={spec.kind} samples={len(client_ds)}")
    if spec.is_data_attack:
        attacked = attacks.apply_data_attack(spec, client_ds,
                                             derive_seed(client_seed, "attack"))
        out = f"{prefix}_data.csv"
        data.save_csv(attacked, out)
        changed = int((attacked.labels != client_ds.labels).sum())
        moved = float(abs(attacked.features - client_ds.features).max())
        print(f"labels changed: {changed}; max feature delta: {moved:.4g}")
        print(f"attacked dataset written to {out}")
    else:
        init = nn.init_params(cfg.arch, derive_seed(cfg.seed, "init"))
        update = federation.local_train(args.client, client_ds, init, cfg.arch,
                                        cfg.training, client_seed, spec)
        out = f"{prefix}_params.flpd"
        serialize.save_params(update.params, out)
        vec = nn.params_to_vector(update.params)
        print(f"shared parameter norm: {float((vec ** 2).sum() ** 0.5):.4g}")
        print(f"attacked parameters written to {out}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "bench": _cmd_bench,
    "audit": _cmd_audit,
    "attack-preview": _cmd_attack_preview,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
