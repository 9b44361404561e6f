"""Report figures rendered next to the delimited output files."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_accuracy_figure(reports: list, path) -> None:
    """Global-model accuracy before/after aggregation, per round."""
    rounds = [r.round_index for r in reports]
    before = [100.0 * r.accuracy_before for r in reports]
    after = [100.0 * r.accuracy_after for r in reports]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    x = np.arange(len(rounds))
    width = 0.38
    ax.bar(x - width / 2, before, width, label="before aggregation", color="#9ecae1")
    ax.bar(x + width / 2, after, width, label="after aggregation", color="#3182bd")
    ax.set_xticks(x, [str(r) for r in rounds])
    ax.set_xlabel("round")
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(0, 100)
    ax.legend(frameon=False, fontsize=8)
    ax.set_title("global model accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def save_poison_rate_figure(reports: list, path) -> None:
    """Per-client poisoned rates with the acceptance threshold overlaid."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    n_clients = max((len(r.verdicts) for r in reports), default=0)
    x = np.arange(len(reports))
    width = 0.8 / max(n_clients, 1)
    threshold = None
    for c in range(n_clients):
        hs = []
        for r in reports:
            v = next((v for v in r.verdicts if v.client_id == c), None)
            hs.append(v.h if v is not None and np.isfinite(v.h) else 0.0)
            if v is not None and np.isfinite(v.threshold):
                threshold = v.threshold
        attack = reports[0].attacks.get(c, "NONE")
        label = f"client {c}" + (f" ({attack})" if attack != "NONE" else "")
        ax.bar(x + (c - (n_clients - 1) / 2) * width, hs, width * 0.9, label=label)
    if threshold is not None:
        ax.axhline(threshold, color="crimson", linestyle="--", linewidth=1.2,
                   label=f"threshold P = {threshold:.1f}")
    ax.set_xticks(x, [str(r.round_index) for r in reports])
    ax.set_xlabel("round")
    ax.set_ylabel("poisoned rate h (%)")
    ax.set_ylim(0, 105)
    ax.legend(frameon=False, fontsize=8)
    ax.set_title("per-client poisoned rates")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def save_report_figures(reports: list, path_prefix: str) -> list:
    """Render the standard report figures; returns the written paths."""
    acc_path = f"{path_prefix}_accuracy.png"
    rates_path = f"{path_prefix}_poison_rates.png"
    save_accuracy_figure(reports, acc_path)
    save_poison_rate_figure(reports, rates_path)
    return [acc_path, rates_path]


def save_bench_figure(rows: list, path) -> None:
    """Audit wall time against client count, with a linear reference."""
    ks = [k for k, _ in rows]
    times = [t for _, t in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(ks, times, "o-", color="#3182bd", label="measured")
    if times and ks:
        ref = [times[0] * k / ks[0] for k in ks]
        ax.plot(ks, ref, "--", color="gray", linewidth=1, label="linear reference")
    ax.set_xlabel("clients K")
    ax.set_ylabel("audit wall time (s)")
    ax.set_title("audit phase scaling")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
