"""Report rendering: metric tables as TSV and matplotlib figures next to them."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .retrieval import MetricsReport

_METRIC_COLUMNS = [
    ("tgr_r_at_10", lambda r: r.tgr.r_at_10),
    ("tgr_r_at_50", lambda r: r.tgr.r_at_50),
    ("tgr_map", lambda r: r.tgr.map),
    ("vcr_r_at_10", lambda r: r.vcr.r_at_10),
    ("vcr_r_at_50", lambda r: r.vcr.r_at_50),
    ("vcr_map", lambda r: r.vcr.map),
    ("mean_r_at_k", lambda r: r.mean_r_at_k),
    ("mean_map", lambda r: r.mean_map),
]


def write_metrics_tsv(rows: list[tuple[str, MetricsReport]], path) -> None:
    """One labeled row per report, metrics as percentages."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(["config"] + [name for name, _ in _METRIC_COLUMNS]) + "\n")
        for label, report in rows:
            cells = [label] + [f"{100.0 * get(report):.2f}" for _, get in _METRIC_COLUMNS]
            fh.write("\t".join(cells) + "\n")


def fig_training_curves(history: list[dict], path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    epochs = [h["epoch"] for h in history]
    for key, label in (
        ("loss_bbc_v", "contrastive (compatibility)"),
        ("loss_bbc_t", "contrastive (edit)"),
        ("loss_ce", "branch cross-entropy"),
    ):
        ax.plot(epochs, [h[key] for h in history], label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean batch loss")
    ax.legend(loc="upper right", fontsize=8)
    ax2 = ax.twinx()
    ax2.plot(epochs, [h["lr"] for h in history], color="gray", linestyle=":", label="lr")
    ax2.set_ylabel("learning rate", color="gray")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fig_metrics(report: MetricsReport, path, title: str = "retrieval metrics") -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    names = ["R@10", "R@50", "mAP@50"]
    tgr = [report.tgr.r_at_10, report.tgr.r_at_50, report.tgr.map]
    vcr = [report.vcr.r_at_10, report.vcr.r_at_50, report.vcr.map]
    x = range(len(names))
    width = 0.35
    ax.bar([i - width / 2 for i in x], [100 * v for v in tgr], width, label="attribute edit")
    ax.bar([i + width / 2 for i in x], [100 * v for v in vcr], width, label="compatibility")
    ax.set_xticks(list(x))
    ax.set_xticklabels(names)
    ax.set_ylabel("percent")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fig_ablation(rows: list[tuple[str, MetricsReport]], path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    labels = [label for label, _ in rows]
    x = range(len(rows))
    width = 0.35
    ax.bar([i - width / 2 for i in x], [100 * r.mean_map for _, r in rows], width, label="mean mAP@50")
    ax.bar([i + width / 2 for i in x], [100 * r.mean_r_at_k for _, r in rows], width, label="mean R@K")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_xlabel("shared modules")
    ax.set_ylabel("percent")
    ax.set_title("module sharing ablation")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
