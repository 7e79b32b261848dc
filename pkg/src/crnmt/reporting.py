"""Delimited report files with matplotlib figures rendered alongside.

Every report path writes a CSV and a PNG next to it: training emits
history.csv + loss_curve.png, evaluation emits a BLEU row + a precision
bar chart, and the ablation sweep emits its table + a BLEU-vs-depth plot.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import (FULL_SCALE_BLEU_POS_OFF, FULL_SCALE_BLEU_POS_ON,
                         BleuReport)

HISTORY_CSV = "history.csv"
HISTORY_FIG = "loss_curve.png"
ABLATION_CSV = "ablation.csv"
ABLATION_FIG = "ablation_bleu.png"


def write_history(out_dir, history: list[dict]) -> None:
    """history.csv plus a train/val loss curve figure."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, HISTORY_CSV), "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_loss"])
        writer.writeheader()
        writer.writerows(history)
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = [row["epoch"] for row in history]
    ax.plot(epochs, [row["train_loss"] for row in history], label="train")
    ax.plot(epochs, [row["val_loss"] for row in history], label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss (nats/token)")
    ax.legend()
    fig.savefig(os.path.join(out_dir, HISTORY_FIG), bbox_inches="tight")
    plt.close(fig)


def append_bleu_row(csv_path, config_fields: dict, report: BleuReport) -> None:
    """Append one evaluation row; render the precision chart alongside."""
    fieldnames = list(config_fields) + ["p1", "p2", "p3", "p4", "bp", "bleu"]
    row = dict(config_fields)
    for i, p in enumerate(report.precisions):
        row[f"p{i + 1}"] = p
    row["bp"] = report.brevity_penalty
    row["bleu"] = report.bleu
    new_file = not os.path.exists(csv_path)
    with open(csv_path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        if new_file:
            writer.writeheader()
        writer.writerow(row)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar(["p1", "p2", "p3", "p4", "BP"], report.precisions + [report.brevity_penalty])
    ax.set_ylim(0, 1.05)
    ax.set_title(f"BLEU {report.bleu:.2f}")
    base, _ = os.path.splitext(csv_path)
    fig.savefig(base + "_precisions.png", bbox_inches="tight")
    plt.close(fig)


def write_ablation(out_dir, rows: list[dict]) -> None:
    """ablation.csv plus a BLEU-vs-depth figure with the reference scores noted."""
    os.makedirs(out_dir, exist_ok=True)
    fieldnames = ["conv_layers", "position_embedding", "seed", "epochs_run",
                  "val_loss", "test_bleu"]
    if rows:
        fieldnames += sorted(k for k in rows[0] if k.startswith("config."))
    with open(os.path.join(out_dir, ABLATION_CSV), "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    fig, ax = plt.subplots(figsize=(6, 4))
    for pos in (True, False):
        arm = sorted((r for r in rows if r["position_embedding"] is pos),
                     key=lambda r: r["conv_layers"])
        if arm:
            ax.plot([r["conv_layers"] for r in arm], [r["test_bleu"] for r in arm],
                    marker="o", label=f"position embedding {'on' if pos else 'off'}")
    ax.set_xlabel("conv depth")
    ax.set_ylabel("test BLEU")
    ax.set_title(f"full-scale reference at depth 3: {FULL_SCALE_BLEU_POS_ON} on / "
                 f"{FULL_SCALE_BLEU_POS_OFF} off")
    ax.legend()
    fig.savefig(os.path.join(out_dir, ABLATION_FIG), bbox_inches="tight")
    plt.close(fig)
