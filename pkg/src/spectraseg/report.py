"""CSV reports, mask color-coding, and matplotlib figure rendering.

Every report that the pipeline emits as delimited text also gets a PNG
figure rendered next to it (training curves, per-class IoU bars).  Figures
use the Agg backend and fixed metadata so identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import FormatError
from .training import History, IouReport

# Fixed mask palette, class id -> RGB (documented in the README).
PALETTE = (
    (31, 119, 180),
    (255, 127, 14),
    (44, 160, 44),
    (214, 39, 40),
    (148, 103, 189),
    (140, 86, 75),
    (227, 119, 194),
    (127, 127, 127),
)

_PNG_METADATA = {"Software": "spectraseg"}


def colorize_mask(mask: np.ndarray) -> np.ndarray:
    """Map class ids to the fixed palette; ids beyond it wrap around."""
    lut = np.array(PALETTE, dtype=np.uint8)
    return lut[np.asarray(mask) % len(PALETTE)]


def history_to_csv(history: History, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "val_mean_iou"])
        for i, (tr, vl, vi) in enumerate(
            zip(history.train_loss, history.val_loss, history.val_mean_iou), start=1
        ):
            writer.writerow([i, repr(tr), repr(vl), repr(vi)])


def history_from_csv(path) -> History:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["epoch", "train_loss", "val_loss", "val_mean_iou"]:
        raise FormatError(f"{path}: not a history CSV")
    hist = History()
    for row in rows[1:]:
        hist.train_loss.append(float(row[1]))
        hist.val_loss.append(float(row[2]))
        hist.val_mean_iou.append(float(row[3]))
    return hist


def iou_table_to_csv(rows: list[tuple[str, IouReport]], class_names: list[str], path) -> None:
    """Table layout: one row per dataset, one column per class plus the mean."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", *class_names, "mean_iou"])
        for name, report in rows:
            cells = ["" if np.isnan(v) else repr(float(v)) for v in report.per_class_iou]
            writer.writerow([name, *cells, repr(float(report.mean_iou))])


def iou_table_from_csv(path) -> tuple[list[str], list[tuple[str, list[float | None], float]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "dataset" or rows[0][-1] != "mean_iou":
        raise FormatError(f"{path}: not an IoU table CSV")
    class_names = rows[0][1:-1]
    parsed = []
    for row in rows[1:]:
        values = [None if cell == "" else float(cell) for cell in row[1:-1]]
        parsed.append((row[0], values, float(row[-1])))
    return class_names, parsed


def format_iou_table(rows: list[tuple[str, IouReport]], class_names: list[str]) -> str:
    """Plain-text table, datasets as rows and classes as columns."""
    header = ["dataset", *class_names, "mean"]
    widths = [max(12, len(h) + 2) for h in header]
    lines = ["".join(h.ljust(w) for h, w in zip(header, widths))]
    for name, report in rows:
        cells = [name]
        cells += ["-" if np.isnan(v) else f"{v:.4f}" for v in report.per_class_iou]
        cells.append(f"{report.mean_iou:.4f}")
        lines.append("".join(c.ljust(w) for c, w in zip(cells, widths)))
    return "\n".join(lines)


def classifier_report_to_csv(accuracies: dict[str, float], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["classifier", "held_out_accuracy"])
        for name in sorted(accuracies):
            writer.writerow([name, repr(float(accuracies[name]))])


def projected_points_to_csv(points: np.ndarray, labels: np.ndarray, path) -> None:
    pts = np.asarray(points)
    header = ["x", "y", "z"][: pts.shape[1]]
    if pts.shape[1] > 3:
        header = [f"c{i}" for i in range(pts.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([*header, "label"])
        for row, lab in zip(pts, labels):
            writer.writerow([*(repr(float(v)) for v in row), int(lab)])


def separability_to_csv(report, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerow(["mean_silhouette", repr(float(report.mean_silhouette))])
        writer.writerow(["overlap_fraction", repr(float(report.overlap_fraction))])
        for i, v in enumerate(report.per_class_overlap):
            writer.writerow([f"overlap_class_{i}", repr(float(v))])


def save_history_figure(history: History, path) -> None:
    epochs = np.arange(1, len(history.train_loss) + 1)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(epochs, history.train_loss, label="train loss")
    ax1.plot(epochs, history.val_loss, label="val loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("weighted CE loss")
    ax1.legend()
    ax2.plot(epochs, history.val_mean_iou, color="tab:green")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("val mean IoU")
    ax2.set_ylim(0.0, 1.0)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_METADATA)
    plt.close(fig)


def save_iou_figure(rows: list[tuple[str, IouReport]], class_names: list[str], path) -> None:
    n_classes = len(class_names)
    n_rows = len(rows)
    fig, ax = plt.subplots(figsize=(1.6 + 1.1 * n_classes, 3.5))
    width = 0.8 / max(n_rows, 1)
    xs = np.arange(n_classes)
    for i, (name, report) in enumerate(rows):
        vals = np.nan_to_num(report.per_class_iou, nan=0.0)
        ax.bar(xs + i * width, vals, width=width, label=name)
    ax.set_xticks(xs + 0.4 - width / 2)
    ax.set_xticklabels(class_names, rotation=20)
    ax.set_ylabel("IoU")
    ax.set_ylim(0.0, 1.0)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_METADATA)
    plt.close(fig)


def ensure_out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
